"""Numerical laboratory for self-interacting diffusions on the circle."""

__version__ = "0.1.0"

from .basis import (  # noqa: F401
    BasisIndex,
    SpectralFunction,
    analyze,
    derivative,
    laplacian,
    multiply,
    synthesize,
)
from .measures import (  # noqa: F401
    DiffusionPotentialKernel,
    GeneralKernel,
    InteractionKernel,
    KernelSpectrum,
    ProbMeasure,
    SignedMeasure,
    TranslationInvariantKernel,
    cov_mu,
    fix_pi_solve,
    mercer_check,
    pi_map,
    uniform_measure,
    v_mu,
    xi,
)
from .operators import (  # noqa: F401
    OperatorDiagnostics,
    OperatorMatrix,
    OperatorSet,
    build_A,
    build_G,
    build_Gstar,
    build_Q,
    c_hat,
    c_kernel,
    diagnostics,
    semigroup_apply,
)
from .ou import (  # noqa: F401
    LimitCovariance,
    MercerDecomposition,
    OUPath,
    brownian_sample,
    closed_form_symmetric,
    joint_var,
    limit_covariance,
    limit_covariance_matrix,
    mercer_decompose,
    ou_solve,
    stationary_var,
)
from .dynamics import (  # noqa: F401
    FluctuationSample,
    OdeState,
    PathState,
    SimConfig,
    ode_flow,
    run_ensemble,
    run_path,
    sde_step,
    split_seed,
)
