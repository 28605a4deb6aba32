import numpy as np
import pytest

from sidlab import basis
from sidlab.basis import BasisIndex, SpectralFunction
from sidlab.errors import HypothesisError
from sidlab.measures import (
    SignedMeasure,
    TranslationInvariantKernel,
    fix_pi_solve,
    pi_map,
    uniform_measure,
)
from sidlab.operators import (
    OperatorSet,
    Propagator,
    build_A,
    build_G,
    build_Gstar,
    build_Q,
    c_hat,
    c_kernel,
    diagnostics,
    require_hypothesis,
    semigroup_apply,
)

from conftest import random_band_limited


@pytest.fixture(scope="module")
def all_kernels(K, kernel_zero, kernel_a1, kernel_a1_a2, kernel_diffusion):
    return [kernel_zero, kernel_a1, kernel_a1_a2, kernel_diffusion]


def fixed_point(V, K):
    return fix_pi_solve(V, uniform_measure(K), damping=1.0 if not V.symmetric else 0.5).measure


# -- A -----------------------------------------------------------------------


def test_A_is_half_laplacian_at_uniform(lam, kernel_a1):
    A = build_A(lam, kernel_a1)
    expected = 0.5 * np.diag(basis.laplacian_multipliers(lam.K))
    np.testing.assert_allclose(A.matrix, expected, atol=1e-13)


def test_A_annihilates_constants(K, kernel_diffusion):
    mu = fixed_point(kernel_diffusion, K)
    A = build_A(mu, kernel_diffusion)
    np.testing.assert_allclose(A.matrix[:, 0], 0.0, atol=1e-14)


def test_A_self_adjoint_in_response_measure(K, kernel_diffusion):
    # Dirichlet-form identity: <Af, g> and <f, Ag> in L2(pi(mu)) agree
    mu = fixed_point(kernel_diffusion, K)
    A = build_A(mu, kernel_diffusion)
    W = basis.multiplication_matrix(pi_map(kernel_diffusion, mu).density)
    rng = np.random.default_rng(0)
    for _ in range(10):
        f = random_band_limited(rng, K)
        g = random_band_limited(rng, K)
        lhs = float(f.coeffs @ W @ A.matrix @ g.coeffs)
        rhs = float(g.coeffs @ W @ A.matrix @ f.coeffs)
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_A_dirichlet_form_value(K, kernel_diffusion):
    # <Af, g>_{pi(mu)} = -1/2 integral of f' g' dpi(mu), by quadrature
    mu = fixed_point(kernel_diffusion, K)
    A = build_A(mu, kernel_diffusion)
    W = basis.multiplication_matrix(pi_map(kernel_diffusion, mu).density)
    rng = np.random.default_rng(1)
    f = random_band_limited(rng, K)
    g = random_band_limited(rng, K)
    lhs = float(g.coeffs @ W @ A.matrix @ f.coeffs)
    N = 4096
    fp = basis.derivative(f).values(N)
    gp = basis.derivative(g).values(N)
    dens = pi_map(kernel_diffusion, mu).density.values(N)
    rhs = -0.5 * float(np.mean(fp * gp * dens))
    assert lhs == pytest.approx(rhs, abs=1e-8)


# -- Q -----------------------------------------------------------------------


def test_Q_kills_constants(K, kernel_a1):
    mu = fixed_point(kernel_a1, K)
    Q = build_Q(mu, kernel_a1)
    np.testing.assert_allclose(Q.matrix[:, 0], 0.0, atol=1e-12)


def test_Q_diagonal_at_uniform(lam, kernel_zero):
    Q = build_Q(lam, kernel_zero)
    for k in range(1, lam.K + 1):
        ck = SpectralFunction.unit(lam.K, BasisIndex("cosine", k))
        np.testing.assert_allclose(Q.apply(ck).coeffs, (2.0 / k**2) * ck.coeffs, atol=1e-10)


def test_Q_defining_identity_all_kernels(K, all_kernels):
    rng = np.random.default_rng(2)
    for V in all_kernels:
        mu = fixed_point(V, K)
        ops = OperatorSet(mu, V)
        pi_coeffs = ops.pi_density
        for _ in range(10):
            f = random_band_limited(rng, K)
            qf = ops.Q.apply(f)
            kf = f.coeffs.copy()
            kf[0] -= float(pi_coeffs @ f.coeffs)
            residual = SpectralFunction(K, ops.A.matrix @ qf.coeffs + kf)
            assert residual.sup_norm() <= 1e-8
            assert abs(float(pi_coeffs @ qf.coeffs)) <= 1e-10


def test_Q_agrees_with_semigroup_integral(K, kernel_a1):
    # cross-check the direct solve against Q f = integral of e^{tA}(f - pi f) dt
    mu = fixed_point(kernel_a1, K)
    ops = OperatorSet(mu, kernel_a1)
    rng = np.random.default_rng(3)
    f = random_band_limited(rng, K)
    kf = f.coeffs.copy()
    kf[0] -= float(ops.pi_density @ f.coeffs)
    prop = Propagator(-ops.A.matrix)  # e^{tA}
    nodes, weights = np.polynomial.legendre.leggauss(80)
    T = 60.0
    t = 0.5 * T * (nodes + 1.0)
    w = 0.5 * T * weights
    integral = np.zeros(2 * K + 1)
    for ti, wi in zip(t, w):
        integral += wi * prop.apply(ti, kf)
    np.testing.assert_allclose(ops.Q.matrix @ f.coeffs, integral, atol=1e-6)


# -- G and G* ----------------------------------------------------------------


def test_G_on_constants(K, kernel_a1_a2):
    mu = fixed_point(kernel_a1_a2, K)
    G = build_G(mu, kernel_a1_a2)
    one = SpectralFunction.constant(K, 1.0)
    np.testing.assert_allclose(G.apply(one).coeffs, 0.5 * one.coeffs, atol=1e-12)


def test_G_diagonal_for_symmetric_spectral_kernel(lam, kernel_a1_a2):
    G = build_G(lam, kernel_a1_a2)
    expected = np.diag([0.5, 1.5, 1.5, 1.0, 1.0] + [0.5] * (2 * lam.K + 1 - 5))
    np.testing.assert_allclose(G.matrix, expected, atol=1e-12)


def test_G_operator_norm_bound(K, kernel_a1):
    # |G f|_inf <= (2 |V|_inf + 1/2) |f|_inf on random band-limited functions
    mu = fixed_point(kernel_a1, K)
    G = build_G(mu, kernel_a1)
    bound = 2.0 * kernel_a1.sup_norm(K) + 0.5
    rng = np.random.default_rng(4)
    for _ in range(10):
        f = random_band_limited(rng, K)
        assert G.apply(f).sup_norm() <= bound * f.sup_norm() + 1e-9


def test_Gstar_duality(K, all_kernels):
    rng = np.random.default_rng(5)
    for V in all_kernels:
        mu = fixed_point(V, K)
        G = build_G(mu, V)
        Gs = build_Gstar(mu, V)
        for _ in range(25):
            f = random_band_limited(rng, K)
            m = SignedMeasure(random_band_limited(rng, K))
            lhs = m.pair(G.apply(f))
            rhs = float((Gs.matrix @ m.density.coeffs) @ f.coeffs)
            assert lhs == pytest.approx(rhs, abs=1e-10)


def test_Gstar_pairing_with_one(lam, kernel_a1):
    Gs = build_Gstar(lam, kernel_a1)
    one = SpectralFunction.constant(lam.K, 1.0)
    out = Gs.matrix @ lam.density.coeffs
    assert float(out @ one.coeffs) == pytest.approx(0.5, abs=1e-12)


def test_Gstar_diagonal_self_adjoint_case(lam, kernel_a1_a2):
    G = build_G(lam, kernel_a1_a2)
    Gs = build_Gstar(lam, kernel_a1_a2)
    np.testing.assert_allclose(Gs.matrix, G.matrix, atol=1e-12)


# -- semigroup ---------------------------------------------------------------


def test_semigroup_identity_at_zero(lam, kernel_a1, c1):
    G = build_G(lam, kernel_a1)
    np.testing.assert_allclose(semigroup_apply(G, 0.0, c1).coeffs, c1.coeffs, atol=1e-14)


def test_semigroup_zero_kernel_decay(lam, kernel_zero):
    G = build_G(lam, kernel_zero)
    rng = np.random.default_rng(6)
    f = random_band_limited(rng, lam.K)
    out = semigroup_apply(G, 2.0, f)
    np.testing.assert_allclose(out.coeffs, np.exp(-1.0) * f.coeffs, atol=1e-12)


def test_semigroup_spectral_kernel_rates(lam, kernel_a1_a2, c1, c2):
    G = build_G(lam, kernel_a1_a2)
    t = 0.7
    np.testing.assert_allclose(
        semigroup_apply(G, t, c1).coeffs, np.exp(-1.5 * t) * c1.coeffs, atol=1e-12
    )
    np.testing.assert_allclose(
        semigroup_apply(G, t, c2).coeffs, np.exp(-1.0 * t) * c2.coeffs, atol=1e-12
    )


def test_semigroup_property(K):
    # non-normal G from a non-uniform base measure
    V = TranslationInvariantKernel({1: 0.8})
    coeffs = np.zeros(2 * K + 1)
    coeffs[1] = 0.4
    mu = fix_pi_solve(V, pi_map(V, uniform_measure(K)), max_iter=1000).measure
    from sidlab.measures import ProbMeasure

    rho = np.zeros(2 * K + 1)
    rho[0], rho[1] = 1.0, 0.3
    mu2 = ProbMeasure(SpectralFunction(K, rho))
    G = build_G(mu2, V)
    rng = np.random.default_rng(7)
    f = random_band_limited(rng, K)
    a = semigroup_apply(G, 0.9, semigroup_apply(G, 0.6, f))
    b = semigroup_apply(G, 1.5, f)
    np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-9)


def test_propagator_eig_and_expm_agree(K, kernel_a1):
    rho = np.zeros(2 * K + 1)
    rho[0], rho[2] = 1.0, 0.25
    from sidlab.measures import ProbMeasure

    mu = ProbMeasure(SpectralFunction(K, rho))
    G = build_G(mu, kernel_a1)
    prop = Propagator(G.matrix)
    assert prop.diagonalizable
    for t in (0.3, 1.7):
        np.testing.assert_allclose(
            prop.matrix(t, "eig"), prop.matrix(t, "expm"), atol=1e-9
        )


# -- diagnostics -------------------------------------------------------------


def test_diagnostics_zero_kernel(lam, kernel_zero):
    d = diagnostics(build_G(lam, kernel_zero))
    assert d.kappa == pytest.approx(0.5, abs=1e-12)
    assert d.spectral_abscissa == pytest.approx(-0.5, abs=1e-12)
    assert d.hypothesis_holds


def test_diagnostics_nonnegative_multipliers(lam, kernel_a1_a2):
    d = diagnostics(build_G(lam, kernel_a1_a2))
    assert d.kappa == pytest.approx(0.5, abs=1e-12)
    assert d.spectral_abscissa == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("a1,expected_kappa,holds", [(-0.4, 0.1, True), (-0.6, -0.1, False)])
def test_diagnostics_negative_multiplier(lam, a1, expected_kappa, holds):
    V = TranslationInvariantKernel({1: a1})
    d = diagnostics(build_G(lam, V))
    assert d.kappa == pytest.approx(expected_kappa, abs=1e-12)
    assert d.hypothesis_holds == holds
    if not holds:
        with pytest.raises(HypothesisError):
            require_hypothesis(d)


def test_effective_rate_capped(lam, kernel_zero):
    d = diagnostics(build_G(lam, kernel_zero))
    assert d.effective_rate <= 0.5 - 1e-7


def test_semigroup_decays_at_reported_rate(K):
    # |e^{-tG}| <= K' e^{-kappa t}: the tail contraction matches the diagnostics
    from sidlab.measures import ProbMeasure

    rho = np.zeros(2 * K + 1)
    rho[0], rho[1], rho[4] = 1.0, 0.3, 0.1
    mu = ProbMeasure(SpectralFunction(K, rho))
    V = TranslationInvariantKernel({1: 0.8, 2: -0.3})
    G = build_G(mu, V)
    d = diagnostics(G)
    assert d.hypothesis_holds
    prop = Propagator(G.matrix)
    n1 = np.linalg.norm(prop.matrix(10.0), 2)
    n2 = np.linalg.norm(prop.matrix(20.0), 2)
    assert n2 <= n1 * np.exp(-d.kappa * 10.0) * 1.01


# -- covariance forms --------------------------------------------------------


def test_chat_with_constant_vanishes(lam, kernel_a1, c1):
    one = SpectralFunction.constant(lam.K, 1.0)
    assert c_hat(lam, kernel_a1, c1, one) == pytest.approx(0.0, abs=1e-12)


def test_chat_uniform_values(lam, kernel_zero):
    for k in (1, 2, 3):
        ck = SpectralFunction.unit(lam.K, BasisIndex("cosine", k))
        assert c_hat(lam, kernel_zero, ck, ck) == pytest.approx(4.0 / k**2, abs=1e-10)


def test_chat_symmetric(K, kernel_diffusion):
    mu = fixed_point(kernel_diffusion, K)
    ops = OperatorSet(mu, kernel_diffusion)
    rng = np.random.default_rng(8)
    for _ in range(10):
        f = random_band_limited(rng, K)
        g = random_band_limited(rng, K)
        a = c_hat(mu, kernel_diffusion, f, g, ops=ops)
        b = c_hat(mu, kernel_diffusion, g, f, ops=ops)
        assert a == pytest.approx(b, abs=1e-9)


def test_c_kernel_zero(lam, kernel_zero):
    C = c_kernel(lam, kernel_zero, N=65)
    np.testing.assert_allclose(C, 0.0, atol=1e-13)


def test_c_kernel_psd_random_mercer(K):
    rng = np.random.default_rng(9)
    V = TranslationInvariantKernel({1: float(rng.uniform(0, 2)), 2: float(rng.uniform(0, 1))})
    mu = fixed_point(V, K)
    C = c_kernel(mu, V, N=129)
    C = 0.5 * (C + C.T)
    vals = np.linalg.eigvalsh(C)
    assert vals.min() >= -1e-9 * max(1.0, vals.max())


def test_c_kernel_dual_path(lam, kernel_a1):
    # path 1: matrix assembly; path 2: direct chat of kernel slices at grid points
    N = 33
    ops = OperatorSet(lam, kernel_a1)
    C = c_kernel(lam, kernel_a1, N=N, ops=ops)
    theta = basis.grid(N)
    for i in (0, 5, 11):
        for j in (2, 7):
            vx = kernel_a1.slice_at(theta[i], lam.K)
            vy = kernel_a1.slice_at(theta[j], lam.K)
            direct = c_hat(lam, kernel_a1, vx, vy, ops=ops)
            assert C[i, j] == pytest.approx(direct, abs=1e-10)
    # closed form: C(x,y) = 4 (c1(x)c1(y) + s1(x)s1(y)) = 8 cos(x - y)
    np.testing.assert_allclose(C, 8.0 * np.cos(theta[:, None] - theta[None, :]), atol=1e-9)


def test_Q_sup_norm_is_uniformly_bounded(K, all_kernels):
    # empirical operator norm |Q f|_inf / |f|_inf stays bounded across kernels
    rng = np.random.default_rng(10)
    for V in all_kernels:
        mu = fixed_point(V, K)
        ops = OperatorSet(mu, V)
        worst = 0.0
        for _ in range(20):
            f = random_band_limited(rng, K)
            worst = max(worst, ops.Q.apply(f).sup_norm() / f.sup_norm())
        assert worst < 10.0
