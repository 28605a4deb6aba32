"""Dense Galerkin matrices for the fluctuation operators and covariance forms.

All operators act on coefficient vectors in the real Fourier basis.  The
conventions are fixed so that the response measure (density proportional to
exp(-V mu)) is exactly the invariant measure of the path generator: with unit
angular noise this forces the gradient drift to carry a factor 1/2,

    A_mu f = (1/2) (Lap f - d(V mu)/dtheta * df/dtheta),

which is what makes the Poisson equation -A Q f = f - pi(mu) f solvable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import basis
from .basis import SpectralFunction, basis_size
from .errors import HypothesisError, OperatorError
from .measures import InteractionKernel, ProbMeasure, SignedMeasure, pi_map

KAPPA_CEILING = 0.5 - 1e-6  # decay rate actually usable for quadrature horizons


@dataclass(frozen=True)
class OperatorMatrix:
    """A dense operator in the truncated basis, tagged with its base measure."""

    matrix: np.ndarray
    base_measure: ProbMeasure
    role: str  # "A" | "Q" | "G" | "Gstar"

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float).copy()
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def K(self) -> int:
        return (self.matrix.shape[0] - 1) // 2

    def apply(self, f: SpectralFunction) -> SpectralFunction:
        return SpectralFunction(f.K, self.matrix @ f.coeffs)

    def apply_measure(self, m: SignedMeasure) -> SignedMeasure:
        return SignedMeasure(SpectralFunction(m.K, self.matrix @ m.density.coeffs))


@dataclass(frozen=True)
class OperatorDiagnostics:
    """Coercivity constant and spectral abscissa of a drift operator."""

    kappa: float
    spectral_abscissa: float
    hypothesis_holds: bool

    @property
    def effective_rate(self) -> float:
        """Decay rate used for integration horizons (capped below 1/2)."""
        return min(self.kappa, KAPPA_CEILING)


def build_A(mu: ProbMeasure, V: InteractionKernel) -> OperatorMatrix:
    """Galerkin matrix of the path generator for the frozen measure mu."""
    K = mu.K
    h = basis.derivative(V.v_measure(mu))  # d(V mu)/dtheta
    L = np.diag(basis.laplacian_multipliers(K))
    D = basis.derivative_matrix(K)
    M_h = basis.multiplication_matrix(h)
    A = 0.5 * (L - M_h @ D)
    return OperatorMatrix(A, mu, "A")


def build_Q(mu: ProbMeasure, V: InteractionKernel, A: OperatorMatrix | None = None) -> OperatorMatrix:
    """Centered inverse of the generator: -A (Q f) = f - pi(mu) f, pi(mu)(Q f) = 0.

    Solved on the mean-zero complement by a rank-one-shifted direct solve; the
    normalization is fixed by subtracting the pi(mu)-mean afterwards.
    """
    K = mu.K
    n = basis_size(K)
    Amat = (A.matrix if A is not None else build_A(mu, V).matrix)
    pi_coeffs = pi_map(V, mu).density.coeffs
    e0 = np.zeros(n)
    e0[0] = 1.0
    K_pi = np.eye(n) - np.outer(e0, pi_coeffs)
    shifted = Amat - np.outer(e0, pi_coeffs)
    try:
        Q0 = np.linalg.solve(shifted, -K_pi)
    except np.linalg.LinAlgError as exc:
        raise OperatorError(f"generator solve is singular: {exc}") from exc
    if not np.all(np.isfinite(Q0)) or np.linalg.cond(shifted) > 1e12:
        raise OperatorError("generator solve is numerically singular; discretization broken")
    Q = Q0 - np.outer(e0, pi_coeffs @ Q0)
    return OperatorMatrix(Q, mu, "Q")


def build_G(mu: ProbMeasure, V: InteractionKernel) -> OperatorMatrix:
    """Drift operator f -> f/2 + Cov_mu(V_., f) of the linearized fluctuations."""
    K = mu.K
    n = basis_size(K)
    rho = mu.density
    Vmat = V.galerkin_matrix(K)
    M_rho = basis.multiplication_matrix(rho)
    vmu = V.v_measure(mu).coeffs
    G = 0.5 * np.eye(n) + Vmat @ M_rho - np.outer(vmu, rho.coeffs)
    return OperatorMatrix(G, mu, "G")


def build_Gstar(mu: ProbMeasure, V: InteractionKernel) -> OperatorMatrix:
    """Adjoint drift on signed-measure densities: m(G f) = (G* m) f.

    Built from its own formula, m/2 + (V~ m) mu - (m(V mu)) mu, where V~ is the
    argument-swapped kernel; for symmetric V this is the textbook expression.
    """
    K = mu.K
    n = basis_size(K)
    rho = mu.density
    Vmat_T = V.galerkin_matrix(K).T
    M_rho = basis.multiplication_matrix(rho)
    vmu = V.v_measure(mu).coeffs
    Gs = 0.5 * np.eye(n) + M_rho @ Vmat_T - np.outer(rho.coeffs, vmu)
    return OperatorMatrix(Gs, mu, "Gstar")


class Propagator:
    """Applies exp(-t M) for a fixed square matrix M.

    Uses the eigendecomposition when the eigenvector basis is well conditioned,
    otherwise falls back to scaling-and-squaring (cached per time value).
    """

    COND_LIMIT = 1e6

    def __init__(self, M: np.ndarray):
        self.M = np.asarray(M, dtype=float)
        self._expm_cache: dict[float, np.ndarray] = {}
        w, S = np.linalg.eig(self.M)
        try:
            cond = np.linalg.cond(S)
        except np.linalg.LinAlgError:
            cond = np.inf
        if np.isfinite(cond) and cond < self.COND_LIMIT:
            self._eig = (w, S, np.linalg.inv(S))
        else:
            self._eig = None

    @property
    def diagonalizable(self) -> bool:
        return self._eig is not None

    def matrix(self, t: float, method: str = "auto") -> np.ndarray:
        if method == "auto":
            method = "eig" if self._eig is not None else "expm"
        if method == "eig":
            if self._eig is None:
                raise OperatorError("eigenvector basis too ill-conditioned for the eig path")
            w, S, Sinv = self._eig
            out = (S * np.exp(-t * w)) @ Sinv
            return np.real(out)
        if method == "expm":
            cached = self._expm_cache.get(t)
            if cached is None:
                cached = scipy.linalg.expm(-t * self.M)
                self._expm_cache[t] = cached
            return cached
        raise ValueError(f"unknown method {method!r}")

    def apply(self, t: float, X: np.ndarray) -> np.ndarray:
        if self._eig is not None:
            w, S, Sinv = self._eig
            Y = Sinv @ X
            decay = np.exp(-t * w)
            Y = decay * Y if Y.ndim == 1 else decay[:, None] * Y
            return np.real(S @ Y)
        return self.matrix(t, "expm") @ X


def semigroup_apply(Gop: OperatorMatrix, t: float, f: SpectralFunction) -> SpectralFunction:
    """exp(-t G) f for t >= 0."""
    if t < 0:
        raise ValueError("semigroup time must be nonnegative")
    prop = Propagator(Gop.matrix)
    return SpectralFunction(f.K, prop.matrix(t) @ f.coeffs)


def diagnostics(Gop: OperatorMatrix) -> OperatorDiagnostics:
    """Coercivity in L2(lam) and spectral abscissa of -G."""
    G = Gop.matrix
    sym = 0.5 * (G + G.T)
    kappa = float(np.min(np.linalg.eigvalsh(sym)))
    abscissa = float(np.max(np.real(np.linalg.eigvals(-G))))
    return OperatorDiagnostics(kappa, abscissa, kappa > 0.0)


def require_hypothesis(diag: OperatorDiagnostics, context: str = "") -> None:
    if not diag.hypothesis_holds:
        where = f" ({context})" if context else ""
        raise HypothesisError(
            f"drift operator is not coercive{where}: kappa={diag.kappa:.6g} <= 0; "
            "the limit integrals may diverge"
        )


@dataclass(frozen=True)
class OperatorSet:
    """All operators for one (mu, V) pair, built lazily and shared."""

    mu: ProbMeasure
    V: InteractionKernel

    @cached_property
    def A(self) -> OperatorMatrix:
        return build_A(self.mu, self.V)

    @cached_property
    def Q(self) -> OperatorMatrix:
        return build_Q(self.mu, self.V, self.A)

    @cached_property
    def G(self) -> OperatorMatrix:
        return build_G(self.mu, self.V)

    @cached_property
    def Gstar(self) -> OperatorMatrix:
        return build_Gstar(self.mu, self.V)

    @cached_property
    def pi_density(self) -> np.ndarray:
        return pi_map(self.V, self.mu).density.coeffs

    @cached_property
    def M_pi(self) -> np.ndarray:
        return basis.multiplication_matrix(pi_map(self.V, self.mu).density)

    @cached_property
    def chat_matrix(self) -> np.ndarray:
        """Coefficient matrix S of the covariance form: chat(f,g) = f' S g."""
        return 2.0 * self.M_pi @ self.Q.matrix

    @cached_property
    def cov_kernel_matrix(self) -> np.ndarray:
        """Coefficient matrix of the Mercer kernel chat(V_x, V_y)."""
        Vmat = self.V.galerkin_matrix(self.mu.K)
        return Vmat @ self.chat_matrix @ Vmat.T

    @cached_property
    def diag(self) -> OperatorDiagnostics:
        return diagnostics(self.G)


def c_hat(mu: ProbMeasure, V: InteractionKernel, f: SpectralFunction, g: SpectralFunction,
          ops: OperatorSet | None = None) -> float:
    """Asymptotic covariance form 2 pi(mu)(f Q g)."""
    ops = ops if ops is not None else OperatorSet(mu, V)
    return float(f.coeffs @ ops.chat_matrix @ g.coeffs)


def c_kernel(mu: ProbMeasure, V: InteractionKernel, N: int | None = None,
             ops: OperatorSet | None = None) -> np.ndarray:
    """The covariance kernel evaluated on the N-point grid: chat(V_x, V_y)."""
    ops = ops if ops is not None else OperatorSet(mu, V)
    if N is None:
        N = basis.product_grid_size(mu.K)
    E = basis.design_matrix(N, mu.K)
    return E @ ops.cov_kernel_matrix @ E.T
