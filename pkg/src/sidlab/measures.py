"""Measures on the circle as densities, interaction kernels, and the Gibbs response map.

A measure mu is stored through the density d(mu)/d(lam) as a SpectralFunction.
The response map sends mu to the probability measure with density
exp(-V mu) / lam(exp(-V mu)); its fixed points are the candidate limits of the
occupation measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import basis
from .basis import BasisIndex, SpectralFunction, basis_indices, basis_size
from .errors import ConvergenceError

DENSITY_FLOOR = -1e-10  # truncation noise allowance for nonnegativity


class SignedMeasure:
    """A finite signed measure, density with respect to lam; no mass constraint."""

    __slots__ = ("density",)

    def __init__(self, density: SpectralFunction):
        object.__setattr__(self, "density", density)

    def __setattr__(self, name, value):
        raise AttributeError("SignedMeasure is immutable")

    @property
    def K(self) -> int:
        return self.density.K

    @property
    def mass(self) -> float:
        return self.density.mean

    def pair(self, f: SpectralFunction) -> float:
        """Integral of f against this measure (Parseval pairing of densities)."""
        return basis.inner(self.density, f)

    def __repr__(self):
        return f"SignedMeasure(K={self.K}, mass={self.mass:.6g})"


class ProbMeasure(SignedMeasure):
    """A probability measure: unit mass, density nonnegative on the grid."""

    def __init__(self, density: SpectralFunction, grid_size: int | None = None):
        coeffs = density.coeffs
        if abs(coeffs[0] - 1.0) > 1e-8:
            raise ValueError(f"total mass {coeffs[0]!r} is not 1")
        if coeffs[0] != 1.0:
            # pin the mass exactly; the deviation is rounding noise
            density = SpectralFunction(density.K, coeffs / coeffs[0])
        N = basis.product_grid_size(density.K, grid_size)
        low = float(np.min(density.values(N)))
        if low < DENSITY_FLOOR - 1e-6:
            raise ValueError(f"density reaches {low:.3e}; not a probability measure")
        super().__init__(density)

    def grid_density(self, N: int | None = None) -> np.ndarray:
        """Density values clamped at 0 (sub-floor dips are truncation noise)."""
        N = basis.product_grid_size(self.K, N)
        return np.maximum(self.density.values(N), 0.0)

    def expect(self, f: SpectralFunction) -> float:
        return self.pair(f)

    def __repr__(self):
        return f"ProbMeasure(K={self.K})"


def uniform_measure(K: int) -> ProbMeasure:
    return ProbMeasure(SpectralFunction.constant(K, 1.0))


# ---------------------------------------------------------------------------
# Interaction kernels
# ---------------------------------------------------------------------------


class InteractionKernel:
    """Potential V(x, y) in basis form.

    The Galerkin matrix maps density coefficients of a measure m to the
    coefficients of the function x -> integral of V(x, y) m(dy).
    """

    symmetric: bool = True

    def galerkin_matrix(self, K: int) -> np.ndarray:
        raise NotImplementedError

    def v_measure(self, m: SignedMeasure) -> SpectralFunction:
        """The function V m."""
        return SpectralFunction(m.K, self.galerkin_matrix(m.K) @ m.density.coeffs)

    def slice_at(self, theta: float, K: int) -> SpectralFunction:
        """V_x = V(theta, .) as a function of the second argument."""
        ex = basis.evaluate_basis(np.asarray(theta, dtype=float), K)
        return SpectralFunction(K, ex @ self.galerkin_matrix(K))

    def sup_norm(self, K: int, N: int | None = None) -> float:
        N = basis.product_grid_size(K, N)
        E = basis.design_matrix(N, K)
        return float(np.max(np.abs(E @ self.galerkin_matrix(K) @ E.T)))


@dataclass(frozen=True)
class TranslationInvariantKernel(InteractionKernel):
    """V(x,y) = constant + sum_k a_k (c_k(x)c_k(y) + s_k(x)s_k(y)).

    Diagonal in the basis: the multiplier a_k acts on both mode-k coefficients.
    """

    multipliers: dict[int, float] = field(default_factory=dict)
    constant: float = 0.0

    def __post_init__(self):
        for k in self.multipliers:
            if k < 1:
                raise ValueError("multiplier frequencies must be >= 1")

    @property
    def symmetric(self) -> bool:
        return True

    def diagonal(self, K: int) -> np.ndarray:
        d = np.zeros(basis_size(K))
        d[0] = self.constant
        for k, a in self.multipliers.items():
            if k > K:
                raise ValueError(f"kernel frequency {k} exceeds truncation {K}")
            d[2 * k - 1] = d[2 * k] = a
        return d

    def galerkin_matrix(self, K: int) -> np.ndarray:
        return np.diag(self.diagonal(K))

    def v_measure(self, m: SignedMeasure) -> SpectralFunction:
        return SpectralFunction(m.K, self.diagonal(m.K) * m.density.coeffs)


@dataclass(frozen=True)
class GeneralKernel(InteractionKernel):
    """Symmetric bilinear form given directly by its basis matrix V[a, b]."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2 == 0:
            raise ValueError("kernel matrix must be square of odd size 2K+1")
        if np.max(np.abs(M - M.T)) > 1e-12:
            raise ValueError("kernel matrix is not symmetric")
        M = M.copy()
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def K(self) -> int:
        return (self.matrix.shape[0] - 1) // 2

    def galerkin_matrix(self, K: int) -> np.ndarray:
        if K != self.K:
            raise ValueError(f"kernel built for K={self.K}, requested {K}")
        return np.asarray(self.matrix)


@dataclass(frozen=True)
class DiffusionPotentialKernel(InteractionKernel):
    """V(x,y) = v(x): a plain potential, intentionally non-symmetric in (x,y)."""

    v: SpectralFunction

    @property
    def symmetric(self) -> bool:
        return False

    def galerkin_matrix(self, K: int) -> np.ndarray:
        if K != self.v.K:
            raise ValueError(f"potential built for K={self.v.K}, requested {K}")
        M = np.zeros((basis_size(K), basis_size(K)))
        M[:, 0] = self.v.coeffs  # V m = v * (total mass of m)
        return M

    def v_measure(self, m: SignedMeasure) -> SpectralFunction:
        return m.mass * self.v


def zero_kernel() -> TranslationInvariantKernel:
    return TranslationInvariantKernel({}, 0.0)


@dataclass(frozen=True)
class KernelSpectrum:
    """Eigenvalues of the symmetrized kernel on mean-zero modes."""

    eigenvalues: tuple[tuple[BasisIndex, float], ...]
    diagonal: bool  # True when the kernel is diagonal in the Fourier basis

    def value(self, idx: BasisIndex) -> float:
        for j, v in self.eigenvalues:
            if j == idx:
                return v
        return 0.0

    def min_eigenvalue(self) -> float:
        if not self.eigenvalues:
            return 0.0
        return min(v for _, v in self.eigenvalues)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def v_mu(V: InteractionKernel, mu: SignedMeasure) -> SpectralFunction:
    """x -> integral of V(x, y) mu(dy)."""
    return V.v_measure(mu)


def xi(f: SpectralFunction, N: int | None = None) -> ProbMeasure:
    """Gibbs response: density exp(-f) / lam(exp(-f)), re-analyzed and renormalized."""
    N = basis.product_grid_size(f.K, N)
    w = np.exp(-f.values(N))
    w /= np.mean(w)
    density = basis.analyze(w, f.K)
    # renormalize exactly after truncation
    density = SpectralFunction(f.K, density.coeffs / density.coeffs[0])
    return ProbMeasure(density, grid_size=N)


def pi_map(V: InteractionKernel, mu: ProbMeasure) -> ProbMeasure:
    """The response measure of mu."""
    return xi(v_mu(V, mu))


def pi_residual(V: InteractionKernel, mu: ProbMeasure, N: int | None = None) -> float:
    """Grid sup-norm of mu - pi(mu)."""
    N = basis.product_grid_size(mu.K, N)
    delta = mu.density - pi_map(V, mu).density
    return float(np.max(np.abs(delta.values(N))))


@dataclass(frozen=True)
class FixedPointResult:
    measure: ProbMeasure
    residual: float
    iterations: int


def fix_pi_solve(
    V: InteractionKernel,
    start: ProbMeasure,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> FixedPointResult:
    """Damped fixed-point iteration mu <- (1-d) mu + d pi(mu).

    Raises ConvergenceError (carrying the last residual) if the tolerance is
    not met; smaller damping is the standard retry for oscillating kernels.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    mu = start
    N = basis.product_grid_size(mu.K)
    residual = np.inf
    for it in range(1, max_iter + 1):
        target = pi_map(V, mu)
        residual = float(np.max(np.abs((mu.density - target.density).values(N))))
        if residual <= tol:
            return FixedPointResult(mu, residual, it - 1)
        blend = (1.0 - damping) * mu.density + damping * target.density
        blend = SpectralFunction(mu.K, blend.coeffs / blend.coeffs[0])
        mu = ProbMeasure(blend)
    raise ConvergenceError(
        f"fixed point not reached after {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
    )


def mercer_check(V: InteractionKernel) -> tuple[bool, KernelSpectrum]:
    """Positivity of the kernel on mean-zero modes, constants absorbed.

    Rejects the diffusion form: the condition applies to symmetric kernels.
    """
    if not V.symmetric:
        raise ValueError("Mercer condition applies to symmetric kernels only")
    if isinstance(V, TranslationInvariantKernel):
        K = max(V.multipliers, default=1)
        pairs = []
        for k in sorted(V.multipliers):
            a = V.multipliers[k]
            pairs.append((BasisIndex("cosine", k), a))
            pairs.append((BasisIndex("sine", k), a))
        spectrum = KernelSpectrum(tuple(pairs), diagonal=True)
        ok = spectrum.min_eigenvalue() >= -1e-12
        return ok, spectrum
    K = V.K  # type: ignore[attr-defined]
    M = V.galerkin_matrix(K)[1:, 1:]  # restrict to mean-zero modes
    indices = basis_indices(K)[1:]
    off = M - np.diag(np.diag(M))
    if np.max(np.abs(off)) <= 1e-12:
        pairs = tuple((indices[j], float(M[j, j])) for j in range(len(indices)))
        spectrum = KernelSpectrum(pairs, diagonal=True)
    else:
        # eigenvalues paired with mean-zero indices in descending order:
        # a labelling convention, exact only in the diagonal case
        vals = np.sort(np.linalg.eigvalsh(M))[::-1]
        pairs = tuple((indices[j], float(vals[j])) for j in range(len(indices)))
        spectrum = KernelSpectrum(pairs, diagonal=False)
    return spectrum.min_eigenvalue() >= -1e-12, spectrum


def cov_mu(mu: ProbMeasure, f: SpectralFunction, g: SpectralFunction) -> float:
    """Covariance mu(fg) - (mu f)(mu g) with an anti-aliased product."""
    fg = basis.multiply(f, g)
    return mu.expect(fg) - mu.expect(f) * mu.expect(g)


def kernel_slice_matrix(V: InteractionKernel, thetas: np.ndarray, K: int) -> np.ndarray:
    """Rows are the coefficient vectors of V_theta for each angle."""
    E = basis.evaluate_basis(np.asarray(thetas, dtype=float), K)
    return E @ V.galerkin_matrix(K)
