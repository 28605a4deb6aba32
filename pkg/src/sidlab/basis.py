"""Real Fourier basis on the circle with normalized measure lam(dtheta) = dtheta/2pi.

Basis functions, orthonormal in L2(lam):

    e_0(theta) = 1
    c_k(theta) = sqrt(2) cos(k theta),   1 <= k <= K
    s_k(theta) = sqrt(2) sin(k theta)

Coefficient vectors have length 2K+1 and are ordered
[const, c_1, s_1, c_2, s_2, ..., c_K, s_K].  Grids are uniform,
theta_j = 2 pi j / N, and inner products are trapezoid sums (exact for
band-limited integrands when N exceeds the combined degree).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class BasisIndex:
    """One element of the real Fourier basis."""

    kind: str  # "constant" | "cosine" | "sine"
    frequency: int = 0

    def __post_init__(self):
        if self.kind == "constant":
            if self.frequency != 0:
                raise ValueError("constant index carries no frequency")
        elif self.kind in ("cosine", "sine"):
            if self.frequency < 1:
                raise ValueError(f"{self.kind} index needs frequency >= 1")
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "constant":
            return "const"
        return ("cos" if self.kind == "cosine" else "sin") + str(self.frequency)


def basis_size(K: int) -> int:
    return 2 * K + 1


def basis_indices(K: int) -> list[BasisIndex]:
    """All indices in coefficient order [const, c_1, s_1, ..., c_K, s_K]."""
    out = [BasisIndex("constant")]
    for k in range(1, K + 1):
        out.append(BasisIndex("cosine", k))
        out.append(BasisIndex("sine", k))
    return out


def index_position(idx: BasisIndex, K: int) -> int:
    """Position of a basis index in the coefficient vector."""
    if idx.kind == "constant":
        return 0
    if idx.frequency > K:
        raise ValueError(f"frequency {idx.frequency} exceeds truncation {K}")
    return 2 * idx.frequency - (1 if idx.kind == "cosine" else 0)


def grid(N: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(N) / N


@lru_cache(maxsize=32)
def design_matrix(N: int, K: int) -> np.ndarray:
    """N x (2K+1) matrix of basis values e_alpha(theta_j); read-only, cached."""
    theta = grid(N)
    E = np.empty((N, basis_size(K)))
    E[:, 0] = 1.0
    for k in range(1, K + 1):
        E[:, 2 * k - 1] = SQRT2 * np.cos(k * theta)
        E[:, 2 * k] = SQRT2 * np.sin(k * theta)
    E.setflags(write=False)
    return E


def evaluate_basis(theta: np.ndarray, K: int) -> np.ndarray:
    """Basis values at arbitrary angles; shape (*theta.shape, 2K+1)."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape + (basis_size(K),))
    out[..., 0] = 1.0
    k = np.arange(1, K + 1)
    ktheta = theta[..., None] * k
    out[..., 1::2] = SQRT2 * np.cos(ktheta)
    out[..., 2::2] = SQRT2 * np.sin(ktheta)
    return out


class SpectralFunction:
    """A real function on the circle held as truncated real Fourier coefficients.

    Immutable; grid values on the default evaluation grid are cached lazily.
    """

    __slots__ = ("K", "coeffs", "_grid_cache")

    def __init__(self, K: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=float).copy()
        if coeffs.shape != (basis_size(K),):
            raise ValueError(
                f"expected {basis_size(K)} coefficients for K={K}, got {coeffs.shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "_grid_cache", {})

    def __setattr__(self, name, value):
        raise AttributeError("SpectralFunction is immutable")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(K: int) -> "SpectralFunction":
        return SpectralFunction(K, np.zeros(basis_size(K)))

    @staticmethod
    def constant(K: int, value: float = 1.0) -> "SpectralFunction":
        c = np.zeros(basis_size(K))
        c[0] = value
        return SpectralFunction(K, c)

    @staticmethod
    def unit(K: int, idx: BasisIndex) -> "SpectralFunction":
        c = np.zeros(basis_size(K))
        c[index_position(idx, K)] = 1.0
        return SpectralFunction(K, c)

    # -- evaluation --------------------------------------------------------

    def values(self, N: int) -> np.ndarray:
        """Evaluate on the uniform N-grid (cached per N)."""
        cached = self._grid_cache.get(N)
        if cached is None:
            cached = design_matrix(N, self.K) @ self.coeffs
            cached.setflags(write=False)
            self._grid_cache[N] = cached
        return cached

    def at(self, theta) -> np.ndarray:
        return evaluate_basis(np.asarray(theta, dtype=float), self.K) @ self.coeffs

    @property
    def mean(self) -> float:
        """lam-mean, which is the e_0 coefficient."""
        return float(self.coeffs[0])

    def sup_norm(self, N: int | None = None) -> float:
        N = N if N is not None else product_grid_size(self.K)
        return float(np.max(np.abs(self.values(N))))

    # -- arithmetic (coefficientwise; products go through multiply) --------

    def __add__(self, other: "SpectralFunction") -> "SpectralFunction":
        self._check_same_K(other)
        return SpectralFunction(self.K, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralFunction") -> "SpectralFunction":
        self._check_same_K(other)
        return SpectralFunction(self.K, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralFunction":
        return SpectralFunction(self.K, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralFunction":
        return SpectralFunction(self.K, -self.coeffs)

    def _check_same_K(self, other):
        if self.K != other.K:
            raise ValueError(f"truncation mismatch: {self.K} vs {other.K}")

    def __repr__(self):
        return f"SpectralFunction(K={self.K}, mean={self.mean:.6g})"


def product_grid_size(K: int, N: int | None = None) -> int:
    """Grid size with anti-aliasing margin for pointwise products."""
    n_min = 4 * K + 1
    if N is None:
        return max(n_min, 256)
    return max(N, n_min)


def analyze(values, K: int) -> SpectralFunction:
    """Project grid values onto the truncated basis by trapezoid quadrature.

    Exact for band-limited inputs; rejects grids too short to resolve K modes.
    """
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    if N < basis_size(K):
        raise ValueError(f"grid of length {N} cannot resolve truncation K={K}")
    E = design_matrix(N, K)
    return SpectralFunction(K, E.T @ values / N)


def synthesize(f: SpectralFunction, N: int) -> np.ndarray:
    """Evaluate a spectral function on the uniform N-grid."""
    return design_matrix(N, f.K) @ f.coeffs


def multiply(f: SpectralFunction, g: SpectralFunction, N: int | None = None) -> SpectralFunction:
    """Galerkin product: pointwise on an anti-aliased grid, truncated back to K."""
    f._check_same_K(g)
    N = product_grid_size(f.K, N)
    return analyze(f.values(N) * g.values(N), f.K)


@lru_cache(maxsize=32)
def derivative_matrix(K: int) -> np.ndarray:
    """Matrix of d/dtheta: c_k -> -k s_k, s_k -> k c_k, const -> 0."""
    n = basis_size(K)
    D = np.zeros((n, n))
    for k in range(1, K + 1):
        D[2 * k, 2 * k - 1] = -k  # c_k contributes -k to s_k
        D[2 * k - 1, 2 * k] = k   # s_k contributes +k to c_k
    D.setflags(write=False)
    return D


@lru_cache(maxsize=32)
def laplacian_multipliers(K: int) -> np.ndarray:
    m = np.zeros(basis_size(K))
    for k in range(1, K + 1):
        m[2 * k - 1] = m[2 * k] = -float(k * k)
    m.setflags(write=False)
    return m


def derivative(f: SpectralFunction) -> SpectralFunction:
    return SpectralFunction(f.K, derivative_matrix(f.K) @ f.coeffs)


def laplacian(f: SpectralFunction) -> SpectralFunction:
    return SpectralFunction(f.K, laplacian_multipliers(f.K) * f.coeffs)


def inner(f: SpectralFunction, g: SpectralFunction) -> float:
    """L2(lam) inner product via Parseval."""
    f._check_same_K(g)
    return float(f.coeffs @ g.coeffs)


def multiplication_matrix(h: SpectralFunction, N: int | None = None) -> np.ndarray:
    """Galerkin matrix of f -> P_K(h f), columns are multiply(h, e_beta)."""
    N = product_grid_size(h.K, N)
    E = design_matrix(N, h.K)
    return (E.T * h.values(N)) @ E / N
