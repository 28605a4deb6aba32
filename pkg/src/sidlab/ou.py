"""Limit objects: Mercer decomposition, function-valued Brownian motion and
Ornstein-Uhlenbeck sampling, and the limit covariance of the rescaled
fluctuations with its two closed-form specializations.

The integrals over [0, infinity) substitute t = (1+T)^u - 1 (log-spaced nodes
near 0) and apply trapezoid sums with Richardson extrapolation until the
diagonal stabilizes; horizons are tied to the measured coercivity constant.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import basis
from .basis import SpectralFunction, basis_indices
from .errors import ConvergenceError, HypothesisError
from .measures import (
    InteractionKernel,
    KernelSpectrum,
    ProbMeasure,
    SignedMeasure,
)
from .operators import OperatorMatrix, OperatorSet, require_hypothesis

DEFAULT_REL_TOL = 1e-8
_PHI1_SERIES_CUTOFF = 1e-5


def _phi1(x: np.ndarray) -> np.ndarray:
    """(exp(x) - 1) / x, stable near 0, complex-safe."""
    x = np.asarray(x)
    small = np.abs(x) < _PHI1_SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    direct = (np.exp(safe) - 1.0) / safe
    series = 1.0 + x / 2.0 + x * x / 6.0
    return np.where(small, series, direct)


class _AffineFlow:
    """Solution of rho' = -M rho - exp(-t/2) b, observed as f(t) = exp(-t/2) a + O rho(t).

    Uses the eigendecomposition of M when well conditioned (closed-form
    convolution); otherwise steps the augmented system with matrix exponentials.
    """

    COND_LIMIT = 1e6

    def __init__(self, M, rho0, b, a, out_map):
        n = M.shape[0]
        self.M = np.asarray(M, dtype=float)
        self.rho0 = np.zeros(n) if rho0 is None else np.asarray(rho0, dtype=float)
        self.b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
        self.a = np.zeros(out_map.shape[0]) if a is None else np.asarray(a, dtype=float)
        self.out = np.asarray(out_map, dtype=float)
        w, S = np.linalg.eig(self.M)
        cond = np.inf
        try:
            cond = np.linalg.cond(S)
        except np.linalg.LinAlgError:
            pass
        if np.isfinite(cond) and cond < self.COND_LIMIT:
            Sinv = np.linalg.inv(S)
            self._eig = (w, S, Sinv @ self.rho0.astype(complex), Sinv @ self.b.astype(complex))
            self._states = None
        else:
            self._eig = None
            aug = np.zeros((n + 1, n + 1))
            aug[:n, :n] = self.M
            aug[:n, n] = self.b
            aug[n, n] = 0.5
            self._aug = aug
            z0 = np.concatenate([self.rho0, [1.0]])
            self._times = [0.0]
            self._states = {0.0: z0}

    def rho_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if self._eig is not None:
            w, S, rho0_hat, b_hat = self._eig
            expo = np.exp(-np.outer(ts, w))
            conv = expo * (ts[:, None] * _phi1(np.outer(ts, w - 0.5)))
            rho_hat = expo * rho0_hat[None, :] - conv * b_hat[None, :]
            return np.real(rho_hat @ S.T)
        return self._rho_stepped(ts)

    def _rho_stepped(self, ts: np.ndarray) -> np.ndarray:
        new = sorted({float(t) for t in ts} - self._states.keys())
        if new:
            preds = []
            for t in new:
                j = bisect.bisect_right(self._times, t) - 1
                preds.append(self._times[j])
            gaps = np.array([t - p for t, p in zip(new, preds)])
            steps = scipy.linalg.expm(-gaps[:, None, None] * self._aug[None, :, :])
            for t, p, st in zip(new, preds, steps):
                self._states[t] = st @ self._states[p]
            self._times = sorted(self._states.keys())
        n = self.M.shape[0]
        return np.stack([self._states[float(t)][:n] for t in ts])

    def f_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        free = np.exp(-0.5 * ts)[:, None] * self.a[None, :]
        return free + self.rho_at(ts) @ self.out.T


def decayed_integral(values_fn, T: float, rel_tol: float = DEFAULT_REL_TOL,
                     abs_floor: float = 1e-14, max_level: int = 14) -> float:
    """Romberg integration of an exponentially decaying integrand over [0, T].

    values_fn maps an array of times to integrand values.  Nodes are dyadic in
    u with t = (1+T)^u - 1, which refines logarithmically near t = 0.
    """
    a = np.log1p(T)

    def tilde(us):
        ts = np.expm1(a * us)
        return values_fn(ts) * a * (1.0 + ts)

    h = 1.0
    vals = tilde(np.array([0.0, 1.0]))
    trap = h * (vals[0] + vals[1]) / 2.0
    rows = [np.array([trap])]
    for level in range(1, max_level + 1):
        h /= 2.0
        new_u = (np.arange(2 ** (level - 1)) * 2 + 1) * h
        trap = rows[-1][0] / 2.0 + h * float(np.sum(tilde(new_u)))
        row = [trap]
        prev = rows[-1]
        for k in range(1, level + 1):
            row.append(row[k - 1] + (row[k - 1] - prev[k - 1]) / (4.0 ** k - 1.0))
        rows.append(np.array(row))
        if level >= 3:
            best, before = rows[-1][-1], rows[-2][-1]
            if abs(best - before) <= rel_tol * abs(best) + abs_floor:
                return float(best)
    raise ConvergenceError(
        f"quadrature did not stabilize to {rel_tol:g} within {max_level} levels"
    )


def _integrate_chat(flow_f: _AffineFlow, flow_g: _AffineFlow, S: np.ndarray,
                    T: float, rel_tol: float) -> float:
    def values(ts):
        F = flow_f.f_at(ts)
        G = flow_g.f_at(ts)
        return np.einsum("ti,ij,tj->t", F, S, G)

    return decayed_integral(values, T, rel_tol)


def _horizon(rate: float) -> float:
    return max(40.0, 20.0 / rate)


def _u_source(ops: OperatorSet, g_coeffs: np.ndarray) -> np.ndarray:
    """Density coefficients of (g - mu g) mu, the source driving the adjoint flow."""
    rho = ops.mu.density.coeffs
    M_rho = basis.multiplication_matrix(ops.mu.density)
    return M_rho @ g_coeffs - (rho @ g_coeffs) * rho


# ---------------------------------------------------------------------------
# Mercer decomposition and Brownian motion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MercerDecomposition:
    """C(x,y) = sum_i Psi_i(x) Psi_i(y); Psi_i absorbs the root of its eigenvalue."""

    eigenvalues: np.ndarray            # descending, > 0
    functions: tuple[SpectralFunction, ...]
    K: int

    @property
    def rank(self) -> int:
        return len(self.functions)

    def coefficient_covariance(self) -> np.ndarray:
        """Coefficient-space covariance matrix sum_i psi_i psi_i^T."""
        n = basis.basis_size(self.K)
        C = np.zeros((n, n))
        for psi in self.functions:
            C += np.outer(psi.coeffs, psi.coeffs)
        return C

    def reconstruction(self, N: int) -> np.ndarray:
        E = basis.design_matrix(N, self.K)
        return E @ self.coefficient_covariance() @ E.T


def mercer_decompose(C: np.ndarray, K: int, rel_tol: float = 1e-10) -> MercerDecomposition:
    """Eigendecompose a grid covariance kernel in the lam-weighted inner product."""
    C = np.asarray(C, dtype=float)
    N = C.shape[0]
    if C.shape != (N, N):
        raise ValueError("kernel matrix must be square")
    scale = max(1.0, float(np.max(np.abs(C))))
    if float(np.max(np.abs(C - C.T))) > 1e-9 * scale:
        raise ValueError("kernel matrix is not symmetric")
    # integral operator against lam has matrix C/N on the uniform grid
    vals, vecs = np.linalg.eigh(C / N)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    sigma0 = float(vals[0]) if len(vals) else 0.0
    if sigma0 <= 0.0:
        return MercerDecomposition(np.zeros(0), (), K)
    if float(vals[-1]) < -1e-9 * sigma0:
        raise ValueError(f"kernel has a negative eigenvalue {vals[-1]:.3e}; not PSD")
    keep = vals >= rel_tol * sigma0
    funcs = []
    for sigma, v in zip(vals[keep], vecs[:, keep].T):
        phi = basis.analyze(v * np.sqrt(N), K)   # unit L2(lam) norm
        funcs.append(np.sqrt(sigma) * phi)
    return MercerDecomposition(vals[keep].copy(), tuple(funcs), K)


def brownian_sample(dec: MercerDecomposition, times, seed: int) -> list[SpectralFunction]:
    """One path of the C(M)-valued Brownian motion W_t = sum_i B^i_t Psi_i."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be increasing and nonnegative")
    rng = np.random.default_rng(seed)
    psi = np.array([p.coeffs for p in dec.functions])  # (r, n)
    n = basis.basis_size(dec.K)
    coeffs = np.zeros(n)
    out = []
    prev = 0.0
    for t in times:
        dt = t - prev
        if dt > 0 and dec.rank:
            coeffs = coeffs + np.sqrt(dt) * (rng.standard_normal(dec.rank) @ psi)
        out.append(SpectralFunction(dec.K, coeffs))
        prev = t
    return out


def brownian_ensemble(dec: MercerDecomposition, t: float, n_samples: int, seed: int) -> np.ndarray:
    """Coefficient samples of W_t across independent paths; shape (n_samples, 2K+1)."""
    rng = np.random.default_rng(seed)
    n = basis.basis_size(dec.K)
    if dec.rank == 0 or t == 0.0:
        return np.zeros((n_samples, n))
    psi = np.array([p.coeffs for p in dec.functions])
    return np.sqrt(t) * rng.standard_normal((n_samples, dec.rank)) @ psi


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OUPath:
    times: np.ndarray
    states: tuple[SpectralFunction, ...]
    driving: np.ndarray | None  # standard normals consumed per step, for replay


class OUSampler:
    """Exact-in-distribution stepping of dZ = -G Z dt + dW on the coefficient space.

    Per step size h the update is Z <- exp(-hG) Z + eta with eta centered
    Gaussian of covariance  integral_0^h exp(-sG) C exp(-sG)' ds, evaluated by
    Gauss-Legendre quadrature once per h and cached.
    """

    GL_NODES = 64

    def __init__(self, Gmat: np.ndarray, Cmat: np.ndarray):
        self.G = np.asarray(Gmat, dtype=float)
        self.C = np.asarray(Cmat, dtype=float)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def step_noise_cov(self, h: float) -> np.ndarray:
        nodes, weights = np.polynomial.legendre.leggauss(self.GL_NODES)
        s = 0.5 * h * (nodes + 1.0)
        w = 0.5 * h * weights
        E = scipy.linalg.expm(-s[:, None, None] * self.G[None, :, :])
        cov = np.einsum("k,kij,jl,kml->im", w, E, self.C, E)
        return 0.5 * (cov + cov.T)

    def step_pair(self, h: float) -> tuple[np.ndarray, np.ndarray]:
        """(exp(-hG), noise factor L with L L' the step covariance)."""
        hit = self._cache.get(h)
        if hit is None:
            E = scipy.linalg.expm(-h * self.G)
            cov = self.step_noise_cov(h)
            vals, vecs = np.linalg.eigh(cov)
            L = vecs * np.sqrt(np.clip(vals, 0.0, None))
            hit = (E, L)
            self._cache[h] = hit
        return hit

    def run(self, z0: np.ndarray, times: np.ndarray, rng: np.random.Generator,
            record_driving: bool = False):
        n = self.G.shape[0]
        states = np.empty((len(times), n))
        states[0] = z0
        driving = np.empty((len(times) - 1, n)) if record_driving else None
        z = np.array(z0, dtype=float)
        for j in range(1, len(times)):
            h = float(times[j] - times[j - 1])
            E, L = self.step_pair(h)
            xi = rng.standard_normal(n)
            if record_driving:
                driving[j - 1] = xi
            z = E @ z + L @ xi
            states[j] = z
        return states, driving

    def run_ensemble(self, z0: np.ndarray, times: np.ndarray, rng: np.random.Generator,
                     n_paths: int) -> np.ndarray:
        """States for many independent paths; shape (len(times), n_paths, n)."""
        n = self.G.shape[0]
        Z = np.tile(np.asarray(z0, dtype=float)[None, :], (n_paths, 1))
        out = np.empty((len(times), n_paths, n))
        out[0] = Z
        for j in range(1, len(times)):
            h = float(times[j] - times[j - 1])
            E, L = self.step_pair(h)
            Z = Z @ E.T + rng.standard_normal((n_paths, n)) @ L.T
            out[j] = Z
        return out


def ou_solve(Gop: OperatorMatrix, dec: MercerDecomposition, z0: SpectralFunction,
             times, seed: int) -> OUPath:
    """Sample one OU path observed at the given increasing times."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    sampler = OUSampler(Gop.matrix, dec.coefficient_covariance())
    rng = np.random.default_rng(seed)
    states, driving = sampler.run(z0.coeffs, times, rng, record_driving=True)
    funcs = tuple(SpectralFunction(z0.K, row) for row in states)
    return OUPath(times, funcs, driving)


def finite_time_var(Gmat: np.ndarray, Cmat: np.ndarray, m: np.ndarray, t: float,
                    rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Variance of the m-projection of the OU state at time t, started at 0.

    Independent route from the sampler's per-step covariance: Romberg over
    s -> (exp(-sG)' m)' C (exp(-sG)' m).
    """
    flow = _AffineFlow(Gmat.T, m, None, None, np.eye(Gmat.shape[0]))
    return _integrate_chat(flow, flow, Cmat, t, rel_tol)


def ou_stationary_var(Gmat: np.ndarray, Cmat: np.ndarray, m: np.ndarray,
                      rate: float, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """Stationary variance of the m-projection for a coercive drift."""
    flow = _AffineFlow(Gmat.T, m, None, None, np.eye(Gmat.shape[0]))
    return _integrate_chat(flow, flow, Cmat, _horizon(rate), rel_tol)


# ---------------------------------------------------------------------------
# Limit covariances of the rescaled fluctuations
# ---------------------------------------------------------------------------


def stationary_var(mu: ProbMeasure, V: InteractionKernel, m: SignedMeasure,
                   ops: OperatorSet | None = None, rel_tol: float = DEFAULT_REL_TOL,
                   horizon: float | None = None) -> float:
    """Variance of the stationary fluctuation law paired with the measure m."""
    ops = ops if ops is not None else OperatorSet(mu, V)
    require_hypothesis(ops.diag, "stationary variance")
    T = horizon if horizon is not None else _horizon(ops.diag.effective_rate)
    Vmat = V.galerkin_matrix(mu.K)
    flow = _AffineFlow(ops.Gstar.matrix, m.density.coeffs, None, None, Vmat)
    return _integrate_chat(flow, flow, ops.chat_matrix, T, rel_tol)


def joint_var(mu: ProbMeasure, V: InteractionKernel, u, m: SignedMeasure,
              g: list[SpectralFunction], ops: OperatorSet | None = None,
              rel_tol: float = DEFAULT_REL_TOL, horizon: float | None = None) -> float:
    """Variance of u . Zg + m Z for the joint limit law.

    The test-function block rides the adjoint flow as an exp(-t/2)-modulated
    source; signs follow the flow equation (the u = 0 and m = 0 reductions are
    enforced by tests).
    """
    ops = ops if ops is not None else OperatorSet(mu, V)
    require_hypothesis(ops.diag, "joint variance")
    T = horizon if horizon is not None else _horizon(ops.diag.effective_rate)
    u = np.asarray(u, dtype=float)
    if len(u) != len(g):
        raise ValueError("u and g must have matching lengths")
    K = mu.K
    a = np.zeros(basis.basis_size(K))
    b = np.zeros(basis.basis_size(K))
    for ui, gi in zip(u, g):
        a += ui * gi.coeffs
        b += ui * _u_source(ops, gi.coeffs)
    Vmat = V.galerkin_matrix(K)
    flow = _AffineFlow(ops.Gstar.matrix, m.density.coeffs, b, a, Vmat)
    return _integrate_chat(flow, flow, ops.chat_matrix, T, rel_tol)


def limit_covariance(mu_star: ProbMeasure, V: InteractionKernel, f: SpectralFunction,
                     g: SpectralFunction, ops: OperatorSet | None = None,
                     rel_tol: float = DEFAULT_REL_TOL, horizon: float | None = None) -> float:
    """The CLT covariance of the fluctuation pairings with f and g."""
    ops = ops if ops is not None else OperatorSet(mu_star, V)
    require_hypothesis(ops.diag, "limit covariance")
    T = horizon if horizon is not None else _horizon(ops.diag.effective_rate)
    Vmat = V.galerkin_matrix(mu_star.K)
    Gs = ops.Gstar.matrix
    flow_f = _AffineFlow(Gs, None, _u_source(ops, f.coeffs), f.coeffs, Vmat)
    flow_g = _AffineFlow(Gs, None, _u_source(ops, g.coeffs), g.coeffs, Vmat)
    return _integrate_chat(flow_f, flow_g, ops.chat_matrix, T, rel_tol)


def closed_form_symmetric(spectrum: KernelSpectrum, f: SpectralFunction,
                          g: SpectralFunction) -> float:
    """Diagonal-kernel closed form at the uniform fixed point.

    Sums 4 f_a g_a / (k_a^2 (1 + 2 lam_a)) over mean-zero modes; valid when the
    kernel is diagonal in this basis and every 1/2 + lam_a is positive.
    """
    if not spectrum.diagonal:
        raise ValueError("closed form requires a kernel diagonal in the Fourier basis")
    total = 0.0
    for pos, idx in enumerate(basis_indices(f.K)):
        if idx.kind == "constant":
            continue
        lam = spectrum.value(idx)
        if 0.5 + lam <= 0.0:
            raise HypothesisError(
                f"mode {idx.name}: 1/2 + {lam:.6g} <= 0; the limit law does not exist"
            )
        k = idx.frequency
        total += 4.0 * f.coeffs[pos] * g.coeffs[pos] / (k * k * (1.0 + 2.0 * lam))
    return total


@dataclass(frozen=True)
class LimitCovariance:
    """Predicted covariance matrix of the fluctuation pairings with test functions."""

    test_functions: tuple[str, ...]
    matrix: np.ndarray
    method: str  # "quadrature" | "closed_form_diffusion" | "closed_form_symmetric"
    kappa: float
    horizon: float

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float).copy()
        scale = max(1.0, float(np.max(np.abs(M))))
        if float(np.max(np.abs(M - M.T))) > 1e-9 * scale:
            raise ValueError("covariance matrix is not symmetric")
        if float(np.min(np.linalg.eigvalsh(M))) < -1e-9 * scale:
            raise ValueError("covariance matrix is not PSD")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    def to_dict(self) -> dict:
        return {
            "testFunctions": list(self.test_functions),
            "matrix": self.matrix.tolist(),
            "method": self.method,
            "kappa": self.kappa,
            "horizon": self.horizon,
        }


def _is_uniform(mu: ProbMeasure, tol: float = 1e-8) -> bool:
    return float(np.max(np.abs(mu.density.coeffs[1:]))) <= tol


def limit_covariance_matrix(mu_star: ProbMeasure, V: InteractionKernel,
                            names: list[str], funcs: list[SpectralFunction],
                            method: str = "auto", rel_tol: float = DEFAULT_REL_TOL) -> LimitCovariance:
    """Assemble the predicted covariance over a list of test functions."""
    from .measures import DiffusionPotentialKernel, mercer_check

    ops = OperatorSet(mu_star, V)
    require_hypothesis(ops.diag, "limit covariance")
    T = _horizon(ops.diag.effective_rate)
    if method == "auto":
        if isinstance(V, DiffusionPotentialKernel):
            method = "closed_form_diffusion"
        else:
            _, spectrum = mercer_check(V)
            if spectrum.diagonal and _is_uniform(mu_star):
                method = "closed_form_symmetric"
            else:
                method = "quadrature"

    n = len(funcs)
    M = np.empty((n, n))
    if method == "closed_form_diffusion":
        if not isinstance(V, DiffusionPotentialKernel):
            raise ValueError("diffusion closed form requires a diffusion potential kernel")
        for i in range(n):
            for j in range(i, n):
                M[i, j] = M[j, i] = float(funcs[i].coeffs @ ops.chat_matrix @ funcs[j].coeffs)
    elif method == "closed_form_symmetric":
        _, spectrum = mercer_check(V)
        for i in range(n):
            for j in range(i, n):
                M[i, j] = M[j, i] = closed_form_symmetric(spectrum, funcs[i], funcs[j])
    elif method == "quadrature":
        for i in range(n):
            for j in range(i, n):
                M[i, j] = M[j, i] = limit_covariance(
                    mu_star, V, funcs[i], funcs[j], ops=ops, rel_tol=rel_tol
                )
    else:
        raise ValueError(f"unknown method {method!r}")
    M = 0.5 * (M + M.T)
    return LimitCovariance(tuple(names), M, method, ops.diag.kappa, T)
