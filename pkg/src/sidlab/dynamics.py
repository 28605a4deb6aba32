"""Deterministic semiflow of the measure ODE and Monte Carlo paths of the
self-interacting SDE with streaming occupation-measure updates.

The angular noise is a standard Brownian motion (generator Lap/2), so keeping
the Gibbs response exp(-V mu) as the frozen-drift invariant measure requires
the gradient drift to carry a factor 1/2; see operators.py.  Occupation
integrals are updated by the trapezoid rule, which keeps the constant
coefficient of the empirical measure exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _stepkernels, basis
from .basis import SpectralFunction, basis_size
from .errors import ConvergenceError, HypothesisError
from .measures import (
    DiffusionPotentialKernel,
    InteractionKernel,
    ProbMeasure,
    SignedMeasure,
    TranslationInvariantKernel,
    pi_residual,
    uniform_measure,
    v_mu,
    xi,
)

TWO_PI = 2.0 * np.pi
MU_STAR_RESIDUAL_LIMIT = 1e-8
_NOISE_BLOCK = 4096


def split_seed(master_seed: int, index: int) -> int:
    """Per-replication seed: splitmix64 of the master seed and the index."""
    z = (master_seed + 0x9E3779B97F4A7C15 * (index + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


# ---------------------------------------------------------------------------
# Measure ODE
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OdeState:
    mu: ProbMeasure
    time: float


def ode_flow(V: InteractionKernel, start: ProbMeasure, horizon: float, dt: float) -> list[OdeState]:
    """Classical RK4 for the density ODE rho' = -rho + xi(V mu), mass pinned each step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    K = start.K
    N = basis.product_grid_size(K)

    def velocity(rho: np.ndarray) -> np.ndarray:
        f = SpectralFunction(K, _kernel_matvec(V, K, rho))
        try:
            return xi(f).density.coeffs - rho
        except ValueError as exc:
            raise ConvergenceError(
                f"flow response density is invalid ({exc}); truncation too coarse for this kernel"
            ) from exc

    rho = start.density.coeffs.copy()
    states = [OdeState(start, 0.0)]
    steps = int(round(horizon / dt))
    t = 0.0
    for _ in range(steps):
        k1 = velocity(rho)
        k2 = velocity(rho + 0.5 * dt * k1)
        k3 = velocity(rho + 0.5 * dt * k2)
        k4 = velocity(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = rho / rho[0]
        t += dt
        density = SpectralFunction(K, rho)
        low = float(np.min(density.values(N)))
        if low < -1e-6:
            raise ConvergenceError(
                f"flow density reached {low:.3e} at t={t:.3g}; truncation too coarse for this kernel",
                residual=low,
            )
        states.append(OdeState(ProbMeasure(density), t))
    return states


def _kernel_matvec(V: InteractionKernel, K: int, rho: np.ndarray) -> np.ndarray:
    """Coefficients of V m for the density coefficients rho."""
    if isinstance(V, TranslationInvariantKernel):
        return V.diagonal(K) * rho
    if isinstance(V, DiffusionPotentialKernel):
        return rho[0] * V.v.coeffs
    return V.galerkin_matrix(K) @ rho


# ---------------------------------------------------------------------------
# SDE path state
# ---------------------------------------------------------------------------


@dataclass
class PathState:
    """One path: position, clock time, raw occupation integrals, generator."""

    K: int
    position: float
    clock_time: float
    occupation: np.ndarray  # I_alpha = w0 * init_alpha + integral of e_alpha(X)
    s0: float
    w0: float
    rng: np.random.Generator

    @property
    def occupation_norm(self) -> float:
        return self.w0 + self.clock_time - self.s0

    def mu_coeffs(self) -> np.ndarray:
        return self.occupation / self.occupation_norm

    @staticmethod
    def initial(K: int, seed: int, s0: float = 1.0, w0: float = 1.0,
                init_measure: ProbMeasure | None = None) -> "PathState":
        rng = np.random.default_rng(seed)
        init = init_measure if init_measure is not None else uniform_measure(K)
        position = _sample_from_density(init, rng)
        return PathState(K, position, s0, w0 * init.density.coeffs.copy(), s0, w0, rng)


def _sample_from_density(mu: ProbMeasure, rng: np.random.Generator) -> float:
    """Inverse-CDF draw from a density on the circle (grid interpolation)."""
    N = 4096
    dens = np.maximum(mu.density.values(N), 0.0)
    cdf = np.concatenate([[0.0], np.cumsum(dens)])
    cdf /= cdf[-1]
    theta = np.linspace(0.0, TWO_PI, N + 1)
    return float(np.interp(rng.uniform(), cdf, theta)) % TWO_PI


class _Ensemble:
    """Vectorized stepping of many independent paths with per-path noise streams.

    Occupation integrals of the oscillating modes are accumulated per segment
    of uniform dt: the trapezoid sum dt (B_0/2 + B_1 + ... + B_{n-1} + B_n/2)
    is gathered as a plain running sum with endpoint corrections, which is the
    same sum reassociated.  cos/sin values are kept without the sqrt(2)
    normalization; it is restored when coefficients are read out.
    """

    def __init__(self, V: InteractionKernel, K: int, seeds: list[int],
                 s0: float, w0: float, init_measure: ProbMeasure | None):
        self.V = V
        self.K = K
        self.n = basis_size(K)
        self.R = len(seeds)
        init = init_measure if init_measure is not None else uniform_measure(K)
        self.gens = [np.random.default_rng(s) for s in seeds]
        self.positions = np.array([_sample_from_density(init, g) for g in self.gens])
        # raw integrals of cos(kX), sin(kX): init coefficients carry 1/sqrt(2)
        self.acc_c = np.tile(init.density.coeffs[1::2] * (w0 / basis.SQRT2), (self.R, 1))
        self.acc_s = np.tile(init.density.coeffs[2::2] * (w0 / basis.SQRT2), (self.R, 1))
        self.acc_c = np.ascontiguousarray(self.acc_c)
        self.acc_s = np.ascontiguousarray(self.acc_s)
        self.clock = s0
        self.s0, self.w0 = s0, w0
        self.ks = np.arange(1, K + 1, dtype=float)
        self.C = np.cos(self.positions[:, None] * self.ks[None, :])
        self.S = np.sin(self.positions[:, None] * self.ks[None, :])
        self._block: np.ndarray | None = None
        self._block_pos = 0
        self._setup_drift(V, K)

    def _setup_drift(self, V: InteractionKernel, K: int):
        if isinstance(V, TranslationInvariantKernel):
            diag = V.diagonal(K)
            active = np.array(sorted(k for k, a in V.multipliers.items() if a != 0.0), dtype=np.int64)
            self._mode = "diag" if len(active) else "none"
            self._active = active - 1  # column indices into (R, K) arrays
            self._ka = (active.astype(float) * diag[2 * active - 1]
                        if len(active) else np.zeros(0))
        elif isinstance(V, DiffusionPotentialKernel):
            dv = basis.derivative_matrix(K) @ V.v.coeffs
            active = np.array([k - 1 for k in range(1, K + 1)
                               if dv[2 * k - 1] != 0.0 or dv[2 * k] != 0.0], dtype=np.int64)
            self._mode = "diffusion" if len(active) else "none"
            self._active = active
            # drift = -1/2 sqrt(2) (dvc . cos + dvs . sin); constant in time
            self._wc = -0.5 * basis.SQRT2 * dv[1::2][active]
            self._ws = -0.5 * basis.SQRT2 * dv[2::2][active]
        else:
            self._mode = "matrix"
            self._vmat = V.galerkin_matrix(K)

    def _draw_noise(self, n: int) -> np.ndarray:
        """Next n standard normals per path, (R, n); per-path streams in order."""
        parts = []
        need = n
        while need > 0:
            if self._block is None or self._block_pos >= self._block.shape[1]:
                self._block = np.empty((self.R, _NOISE_BLOCK))
                for r, g in enumerate(self.gens):
                    self._block[r] = g.standard_normal(_NOISE_BLOCK)
                self._block_pos = 0
            take = min(need, self._block.shape[1] - self._block_pos)
            parts.append(self._block[:, self._block_pos:self._block_pos + take])
            self._block_pos += take
            need -= take
        out = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)
        return np.ascontiguousarray(out)

    def _next_noise(self) -> np.ndarray:
        return self._draw_noise(1)[:, 0]

    def drift(self) -> np.ndarray:
        """-1/2 d(V mu_s)/dtheta at the current positions."""
        if self._mode == "none":
            return np.zeros(self.R)
        if self._mode == "diag":
            norm = self.w0 + self.clock - self.s0
            act = self._active
            t = self.acc_s[:, act] * self.C[:, act]
            t -= self.acc_c[:, act] * self.S[:, act]
            return t @ (self._ka / -norm)
        if self._mode == "diffusion":
            act = self._active
            return self.C[:, act] @ self._wc + self.S[:, act] @ self._ws
        # general matrix kernel: assemble coefficients and differentiate
        vmu = self.mu_coeffs() @ self._vmat.T
        vc = vmu[:, 1::2]
        vs = vmu[:, 2::2]
        dvmu = np.sum(self.ks[None, :] * (vs * self.C - vc * self.S), axis=1)
        return -0.5 * basis.SQRT2 * dvmu

    def _step_block(self, n_steps: int, dt: float):
        if n_steps <= 0:
            return
        if _stepkernels.HAVE_NUMBA and self._mode != "matrix":
            self._step_block_jit(n_steps, dt)
        else:
            self._step_block_numpy(n_steps, dt)

    def _step_block_jit(self, n_steps: int, dt: float):
        done = 0
        while done < n_steps:
            chunk = min(_NOISE_BLOCK, n_steps - done)
            eps = self._draw_noise(chunk)
            norm0 = self.w0 + self.clock - self.s0
            if self._mode == "diffusion":
                _stepkernels.steps_frozen_drift(
                    self.positions, self.acc_c, self.acc_s, eps, chunk, dt,
                    self._wc, self._ws, self._active,
                )
            else:
                ka = self._ka if self._mode == "diag" else np.zeros(0)
                act = self._active if self._mode == "diag" else np.zeros(0, dtype=np.int64)
                _stepkernels.steps_interacting(
                    self.positions, self.acc_c, self.acc_s, eps, chunk, dt,
                    norm0, ka, act,
                )
            self.clock += chunk * dt
            done += chunk
        kt = self.positions[:, None] * self.ks[None, :]
        np.cos(kt, out=self.C)
        np.sin(kt, out=self.S)

    def _step_block_numpy(self, n_steps: int, dt: float):
        """Per-step trapezoid updates; the drift feeds back on the running occupation."""
        sqdt = math.sqrt(dt)
        half = 0.5 * dt
        pos = self.positions
        C_new = np.empty_like(self.C)
        S_new = np.empty_like(self.S)
        for _ in range(n_steps):
            eps = self._next_noise()
            pos += self.drift() * dt
            pos += sqdt * eps
            np.mod(pos, TWO_PI, out=pos)
            kt = pos[:, None] * self.ks[None, :]
            np.cos(kt, out=C_new)
            np.sin(kt, out=S_new)
            self.acc_c += half * (self.C + C_new)
            self.acc_s += half * (self.S + S_new)
            self.C, C_new = C_new, self.C
            self.S, S_new = S_new, self.S
            self.clock += dt

    def run_to(self, target: float, dt: float):
        """Advance with uniform steps, landing on the target time exactly."""
        remaining = target - self.clock
        if remaining < -1e-9:
            raise ValueError("target time is in the past")
        n_full = int(math.floor(remaining / dt + 1e-12))
        self._step_block(n_full, dt)
        tail = target - self.clock
        if tail > 1e-12 * max(1.0, dt):
            self._step_block(1, tail)
        self.clock = target

    def mu_coeffs(self) -> np.ndarray:
        out = np.empty((self.R, self.n))
        out[:, 0] = 1.0  # the constant mode integrates exactly
        norm = self.w0 + self.clock - self.s0
        out[:, 1::2] = (basis.SQRT2 / norm) * self.acc_c
        out[:, 2::2] = (basis.SQRT2 / norm) * self.acc_s
        return out


def sde_step(state: PathState, V: InteractionKernel, dt: float) -> PathState:
    """One Euler-Maruyama step of a single path (drift -1/2 d(V mu)/dtheta)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    drift = drift_at(V, state.mu_coeffs(), state.position)
    eps = state.rng.standard_normal()
    newpos = float((state.position + drift * dt + math.sqrt(dt) * eps) % TWO_PI)
    occ = state.occupation + 0.5 * dt * (
        basis.evaluate_basis(state.position, state.K) + basis.evaluate_basis(newpos, state.K)
    )
    occ[0] = state.occupation[0] + dt  # exact for the constant mode
    return PathState(state.K, newpos, state.clock_time + dt, occ, state.s0, state.w0, state.rng)


def drift_at(V: InteractionKernel, mu_coeffs: np.ndarray, theta: float) -> float:
    """The SDE drift -1/2 d(V mu)/dtheta evaluated at one angle."""
    K = (len(mu_coeffs) - 1) // 2
    vmu = _kernel_matvec(V, K, np.asarray(mu_coeffs, dtype=float))
    dvmu = basis.derivative_matrix(K) @ vmu
    return -0.5 * float(basis.evaluate_basis(theta, K) @ dvmu)


# ---------------------------------------------------------------------------
# Fluctuation sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Everything a path needs besides the kernel and its seed."""

    mu_star: ProbMeasure
    log_times: tuple[float, ...]
    dt: float = 1e-3
    s0: float = 1.0
    w0: float = 1.0
    init_measure: ProbMeasure | None = None
    test_functions: tuple[SpectralFunction, ...] = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        lt = tuple(float(t) for t in self.log_times)
        if any(b <= a for a, b in zip(lt, lt[1:])):
            raise ValueError("log_times must be strictly increasing")
        if math.exp(lt[0]) < self.s0:
            raise ValueError("first sample time precedes the warm start")
        object.__setattr__(self, "log_times", lt)


@dataclass(frozen=True)
class FluctuationSample:
    """The rescaled fluctuation at one log-time."""

    log_time: float
    delta: SignedMeasure          # e^{t/2} (mu_{e^t} - mu*)
    d_function: SpectralFunction  # V applied to delta
    delta_g: np.ndarray           # pairings with the configured test functions


@dataclass(frozen=True)
class EnsembleResult:
    log_times: tuple[float, ...]
    seeds: tuple[int, ...]
    delta_coeffs: np.ndarray  # (reps, times, 2K+1)
    delta_g: np.ndarray       # (reps, times, n_test_functions)


def run_ensemble(V: InteractionKernel, config: SimConfig, seeds) -> EnsembleResult:
    """Simulate independent paths (vectorized) and record fluctuation samples."""
    residual = pi_residual(V, config.mu_star)
    if residual > MU_STAR_RESIDUAL_LIMIT:
        raise HypothesisError(
            f"mu* residual {residual:.3e} exceeds {MU_STAR_RESIDUAL_LIMIT:g}; "
            "fluctuations around it would be biased"
        )
    seeds = [int(s) for s in seeds]
    K = config.mu_star.K
    ens = _Ensemble(V, K, seeds, config.s0, config.w0, config.init_measure)
    mu_star_coeffs = config.mu_star.density.coeffs
    g_mat = (np.array([g.coeffs for g in config.test_functions])
             if config.test_functions else np.zeros((0, basis_size(K))))
    delta_coeffs = np.empty((len(seeds), len(config.log_times), basis_size(K)))
    for j, t in enumerate(config.log_times):
        ens.run_to(math.exp(t), config.dt)
        delta_coeffs[:, j, :] = math.exp(t / 2.0) * (ens.mu_coeffs() - mu_star_coeffs[None, :])
    delta_g = delta_coeffs @ g_mat.T
    return EnsembleResult(config.log_times, tuple(seeds), delta_coeffs, delta_g)


def run_path(V: InteractionKernel, config: SimConfig, seed: int) -> list[FluctuationSample]:
    """One path's fluctuation samples; fully deterministic given the seed."""
    result = run_ensemble(V, config, [seed])
    K = config.mu_star.K
    out = []
    for j, t in enumerate(config.log_times):
        delta = SignedMeasure(SpectralFunction(K, result.delta_coeffs[0, j]))
        out.append(
            FluctuationSample(t, delta, v_mu(V, delta), result.delta_g[0, j].copy())
        )
    return out
