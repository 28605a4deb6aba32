"""Experiment orchestration: replicated fluctuation simulations, empirical vs
predicted covariance, bootstrap intervals, normality checks, and reports.

All artifacts are deterministic functions of (config, master seed): replication
noise streams are keyed by the splitmix64 rule in dynamics, bootstrap uses its
own derived seed, and reports carry no wall-clock data.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentSpec, canonical_config_hash
from .dynamics import SimConfig, run_ensemble, split_seed
from .errors import HypothesisError, WorkerError
from .measures import fix_pi_solve, pi_residual, uniform_measure
from .operators import OperatorSet, require_hypothesis
from .ou import LimitCovariance, limit_covariance_matrix

BOOTSTRAP_RESAMPLES = 2000
BOOTSTRAP_LEVEL = 0.95
NORMALITY_ALPHA = 0.01


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def empirical_covariance(samples: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance of row observations."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need at least 2 sample rows")
    return np.atleast_2d(np.cov(samples, rowvar=False, ddof=1))


def bootstrap_ci(samples: np.ndarray, level: float = BOOTSTRAP_LEVEL,
                 resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Percentile bootstrap interval for every covariance entry."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise ValueError("need at least 2 sample rows")
    R, m = samples.shape
    rng = np.random.default_rng(seed)
    stats = np.empty((resamples, m, m))
    for b in range(resamples):
        idx = rng.integers(0, R, R)
        stats[b] = np.atleast_2d(np.cov(samples[idx], rowvar=False, ddof=1))
    alpha = (1.0 - level) / 2.0
    lo = np.quantile(stats, alpha, axis=0)
    hi = np.quantile(stats, 1.0 - alpha, axis=0)
    return lo, hi


def _normal_cdf(z: np.ndarray) -> np.ndarray:
    from scipy.special import erf

    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


def ks_statistic(samples: np.ndarray, sigma2: float) -> float:
    """One-sample Kolmogorov-Smirnov distance to the centered normal N(0, sigma2)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if sigma2 <= 0:
        return 1.0
    F = _normal_cdf(x / math.sqrt(sigma2))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_pvalue(d: float, n: int) -> float:
    """Asymptotic Kolmogorov distribution tail with the finite-n correction."""
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    if lam < 1e-3:
        return 1.0
    total = 0.0
    for j in range(1, 101):
        term = 2.0 * (-1.0) ** (j - 1) * math.exp(-2.0 * j * j * lam * lam)
        total += term
        if abs(term) < 1e-12:
            break
    return float(min(1.0, max(0.0, total)))


def ks_normality(samples: np.ndarray, sigma2: float) -> tuple[float, float]:
    d = ks_statistic(samples, sigma2)
    return d, ks_pvalue(d, len(samples))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeSlice:
    log_time: float
    empirical_cov: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    normality_p: np.ndarray
    pass_variance: np.ndarray
    pass_normality: np.ndarray

    def to_dict(self) -> dict:
        return {
            "t": self.log_time,
            "empirical_cov": self.empirical_cov.tolist(),
            "bootstrap_ci_lo": self.ci_lo.tolist(),
            "bootstrap_ci_hi": self.ci_hi.tolist(),
            "normality_p": self.normality_p.tolist(),
            "pass_variance_in_ci": [bool(v) for v in self.pass_variance],
            "pass_normality": [bool(v) for v in self.pass_normality],
        }


@dataclass(frozen=True)
class CovarianceReport:
    test_functions: tuple[str, ...]
    predicted: LimitCovariance
    slices: tuple[TimeSlice, ...]
    replications: int
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "schema": "sidlab-report-v1",
            "test_functions": list(self.test_functions),
            "predicted": self.predicted.to_dict(),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "by_log_time": [s.to_dict() for s in self.slices],
        }


@dataclass(frozen=True)
class RunManifest:
    config_sha256: str
    master_seed: int
    replication_seeds: tuple[int, ...]
    mu_star_residual: float
    kappa: float
    spectral_abscissa: float

    def to_dict(self) -> dict:
        import numpy
        import scipy

        return {
            "schema": "sidlab-manifest-v1",
            "package_version": __version__,
            "numpy_version": numpy.__version__,
            "scipy_version": scipy.__version__,
            "config_sha256": self.config_sha256,
            "master_seed": self.master_seed,
            "replication_seed_rule": "splitmix64(master_seed, replication_index)",
            "replication_seeds": list(self.replication_seeds),
            "mu_star_residual": self.mu_star_residual,
            "kappa": self.kappa,
            "spectral_abscissa": self.spectral_abscissa,
        }


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("SIDLAB_THREADS")
    workers = min(os.cpu_count() or 1, 4)
    if cap is not None:
        try:
            workers = max(1, int(cap))
        except ValueError:
            raise HypothesisError(f"SIDLAB_THREADS={cap!r} is not an integer") from None
    return max(1, min(workers, n_jobs))


def simulate_replications(kernel, sim: SimConfig, master_seed: int, replications: int) -> np.ndarray:
    """Fluctuation pairings for every replication; shape (reps, times, n_test_functions).

    Replications run in thread chunks; per-replication seeds make the result
    independent of the chunking, so SIDLAB_THREADS never changes the output.
    """
    seeds = [split_seed(master_seed, r) for r in range(replications)]
    workers = _worker_count(replications)
    chunks = np.array_split(np.arange(replications), workers)
    chunks = [c for c in chunks if len(c)]

    def run_chunk(idx):
        return run_ensemble(kernel, sim, [seeds[i] for i in idx]).delta_g

    if len(chunks) == 1:
        parts = [run_chunk(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            futures = [pool.submit(run_chunk, c) for c in chunks]
            parts, failure = [], None
            for fut in futures:
                try:
                    parts.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported with context
                    failure = exc
            if failure is not None:
                err = WorkerError(
                    f"{len(parts)}/{len(chunks)} replication chunks finished before a "
                    f"worker failed: {failure}"
                )
                err.partial_results = len(parts) > 0
                raise err from failure
    return np.concatenate(parts, axis=0)


def run_experiment(spec: ExperimentSpec) -> tuple[CovarianceReport, RunManifest, np.ndarray]:
    """Full pipeline: fixed point, hypothesis gate, prediction, simulation, report."""
    K = spec.truncation
    fixed = fix_pi_solve(spec.kernel, uniform_measure(K))
    mu_star = fixed.measure
    residual = pi_residual(spec.kernel, mu_star)
    if residual > 1e-8:
        raise HypothesisError(f"fixed point residual {residual:.3e} exceeds 1e-8")
    ops = OperatorSet(mu_star, spec.kernel)
    require_hypothesis(ops.diag, "experiment gate")

    predicted = limit_covariance_matrix(
        mu_star, spec.kernel, list(spec.test_function_names), list(spec.test_functions)
    )

    sim = SimConfig(
        mu_star=mu_star,
        log_times=spec.log_times,
        dt=spec.dt,
        s0=spec.s0,
        w0=spec.w0,
        init_measure=spec.init_measure(),
        test_functions=spec.test_functions,
    )
    delta_g = simulate_replications(spec.kernel, sim, spec.master_seed, spec.replications)

    slices = []
    pred = predicted.matrix
    for j, t in enumerate(spec.log_times):
        samples = delta_g[:, j, :]
        emp = empirical_covariance(samples)
        lo, hi = bootstrap_ci(samples, seed=split_seed(spec.master_seed, 10_000 + j))
        pvals = np.array([
            ks_normality(samples[:, i], float(pred[i, i]))[1] for i in range(samples.shape[1])
        ])
        pass_var = np.array([
            lo[i, i] <= pred[i, i] <= hi[i, i] for i in range(samples.shape[1])
        ])
        pass_norm = pvals >= NORMALITY_ALPHA
        slices.append(TimeSlice(t, emp, lo, hi, pvals, pass_var, pass_norm))

    report = CovarianceReport(
        spec.test_function_names, predicted, tuple(slices), spec.replications, spec.master_seed
    )
    manifest = RunManifest(
        config_sha256=_spec_hash(spec),
        master_seed=spec.master_seed,
        replication_seeds=tuple(split_seed(spec.master_seed, r) for r in range(spec.replications)),
        mu_star_residual=residual,
        kappa=ops.diag.kappa,
        spectral_abscissa=ops.diag.spectral_abscissa,
    )
    return report, manifest, delta_g


def _spec_hash(spec: ExperimentSpec) -> str:
    echo = {
        "kernel": spec.kernel_config,
        "truncation": spec.truncation,
        "grid": spec.grid,
        "dt": spec.dt,
        "warm_start": {"s0": spec.s0, "w0": spec.w0,
                       "init": list(spec.init) if not isinstance(spec.init, str) else spec.init},
        "log_times": list(spec.log_times),
        "test_functions": list(spec.test_function_names),
        "replications": spec.replications,
        "master_seed": spec.master_seed,
    }
    return canonical_config_hash(echo)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def samples_csv_text(names, log_times, delta_g: np.ndarray) -> str:
    """Long-format CSV: one row per (replication, log time, statistic)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["rep", "t", "stat_name", "value"])
    reps, times, stats = delta_g.shape
    for r in range(reps):
        for j in range(times):
            for i in range(stats):
                writer.writerow([r, log_times[j], names[i], repr(float(delta_g[r, j, i]))])
    return buf.getvalue()


def write_experiment_outputs(report: CovarianceReport, manifest: RunManifest,
                             delta_g: np.ndarray, log_times, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "manifest": out / "manifest.json",
        "samples": out / "samples.csv",
    }
    paths["report"].write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    paths["manifest"].write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    paths["samples"].write_text(
        samples_csv_text(report.test_functions, list(log_times), delta_g)
    )
    return paths
