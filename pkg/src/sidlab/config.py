"""JSON experiment configuration -> typed spec.

Schema (all keys at the top level unless noted):

    kernel            {"type": "translation_invariant", "a": {"1": 1.0}, "constant": 0.0}
                      | {"type": "diffusion", "v_coeffs": [...]}
                      | {"type": "general", "matrix": [[...]]}
    truncation        basis order K (default 32)
    grid              evaluation grid size N (default 256, at least 4K+1 is used)
    dt                SDE step (default 1e-3)
    warm_start        {"s0": 1.0, "w0": 1.0, "init": "uniform"}
    log_times         increasing list of fluctuation sample times
    test_functions    [{"kind": "cosine", "frequency": 1}, {"kind": "sine", ...},
                       {"kind": "coeffs", "coeffs": [...], "name": "..."}]
    replications      >= 2
    master_seed       64-bit integer
    output_dir        optional path for artifacts

Coefficient vectors are ordered [const, cos1, sin1, cos2, sin2, ...].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import BasisIndex, SpectralFunction, basis_size
from .errors import ConfigError
from .measures import (
    DiffusionPotentialKernel,
    GeneralKernel,
    InteractionKernel,
    TranslationInvariantKernel,
)

DEFAULT_K = 32
DEFAULT_GRID = 256
DEFAULT_DT = 1e-3


@dataclass(frozen=True)
class ExperimentSpec:
    kernel: InteractionKernel
    kernel_config: dict
    truncation: int
    grid: int
    dt: float
    s0: float
    w0: float
    init: str | tuple[float, ...]  # "uniform" or density coefficients
    log_times: tuple[float, ...]
    test_function_names: tuple[str, ...]
    test_functions: tuple[SpectralFunction, ...]
    replications: int
    master_seed: int
    output_dir: str | None

    def init_measure(self):
        """The warm-start occupation measure (None means uniform)."""
        if self.init == "uniform":
            return None
        from .measures import ProbMeasure

        coeffs = np.zeros(basis_size(self.truncation))
        vals = list(self.init)
        coeffs[: len(vals)] = vals
        return ProbMeasure(SpectralFunction(self.truncation, coeffs))


def _require(cfg: dict, key: str, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(key, "missing")
        return default
    value = cfg[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(key, f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
    return value


def parse_kernel(cfg: dict, K: int, prefix: str = "kernel") -> InteractionKernel:
    if not isinstance(cfg, dict):
        raise ConfigError(prefix, "expected an object")
    ktype = cfg.get("type")
    if ktype == "translation_invariant":
        raw = cfg.get("a", {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{prefix}.a", "expected an object mapping frequency to multiplier")
        mult = {}
        for k, v in raw.items():
            try:
                freq = int(k)
            except (TypeError, ValueError):
                raise ConfigError(f"{prefix}.a.{k}", "frequency must be an integer") from None
            if not 1 <= freq <= K:
                raise ConfigError(f"{prefix}.a.{k}", f"frequency must lie in [1, {K}]")
            if not isinstance(v, (int, float)):
                raise ConfigError(f"{prefix}.a.{k}", "multiplier must be a number")
            mult[freq] = float(v)
        const = cfg.get("constant", 0.0)
        if not isinstance(const, (int, float)):
            raise ConfigError(f"{prefix}.constant", "must be a number")
        return TranslationInvariantKernel(mult, float(const))
    if ktype == "diffusion":
        coeffs = cfg.get("v_coeffs")
        if not isinstance(coeffs, list) or not all(isinstance(c, (int, float)) for c in coeffs):
            raise ConfigError(f"{prefix}.v_coeffs", "expected a list of numbers")
        if len(coeffs) > basis_size(K):
            raise ConfigError(f"{prefix}.v_coeffs", f"more than {basis_size(K)} coefficients for K={K}")
        full = np.zeros(basis_size(K))
        full[: len(coeffs)] = coeffs
        return DiffusionPotentialKernel(SpectralFunction(K, full))
    if ktype == "general":
        raw = cfg.get("matrix")
        if not isinstance(raw, list):
            raise ConfigError(f"{prefix}.matrix", "expected a nested list")
        M = np.asarray(raw, dtype=float)
        if M.shape != (basis_size(K), basis_size(K)):
            raise ConfigError(
                f"{prefix}.matrix", f"expected shape {(basis_size(K), basis_size(K))}, got {M.shape}"
            )
        try:
            return GeneralKernel(M)
        except ValueError as exc:
            raise ConfigError(f"{prefix}.matrix", str(exc)) from None
    raise ConfigError(f"{prefix}.type", f"unknown kernel type {ktype!r}")


def parse_test_function(cfg: dict, K: int, position: int) -> tuple[str, SpectralFunction]:
    where = f"test_functions[{position}]"
    if not isinstance(cfg, dict):
        raise ConfigError(where, "expected an object")
    kind = cfg.get("kind")
    if kind in ("cosine", "sine"):
        freq = cfg.get("frequency")
        if not isinstance(freq, int) or not 1 <= freq <= K:
            raise ConfigError(f"{where}.frequency", f"must be an integer in [1, {K}]")
        idx = BasisIndex(kind, freq)
        return cfg.get("name", idx.name), SpectralFunction.unit(K, idx)
    if kind == "coeffs":
        coeffs = cfg.get("coeffs")
        if not isinstance(coeffs, list) or len(coeffs) > basis_size(K):
            raise ConfigError(f"{where}.coeffs", f"expected at most {basis_size(K)} numbers")
        full = np.zeros(basis_size(K))
        full[: len(coeffs)] = coeffs
        return cfg.get("name", f"f{position}"), SpectralFunction(K, full)
    raise ConfigError(f"{where}.kind", f"unknown kind {kind!r}")


def parse_spec(cfg: dict) -> ExperimentSpec:
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    K = _require(cfg, "truncation", int, DEFAULT_K)
    if K < 1:
        raise ConfigError("truncation", "must be a positive integer")
    N = _require(cfg, "grid", int, DEFAULT_GRID)
    dt = _require(cfg, "dt", float, DEFAULT_DT)
    if dt <= 0:
        raise ConfigError("dt", "must be positive")
    kernel_cfg = cfg.get("kernel")
    if kernel_cfg is None:
        raise ConfigError("kernel", "missing")
    kernel = parse_kernel(kernel_cfg, K)

    warm = cfg.get("warm_start", {})
    if not isinstance(warm, dict):
        raise ConfigError("warm_start", "expected an object")
    s0 = float(warm.get("s0", 1.0))
    w0 = float(warm.get("w0", 1.0))
    init = warm.get("init", "uniform")
    if init != "uniform" and not (
        isinstance(init, list) and all(isinstance(c, (int, float)) for c in init)
    ):
        raise ConfigError(
            "warm_start.init", f"expected \"uniform\" or a density coefficient list, got {init!r}"
        )
    if isinstance(init, list) and len(init) > basis_size(K):
        raise ConfigError("warm_start.init", f"more than {basis_size(K)} coefficients for K={K}")
    if s0 <= 0 or w0 <= 0:
        raise ConfigError("warm_start", "s0 and w0 must be positive")

    raw_times = cfg.get("log_times", [3.0, 4.5, 6.0])
    if (not isinstance(raw_times, list) or not raw_times
            or not all(isinstance(t, (int, float)) for t in raw_times)):
        raise ConfigError("log_times", "expected a nonempty list of numbers")
    log_times = tuple(float(t) for t in raw_times)
    if any(b <= a for a, b in zip(log_times, log_times[1:])):
        raise ConfigError("log_times", "must be strictly increasing")

    raw_tf = cfg.get("test_functions", [{"kind": "cosine", "frequency": 1}])
    if not isinstance(raw_tf, list) or not raw_tf:
        raise ConfigError("test_functions", "expected a nonempty list")
    names, funcs = [], []
    for j, tf in enumerate(raw_tf):
        name, func = parse_test_function(tf, K, j)
        names.append(name)
        funcs.append(func)

    reps = _require(cfg, "replications", int, 400)
    if reps < 2:
        raise ConfigError("replications", "at least 2 replications are required")
    seed = _require(cfg, "master_seed", int, 20260809)
    out_dir = cfg.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output_dir", "expected a string path")

    return ExperimentSpec(
        kernel=kernel,
        kernel_config=kernel_cfg,
        truncation=K,
        grid=N,
        dt=dt,
        s0=s0,
        w0=w0,
        init=tuple(float(c) for c in init) if isinstance(init, list) else init,
        log_times=log_times,
        test_function_names=tuple(names),
        test_functions=tuple(funcs),
        replications=reps,
        master_seed=seed,
        output_dir=out_dir,
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("<config>", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<config>", f"invalid JSON: {exc}") from None
    return parse_spec(cfg)


def canonical_config_hash(cfg: dict) -> str:
    import hashlib

    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
