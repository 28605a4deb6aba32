"""Command line interface.

Subcommands: fixpoint, flow, simulate, predict, ou-sample, compare.
Exit codes: 0 success, 2 hypothesis/diagnostic refusal, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .basis import SpectralFunction, basis_indices
from .config import ExperimentSpec, load_spec
from .dynamics import SimConfig, ode_flow, split_seed
from .errors import HypothesisError, SidlabError
from .harness import run_experiment, write_experiment_outputs
from .measures import fix_pi_solve, pi_residual, uniform_measure
from .operators import OperatorSet, require_hypothesis
from .ou import OUSampler, limit_covariance_matrix, mercer_decompose
from .operators import c_kernel


def _emit(text: str, out: str | None, quiet: bool):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
        if not quiet:
            print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def _solve_fixpoint(spec: ExperimentSpec):
    return fix_pi_solve(spec.kernel, uniform_measure(spec.truncation))


def cmd_fixpoint(spec: ExperimentSpec, args) -> int:
    fixed = _solve_fixpoint(spec)
    payload = {
        "coeffs": fixed.measure.density.coeffs.tolist(),
        "coeff_names": [i.name for i in basis_indices(spec.truncation)],
        "residual": fixed.residual,
        "iterations": fixed.iterations,
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out, args.quiet)
    return 0


def cmd_flow(spec: ExperimentSpec, args) -> int:
    K = spec.truncation
    if args.start_seed is not None:
        from .measures import xi

        rng = np.random.default_rng(args.start_seed)
        coeffs = np.zeros(2 * K + 1)
        coeffs[1:5] = 0.5 * rng.standard_normal(4)
        start = xi(SpectralFunction(K, coeffs))  # positive density by construction
    else:
        start = uniform_measure(K)
    states = ode_flow(spec.kernel, start, args.horizon, args.flow_dt)
    names = [i.name for i in basis_indices(K)]
    sio = io.StringIO()
    writer = csv.writer(sio, lineterminator="\n")
    writer.writerow(["time", "residual"] + names)
    for st in states:
        writer.writerow(
            [st.time, repr(pi_residual(spec.kernel, st.mu))]
            + [repr(float(c)) for c in st.mu.density.coeffs]
        )
    _emit(sio.getvalue(), args.out, args.quiet)
    return 0


def cmd_predict(spec: ExperimentSpec, args) -> int:
    fixed = _solve_fixpoint(spec)
    ops = OperatorSet(fixed.measure, spec.kernel)
    require_hypothesis(ops.diag, "predict")
    pred = limit_covariance_matrix(
        fixed.measure, spec.kernel, list(spec.test_function_names), list(spec.test_functions)
    )
    payload = pred.to_dict()
    payload["operators"] = {
        "G": ops.G.matrix.tolist(),
        "Q": ops.Q.matrix.tolist(),
        "c_hat": ops.chat_matrix.tolist(),
        "diagnostics": {
            "kappa": ops.diag.kappa,
            "spectral_abscissa": ops.diag.spectral_abscissa,
            "hypothesis_holds": ops.diag.hypothesis_holds,
        },
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out, args.quiet)
    return 0


def cmd_simulate(spec: ExperimentSpec, args) -> int:
    from .harness import samples_csv_text, simulate_replications

    fixed = _solve_fixpoint(spec)
    sim = SimConfig(
        mu_star=fixed.measure,
        log_times=spec.log_times,
        dt=spec.dt,
        s0=spec.s0,
        w0=spec.w0,
        init_measure=spec.init_measure(),
        test_functions=spec.test_functions,
    )
    delta_g = simulate_replications(spec.kernel, sim, spec.master_seed, spec.replications)
    text = samples_csv_text(spec.test_function_names, list(spec.log_times), delta_g)
    _emit(text, args.out, args.quiet)
    return 0


def cmd_ou_sample(spec: ExperimentSpec, args) -> int:
    fixed = _solve_fixpoint(spec)
    ops = OperatorSet(fixed.measure, spec.kernel)
    require_hypothesis(ops.diag, "ou-sample")
    grid = c_kernel(fixed.measure, spec.kernel, ops=ops)
    dec = mercer_decompose(grid, spec.truncation)
    sampler = OUSampler(ops.G.matrix, dec.coefficient_covariance())
    times = np.linspace(0.0, args.t_max, args.steps + 1)
    n = 2 * spec.truncation + 1
    sio = io.StringIO()
    writer = csv.writer(sio, lineterminator="\n")
    writer.writerow(["path", "time", "stat_name", "value"])
    g_mat = np.array([g.coeffs for g in spec.test_functions])
    for p in range(args.paths):
        rng = np.random.default_rng(split_seed(spec.master_seed, p))
        states, _ = sampler.run(np.zeros(n), times, rng)
        vals = states @ g_mat.T
        for j, t in enumerate(times):
            for i, name in enumerate(spec.test_function_names):
                writer.writerow([p, repr(float(t)), name, repr(float(vals[j, i]))])
    _emit(sio.getvalue(), args.out, args.quiet)
    return 0


def cmd_compare(spec: ExperimentSpec, args) -> int:
    report, manifest, delta_g = run_experiment(spec)
    out_dir = args.out or spec.output_dir or "sidlab-out"
    paths = write_experiment_outputs(report, manifest, delta_g, spec.log_times, out_dir)
    if not args.quiet:
        for k, p in paths.items():
            print(f"{k}: {p}", file=sys.stderr)
        ok = all(
            all(s.pass_variance) and all(s.pass_normality) for s in report.slices
        )
        print(f"all checks passed: {ok}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sidlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--reps", type=int, help="override replications")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("fixpoint", help="solve the fixed point of the response map"))
    flow = sub.add_parser("flow", help="integrate the measure ODE")
    common(flow)
    flow.add_argument("--horizon", type=float, default=40.0)
    flow.add_argument("--flow-dt", type=float, default=0.05)
    flow.add_argument("--start-seed", type=int, help="randomized start instead of uniform")
    common(sub.add_parser("simulate", help="replicated SDE paths to CSV"))
    common(sub.add_parser("predict", help="predicted limit covariance and operators"))
    ou = sub.add_parser("ou-sample", help="sample limit OU trajectories to CSV")
    common(ou)
    ou.add_argument("--t-max", type=float, default=10.0)
    ou.add_argument("--steps", type=int, default=100)
    ou.add_argument("--paths", type=int, default=1)
    common(sub.add_parser("compare", help="full experiment: simulate and compare to prediction"))
    return parser


_COMMANDS = {
    "fixpoint": cmd_fixpoint,
    "flow": cmd_flow,
    "simulate": cmd_simulate,
    "predict": cmd_predict,
    "ou-sample": cmd_ou_sample,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = load_spec(args.config)
        if args.seed is not None or args.reps is not None:
            from dataclasses import replace

            spec = replace(
                spec,
                master_seed=args.seed if args.seed is not None else spec.master_seed,
                replications=args.reps if args.reps is not None else spec.replications,
            )
        return _COMMANDS[args.command](spec, args)
    except HypothesisError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except SidlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
