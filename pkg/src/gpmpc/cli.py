"""Command-line surface: fit models, run scenarios, analyze, score logs.

Exit codes: 0 success, 2 configuration or input error, 3 numeric
failure, 4 run dominated by infeasible planner steps (more than half).
The environment variable GPMPC_THREADS caps worker parallelism inside
the library; setting it to 0 forces single-threaded lockstep execution.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from gpmpc.convexity import DegenerateObjective, SweepSpec, hessian_min_eig, sweep_to_csv_rows
from gpmpc.gp_force import (
    FitError,
    GpHyper,
    AxisGp,
    N_POSE,
    fit_force_model,
    load_model,
    read_demo_csv,
    save_model,
    subsample,
)
from gpmpc.sim import (
    ConfigError,
    RunLog,
    generate_demo,
    load_scenario,
    metrics,
    metrics_report,
    run_episode,
    write_demo_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4


def _initial_nll(X, y):
    """NLL at the same data-driven starting hyperparameters the fit uses."""
    yvar = float(np.var(y))
    span = np.maximum(np.ptp(X, axis=0), 1e-2)
    hyper = GpHyper(
        signal_var=max(yvar, 1e-4),
        noise_var=max(0.1 * yvar, 1e-4),
        length_scales=0.3 * span,
    )
    return AxisGp(X=X, y=y, hyper=hyper).nll()


def cmd_fit(args) -> int:
    Xs, Fs = [], []
    for path in args.demos:
        _, X, F = read_demo_csv(path)
        Xs.append(X)
        Fs.append(F)
    X = np.vstack(Xs)
    F = np.vstack(Fs)
    X, F = subsample(X, F, max_points=args.max_points)

    label = f" (mode {args.mode_label})" if args.mode_label is not None else ""
    print(f"fit{label}: {len(args.demos)} demo(s), {len(X)} training points")
    before = [_initial_nll(X, F[:, i]) for i in range(N_POSE)]
    hinge_axes = tuple(args.hinge_axis) if args.mean == "hinge" else None
    model = fit_force_model(
        X, F, mean_kind="zero", hinge_axes=hinge_axes, seed=args.seed
    )
    for i in range(N_POSE):
        print(f"axis {i}: nll {before[i]:.6g} -> {model.axes[i].nll():.6g}")
    save_model(model, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    models = [load_model(p) for p in args.models]
    log = run_episode(scn, models=models, seed=args.seed, lockstep=args.lockstep)
    log.to_csv(args.out)
    # Score the file just written, not the in-memory log, so an offline
    # `metrics` pass on the same CSV reproduces this summary exactly.
    m = metrics(RunLog.from_csv(args.out), split_hz=args.split_hz)
    report = metrics_report(m)
    summary_path = args.out + ".metrics.txt"
    with open(summary_path, "w") as fh:
        fh.write(report)
    sys.stdout.write(report)
    print(f"wrote {args.out} and {summary_path}")
    if m["infeasible_fraction"] > 0.5:
        print("error: planner infeasible on more than half of its steps", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


_SWEEP_KEYS = {"integrators", "objectives", "sigma_f", "M", "D", "Ts", "sigma", "Q"}


def load_sweep_spec(path) -> SweepSpec:
    """Parse an INI sweep description ([sweep] section, strict keys)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigError(f"{path}: cannot read sweep file")
    for s in cp.sections():
        if s != "sweep":
            raise ConfigError(f"{path}: unknown section [{s}]")
    if not cp.has_section("sweep"):
        return SweepSpec()
    sec = cp["sweep"]
    for k in sec:
        if k not in _SWEEP_KEYS:
            raise ConfigError(f"{path}: unknown key '{k}' in section [sweep]")
    kw = {}
    if "integrators" in sec:
        kw["integrators"] = tuple(v.strip() for v in sec["integrators"].split(","))
    if "objectives" in sec:
        kw["objectives"] = tuple(v.strip() for v in sec["objectives"].split(","))
    if "sigma_f" in sec:
        kw["sigma_f_grid"] = tuple(float(v) for v in sec["sigma_f"].split(","))
    for k in ("M", "D", "Ts"):
        if k in sec:
            kw[k] = sec.getfloat(k)
    if "sigma" in sec:
        kw["sigma"] = tuple(float(v) for v in sec["sigma"].split(","))
    if "Q" in sec:
        kw["Q"] = tuple(float(v) for v in sec["Q"].split(","))
    try:
        return SweepSpec(**kw)
    except ValueError as exc:
        raise ConfigError(f"{path}: bad [sweep] section: {exc}") from exc


def cmd_analyze(args) -> int:
    spec = load_sweep_spec(args.sweep) if args.sweep else SweepSpec()
    rows = hessian_min_eig(spec)
    header, lines = sweep_to_csv_rows(rows)
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for line in lines:
            fh.write(",".join(line) + "\n")
    print(f"wrote {args.out} ({len(lines)} rows)")
    return EXIT_OK


def cmd_metrics(args) -> int:
    log = RunLog.from_csv(args.log)
    report = metrics_report(metrics(log, split_hz=args.split_hz))
    sys.stdout.write(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report)
    return EXIT_OK


def cmd_demo_gen(args) -> int:
    scn = load_scenario(args.scenario)
    os.makedirs(args.out_dir, exist_ok=True)
    for k in range(args.n):
        demo = generate_demo(scn, seed=args.seed + k)
        path = os.path.join(args.out_dir, f"demo_{k}.csv")
        write_demo_csv(path, demo)
        print(f"wrote {path} ({len(demo)} samples)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gpmpc",
        description="GP force models + stochastic impedance MPC toolchain.",
        epilog=(
            "Exit codes: 0 ok, 2 config error, 3 numeric failure, "
            "4 infeasible-dominated run. GPMPC_THREADS caps worker "
            "parallelism (0 forces lockstep)."
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a force model from demonstration CSVs")
    f.add_argument("--demos", nargs="+", required=True, help="demo CSV files (t,x0..x5,f0..f5)")
    f.add_argument("--mean", choices=["zero", "hinge"], default="zero", help="prior mean family")
    f.add_argument("--hinge-axis", type=int, nargs="+", default=[2],
                   help="force axes that get the hinge mean (with --mean hinge)")
    f.add_argument("--out", required=True, help="output model JSON file")
    f.add_argument("--mode-label", type=int, default=None, help="mode index for the report header")
    f.add_argument("--max-points", type=int, default=80, help="training-set subsample cap")
    f.add_argument("--seed", type=int, default=0, help="fit RNG seed")
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("run", help="run a closed-loop scenario")
    r.add_argument("--scenario", required=True, help="scenario INI file")
    r.add_argument("--models", nargs="*", default=[], help="per-mode model JSON files")
    r.add_argument("--out", required=True, help="output run-log CSV")
    r.add_argument("--seed", type=int, default=0, help="episode RNG seed")
    r.add_argument("--lockstep", action=argparse.BooleanOptionalAction, default=True,
                   help="solve the planner synchronously (deterministic)")
    r.add_argument("--split-hz", type=float, default=15.0, help="band-split cutoff for metrics")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="curvature sweep over integrators and objectives")
    a.add_argument("--sweep", default=None, help="sweep INI file ([sweep] section); default grid if omitted")
    a.add_argument("--out", required=True, help="output CSV (integrator,objective,sigma_f,min_eig)")
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("metrics", help="recompute the summary of a run log")
    m.add_argument("--log", required=True, help="run-log CSV")
    m.add_argument("--split-hz", type=float, default=15.0, help="band-split cutoff")
    m.add_argument("--out", default=None, help="optional output text file")
    m.set_defaults(func=cmd_metrics)

    d = sub.add_parser("demo-gen", help="record scripted guided-sweep demonstrations")
    d.add_argument("--scenario", required=True, help="scenario INI file (environment section used)")
    d.add_argument("--out-dir", required=True, help="directory for demo CSVs")
    d.add_argument("--n", type=int, default=3, help="number of sweeps")
    d.add_argument("--seed", type=int, default=0, help="base RNG seed (one increment per sweep)")
    d.set_defaults(func=cmd_demo_gen)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, DegenerateObjective, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # Malformed CSVs and schema mismatches are input errors.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
