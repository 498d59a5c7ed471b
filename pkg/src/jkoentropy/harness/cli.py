"""Command line entry point ``jkoentropy``.

Exit status is 0 iff every verdict requested by the subcommand passes, 1 if
a verdict fails or a stage errors, and 2 for configuration errors.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from ..energy import check_kappa_convexity
from .config import DEFAULT_CONFIG, ConfigError, ExperimentConfig, load_config, parse_config


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _verdict(name: str, ok: bool) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {name}"


def cmd_run(args) -> int:
    from .pipeline import report_text, run_pipeline

    cfg = _load(args)
    res = run_pipeline(cfg, jobs=args.jobs)
    sys.stdout.write(report_text(res))
    print(f"artifacts in {os.path.abspath(cfg.output_dir)}")
    return 0 if res.passed else 1


def cmd_convergence(args) -> int:
    from .convergence import convergence_study

    cfg = _load(args)
    taus = args.tau or [cfg.jko.tau]
    ns = args.n or [cfg.jko.n_quantiles]
    table = convergence_study(cfg, taus, ns, jobs=args.jobs)
    os.makedirs(cfg.output_dir, exist_ok=True)
    table.to_csv(os.path.join(cfg.output_dir, "convergence.csv"))
    print("\n".join(table.lines()))
    if len(table.rows) < 2:
        return 0
    # against the finest run its own zero error is excluded
    count = len(table.rows) if table.reference.startswith("closed-form") else len(table.rows) - 1
    ok = all(bool(np.all(np.diff(table.errors(k)[:count]) < 0)) for k in ("l1", "w2"))
    print(_verdict("L1 and W2 errors decrease under refinement", ok))
    return 0 if ok else 1


def cmd_accept(args) -> int:
    from .acceptance import run_criteria

    ids = None if args.criterion == "all" else [args.criterion]
    try:
        results = run_criteria(ids, jobs=args.jobs)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in results:
        print(r.text() if args.verbose else r.line(), flush=True)
    return 0 if all(r.passed for r in results) else 1


def cmd_entropy_sweep(args) -> int:
    from .pipeline import build_problem, entropy_sweeps, run_fv, run_jko

    cfg = _load(args)
    problem = build_problem(cfg)
    traj = run_jko(problem) if args.source in ("jko", "both") else None
    fv = run_fv(problem) if args.source in ("fv", "both") else None
    reports = entropy_sweeps(problem, traj, fv)
    os.makedirs(cfg.output_dir, exist_ok=True)
    tol = cfg.checks.entropy_rel_tol
    ok = True
    print(f"seed = {cfg.seed}")
    for name, rep in reports.items():
        path = os.path.join(cfg.output_dir, f"entropy_{name}.csv")
        rep.to_csv(path)
        passed = rep.passed(tol)
        ok &= passed
        print(_verdict(f"{name}: min residual {rep.min_residual:.4e}, worst residual/scale "
                       f"{rep.worst_ratio:.4e} >= {-tol:g} ({path})", passed))
    return 0 if ok else 1


def cmd_transform_check(args) -> int:
    from .pipeline import build_problem, transform_checks

    cfg = _load(args)
    p = cfg.problem
    checks = transform_checks(cfg.b(), p.m, cfg.initial_profile(), p.y_window, p.coefficient_y_window,
                              cfg.fv.dy, cfg.jko.x_dx)
    problem = build_problem(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    problem.tc.T.to_csv(os.path.join(cfg.output_dir, "T.csv"))
    problem.tc.a.to_csv(os.path.join(cfg.output_dir, "a.csv"))
    cert = check_kappa_convexity(problem.ef, problem.tc.x_window)
    cert.to_csv(os.path.join(cfg.output_dir, "certificate.csv"))
    cert.write_verdict(os.path.join(cfg.output_dir, "certificate.txt"))
    for c in checks:
        print(_verdict(f"{c.name}: {c.detail}", c.passed))
    print(f"convexity certificate (informational): {cert.verdict}")
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file (default: built-in Riemann setup)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, metavar="N", help="seed for test-bank placement")
    common.add_argument("--jobs", type=int, default=1, metavar="K", help="worker processes for independent runs")

    parser = argparse.ArgumentParser(prog="jkoentropy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the configured pipeline").set_defaults(func=cmd_run)

    p = sub.add_parser("convergence", parents=[common], help="refinement study over tau and n")
    p.add_argument("--tau", type=float, nargs="+", help="time steps (default: the config's)")
    p.add_argument("--n", type=int, nargs="+", help="quantile counts (default: the config's)")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("accept", parents=[common], help="run acceptance criteria")
    p.add_argument("criterion", help="criterion number 1-10 or 'all'")
    p.add_argument("-v", "--verbose", action="store_true", help="print per-criterion details")
    p.set_defaults(func=cmd_accept)

    p = sub.add_parser("entropy-sweep", parents=[common], help="entropy-inequality sweep")
    p.add_argument("--source", choices=("fv", "jko", "both"), default="both")
    p.set_defaults(func=cmd_entropy_sweep)

    sub.add_parser("transform-check", parents=[common],
                   help="coordinate-change round trips and convexity certificate").set_defaults(func=cmd_transform_check)
    return parser


def main(argv=None) -> int:
    from .pipeline import PipelineError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
