"""Command-line front end.

Subcommands mirror the experiment runners: spiral, nn, meanfield, sweep.
Each run writes config.json, trajectory.csv and report.json into the
output directory (sweeps add summary.csv and one subdirectory per grid
value); see docs/csv-schema.md for the column layout. A run that diverges
is a recorded result and still exits 0; configuration or runtime faults
exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import LazyTdError
from .experiments import (
    ExperimentConfig,
    run_from_config,
    run_meanfield,
    run_nn,
    run_spiral,
    run_sweep,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="JSON experiment config; other flags are ignored")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lazytd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spiral", help="3-state spiral-manifold run")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--mode", choices=["ode", "stochastic"], default="ode")
    p.add_argument("--integrator", choices=["euler", "rk4"], default="rk4")
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--horizon", type=float, default=2000.0)
    p.add_argument("--beta", type=float, default=2e-3)

    p = sub.add_parser("nn", help="ReLU network run on a cyclic chain")
    _add_common(p)
    p.add_argument("--regime", choices=["over", "under"], required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--units", type=int, default=None)
    p.add_argument("--states", type=int, default=None)
    p.add_argument("--mode", choices=["ode", "stochastic"], default="ode")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("sweep", help="grid of network runs")
    _add_common(p)
    p.add_argument("--kind", choices=["alpha", "gamma"], required=True)
    p.add_argument("--grid", type=str, required=True,
                   help="comma-separated grid values, e.g. 0.8,0.85,0.9")
    p.add_argument("--regime", choices=["over", "under"], default="over")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("meanfield", help="particle-ensemble run")
    _add_common(p)
    p.add_argument("--particles", type=int, default=200)
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--horizon", type=float, default=1500.0)
    return parser


def _dispatch(args: argparse.Namespace):
    if args.config is not None:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
        if args.out is not None:
            cfg.out_dir = str(args.out)
        return run_from_config(cfg)

    out = None if args.out is None else str(args.out)
    if args.command == "spiral":
        kw = dict(alpha=args.alpha, mode=args.mode, integrator=args.integrator,
                  dt=args.dt, horizon=args.horizon, beta=args.beta, out_dir=out)
        if args.seed is not None:
            kw["seed"] = args.seed
        return run_spiral(**kw)
    if args.command == "nn":
        return run_nn(args.regime, gamma=args.gamma, seed=args.seed, alpha=args.alpha,
                      n_units=args.units, n_states=args.states, mode=args.mode,
                      dt=args.dt, horizon=args.horizon, out_dir=out)
    if args.command == "sweep":
        grid = [float(x) for x in args.grid.split(",") if x.strip()]
        base = {"regime": args.regime}
        if args.seed is not None:
            base["seed"] = args.seed
        return run_sweep(args.kind, grid, base=base, out_dir=out, workers=args.workers)
    if args.command == "meanfield":
        kw = dict(n_particles=args.particles, n_states=args.states, gamma=args.gamma,
                  dt=args.dt, horizon=args.horizon, out_dir=out)
        if args.seed is not None:
            kw["seed"] = args.seed
        return run_meanfield(**kw)
    raise LazyTdError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = _dispatch(args)
    except (LazyTdError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = {
        "experiment": report.experiment,
        "diverged": report.diverged,
        "final_projected_error": report.final_projected_error,
        "final_value_error": report.final_value_error,
        "wall_clock": round(report.wall_clock, 3),
    }
    if report.certificate is not None and "passed" in report.certificate:
        summary["certificate_passed"] = report.certificate["passed"]
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
