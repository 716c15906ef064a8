"""Command-line front end: analyze, simulate, sweep, optimize, validate.

JSON is the default machine format (the nested config echo fits it); CSV is
reserved for tabular sweep and per-delivery dump data. All numeric output is
printed with 12 significant digits. Exit codes: 0 ok, 1 validation failure,
2 usage or parse error, 3 numeric domain or quadrature error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .analytic import (
    SystemConfig,
    aoi_moment,
    paoi_moment,
    summarize,
)
from .distributions import parse_dist, quad_tolerances
from .errors import (
    AoiqError,
    DegenerateError,
    DistSpecError,
    DomainError,
    PrecisionError,
    QuadratureError,
)
from .optimizer import optimize_theta, sweep_theta
from .simulator import SimConfig, run, write_records_csv
from .validation import run_validation

_SWEEP_HEADER = "theta,avg_aoi,avg_paoi"
_SWEEP_SIM_HEADER = _SWEEP_HEADER + ",sim_avg_aoi,sim_avg_paoi,sim_se_aoi,sim_se_paoi"


def _fmt(x) -> str:
    return f"{x:.12g}"


def _round_floats(obj):
    """Recursively clamp floats to 12 significant digits for stable output."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(_round_floats(payload), indent=2) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _record(command: str, config: dict, results: dict) -> dict:
    return {
        "command": command,
        "config": config,
        "results": results,
        "version": __version__,
    }


def _system_config_echo(cfg: SystemConfig) -> dict:
    abs_tol, rel_tol = quad_tolerances()
    return {
        "lambda": cfg.arrival_rate,
        "theta": cfg.preempt_prob,
        "dist": cfg.service.spec_string(),
        "quad_abs_tol": abs_tol,
        "quad_rel_tol": rel_tol,
    }


def _cmd_analyze(args) -> int:
    cfg = SystemConfig(args.lam, args.theta, parse_dist(args.dist))
    summary = summarize(cfg)
    results = summary.as_dict()
    if args.moments >= 1:
        results["aoi_moments"] = {
            str(m): aoi_moment(cfg, m) for m in range(1, args.moments + 1)
        }
        results["paoi_moments"] = {
            str(m): paoi_moment(cfg, m) for m in range(1, args.moments + 1)
        }
    if args.csv:
        keys = list(results)
        flat = {}
        for k in keys:
            if isinstance(results[k], dict):
                for mk, mv in results[k].items():
                    flat[f"{k}.{mk}"] = mv
            else:
                flat[k] = results[k]
        lines = [",".join(flat), ",".join(_fmt(v) for v in flat.values())]
        text = "\n".join(lines) + "\n"
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0
    _emit(_record("analyze", _system_config_echo(cfg), results), args.output)
    return 0


def _cmd_simulate(args) -> int:
    system = SystemConfig(args.lam, args.theta, parse_dist(args.dist))
    cfg = SimConfig(
        system,
        deliveries=args.deliveries,
        warmup_deliveries=args.warmup,
        seed=args.seed,
        replications=args.reps,
    )
    if args.dump and args.reps != 1:
        raise DistSpecError("--dump requires --reps 1")
    if args.dump:
        summary, traj = run(cfg, collect_records=True)
        write_records_csv(traj, args.dump)
    else:
        summary = run(cfg)
    config = _system_config_echo(system)
    config.update(
        {
            "deliveries": cfg.deliveries,
            "warmup_deliveries": cfg.warmup_deliveries,
            "seed": cfg.seed,
            "replications": cfg.replications,
        }
    )
    _emit(_record("simulate", config, summary.as_dict()), args.output)
    return 0


def _cmd_sweep(args) -> int:
    service = parse_dist(args.dist)
    grid = np.linspace(0.0, 1.0, args.grid)
    rows = sweep_theta(
        args.lam,
        service,
        grid,
        with_sim=args.with_sim,
        sim_deliveries=args.deliveries,
        seed=args.seed,
    )
    header = _SWEEP_SIM_HEADER if args.with_sim else _SWEEP_HEADER
    lines = [header]
    for r in rows:
        cells = [_fmt(r.theta), _fmt(r.avg_aoi), _fmt(r.avg_paoi)]
        if args.with_sim:
            cells += [
                _fmt(r.sim_avg_aoi),
                _fmt(r.sim_avg_paoi),
                _fmt(r.sim_se_aoi),
                _fmt(r.sim_se_paoi),
            ]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_optimize(args) -> int:
    service = parse_dist(args.dist)
    opt = optimize_theta(args.lam, service, objective=args.objective)
    config = {
        "lambda": args.lam,
        "dist": service.spec_string(),
        "objective": args.objective,
        "grid_resolution": opt.grid_resolution,
        "refine_tolerance": opt.refine_tolerance,
    }
    results = {"theta_star": opt.theta_star, "objective_value": opt.objective_value}
    _emit(_record("optimize", config, results), args.output)
    return 0


def _cmd_validate(args) -> int:
    checks = run_validation(level=args.level, seed=args.seed)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        sys.stdout.write(c.line() + "\n")
    sys.stdout.write(
        f"\n{len(checks) - len(failed)}/{len(checks)} checks passed ({args.level} level)\n"
    )
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoiq",
        description=(
            "Age-of-information statistics for the single-source M/G/1/1 queue "
            "under probabilistic preemption: closed forms, discrete-event "
            "simulation, and preemption-probability optimization."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_system(p):
        p.add_argument("--lambda", dest="lam", type=float, required=True,
                       help="arrival rate (packets per unit time)")
        p.add_argument("--theta", type=float, required=True,
                       help="preemption probability in [0, 1]")
        p.add_argument("--dist", required=True,
                       help="service law, e.g. exp:rate=1 or lognormal:alpha=0.75,omega=0.75")

    p = sub.add_parser("analyze", help="closed-form summary for one configuration")
    add_system(p)
    p.add_argument("--moments", type=int, default=2, choices=(1, 2, 3),
                   help="highest AoI/peak-AoI moment to extract (default 2)")
    p.add_argument("--csv", action="store_true", help="flat CSV instead of JSON")
    p.add_argument("-o", "--output", help="write to file instead of stdout")
    p.set_defaults(handler=_cmd_analyze)

    p = sub.add_parser("simulate", help="discrete-event simulation of one configuration")
    add_system(p)
    p.add_argument("--deliveries", type=int, default=1_000_000,
                   help="measured delivery cycles (default 1e6)")
    p.add_argument("--warmup", type=int, default=1_000,
                   help="warm-up delivery cycles to discard (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--reps", type=int, default=1, help="independent replications to pool")
    p.add_argument("--dump", help="write per-delivery records to this CSV file")
    p.add_argument("-o", "--output", help="write the summary to file instead of stdout")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("sweep", help="tabulate AoI/peak AoI over a preemption grid")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--grid", type=int, default=101,
                   help="number of evenly spaced grid points on [0, 1] (default 101)")
    p.add_argument("--with-sim", action="store_true",
                   help="add simulated columns to each row")
    p.add_argument("--deliveries", type=int, default=200_000,
                   help="deliveries per simulated row (with --with-sim)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="write CSV to file instead of stdout")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("optimize", help="minimize AoI or peak AoI over the preemption probability")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--dist", required=True)
    p.add_argument("--objective", choices=("aoi", "paoi"), default="aoi")
    p.add_argument("-o", "--output", help="write JSON to file instead of stdout")
    p.set_defaults(handler=_cmd_optimize)

    p = sub.add_parser("validate", help="run the cross-validation suite")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.add_argument("--seed", type=int, default=20240801)
    p.set_defaults(handler=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except DistSpecError as exc:
        print(f"aoiq: parse error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"aoiq: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (DomainError, QuadratureError, DegenerateError, PrecisionError) as exc:
        print(f"aoiq: numeric error: {exc}", file=sys.stderr)
        return 3
    except AoiqError as exc:
        print(f"aoiq: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
