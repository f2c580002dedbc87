"""Command-line front end: ``simulate``, ``solve``, ``compare`` and ``bound``.

Exit codes: 0 success, 1 usage error, 2 data error (bad config or
observation file), 3 solver failure.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (ConfigError, DimensionError, GeometryInfeasible, InsufficientData, InsufficientRangedRows,
                     LocalizationError, NonFiniteError, SchemaError, UnboundedError)
from .fusion import seed_point, solve_fused, solve_fused_unnormalized
from .ranging import solve_range
from .ridge import solve_fused_ridge
from .simulation import ALGORITHMS, aggregate_stats, intersection_error_bound, run_algorithms, run_monte_carlo
from .vision import solve_vision

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
DATA_ERRORS = (ConfigError, SchemaError, InsufficientRangedRows, InsufficientData, GeometryInfeasible,
               DimensionError, NonFiniteError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def build_parser():
    p = _Parser(prog="ridgeloc", description="UAV target localization from pixels and laser ranges.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo sweep over intersection angles")
    s.add_argument("--config", help="YAML run configuration")
    s.add_argument("--trials", type=int, help="trials per angle (overrides the config)")
    s.add_argument("--seed", type=int, help="master seed (overrides the config)")
    s.add_argument("--gamma", type=_floats, help="comma-separated intersection angles, degrees")
    s.add_argument("--algo", type=_names, help="comma-separated algorithm identifiers")
    s.add_argument("--out", help="results CSV path (default: stdout)")
    s.add_argument("--plot", help="median-error SVG path; the RMS plot goes next to it with suffix _rms")

    for verb, text in (("solve", "solve one observation file with one algorithm"),
                       ("compare", "solve one observation file with every algorithm")):
        q = sub.add_parser(verb, help=text)
        q.add_argument("--obs", required=True, help="observation CSV")
        q.add_argument("--config", help="YAML configuration supplying camera, solver and ridge settings")
        q.add_argument("--out", help="output path (default: stdout)")
        if verb == "solve":
            q.add_argument("--algo", default="fused_ridge", choices=[a for a in ALGORITHMS if a != "los"])
        else:
            q.add_argument("--target", type=_floats, help="known target x,y,z in meters, adds an error column")

    b = sub.add_parser("bound", help="depth error caused by a line-of-sight angle error")
    b.add_argument("--gamma", type=float, required=True, help="intersection angle, degrees")
    b.add_argument("--delta", type=float, default=0.1, help="line-of-sight angle error, degrees")
    b.add_argument("--half-baseline", type=float, default=1000.0, help="half baseline, meters")
    return p


def _load_config(path):
    return io.parse_config(path) if path else io.RunConfig()


def _emit(text, path):
    if path:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    cfg = _load_config(args.config)
    changes = {}
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.gamma is not None:
        changes["gamma_sweep"] = args.gamma
    if args.algo is not None:
        changes["algorithms"] = args.algo
    cfg = dataclasses.replace(cfg, **changes)
    records = []
    for g in cfg.gamma_sweep:
        spec = dataclasses.replace(cfg.scenario, gamma=g)
        records.extend(run_monte_carlo(spec, cfg.noise, cfg.algorithms, cfg.trials, cfg.seed, cfg.solver, cfg.ridge))
    stats = aggregate_stats(records)
    _emit(io.format_results(stats), args.out)
    if args.plot:
        plot = Path(args.plot)
        io.emit_plot(stats, plot, "median_vs_gamma")
        io.emit_plot(stats, plot.with_name(plot.stem + "_rms" + (plot.suffix or ".svg")), "rms_vs_gamma")
    return EXIT_OK


def _solver(name, obs, cfg):
    if name == "vision":
        return solve_vision(obs.vision, None, cfg.solver)
    if name == "range":
        return solve_range(obs.ranges, seed_point(obs)[0], cfg.solver)
    if name == "fused":
        return solve_fused(obs, None, cfg.solver)
    if name == "fused_raw":
        return solve_fused_unnormalized(obs, None, cfg.solver)
    return solve_fused_ridge(obs, None, cfg.solver, cfg.ridge)


def cmd_solve(args):
    cfg = _load_config(args.config)
    obs = io.load_observations(args.obs, cfg.scenario.camera)
    report = _solver(args.algo, obs, cfg)
    _emit(io.format_estimate(report), args.out)
    return EXIT_OK


def cmd_compare(args):
    cfg = _load_config(args.config)
    obs = io.load_observations(args.obs, cfg.scenario.camera)
    results = run_algorithms(obs, ALGORITHMS, cfg.solver, cfg.ridge)
    lines = ["algorithm,x_m,y_m,z_m,error_m,converged,iterations,failure"]
    target = None if args.target is None else np.asarray(args.target, dtype=float)
    if target is not None and target.shape != (3,):
        raise UsageError("--target needs exactly three numbers")
    for name in ALGORITHMS:
        est, rep, failure = results[name]
        if est is None:
            lines.append(f"{name},nan,nan,nan,nan,false,0,{failure.replace(',', ';')}")
            continue
        err = "" if target is None else f"{np.linalg.norm(est - target):.6g}"
        conv = "true" if rep is None or rep.converged else "false"
        iters = 0 if rep is None else rep.iterations
        lines.append(f"{name},{est[0]:.6f},{est[1]:.6f},{est[2]:.6f},{err},{conv},{iters},")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_bound(args):
    err = intersection_error_bound(args.gamma, args.delta, args.half_baseline)
    sys.stdout.write(f"{err:.6g}\n")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "solve": cmd_solve, "compare": cmd_compare, "bound": cmd_bound}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except UnboundedError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LocalizationError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
