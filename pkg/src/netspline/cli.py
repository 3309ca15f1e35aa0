"""Command-line interface: ``netspline <command> [options]``.

Exit status is 0 on success, 1 when a computation fails (no convergence,
too many failed replicates) and 2 for usage, configuration or input-file
errors.  Diagnostics go to stderr; stdout carries only a JSON summary.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .datasets import simplenet_standin, street_grid
from .exceptions import ContractError, ConvergenceError, FormatError, NetworkError, StudyError
from .model import FitConfig, fit_intensity, intensity_ratio
from .sim import FUNCTIONS, IntensitySpec, run_study, sample_points, sensitivity_grid

log = logging.getLogger("netspline")

BUILTINS = {"simplenet": simplenet_standin, "street-grid": street_grid}


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _network_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--network", help="network JSON file")
    g.add_argument("--builtin", choices=sorted(BUILTINS), help="use a built-in network")


def _fit_args(p, with_smoothing=True):
    p.add_argument("--delta", type=float, help="global knot distance (required)")
    p.add_argument("--h", type=float, help="global bin width, at most delta (required)")
    p.add_argument("--order", type=int, default=1, choices=(1, 2), help="difference penalty order")
    if with_smoothing:
        p.add_argument("--rho0", type=float, default=1.0, help="starting smoothing parameter")
        p.add_argument("--rho-cap", type=float, default=1e10, help="divergence cap for rho")
        p.add_argument("--rho-tol", type=float, default=1e-3, help="relative stopping tolerance for rho")
        p.add_argument("--max-outer", type=int, default=50, help="maximum smoothing-parameter updates")


def _spec_arg(p):
    p.add_argument("--spec", default="uniform",
                   help="intensity shape: 'uniform' or one of " + ", ".join(sorted(FUNCTIONS)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netspline", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with option values; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an intensity to a point pattern")
    _network_args(p)
    p.add_argument("--points", help="point pattern CSV")
    p.add_argument("--snap-tolerance", type=float, default=1e-6, help="for x,y point files")
    _fit_args(p)
    p.add_argument("--step", type=float, help="dump spacing (default: bin midpoints)")
    p.add_argument("--out", help="output directory for fit.json and intensity.csv")

    p = sub.add_parser("eval", help="evaluate a saved fit")
    p.add_argument("--fit", help="fit JSON file")
    p.add_argument("--points", help="evaluate at these points instead of a regular grid")
    p.add_argument("--snap-tolerance", type=float, default=1e-6)
    p.add_argument("--step", type=float, help="grid spacing (default: bin midpoints)")
    p.add_argument("--out", help="output CSV")

    p = sub.add_parser("simulate", help="simulate a point pattern")
    _network_args(p)
    _spec_arg(p)
    p.add_argument("--n", type=int, help="number of points")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output points CSV")

    p = sub.add_parser("study", help="replicated simulation study of the ISE")
    _network_args(p)
    _spec_arg(p)
    p.add_argument("--n-list", type=_ints, default=[5, 10, 20, 50, 100, 200, 500, 1000])
    p.add_argument("--S", type=int, default=100, help="replicates per n")
    _fit_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", action="store_true", help="reuse replicates from the checkpoint")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("sensitivity", help="ISE over a grid of knot distances and bin widths")
    _network_args(p)
    _spec_arg(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--deltas", type=_floats, default=[0.1, 0.05, 0.01])
    p.add_argument("--hs", type=_floats, default=[0.1, 0.05, 0.01, 0.005])
    p.add_argument("--S", type=int, default=50)
    p.add_argument("--order", type=int, default=1, choices=(1, 2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output CSV")

    p = sub.add_parser("ratio", help="ratio of two fitted intensities")
    p.add_argument("--num", help="numerator fit JSON")
    p.add_argument("--den", help="denominator fit JSON")
    p.add_argument("--floor", type=float, help="minimum denominator intensity")
    p.add_argument("--step", type=float)
    p.add_argument("--out", help="output CSV")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def parse(argv) -> argparse.Namespace:
    """Parse ``argv``, filling unset options from ``--config`` if given."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {args.config}: invalid JSON ({exc})") from None
        if not isinstance(overrides, dict):
            raise UsageError("config file must hold a JSON object")
        sub = _subparser(parser, args.command)
        known = {a.dest for a in sub._actions}
        clean = {}
        for key, value in overrides.items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise UsageError(f"config file: unknown option {key!r} for '{args.command}'")
            clean[dest] = value
        sub.set_defaults(**clean)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise UsageError(f"{args.command}: missing required option(s) {flags}")


def _network(args):
    if getattr(args, "builtin", None):
        return BUILTINS[args.builtin](), args.builtin
    if not args.network:
        raise UsageError(f"{args.command}: give --network FILE or --builtin NAME")
    return io.read_network(args.network), Path(args.network).stem


def _spec(name: str) -> IntensitySpec:
    if name == "uniform":
        return IntensitySpec.uniform()
    if name not in FUNCTIONS:
        raise UsageError(f"unknown intensity spec {name!r}")
    return IntensitySpec.named(name)


def _fit_config(args) -> FitConfig:
    _require(args, "delta", "h")
    return FitConfig(delta=args.delta, h=args.h, order=args.order, rho0=args.rho0,
                     rho_cap=args.rho_cap, rho_tol=args.rho_tol, max_outer=args.max_outer)


def _outdir(args) -> Path:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> dict:
    net, _ = _network(args)
    config = _fit_config(args)
    _require(args, "points", "out")
    points = io.read_points(args.points, net, args.snap_tolerance)
    out = _outdir(args)
    fit = fit_intensity(net, points, config)
    io.save_fit(fit, out / "fit.json")
    rows = io.write_intensity_dump(fit, out / "intensity.csv", args.step)
    log.info("fit: rho=%.6g edf=%.4g converged=%s capped=%s", fit.rho, fit.edf,
             fit.converged, fit.rho_capped)
    return {"rho": fit.rho, "edf": fit.edf, "n": fit.n, "dimension": fit.basis.dimension,
            "converged": fit.converged, "rho_capped": fit.rho_capped,
            "outer_iterations": fit.outer_iterations, "dump_rows": rows,
            "fit": str(out / "fit.json"), "intensity": str(out / "intensity.csv")}


def cmd_eval(args) -> dict:
    _require(args, "fit", "out")
    fit = io.load_fit(args.fit)
    if args.points:
        pts = io.read_points(args.points, fit.network, args.snap_tolerance)
        rows = io.write_intensity_at(fit, pts, args.out)
    else:
        rows = io.write_intensity_dump(fit, args.out, args.step)
    return {"rows": rows, "out": args.out}


def cmd_simulate(args) -> dict:
    net, _ = _network(args)
    _require(args, "n", "out")
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    pts = sample_points(net, _spec(args.spec), args.n, args.seed)
    io.write_points(pts, args.out)
    return {"n": len(pts), "out": args.out}


def cmd_study(args) -> dict:
    net, net_id = _network(args)
    config = _fit_config(args)
    out = _outdir(args)
    if args.S < 1 or any(n < 1 for n in args.n_list):
        raise UsageError("--S and every entry of --n-list must be positive")
    ckpt = out / "checkpoint.jsonl"
    done = io.read_checkpoint(ckpt) if args.resume else []
    if not args.resume and ckpt.exists():
        ckpt.unlink()
    if done:
        log.info("resuming: %d replicates already done", len(done))
    report = run_study(net, _spec(args.spec), args.n_list, args.S, config, args.seed,
                       completed=done, on_record=lambda r: io.append_checkpoint(r, ckpt),
                       network_id=net_id)
    report.write(out / "study.json", out / "study.csv")
    return {"summary": {str(k): v for k, v in report.summary.items()},
            "json": str(out / "study.json"), "csv": str(out / "study.csv")}


def cmd_sensitivity(args) -> dict:
    net, _ = _network(args)
    _require(args, "out")
    table = sensitivity_grid(net, _spec(args.spec), args.n, args.deltas, args.hs, args.S,
                             args.seed, order=args.order)
    table.write_csv(args.out)
    cells = {f"{d:g},{h:g}": c for (d, h), c in table.cells.items()}
    return {"cells": cells, "out": args.out}


def cmd_ratio(args) -> dict:
    _require(args, "num", "den", "floor", "out")
    ratio = intensity_ratio(io.load_fit(args.num), io.load_fit(args.den), args.floor)
    rows = io.write_ratio_dump(ratio, args.out, args.step)
    return {"rows": rows, "defined_length": ratio.support_length(args.step), "out": args.out}


COMMANDS = {
    "fit": cmd_fit, "eval": cmd_eval, "simulate": cmd_simulate, "study": cmd_study,
    "sensitivity": cmd_sensitivity, "ratio": cmd_ratio,
}


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0) and 2
    except UsageError as exc:
        print(f"netspline: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k not in ("verbose",)}
    log.info("resolved config: %s", json.dumps(resolved, default=str, sort_keys=True))
    try:
        summary = COMMANDS[args.command](args)
    except (UsageError, ContractError, FormatError, NetworkError) as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("file not found: %s", exc.filename)
        return 2
    except (ConvergenceError, StudyError, np.linalg.LinAlgError) as exc:
        log.error("computation failed: %s", exc)
        return 1
    print(json.dumps(summary, default=_jsonable, sort_keys=True))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
