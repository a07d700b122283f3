"""Command-line interface: ``shapegraph {match,render,validate,resample}``.

Every flag can also come from an environment variable ``SGE_<FLAG>`` (upper
case, dashes as underscores), e.g. ``SGE_TARGET=t.json``. Command-line values
win over the environment.

Exit codes: 0 success, 2 input/parse/validation error, 3 solver failure.
Errors are reported on stderr as one JSON line ``{"error": category, ...}``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .graphcore import DegenerateCurveError, resample, validate
from .pipeline import fixed_weight_match, match, match_weights_on_target
from .render import PROJECTIONS, render_frames

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INPUT", "EXIT_SOLVER"]

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
ENV_PREFIX = "SGE_"


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int, **extra):
        super().__init__(message)
        self.category, self.code, self.extra = category, code, extra


def _truthy(s: str) -> bool:
    return s.strip().lower() in ("1", "true", "yes", "on")


def _times(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad time list {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shapegraph", description="Weighted shape-graph matching.")
    p.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="match a source onto a target and write a result file")
    m.add_argument("--source", help="source ShapeGraphFile")
    m.add_argument("--target", help="target ShapeGraphFile")
    m.add_argument("--config", help="ConfigFile (optional; defaults otherwise)")
    m.add_argument("--out", help="ResultFile to write")
    m.add_argument("--checkpoint", help="write a per-stage checkpoint here")
    m.add_argument("--fixed-weights", action="store_true", help="freeze weights (unweighted matching)")
    m.add_argument("--weights-on-target", action="store_true", help="estimate the weights on the target")

    r = sub.add_parser("render", help="write SVG frames of a finished match")
    r.add_argument("--result", help="ResultFile")
    r.add_argument("--times", type=_times, default=[0.0, 0.25, 0.5, 0.75, 1.0], help="comma-separated times")
    r.add_argument("--out", help="output directory")
    r.add_argument("--projection", choices=sorted(PROJECTIONS), default="xy", help="3D projection")

    v = sub.add_parser("validate", help="check a ShapeGraphFile")
    v.add_argument("--input", help="ShapeGraphFile")

    s = sub.add_parser("resample", help="resample every component to N edges")
    s.add_argument("--input", help="ShapeGraphFile")
    s.add_argument("--n", type=int, help="edges per component")
    s.add_argument("--out", help="output ShapeGraphFile")
    return p


_REQUIRED = {
    "match": ("source", "target", "out"),
    "render": ("result", "out"),
    "validate": ("input",),
    "resample": ("input", "n", "out"),
}


def _apply_env(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: list[str]) -> None:
    """Fill options not given on the command line from SGE_* variables."""
    sub = parser._subparsers._group_actions[0].choices[args.command]
    for action in [*parser._actions, *sub._actions]:
        if not action.option_strings or action.dest == "help":
            continue
        if any(opt in argv or any(a.startswith(opt + "=") for a in argv) for opt in action.option_strings):
            continue
        raw = os.environ.get(ENV_PREFIX + action.dest.upper())
        if raw is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            value = _truthy(raw)
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise CliError("input", f"{ENV_PREFIX}{action.dest.upper()}: {exc}", EXIT_INPUT) from None
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise CliError("input", f"{ENV_PREFIX}{action.dest.upper()}={raw!r} not in {sorted(action.choices)}", EXIT_INPUT)
        setattr(args, action.dest, value)
    missing = [name for name in _REQUIRED[args.command] if getattr(args, name) is None]
    if missing:
        flags = ", ".join(f"--{m.replace('_', '-')}" for m in missing)
        raise CliError("input", f"missing required option(s): {flags}", EXIT_INPUT)


def _read_graph(path: str, label: str):
    try:
        return io.read_shape_graph(path)
    except FileNotFoundError as exc:
        raise CliError("input", f"{label}: {exc}", EXIT_INPUT, path=path) from None
    except io.FormatError as exc:
        raise CliError("parse", f"{label}: {exc}", EXIT_INPUT, path=path) from None


def _check_graph(spec, label: str, path: str) -> None:
    report = validate(spec)
    if not report.ok:
        raise CliError("validation", f"{label} {path} is invalid:\n{report}", EXIT_INPUT, path=path, issues=report.issues)


def _cmd_match(args) -> int:
    source = _read_graph(args.source, "source")
    target = _read_graph(args.target, "target")
    _check_graph(source, "source", args.source)
    _check_graph(target, "target", args.target)
    try:
        config = io.read_config(args.config) if args.config else {}
        problem = io.problem_from_config(source, target, config)
    except FileNotFoundError as exc:
        raise CliError("input", f"config: {exc}", EXIT_INPUT, path=args.config) from None
    except io.FormatError as exc:
        raise CliError("parse", f"config: {exc}", EXIT_INPUT, path=args.config) from None

    try:
        if args.weights_on_target:
            result = match_weights_on_target(problem, fixed_weights=args.fixed_weights)
        elif args.fixed_weights:
            result = fixed_weight_match(problem, checkpoint=args.checkpoint)
        else:
            result = match(problem, checkpoint=args.checkpoint)
    except (ArithmeticError, DegenerateCurveError, ValueError) as exc:
        raise CliError("solver", f"solver failed before the first stage finished: {exc}", EXIT_SOLVER) from None

    io.write_result(result, args.out)
    print(f"distance {result.distance:.10g}")
    for key, val in result.breakdown.items():
        print(f"{key} {val:.10g}")
    means = " ".join(f"{m:.4g}" for m in (w.mean() for w in result.weights_per_component()))
    print(f"mean_weight_per_component {means}")
    if not result.success:
        raise CliError("solver", result.message, EXIT_SOLVER, partial_result=args.out)
    return EXIT_OK


def _cmd_render(args) -> int:
    try:
        result = io.read_result(args.result)
    except FileNotFoundError as exc:
        raise CliError("input", f"result: {exc}", EXIT_INPUT, path=args.result) from None
    except (io.FormatError, ValueError) as exc:
        raise CliError("parse", f"result: {exc}", EXIT_INPUT, path=args.result) from None
    if not args.times or any(not 0.0 <= t <= 1.0 for t in args.times):
        raise CliError("input", f"times must be a nonempty list in [0, 1], got {args.times}", EXIT_INPUT)
    paths = render_frames(result, args.times, args.out, projection=args.projection)
    for path in paths:
        print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    spec = _read_graph(args.input, "input")
    _check_graph(spec, "input", args.input)
    print(f"{args.input}: ok ({spec.n_components} components, dim {spec.dim})")
    return EXIT_OK


def _cmd_resample(args) -> int:
    spec = _read_graph(args.input, "input")
    _check_graph(spec, "input", args.input)
    if args.n < 1:
        raise CliError("input", f"--n must be >= 1, got {args.n}", EXIT_INPUT)
    try:
        graph = resample(spec, args.n)
    except DegenerateCurveError as exc:
        raise CliError("validation", str(exc), EXIT_INPUT) from None
    Path(args.out).write_text(json.dumps(io.polygonal_to_dict(graph, spec.adjacency), indent=1) + "\n")
    print(f"{args.out}: {spec.n_components} components x {args.n} edges")
    return EXIT_OK


_COMMANDS = {"match": _cmd_match, "render": _cmd_render, "validate": _cmd_validate, "resample": _cmd_resample}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        _apply_env(parser, args, argv)
        logging.basicConfig(level=str(args.log_level).upper(), format="%(levelname)s %(name)s: %(message)s")
        return _COMMANDS[args.command](args)
    except CliError as exc:
        print(exc, file=sys.stderr)
        print(json.dumps({"error": exc.category, "message": str(exc), **exc.extra}), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
