"""JSON file formats for shape graphs, match configurations and results.

Floats go through ``repr`` (shortest round-trip form), so write/read is
bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from .graphcore import PolygonalGraph, ShapeGraphSpec
from .metric import MetricConfig
from .optim import LbfgsConfig, SfistaSchedule
from .problem import MatchProblem, MatchResult, SplineConfig, StageRecord
from .regularizer import PenaltyConfig
from .spline import PathSpline
from .varifold import KernelConfig

__all__ = [
    "FormatError",
    "RESULT_FORMAT",
    "RESULT_VERSION",
    "shape_graph_to_dict",
    "shape_graph_from_dict",
    "read_shape_graph",
    "write_shape_graph",
    "polygonal_to_dict",
    "config_from_dict",
    "config_to_dict",
    "read_config",
    "problem_from_config",
    "result_to_dict",
    "result_from_dict",
    "read_result",
    "write_result",
]

RESULT_FORMAT = "shapegraph-result"
RESULT_VERSION = 1

# config section name -> dataclass
_SECTIONS = {
    "metric": MetricConfig,
    "kernel": KernelConfig,
    "penalty": PenaltyConfig,
    "schedule": SfistaSchedule,
    "lbfgs": LbfgsConfig,
    "spline": SplineConfig,
}
_SCALARS = {"lam": float, "alpha": float, "normalize": bool}


class FormatError(ValueError):
    """A file does not follow the expected JSON layout."""


def _load_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def _dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _finite_or_none(values) -> list:
    return [float(v) if math.isfinite(v) else None for v in values]


# ---------------------------------------------------------------- shape graphs


def shape_graph_to_dict(spec: ShapeGraphSpec) -> dict:
    return {
        "dim": spec.dim,
        "components": [_floats(c) for c in spec.components],
        "adjacency": np.asarray(spec.adjacency, dtype=int).tolist(),
        "weights": [_floats(w) for w in spec.weights],
    }


def shape_graph_from_dict(doc: Any) -> ShapeGraphSpec:
    """Parse a ShapeGraphFile document; validation is left to the caller."""
    if not isinstance(doc, dict):
        raise FormatError("shape graph document must be a JSON object")
    unknown = set(doc) - {"dim", "components", "adjacency", "weights"}
    if unknown:
        raise FormatError(f"unknown shape graph keys: {sorted(unknown)}")
    if "components" not in doc:
        raise FormatError("shape graph document needs 'components'")
    try:
        comps = [np.asarray(c, dtype=float) for c in doc["components"]]
    except (TypeError, ValueError) as exc:
        raise FormatError(f"components must be numeric point lists ({exc})") from None
    dim = doc.get("dim")
    for k, c in enumerate(comps):
        if c.ndim != 2 or c.shape[0] < 2:
            raise FormatError(f"component {k} must be a list of at least two points")
        if dim is not None and c.shape[1] != dim:
            raise FormatError(f"component {k} has points of dimension {c.shape[1]}, expected {dim}")
    if dim is not None and dim not in (2, 3):
        raise FormatError(f"dim must be 2 or 3, got {dim}")
    adjacency = doc.get("adjacency")
    if adjacency is not None:
        try:
            adjacency = np.asarray(adjacency, dtype=float)
        except (TypeError, ValueError):
            raise FormatError("adjacency must be a rectangular numeric matrix") from None
        if adjacency.ndim != 2:
            raise FormatError(f"adjacency must be a matrix, got shape {adjacency.shape}")
    try:
        return ShapeGraphSpec(comps, adjacency, doc.get("weights"))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def read_shape_graph(path) -> ShapeGraphSpec:
    try:
        return shape_graph_from_dict(_load_json(path))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_shape_graph(spec: ShapeGraphSpec, path) -> None:
    _dump_json(shape_graph_to_dict(spec), path)


def polygonal_to_dict(graph: PolygonalGraph, adjacency) -> dict:
    """A resampled graph as a ShapeGraphFile document."""
    return {
        "dim": graph.dim,
        "components": [_floats(v) for v in graph.vertices],
        "adjacency": np.asarray(adjacency, dtype=int).tolist(),
        "weights": [_floats(w) for w in graph.weights],
    }


# ---------------------------------------------------------------- configuration


def _section(cls, values: Any, name: str):
    if not isinstance(values, dict):
        raise FormatError(f"config section '{name}' must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise FormatError(f"unknown keys in config section '{name}': {sorted(unknown)}")
    if "coefficients" in values:
        values = {**values, "coefficients": tuple(values["coefficients"])}
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"config section '{name}': {exc}") from None


def config_from_dict(doc: Any) -> dict:
    """Keyword arguments for :class:`MatchProblem` from a ConfigFile document.

    Missing keys keep their defaults; unknown keys raise :class:`FormatError`.
    """
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise FormatError("config document must be a JSON object")
    unknown = set(doc) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise FormatError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, cls in _SECTIONS.items():
        if key in doc:
            out[key] = _section(cls, doc[key], key)
    for key, typ in _SCALARS.items():
        if key in doc:
            val = doc[key]
            if typ is bool and not isinstance(val, bool):
                raise FormatError(f"config key '{key}' must be true or false")
            if typ is float and (isinstance(val, bool) or not isinstance(val, (int, float))):
                raise FormatError(f"config key '{key}' must be a number")
            out[key] = typ(val)
    return out


def config_to_dict(problem: MatchProblem) -> dict:
    doc = {}
    for key in _SECTIONS:
        sec = dataclasses.asdict(getattr(problem, key))
        if "coefficients" in sec:
            sec["coefficients"] = list(sec["coefficients"])
        doc[key] = sec
    for key in _SCALARS:
        doc[key] = getattr(problem, key)
    return doc


def read_config(path) -> dict:
    try:
        return config_from_dict(_load_json(path))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def problem_from_config(source: ShapeGraphSpec, target: ShapeGraphSpec, config: dict | None = None) -> MatchProblem:
    try:
        return MatchProblem(source, target, **(config or {}))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


# ---------------------------------------------------------------- results


def _stage_to_dict(rec: StageRecord) -> dict:
    d = rec.to_dict()
    d["energies"] = _finite_or_none(d["energies"])
    d["grad_norms"] = _finite_or_none(d["grad_norms"])
    d["steps"] = _finite_or_none(d["steps"])
    return d


def _stage_from_dict(d: dict) -> StageRecord:
    nan = float("nan")
    d = dict(d)
    for key in ("energies", "grad_norms", "steps"):
        d[key] = [nan if v is None else float(v) for v in d[key]]
    return StageRecord(**d)


def result_to_dict(result: MatchResult) -> dict:
    """ResultFile document: everything needed to re-render without solving again."""
    pb = result.problem
    disc = pb.disc
    lay = disc.layout
    return {
        "format": RESULT_FORMAT,
        "version": RESULT_VERSION,
        "distance": result.distance,
        "distance_definition": "sqrt(path_energy)",
        "breakdown": dict(result.breakdown),
        "success": result.success,
        "message": result.message,
        "fixed_weights": result.fixed_weights,
        "scale": disc.scale,
        "coordinates": "normalized; divide by scale for input units",
        "delta_rho": _floats(result.delta_rho),
        "rho0": _floats(result.rho0),
        "edge_counts": disc.counts.tolist(),
        "weights_per_component_mean": [float(w.mean()) for w in result.weights_per_component()],
        "path": {
            "n_t": lay.n_t,
            "n_theta": lay.n_theta,
            "degree_t": lay.degree_t,
            "degree_theta": lay.degree_theta,
            "n_vars": lay.n_vars,
            "controls": _floats(result.path.controls),
        },
        "stages": [_stage_to_dict(s) for s in result.stages],
        "config": config_to_dict(pb),
        "source": shape_graph_to_dict(pb.source),
        "target": shape_graph_to_dict(pb.target),
    }


def result_from_dict(doc: Any) -> MatchResult:
    if not isinstance(doc, dict) or doc.get("format") != RESULT_FORMAT:
        raise FormatError("not a shapegraph result document")
    if doc.get("version") != RESULT_VERSION:
        raise FormatError(f"unsupported result version {doc.get('version')!r}")
    source = shape_graph_from_dict(doc["source"])
    target = shape_graph_from_dict(doc["target"])
    problem = problem_from_config(source, target, config_from_dict(doc["config"]))
    lay = problem.disc.layout
    controls = np.asarray(doc["path"]["controls"], dtype=float)
    if controls.shape != (lay.n_t, lay.n_vars, lay.dim):
        raise FormatError(f"path controls have shape {controls.shape}, expected {(lay.n_t, lay.n_vars, lay.dim)}")
    return MatchResult(
        problem=problem,
        path=PathSpline(lay, controls),
        delta_rho=np.asarray(doc["delta_rho"], dtype=float),
        rho0=np.asarray(doc["rho0"], dtype=float),
        breakdown={k: float(v) for k, v in doc["breakdown"].items()},
        stages=[_stage_from_dict(s) for s in doc["stages"]],
        fixed_weights=bool(doc["fixed_weights"]),
        success=bool(doc["success"]),
        message=str(doc["message"]),
    )


def write_result(result: MatchResult, path) -> None:
    _dump_json(result_to_dict(result), path)


def read_result(path) -> MatchResult:
    try:
        return result_from_dict(_load_json(path))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed result file ({exc})") from None
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
