"""Elastic matching of weighted shape graphs with second-order Sobolev metrics."""

from .graphcore import (
    DegenerateCurveError,
    PolygonalGraph,
    ShapeGraphSpec,
    ValidationReport,
    resample,
    split_components,
    validate,
)
from .metric import ImmersionError, MetricConfig
from .optim import LbfgsConfig, SfistaSchedule, assemble_energy, lbfgs_minimize, sfista_match
from .pipeline import fixed_weight_match, geodesic_frames, match, match_weights_on_target
from .problem import MatchProblem, MatchResult, SplineConfig
from .regularizer import PenaltyConfig
from .varifold import KernelConfig

__version__ = "0.1.0"

__all__ = [
    "DegenerateCurveError",
    "ImmersionError",
    "KernelConfig",
    "LbfgsConfig",
    "MatchProblem",
    "MatchResult",
    "MetricConfig",
    "PenaltyConfig",
    "PolygonalGraph",
    "SfistaSchedule",
    "ShapeGraphSpec",
    "SplineConfig",
    "ValidationReport",
    "assemble_energy",
    "fixed_weight_match",
    "geodesic_frames",
    "lbfgs_minimize",
    "match",
    "match_weights_on_target",
    "resample",
    "sfista_match",
    "split_components",
    "validate",
]
