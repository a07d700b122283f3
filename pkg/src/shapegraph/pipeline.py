"""End-to-end weighted shape-graph matching."""

from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from .graphcore import PolygonalGraph
from .optim import sfista_match
from .problem import MatchProblem, MatchResult

__all__ = ["match", "fixed_weight_match", "match_weights_on_target", "geodesic_frames"]

logger = logging.getLogger(__name__)


def match(problem: MatchProblem, checkpoint: str | None = None) -> MatchResult:
    """Jointly estimate the deformation path and the weight change on the source.

    The reported distance (``result.distance``) is the square root of the path
    energy alone; the varifold, TV and penalty terms are diagnostics.
    """
    return sfista_match(problem, checkpoint=checkpoint)


def fixed_weight_match(problem: MatchProblem, checkpoint: str | None = None) -> MatchResult:
    """Unweighted relaxed matching: delta_rho frozen at 0, alpha and beta ignored."""
    return sfista_match(problem, weights_free=False, checkpoint=checkpoint)


def match_weights_on_target(problem: MatchProblem, fixed_weights: bool = False) -> MatchResult:
    """Estimate the weight change on the target by swapping the roles of the shapes.

    The returned path runs from the target to the source.
    """
    swapped = problem.replace(source=problem.target, target=problem.source)
    return fixed_weight_match(swapped) if fixed_weights else match(swapped)


def geodesic_frames(result: MatchResult, times: Iterable[float]) -> list[PolygonalGraph]:
    """Resampled weighted graphs along the optimal path.

    Weights are interpolated linearly, rho(t) = rho0 + t * delta_rho; only
    rho(1) enters the energy, the interpolation is for display.
    """
    disc = result.problem.disc
    frames = []
    for t in times:
        t = float(t)
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"frame time {t} outside [0, 1]")
        bt = _time_basis(result, t)
        P = np.tensordot(bt, result.path.controls, axes=(0, 0))
        frames.append(disc.graph_from_slice(P, result.rho0 + t * result.delta_rho))
    return frames


def _time_basis(result: MatchResult, t: float) -> np.ndarray:
    from .spline import basis_eval

    lay = result.path.layout
    return basis_eval(lay.knots_t, lay.degree_t, [t])[0]
