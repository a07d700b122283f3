"""Matching problem definition, its discretization, and the result container."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .graphcore import PolygonalGraph, ShapeGraphSpec, chord_parameters, lookup_weights, validate
from .metric import MetricConfig
from .optim import LbfgsConfig, SfistaSchedule
from .regularizer import DifferenceOperator, PenaltyConfig
from .spline import PathLayout, PathSpline, Quadrature, basis_eval, fit_source
from .varifold import KernelConfig, _Edges, _pair_sum

__all__ = ["SplineConfig", "MatchProblem", "Discretization", "MatchResult", "StageRecord"]


@dataclass(frozen=True)
class SplineConfig:
    """Path discretization sizes.

    ``resample`` is the number of edges per component of the transformed
    source; ``None`` uses ``n_theta``. With ``resample_target`` the target
    goes through the same spline fit and resampling as the source, so that
    identical inputs give identical discrete graphs.
    """

    n_t: int = 10
    n_theta: int = 100
    degree_t: int = 1
    degree_theta: int = 2
    quad_t: int = 2
    quad_theta: int = 3
    resample: int | None = None
    resample_target: bool = True

    def __post_init__(self):
        if self.degree_theta < 2:
            raise ValueError("the order-2 metric needs degree_theta >= 2")
        if self.n_t < self.degree_t + 1 or self.n_theta < self.degree_theta + 1:
            raise ValueError("too few control points for the spline degree")


@dataclass(frozen=True)
class MatchProblem:
    """Source and target weighted shape graphs plus every balancing/solver parameter.

    ``beta`` multiplies the {0,1}-penalty directly in the smoothed energy and
    ``alpha`` weights the total variation of the weight change.
    """

    source: ShapeGraphSpec
    target: ShapeGraphSpec
    metric: MetricConfig = field(default_factory=MetricConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    lam: float = 10.0
    alpha: float = 0.01
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    schedule: SfistaSchedule = field(default_factory=SfistaSchedule)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    spline: SplineConfig = field(default_factory=SplineConfig)
    normalize: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.source.dim != self.target.dim:
            raise ValueError("source and target must live in the same dimension")

    def check(self) -> None:
        """Raise ValueError when source or target fail validation."""
        for name, spec in (("source", self.source), ("target", self.target)):
            report = validate(spec)
            if not report.ok:
                raise ValueError(f"invalid {name} shape graph:\n{report}")

    @cached_property
    def disc(self) -> "Discretization":
        self.check()
        return Discretization(self)

    def replace(self, **changes) -> "MatchProblem":
        import dataclasses

        return dataclasses.replace(self, **changes)


class Discretization:
    """Everything precomputed once per problem: layout, quadrature, fits, target."""

    def __init__(self, problem: MatchProblem):
        src, tgt = problem.source, problem.target
        if problem.normalize:
            diam = max(src.diameter(), tgt.diameter())
            self.scale = 1.0 / diam if diam > 0 else 1.0
        else:
            self.scale = 1.0
        src, tgt = src.scaled(self.scale), tgt.scaled(self.scale)
        self.source, self.target_spec = src, tgt
        sc = problem.spline
        self.layout = PathLayout.from_adjacency(
            src.adjacency, src.dim, sc.n_t, sc.n_theta, sc.degree_t, sc.degree_theta
        )
        self.quad = Quadrature(self.layout, sc.quad_t, sc.quad_theta)
        self.P0, self.fit_residual = fit_source(src, self.layout)

        n_res = sc.resample or sc.n_theta
        self.counts = np.full(src.n_components, n_res, dtype=int)
        self.R, rho0 = _resampling(src, self.layout, self.counts)
        self.rho0 = np.concatenate(rho0)
        self.D = DifferenceOperator(self.counts)
        if sc.resample_target:
            tlay = PathLayout.from_adjacency(
                tgt.adjacency, tgt.dim, sc.n_t, sc.n_theta, sc.degree_t, sc.degree_theta
            )
            tP, _ = fit_source(tgt, tlay)
            tcounts = np.full(tgt.n_components, n_res, dtype=int)
            tR, trho = _resampling(tgt, tlay, tcounts)
            self.target = PolygonalGraph([R @ tP[idx] for R, idx in zip(tR, tlay.index)], trho)
        else:
            self.target = PolygonalGraph(tgt.components, tgt.weights)
        tedges = _Edges.of(self.target)
        self.target_self = _pair_sum(tedges, tedges, problem.kernel, False)[0]

    @property
    def n_edges(self) -> int:
        return int(self.counts.sum())

    @property
    def n_control_vars(self) -> int:
        lay = self.layout
        return (lay.n_t - 1) * lay.n_vars * lay.dim

    def initial_path(self) -> PathSpline:
        """Constant path equal to the fitted source."""
        return PathSpline(self.layout, np.repeat(self.P0[None], self.layout.n_t, axis=0))

    def controls_from(self, z_ctrl: np.ndarray) -> np.ndarray:
        lay = self.layout
        rest = z_ctrl.reshape(lay.n_t - 1, lay.n_vars, lay.dim)
        return np.concatenate([self.P0[None], rest], axis=0)

    def graph_from_slice(self, P: np.ndarray, rho: np.ndarray) -> PolygonalGraph:
        """Resample a spatial control slice (n_vars, d) into a weighted polygon."""
        verts = [R @ P[idx] for R, idx in zip(self.R, self.layout.index)]
        return PolygonalGraph(verts, np.split(rho, np.cumsum(self.counts)[:-1]))

    def slice_grad(self, vertex_grads) -> np.ndarray:
        """Pull vertex gradients of a resampled slice back to its control variables."""
        g = np.zeros((self.layout.n_vars, self.layout.dim))
        for R, idx, gv in zip(self.R, self.layout.index, vertex_grads):
            np.add.at(g, idx, R.T @ gv)
        return g


def _resampling(spec: ShapeGraphSpec, layout: PathLayout, counts):
    """Basis matrices at theta_i = i / N_k and source weights looked up at edge centers."""
    R, rho = [], []
    for k, c in enumerate(spec.components):
        theta = np.arange(counts[k] + 1) / counts[k]
        R.append(basis_eval(layout.knots_theta, layout.degree_theta, theta))
        mid = (theta[:-1] + theta[1:]) / 2
        rho.append(lookup_weights(chord_parameters(c), spec.weights[k], mid))
    return R, rho


@dataclass
class StageRecord:
    """Diagnostics for one smoothing stage."""

    gamma: float
    iterations: int
    converged: bool
    message: str
    energies: list[float]
    grad_norms: list[float]
    steps: list[float]
    huber_gap: float
    gap_bound: float
    residual: float
    breakdown: dict[str, float]

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class MatchResult:
    """Optimized path, weight change, energy breakdown and solver diagnostics.

    Coordinates of ``path`` and ``frames`` live in the normalized frame; divide
    by ``scale`` to return to input units.
    """

    problem: MatchProblem
    path: PathSpline
    delta_rho: np.ndarray
    rho0: np.ndarray
    breakdown: dict[str, float]
    stages: list[StageRecord]
    fixed_weights: bool = False
    success: bool = True
    message: str = ""

    @property
    def distance(self) -> float:
        return float(np.sqrt(max(self.breakdown["path_energy"], 0.0)))

    @property
    def rho(self) -> np.ndarray:
        return self.rho0 + self.delta_rho

    @property
    def scale(self) -> float:
        return self.problem.disc.scale

    def weights_per_component(self) -> list[np.ndarray]:
        counts = self.problem.disc.counts
        return np.split(self.rho, np.cumsum(counts)[:-1])
