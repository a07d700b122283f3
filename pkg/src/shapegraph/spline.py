"""Tensor-product B-spline paths of shape graphs.

A path is stored as control points ``controls[i, v]`` for time index ``i`` and
*variable* index ``v``. Each component maps its ``N_theta`` spatial control
points onto variables through ``index[k]``; glued endpoints (junctions, closed
curves) share a variable, so connectivity holds along the whole path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .graphcore import ShapeGraphSpec, chord_parameters, endpoint_groups

__all__ = [
    "clamped_knots",
    "basis_eval",
    "gauss_legendre",
    "Quadrature",
    "PathLayout",
    "PathSpline",
    "path_eval",
    "backprop_to_controls",
    "fit_source",
]


def clamped_knots(n_controls: int, degree: int) -> np.ndarray:
    """Equidistant simple interior knots with multiplicity ``degree + 1`` at 0 and 1."""
    if n_controls < degree + 1:
        raise ValueError(f"need at least {degree + 1} control points for degree {degree}")
    interior = np.linspace(0.0, 1.0, n_controls - degree + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def _span_indicator(knots: np.ndarray, x: np.ndarray) -> np.ndarray:
    n_int = len(knots) - 1
    B = np.zeros((len(x), n_int))
    last = np.flatnonzero(knots[:-1] < knots[1:])[-1]
    for i in range(n_int):
        if knots[i] < knots[i + 1]:
            B[:, i] = (knots[i] <= x) & (x < knots[i + 1])
    B[x == knots[-1], last] = 1.0
    return B


def _ratio(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _basis(knots: np.ndarray, degree: int, x: np.ndarray, deriv: int) -> np.ndarray:
    if deriv == 0:
        B = _span_indicator(knots, x)
        for q in range(1, degree + 1):
            n = len(knots) - q - 1
            left = _ratio(x[:, None] - knots[None, :n], knots[q : q + n] - knots[:n])
            right = _ratio(
                knots[None, q + 1 : q + 1 + n] - x[:, None], knots[q + 1 : q + 1 + n] - knots[1 : 1 + n]
            )
            B = left * B[:, :n] + right * B[:, 1 : n + 1]
        return B
    lower = _basis(knots, degree - 1, x, deriv - 1)
    n = len(knots) - degree - 1
    a = _ratio(degree, knots[degree : degree + n] - knots[:n])
    b = _ratio(degree, knots[degree + 1 : degree + 1 + n] - knots[1 : 1 + n])
    return a * lower[:, :n] - b * lower[:, 1 : n + 1]


def basis_eval(knots, degree: int, points, derivative: int = 0) -> np.ndarray:
    """B-spline basis matrix, one row per point and one column per basis function.

    Uses the Cox-de Boor recursion; derivatives come from the standard
    difference formula on the next-lower degree.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if derivative > degree:
        raise ValueError(f"derivative order {derivative} exceeds degree {degree}")
    if np.any((x < knots[0]) | (x > knots[-1])):
        raise ValueError("evaluation points must lie in [0, 1]")
    return _basis(knots, degree, x, derivative)


def gauss_legendre(knots, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on every nonempty knot span."""
    knots = np.asarray(knots, dtype=float)
    ref_x, ref_w = np.polynomial.legendre.leggauss(n_nodes)
    brk = np.unique(knots)
    lo, hi = brk[:-1, None], brk[1:, None]
    nodes = (lo + hi) / 2 + (hi - lo) / 2 * ref_x
    weights = (hi - lo) / 2 * ref_w
    return nodes.ravel(), np.broadcast_to(weights, nodes.shape).ravel().copy()


@dataclass(frozen=True)
class PathLayout:
    """Discretization structure shared by every path on one source graph."""

    n_components: int
    dim: int
    n_t: int = 10
    n_theta: int = 100
    degree_t: int = 1
    degree_theta: int = 2
    index: tuple[np.ndarray, ...] = field(default=())
    n_vars: int = 0

    @classmethod
    def from_adjacency(cls, adjacency, dim: int, n_t=10, n_theta=100, degree_t=1, degree_theta=2):
        """Assign variables to spatial control points, tying glued endpoints."""
        A = np.asarray(adjacency)
        K = A.shape[0] // 2
        groups = endpoint_groups(A)
        end_var = np.empty(2 * K, dtype=int)
        for g, members in enumerate(groups):
            end_var[members] = g
        nxt = len(groups)
        index = []
        for k in range(K):
            idx = np.empty(n_theta, dtype=int)
            idx[0], idx[-1] = end_var[2 * k], end_var[2 * k + 1]
            idx[1:-1] = np.arange(nxt, nxt + n_theta - 2)
            nxt += n_theta - 2
            idx.setflags(write=False)
            index.append(idx)
        return cls(K, dim, n_t, n_theta, degree_t, degree_theta, tuple(index), nxt)

    @cached_property
    def knots_t(self) -> np.ndarray:
        return clamped_knots(self.n_t, self.degree_t)

    @cached_property
    def knots_theta(self) -> np.ndarray:
        return clamped_knots(self.n_theta, self.degree_theta)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """How many component control points refer to each variable."""
        return np.bincount(np.concatenate(self.index), minlength=self.n_vars)


class Quadrature:
    """Gauss-Legendre tables in t and theta with basis matrices at the nodes."""

    def __init__(self, layout: PathLayout, nodes_t: int = 2, nodes_theta: int = 3):
        self.layout = layout
        self.t, self.wt = gauss_legendre(layout.knots_t, nodes_t)
        self.theta, self.wtheta = gauss_legendre(layout.knots_theta, nodes_theta)
        self.Bt = [
            basis_eval(layout.knots_t, layout.degree_t, self.t, r)
            for r in range(min(layout.degree_t, 1) + 1)
        ]
        self.Ctheta = [
            basis_eval(layout.knots_theta, layout.degree_theta, self.theta, r)
            for r in range(min(layout.degree_theta, 2) + 1)
        ]

    @property
    def weights_2d(self) -> np.ndarray:
        return self.wt[:, None] * self.wtheta[None, :]


@dataclass
class PathSpline:
    """Control points ``controls`` (N_t, n_vars, d) on a :class:`PathLayout`."""

    layout: PathLayout
    controls: np.ndarray

    def component_controls(self, k: int) -> np.ndarray:
        return self.controls[:, self.layout.index[k], :]

    def slice_at(self, t: float) -> list[np.ndarray]:
        """Spatial control nets of every component at time t."""
        bt = basis_eval(self.layout.knots_t, self.layout.degree_t, [t])[0]
        P = np.tensordot(bt, self.controls, axes=(0, 0))
        return [P[idx] for idx in self.layout.index]

    def evaluate(self, t: float, theta) -> list[np.ndarray]:
        C = basis_eval(self.layout.knots_theta, self.layout.degree_theta, theta)
        return [C @ net for net in self.slice_at(t)]


def path_eval(path: PathSpline, t_order: int, theta_order: int, quad: Quadrature) -> list[np.ndarray]:
    """d^t_order/dt d^theta_order/dtheta of every component at the quadrature grid.

    Returns one array per component of shape (n_t_nodes, n_theta_nodes, d).
    """
    Bt = quad.Bt[t_order]
    Ct = quad.Ctheta[theta_order]
    out = []
    for k in range(path.layout.n_components):
        inner = np.matmul(Ct, path.component_controls(k))
        out.append(np.tensordot(Bt, inner, axes=(1, 0)))
    return out


def backprop_to_controls(
    path: PathSpline, cotangents: list[np.ndarray], t_order: int, theta_order: int, quad: Quadrature
) -> np.ndarray:
    """Adjoint of :func:`path_eval`; tied variables accumulate all occurrences.

    The gradient includes the t = 0 slice; callers mask it when optimizing.
    """
    layout = path.layout
    if len(cotangents) != layout.n_components:
        raise ValueError("one cotangent array per component expected")
    Bt = quad.Bt[t_order]
    Ct = quad.Ctheta[theta_order]
    grad = np.zeros((layout.n_t, layout.n_vars, layout.dim))
    for k, w in enumerate(cotangents):
        if w.shape != (Bt.shape[0], Ct.shape[0], layout.dim):
            raise ValueError(f"cotangent for component {k} has shape {w.shape}")
        g = np.matmul(Ct.T, np.tensordot(Bt.T, w, axes=(1, 0)))
        np.add.at(grad, (slice(None), layout.index[k]), g)
    return grad


def _densify(curve: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    u = chord_parameters(curve)
    s = np.union1d(np.linspace(0.0, 1.0, n), u)
    pts = np.stack([np.interp(s, u, curve[:, a]) for a in range(curve.shape[1])], axis=1)
    return s, pts


def fit_source(spec: ShapeGraphSpec, layout: PathLayout) -> tuple[np.ndarray, float]:
    """Least-squares spline fit of the source polylines under chord-length parameters.

    Endpoint controls are pinned to the (group-averaged) polyline endpoints so
    that tied variables agree; interior controls solve a per-component least
    squares problem. Returns the (n_vars, d) first time slice and the RMS
    residual of the fit at the sample points.
    """
    P = np.zeros((layout.n_vars, layout.dim))
    count = np.zeros(layout.n_vars)
    for k, c in enumerate(spec.components):
        for pos, pt in ((0, c[0]), (-1, c[-1])):
            v = layout.index[k][pos]
            P[v] += pt
            count[v] += 1
    ends = count > 0
    P[ends] /= count[ends, None]

    sq_err, n_pts = 0.0, 0
    for k, c in enumerate(spec.components):
        idx = layout.index[k]
        s, pts = _densify(c, max(8 * layout.n_theta, len(c)))
        C = basis_eval(layout.knots_theta, layout.degree_theta, s)
        rhs = pts - np.outer(C[:, 0], P[idx[0]]) - np.outer(C[:, -1], P[idx[-1]])
        if layout.n_theta > 2:
            sol, *_ = np.linalg.lstsq(C[:, 1:-1], rhs, rcond=None)
            P[idx[1:-1]] = sol
        fitted = C @ P[idx]
        sq_err += float(((fitted - pts) ** 2).sum())
        n_pts += len(pts)
    return P, float(np.sqrt(sq_err / n_pts))
