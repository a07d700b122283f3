"""Shape-graph data model: component curves, endpoint adjacency and edge weights.

Endpoint numbering follows the adjacency convention used throughout the
package: for component ``k`` (0-based) row/column ``2k`` is its start point and
``2k + 1`` its end point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "ShapeGraphSpec",
    "PolygonalGraph",
    "ValidationReport",
    "DegenerateCurveError",
    "UnionFind",
    "validate",
    "split_components",
    "resample",
    "adjacency_from_groups",
    "endpoint_groups",
    "graph_diameter",
    "chord_parameters",
]

DEFAULT_JUNCTION_RTOL = 1e-6


class DegenerateCurveError(ValueError):
    """A polyline has a zero-length edge (repeated consecutive vertex)."""

    def __init__(self, component: int, index: int, message: str | None = None):
        self.component = component
        self.index = index
        super().__init__(
            message or f"component {component}: zero-length edge at index {index}"
        )


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[list[int]]:
        out: dict[int, list[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return sorted(out.values(), key=lambda g: g[0])


def _as_curve(points) -> np.ndarray:
    arr = np.array(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("a component curve needs at least two vertices")
    if arr.shape[1] not in (2, 3):
        raise ValueError(f"vertices must live in R^2 or R^3, got dimension {arr.shape[1]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ShapeGraphSpec:
    """Continuous model of a weighted shape graph.

    Attributes:
        components: K polylines, each an array of shape (n_k, d).
        adjacency: 2K x 2K binary endpoint-adjacency matrix.
        weights: per-component per-edge nonnegative weights, length n_k - 1.
    """

    components: tuple[np.ndarray, ...]
    adjacency: np.ndarray
    weights: tuple[np.ndarray, ...]

    def __init__(self, components, adjacency=None, weights=None):
        comps = tuple(_as_curve(c) for c in components)
        if not comps:
            raise ValueError("a shape graph needs at least one component")
        dims = {c.shape[1] for c in comps}
        if len(dims) != 1:
            raise ValueError("all components must share the same dimension")
        if adjacency is None:
            adj = np.eye(2 * len(comps), dtype=np.int8)
        else:
            adj = np.array(adjacency, dtype=np.int8)
        adj.setflags(write=False)
        if weights is None:
            ws = tuple(np.ones(len(c) - 1) for c in comps)
        else:
            ws = tuple(np.array(w, dtype=float).reshape(-1) for w in weights)
        for w in ws:
            w.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "weights", ws)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].shape[1]

    def endpoints(self) -> np.ndarray:
        """Array (2K, d) of start/end points in adjacency order."""
        return np.array([p for c in self.components for p in (c[0], c[-1])])

    def diameter(self) -> float:
        return graph_diameter(self.components)

    def is_closed(self, k: int) -> bool:
        return bool(self.adjacency[2 * k, 2 * k + 1])

    def scaled(self, factor: float) -> "ShapeGraphSpec":
        return ShapeGraphSpec([c * factor for c in self.components], self.adjacency, self.weights)

    def permuted(self, order: Sequence[int]) -> "ShapeGraphSpec":
        """Reorder components; the adjacency matrix is permuted accordingly."""
        order = list(order)
        idx = np.array([2 * k + e for k in order for e in (0, 1)])
        return ShapeGraphSpec(
            [self.components[k] for k in order],
            self.adjacency[np.ix_(idx, idx)],
            [self.weights[k] for k in order],
        )

    def reversed_component(self, k: int) -> "ShapeGraphSpec":
        """Reverse the orientation of component k (start and end swap roles)."""
        comps = list(self.components)
        ws = list(self.weights)
        comps[k] = comps[k][::-1]
        ws[k] = ws[k][::-1]
        idx = np.arange(2 * self.n_components)
        idx[2 * k], idx[2 * k + 1] = 2 * k + 1, 2 * k
        return ShapeGraphSpec(comps, self.adjacency[np.ix_(idx, idx)], ws)

    def transformed(self, rotation: np.ndarray, translation) -> "ShapeGraphSpec":
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        return ShapeGraphSpec(
            [c @ rotation.T + translation for c in self.components], self.adjacency, self.weights
        )


@dataclass(frozen=True)
class PolygonalGraph:
    """Discrete weighted polygonal graph used at matching time.

    ``vertices[k]`` has shape (N_k + 1, d) and ``weights[k]`` shape (N_k,);
    edge i of component k joins vertices i and i + 1.
    """

    vertices: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]

    def __init__(self, vertices, weights=None):
        vs = tuple(np.asarray(v, dtype=float) for v in vertices)
        if weights is None:
            ws = tuple(np.ones(len(v) - 1) for v in vs)
        else:
            ws = tuple(np.asarray(w, dtype=float).reshape(-1) for w in weights)
        if len(ws) != len(vs) or any(len(w) != len(v) - 1 for v, w in zip(vs, ws)):
            raise ValueError("each component needs exactly one weight per edge")
        object.__setattr__(self, "vertices", vs)
        object.__setattr__(self, "weights", ws)

    @cached_property
    def counts(self) -> np.ndarray:
        return np.array([len(v) - 1 for v in self.vertices], dtype=int)

    @cached_property
    def edges(self) -> np.ndarray:
        return np.concatenate([v[1:] - v[:-1] for v in self.vertices])

    @cached_property
    def centers(self) -> np.ndarray:
        return np.concatenate([(v[:-1] + v[1:]) / 2 for v in self.vertices])

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @cached_property
    def rho(self) -> np.ndarray:
        return np.concatenate(self.weights)

    @cached_property
    def component(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.vertices)), self.counts)

    @property
    def n_edges(self) -> int:
        return int(self.counts.sum())

    @property
    def dim(self) -> int:
        return self.vertices[0].shape[1]

    def total_length(self) -> float:
        return float(self.lengths.sum())

    def with_weights(self, rho) -> "PolygonalGraph":
        rho = np.asarray(rho, dtype=float)
        splits = np.cumsum(self.counts)[:-1]
        return PolygonalGraph(self.vertices, np.split(rho, splits))

    def check_edges(self) -> None:
        """Raise DegenerateCurveError on the first zero-length edge."""
        for k, v in enumerate(self.vertices):
            lens = np.linalg.norm(np.diff(v, axis=0), axis=1)
            bad = np.flatnonzero(lens == 0)
            if bad.size:
                raise DegenerateCurveError(k, int(bad[0]))

    def edge_to_vertex_grad(self, g_centers: np.ndarray, g_edges: np.ndarray) -> list[np.ndarray]:
        """Pull gradients w.r.t. edge centers and edge vectors back to vertices."""
        out = []
        start = 0
        for v in self.vertices:
            n = len(v) - 1
            gc = g_centers[start : start + n]
            ge = g_edges[start : start + n]
            gv = np.zeros_like(v)
            gv[:-1] += 0.5 * gc - ge
            gv[1:] += 0.5 * gc + ge
            out.append(gv)
            start += n
        return out


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`; ``issues`` is empty iff the graph is valid."""

    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok

    def __str__(self) -> str:
        return "valid" if self.ok else "\n".join(self.issues)


def graph_diameter(curves) -> float:
    pts = np.concatenate([np.asarray(c, dtype=float) for c in curves])
    if len(pts) < 2:
        return 0.0
    return float(pdist(pts).max())


def _label(i: int) -> str:
    return f"{'start' if i % 2 == 0 else 'end'} of component {i // 2}"


def validate(spec: ShapeGraphSpec, eps_junction: float | None = None) -> ValidationReport:
    """Check adjacency structure, endpoint gluing, weights and edge lengths.

    Every violation is reported; nothing is raised.
    """
    report = ValidationReport()
    K = spec.n_components
    A = np.asarray(spec.adjacency)
    if eps_junction is None:
        eps_junction = DEFAULT_JUNCTION_RTOL * max(spec.diameter(), 1.0)

    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        report.issues.append(f"adjacency matrix is not square: shape {A.shape}")
    elif A.shape[0] != 2 * K:
        report.issues.append(
            f"adjacency matrix has size {A.shape[0]} but {K} components need {2 * K}"
        )
    else:
        if not np.isin(A, (0, 1)).all():
            report.issues.append("adjacency matrix entries must be 0 or 1")
        if not (A == A.T).all():
            for i, j in zip(*np.nonzero(A != A.T)):
                if i < j:
                    report.issues.append(f"adjacency not symmetric at ({i}, {j})")
        for i in np.flatnonzero(np.diag(A) != 1):
            report.issues.append(f"diagonal entry {i} is not 1")
        n = 2 * K
        A64 = A.astype(np.int64)
        missing = ((A64 @ A64) > 0) & (A == 0)
        for i, m in zip(*np.nonzero(missing)):
            if i < m:
                j = int(np.flatnonzero(A[i] & A[:, m])[0])
                report.issues.append(
                    f"transitivity defect: {_label(i)} ~ {_label(j)} ~ {_label(m)} "
                    f"but ({i}, {m}) not marked"
                )
        ends = spec.endpoints()
        for i in range(n):
            for j in range(i + 1, n):
                dist = float(np.linalg.norm(ends[i] - ends[j]))
                if A[i, j] and dist > eps_junction:
                    report.issues.append(
                        f"{_label(i)} and {_label(j)} marked connected but {dist:.3g} apart"
                    )
                elif not A[i, j] and dist <= eps_junction:
                    report.issues.append(f"{_label(i)} and {_label(j)} coincide but are not marked")

    if len(spec.weights) != K:
        report.issues.append(f"{len(spec.weights)} weight lists for {K} components")
    for k, (c, w) in enumerate(zip(spec.components, spec.weights)):
        if len(w) != len(c) - 1:
            report.issues.append(
                f"component {k}: {len(w)} weights for {len(c) - 1} edges"
            )
        if np.any(w < 0):
            report.issues.append(f"component {k}: negative weights")
        lens = np.linalg.norm(np.diff(c, axis=0), axis=1)
        for i in np.flatnonzero(lens == 0):
            report.issues.append(f"component {k}: zero-length edge at index {i}")
    return report


def endpoint_groups(adjacency: np.ndarray) -> list[list[int]]:
    """Equivalence classes of glued endpoints (connected components of A)."""
    A = np.asarray(adjacency)
    uf = UnionFind(A.shape[0])
    for i, j in zip(*np.nonzero(A)):
        uf.union(int(i), int(j))
    return uf.groups()


def adjacency_from_groups(groups: Sequence[Sequence[int]], n: int) -> np.ndarray:
    A = np.zeros((n, n), dtype=np.int8)
    for g in groups:
        A[np.ix_(g, g)] = 1
    return A


def split_components(
    polylines: Sequence, eps_junction: float | None = None, weights=None
) -> ShapeGraphSpec:
    """Build a shape graph from loose polylines, gluing endpoints closer than eps."""
    curves = [np.asarray(p, dtype=float) for p in polylines]
    for k, c in enumerate(curves):
        if c.ndim != 2 or len(c) < 2:
            raise ValueError(f"polyline {k} needs at least two vertices")
        lens = np.linalg.norm(np.diff(c, axis=0), axis=1)
        bad = np.flatnonzero(lens == 0)
        if bad.size:
            raise DegenerateCurveError(k, int(bad[0]))
    if eps_junction is None:
        eps_junction = DEFAULT_JUNCTION_RTOL * max(graph_diameter(curves), 1.0)
    ends = np.array([p for c in curves for p in (c[0], c[-1])])
    n = len(ends)
    uf = UnionFind(n)
    for i in range(n):
        d = np.linalg.norm(ends[i + 1 :] - ends[i], axis=1)
        for j in np.flatnonzero(d <= eps_junction):
            uf.union(i, i + 1 + int(j))
    return ShapeGraphSpec(curves, adjacency_from_groups(uf.groups(), n), weights)


def chord_parameters(curve: np.ndarray) -> np.ndarray:
    """Normalized cumulative chord length of a polyline, from 0 to 1."""
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1]


def lookup_weights(param: np.ndarray, weights: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Piecewise-constant lookup of per-edge weights at parameters in [0, 1]."""
    idx = np.searchsorted(param, query, side="right") - 1
    return np.asarray(weights)[np.clip(idx, 0, len(weights) - 1)]


def resample(spec: ShapeGraphSpec, counts) -> PolygonalGraph:
    """Evaluate each component at theta_i = i / N_k under chord-length parametrization."""
    K = spec.n_components
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (K,))
    if np.any(counts < 1):
        raise ValueError("resample counts must be >= 1")
    verts, ws = [], []
    for k, (c, w, n) in enumerate(zip(spec.components, spec.weights, counts)):
        u = chord_parameters(c)
        theta = np.arange(n + 1) / n
        v = np.stack([np.interp(theta, u, c[:, a]) for a in range(c.shape[1])], axis=1)
        v[0], v[-1] = c[0], c[-1]
        lens = np.linalg.norm(np.diff(v, axis=0), axis=1)
        bad = np.flatnonzero(lens == 0)
        if bad.size:
            raise DegenerateCurveError(k, int(bad[0]))
        centers = (theta[:-1] + theta[1:]) / 2
        verts.append(v)
        ws.append(lookup_weights(u, w, centers))
    return PolygonalGraph(verts, ws)
