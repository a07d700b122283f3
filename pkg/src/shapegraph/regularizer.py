"""Weight-change regularizers: discrete TV, Huber smoothing, shrinkage, {0,1}-penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphcore import PolygonalGraph

__all__ = [
    "DifferenceOperator",
    "HuberParams",
    "PenaltyConfig",
    "tv_norm",
    "huber",
    "huber_grad",
    "shrink",
    "double_well",
    "zero_one_penalty",
]


class DifferenceOperator:
    """Block-diagonal first differences, one block per component, applied matrix-free.

    ``apply`` maps a length-N vector to length N - K; differences never cross
    component boundaries.
    """

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=int)
        if np.any(self.counts < 1):
            raise ValueError("every component needs at least one edge")
        starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]])
        self.n = int(self.counts.sum())
        # left index of each difference (i - 1, i) inside the concatenated vector
        self._left = np.concatenate([s + np.arange(c - 1) for s, c in zip(starts, self.counts)]).astype(int)
        self.shape = (self.n - len(self.counts), self.n)

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        return v[self._left + 1] - v[self._left]

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        np.add.at(out, self._left + 1, w)
        np.subtract.at(out, self._left, w)
        return out


@dataclass(frozen=True)
class HuberParams:
    """TV weight ``alpha`` and smoothing parameter ``gamma``."""

    alpha: float
    gamma: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0):
            raise ValueError("alpha and gamma must be positive")

    @property
    def threshold(self) -> float:
        return self.alpha / self.gamma


@dataclass(frozen=True)
class PenaltyConfig:
    beta: float = 1.0
    eps_clip: float = 0.5

    def __post_init__(self):
        if self.beta < 0 or self.eps_clip <= 0:
            raise ValueError("need beta >= 0 and eps_clip > 0")


def tv_norm(delta_rho, D: DifferenceOperator) -> float:
    """Sum of |D delta_rho|, accumulated left to right (a fixed, documented order)."""
    a = np.abs(D.apply(delta_rho))
    return float(np.cumsum(a)[-1]) if a.size else 0.0


def huber(v, p: HuberParams):
    """Huber function: quadratic core (gamma/2) v^2, linear tails alpha (|v| - alpha / 2 gamma)."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    out = np.where(a <= p.threshold, 0.5 * p.gamma * v * v, p.alpha * (a - 0.5 * p.threshold))
    return out if out.ndim else float(out)


def huber_grad(v, p: HuberParams):
    v = np.asarray(v, dtype=float)
    out = np.clip(p.gamma * v, -p.alpha, p.alpha)
    return out if out.ndim else float(out)


def shrink(w, threshold: float):
    """Soft thresholding, the proximal map of threshold * |.|."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    w = np.asarray(w, dtype=float)
    out = np.sign(w) * np.maximum(np.abs(w) - threshold, 0.0)
    return out if out.ndim else float(out)


def double_well(rho, eps_clip: float):
    """Clipped 8 (rho (rho - 1))^2 and its derivative.

    Outside (-eps, 1 + eps) the quartic is continued linearly with matching
    value and slope, so the result is C^1.
    """
    rho = np.asarray(rho, dtype=float)

    def f(r):
        return 8.0 * (r * (r - 1.0)) ** 2

    def df(r):
        return 16.0 * r * (r - 1.0) * (2.0 * r - 1.0)

    lo, hi = -eps_clip, 1.0 + eps_clip
    r = np.clip(rho, lo, hi)
    val = f(r) + df(r) * (rho - r)
    der = df(r)
    return val, der


def zero_one_penalty(graph: PolygonalGraph, cfg: PenaltyConfig):
    """sum_i 8 (rho_i (rho_i - 1))^2 |e_i| (clipped), unscaled by beta.

    Returns (value, vertex_grads, weight_grad).
    """
    val, der = double_well(graph.rho, cfg.eps_clip)
    lengths = graph.lengths
    value = float(val @ lengths)
    g_rho = der * lengths
    g_e = val[:, None] * graph.edges / lengths[:, None]
    g_v = graph.edge_to_vertex_grad(np.zeros_like(g_e), g_e)
    return value, g_v, g_rho
