"""Small synthetic shape graphs used by the examples and the test suite."""

from __future__ import annotations

import numpy as np

from .graphcore import ShapeGraphSpec, split_components

__all__ = [
    "open_arc",
    "closed_circle",
    "two_branch",
    "branch_pair",
    "four_component",
    "FOUR_COMPONENT_ADJACENCY",
    "helix_3d",
    "bundle",
]

# closed loop (0), self-crossing curve (1), two open curves (2, 3)
FOUR_COMPONENT_ADJACENCY = np.array(
    [
        [1, 1, 1, 0, 0, 0, 0, 0],
        [1, 1, 1, 0, 0, 0, 0, 0],
        [1, 1, 1, 0, 0, 0, 0, 0],
        [0, 0, 0, 1, 1, 0, 0, 1],
        [0, 0, 0, 1, 1, 0, 0, 1],
        [0, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 0, 0, 1, 0],
        [0, 0, 0, 1, 1, 0, 0, 1],
    ],
    dtype=np.int8,
)


def _segment(a, b, n: int = 30, bend: float = 0.0) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    t = np.linspace(0.0, 1.0, n)[:, None]
    normal = np.array([-(b - a)[1], (b - a)[0]])
    return a + (b - a) * t + bend * np.sin(np.pi * t) * normal


def open_arc(n: int = 40, height: float = 0.2) -> ShapeGraphSpec:
    t = np.linspace(0.0, 1.0, n)
    return ShapeGraphSpec([np.stack([t, height * np.sin(np.pi * t)], axis=1)])


def closed_circle(n: int = 80, radius: float = 1.0) -> ShapeGraphSpec:
    th = np.linspace(0.0, 2 * np.pi, n + 1)
    c = radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    c[-1] = c[0]
    return split_components([c])


def two_branch(n: int = 30) -> ShapeGraphSpec:
    """A trunk with two branches from its top end (three components)."""
    trunk = _segment((0, 0), (0, 1), n, bend=0.05)
    left = _segment((0, 1), (-0.5, 1.5), n, bend=0.1)
    right = _segment((0, 1), (0.5, 1.5), n, bend=-0.1)
    return split_components([trunk, left, right])


def branch_pair(n: int = 30) -> tuple[ShapeGraphSpec, ShapeGraphSpec]:
    """Two-branch source and a slightly deformed one-branch target."""
    target = split_components(
        [_segment((0, 0), (0.05, 1), n, bend=0.06), _segment((0.05, 1), (0.55, 1.45), n, bend=-0.12)]
    )
    return two_branch(n), target


def four_component(n: int = 40) -> ShapeGraphSpec:
    """Closed loop, a self-crossing curve and two open curves in the fixed topology above."""
    th = np.linspace(0.0, 2 * np.pi, n + 1)
    loop = np.stack([0.5 * np.cos(th), 0.5 * np.sin(th)], axis=1)
    loop[-1] = loop[0]
    s = np.linspace(0.0, 1.0, n)
    crossing = np.stack([0.5 + s - 0.3 * np.sin(2 * np.pi * s), 0.3 * (1 - np.cos(2 * np.pi * s))], axis=1)
    crossing[0], crossing[-1] = (0.5, 0.0), (1.5, 0.0)
    c3 = _segment((1.5, 0.0), (2.2, 0.5), n, bend=0.1)
    c4 = _segment((2.2, -0.6), (1.5, 0.0), n, bend=0.1)
    return ShapeGraphSpec([loop, crossing, c3, c4], FOUR_COMPONENT_ADJACENCY)


def helix_3d(n: int = 60) -> ShapeGraphSpec:
    """A helix with a straight side branch at its top, in R^3."""
    s = np.linspace(0.0, 1.0, n)
    helix = np.stack([np.cos(3 * np.pi * s), np.sin(3 * np.pi * s), 1.5 * s], axis=1)
    top = helix[-1]
    branch = top + np.linspace(0.0, 1.0, n // 2)[:, None] * np.array([0.6, 0.3, 0.4])
    return split_components([helix, branch])


def bundle(curve: ShapeGraphSpec, copies: int, offset: float) -> ShapeGraphSpec:
    """``copies`` parallel translates of a one-component curve, ``offset`` apart.

    Copies are shifted along the last coordinate so their endpoints stay
    distinct and no junctions are created.
    """
    base = curve.components[0]
    shift = np.zeros(base.shape[1])
    shift[-1] = offset
    return ShapeGraphSpec([base + i * shift for i in range(copies)])
