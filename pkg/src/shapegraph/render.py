"""SVG frames of a geodesic between weighted shape graphs.

Each edge is drawn as its own ``<line>`` with stroke opacity clamp(rho, 0, 1);
coordinates are written in input units (normalization undone) with a
y-flip applied through the group transform, so the numbers in the file are
the projected data coordinates.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphcore import PolygonalGraph
from .pipeline import geodesic_frames
from .problem import MatchResult

__all__ = ["PROJECTIONS", "project", "frame_svg", "render_frames"]

_ISO = np.array(
    [
        [1 / np.sqrt(2), -1 / np.sqrt(2), 0.0],
        [-1 / np.sqrt(6), -1 / np.sqrt(6), 2 / np.sqrt(6)],
    ]
)
PROJECTIONS = {
    "xy": np.array([[1.0, 0, 0], [0, 1.0, 0]]),
    "xz": np.array([[1.0, 0, 0], [0, 0, 1.0]]),
    "yz": np.array([[0, 1.0, 0], [0, 0, 1.0]]),
    "iso": _ISO,
}
SOURCE_COLOR = "#1f4e9c"
TARGET_COLOR = "#c0392b"


def project(points: np.ndarray, projection: str = "xy") -> np.ndarray:
    """Fixed orthographic projection of (n, d) points to the plane."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 2:
        return pts
    if projection not in PROJECTIONS:
        raise ValueError(f"unknown projection {projection!r}; choose from {sorted(PROJECTIONS)}")
    return pts @ PROJECTIONS[projection].T


def _bounds(graphs: Sequence[PolygonalGraph], projection: str) -> tuple[float, float, float, float]:
    pts = np.concatenate([project(v, projection) for g in graphs for v in g.vertices])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    pad = 0.05 * max(float((hi - lo).max()), 1e-12)
    return lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad


def _num(x: float) -> str:
    return repr(float(x))


def _add_graph(parent, graph: PolygonalGraph, projection: str, color: str, role: str, weighted: bool):
    g = ET.SubElement(parent, "g", {"class": role, "stroke": color, "fill": "none"})
    for k, (v, w) in enumerate(zip(graph.vertices, graph.weights)):
        p = project(v, projection)
        for i in range(len(w)):
            opacity = float(np.clip(w[i], 0.0, 1.0)) if weighted else 1.0
            ET.SubElement(
                g,
                "line",
                {
                    "x1": _num(p[i, 0]),
                    "y1": _num(p[i, 1]),
                    "x2": _num(p[i + 1, 0]),
                    "y2": _num(p[i + 1, 1]),
                    "stroke-opacity": _num(opacity),
                    "stroke-width": "2",
                    "vector-effect": "non-scaling-stroke",
                    "data-component": str(k),
                    "data-rho": _num(w[i]),
                },
            )


def frame_svg(
    frame: PolygonalGraph,
    t: float,
    bounds: tuple[float, float, float, float],
    projection: str = "xy",
    target: PolygonalGraph | None = None,
    size: int = 480,
) -> str:
    """One frame as an SVG document; ``target`` is overlaid when given."""
    x0, y0, x1, y1 = bounds
    w, h = x1 - x0, y1 - y0
    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(size),
            "height": str(int(round(size * h / w))) if w > 0 else str(size),
            "viewBox": f"{_num(x0)} {_num(-y1)} {_num(w)} {_num(h)}",
        },
    )
    ET.SubElement(svg, "title").text = f"t = {t:g}"
    root = ET.SubElement(svg, "g", {"transform": "scale(1,-1)"})
    if target is not None:
        _add_graph(root, target, projection, TARGET_COLOR, "target", weighted=True)
    _add_graph(root, frame, projection, SOURCE_COLOR, "source", weighted=True)
    return ET.tostring(svg, encoding="unicode", xml_declaration=True)


def _unscale(graph: PolygonalGraph, scale: float) -> PolygonalGraph:
    return PolygonalGraph([v / scale for v in graph.vertices], graph.weights)


def render_frames(
    result: MatchResult,
    times: Sequence[float],
    out_dir,
    projection: str = "xy",
    n_workers: int | None = None,
) -> list[Path]:
    """Write ``frame_XXX.svg`` per time; the target is overlaid on the last frame.

    All frames share one view box so they can be flipped through.
    """
    times = [float(t) for t in times]
    disc = result.problem.disc
    frames = [_unscale(f, disc.scale) for f in geodesic_frames(result, times)]
    target = _unscale(disc.target, disc.scale)
    bounds = _bounds([*frames, target], projection)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"frame_{i:03d}.svg" for i in range(len(times))]

    def write(i: int) -> None:
        overlay = target if i == len(times) - 1 else None
        paths[i].write_text(frame_svg(frames[i], times[i], bounds, projection, overlay))

    workers = n_workers or min(len(times), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        list(pool.map(write, range(len(times))))
    return paths
