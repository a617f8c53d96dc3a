"""Segment-vs-polygon tests used for line-of-sight and shadowing.

Polygons are sequences of (x, y) vertices, implicitly closed. All tests
treat grazing contact (running along a wall, clipping a vertex) as not
crossing: the callers model walls as thin obstacles, and a tangent path
covers zero wall material.
"""

from __future__ import annotations

import math
from typing import Sequence

Point = tuple[float, float]

_EPS = 1e-9


def _edges(polygon: Sequence[Point]):
    n = len(polygon)
    for i in range(n):
        yield polygon[i], polygon[(i + 1) % n]


def point_in_polygon(point: Point, polygon: Sequence[Point]) -> bool:
    """Strict interior test; points on the boundary count as outside."""
    x, y = point
    for a, b in _edges(polygon):
        if _on_segment(point, a, b):
            return False
    inside = False
    for (x1, y1), (x2, y2) in _edges(polygon):
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    ax, ay = a
    bx, by = b
    px, py = p
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > _EPS * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
    return -_EPS <= dot <= (bx - ax) ** 2 + (by - ay) ** 2 + _EPS


def _boundary_params(p1: Point, p2: Point, polygon: Sequence[Point]) -> list[float]:
    """Parameters t in (0, 1) where the segment meets the polygon boundary.

    Hits anywhere on a wall, endpoints included, so a pass exactly through
    a vertex still produces a cut. Collinear contact yields none; the two
    coincident hits from a shared vertex collapse to one.
    """
    rx, ry = p2[0] - p1[0], p2[1] - p1[1]
    hits: list[float] = []
    for (ax, ay), (bx, by) in _edges(polygon):
        sx, sy = bx - ax, by - ay
        denom = rx * sy - ry * sx
        if abs(denom) < _EPS:
            continue
        qx, qy = ax - p1[0], ay - p1[1]
        t = (qx * sy - qy * sx) / denom
        u = (qx * ry - qy * rx) / denom
        if _EPS < t < 1.0 - _EPS and -_EPS <= u <= 1.0 + _EPS:
            hits.append(t)
    hits.sort()
    out: list[float] = []
    for t in hits:
        if not out or t - out[-1] > _EPS:
            out.append(t)
    return out


def _classified_intervals(
    p1: Point, p2: Point, polygon: Sequence[Point]
) -> tuple[list[float], list[bool]]:
    cuts = [0.0, *_boundary_params(p1, p2, polygon), 1.0]
    flags = []
    for lo, hi in zip(cuts, cuts[1:]):
        mid = 0.5 * (lo + hi)
        midpoint = (p1[0] + mid * (p2[0] - p1[0]), p1[1] + mid * (p2[1] - p1[1]))
        flags.append(point_in_polygon(midpoint, polygon))
    return cuts, flags


def crossing_count(p1: Point, p2: Point, polygon: Sequence[Point]) -> int:
    """Number of walls the open segment punches through.

    Counted as outside/inside flips between the cut intervals, so tangent
    contact at a vertex contributes nothing even though it produces a cut.
    """
    if math.dist(p1, p2) < _EPS:
        return 0
    _, flags = _classified_intervals(p1, p2, polygon)
    return sum(1 for a, b in zip(flags, flags[1:]) if a != b)


def interior_length(p1: Point, p2: Point, polygon: Sequence[Point]) -> float:
    """Length of the part of the segment strictly inside the polygon."""
    seg_len = math.dist(p1, p2)
    if seg_len < _EPS:
        return 0.0
    cuts, flags = _classified_intervals(p1, p2, polygon)
    return sum((hi - lo) * seg_len for lo, hi, f in zip(cuts, cuts[1:], flags) if f)


def occlusion(p1: Point, p2: Point, polygons: Sequence[Sequence[Point]]) -> tuple[int, float]:
    """Total (wall crossings, interior meters) over every obstacle."""
    walls = 0
    meters = 0.0
    for poly in polygons:
        walls += crossing_count(p1, p2, poly)
        meters += interior_length(p1, p2, poly)
    return walls, meters
