"""Planar geometry primitives shared by the simulator, planner grid and baselines."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def polygon_area(vertices: Sequence[tuple[float, float]]) -> float:
    """Signed area (positive for counter-clockwise winding)."""
    s = 0.0
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


def point_in_polygon(px: float, py: float, vertices: Sequence[tuple[float, float]]) -> bool:
    """Even-odd test; boundary points may land on either side."""
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            t = (py - y1) / (y2 - y1)
            if px < x1 + t * (x2 - x1):
                inside = not inside
    return inside


def point_segment_distance(px: float, py: float, x1: float, y1: float, x2: float, y2: float) -> float:
    dx, dy = x2 - x1, y2 - y1
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return math.hypot(px - x1, py - y1)
    t = ((px - x1) * dx + (py - y1) * dy) / l2
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def closest_point_on_segment(px: float, py: float, x1: float, y1: float,
                             x2: float, y2: float) -> tuple[float, float]:
    dx, dy = x2 - x1, y2 - y1
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return (x1, y1)
    t = ((px - x1) * dx + (py - y1) * dy) / l2
    t = min(1.0, max(0.0, t))
    return (x1 + t * dx, y1 + t * dy)


def point_polygon_distance(px: float, py: float, vertices: Sequence[tuple[float, float]]) -> float:
    """Distance from a point to a polygon; zero for points inside."""
    if point_in_polygon(px, py, vertices):
        return 0.0
    best = math.inf
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        best = min(best, point_segment_distance(px, py, x1, y1, x2, y2))
    return best


def closest_point_on_polygon(px: float, py: float,
                             vertices: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Closest boundary point of a polygon (boundary point even for interior queries)."""
    best = math.inf
    best_pt = vertices[0]
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        cx, cy = closest_point_on_segment(px, py, x1, y1, x2, y2)
        d = math.hypot(px - cx, py - cy)
        if d < best:
            best = d
            best_pt = (cx, cy)
    return best_pt


def segment_polygon_distance(ax: float, ay: float, bx: float, by: float,
                             vertices: Sequence[tuple[float, float]]) -> float:
    """Distance between a segment and a polygon (0 if they intersect or the segment is inside)."""
    if point_in_polygon(ax, ay, vertices) or point_in_polygon(bx, by, vertices):
        return 0.0
    n = len(vertices)
    best = math.inf
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if segments_intersect(ax, ay, bx, by, x1, y1, x2, y2):
            return 0.0
        best = min(best, segment_segment_distance(ax, ay, bx, by, x1, y1, x2, y2))
    return best


def segments_intersect(ax, ay, bx, by, cx, cy, dx, dy) -> bool:
    def orient(ox, oy, px, py, qx, qy):
        return (px - ox) * (qy - oy) - (py - oy) * (qx - ox)

    d1 = orient(cx, cy, dx, dy, ax, ay)
    d2 = orient(cx, cy, dx, dy, bx, by)
    d3 = orient(ax, ay, bx, by, cx, cy)
    d4 = orient(ax, ay, bx, by, dx, dy)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True

    def on_seg(ox, oy, px, py, qx, qy):
        return min(ox, px) <= qx <= max(ox, px) and min(oy, py) <= qy <= max(oy, py)

    if d1 == 0 and on_seg(cx, cy, dx, dy, ax, ay):
        return True
    if d2 == 0 and on_seg(cx, cy, dx, dy, bx, by):
        return True
    if d3 == 0 and on_seg(ax, ay, bx, by, cx, cy):
        return True
    if d4 == 0 and on_seg(ax, ay, bx, by, dx, dy):
        return True
    return False


def segment_segment_distance(ax, ay, bx, by, cx, cy, dx, dy) -> float:
    if segments_intersect(ax, ay, bx, by, cx, cy, dx, dy):
        return 0.0
    return min(
        point_segment_distance(ax, ay, cx, cy, dx, dy),
        point_segment_distance(bx, by, cx, cy, dx, dy),
        point_segment_distance(cx, cy, ax, ay, bx, by),
        point_segment_distance(dx, dy, ax, ay, bx, by),
    )


def convex_hull(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Andrew monotone chain; returns counter-clockwise hull without the repeated endpoint."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return list(pts)

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def body_frame(dx: float, dy: float, heading: float) -> tuple[float, float]:
    """Rotate a world-frame offset into the body frame (+x forward, +y left)."""
    c, s = math.cos(heading), math.sin(heading)
    return (c * dx + s * dy, -s * dx + c * dy)


def ray_segments_hits(origin: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Ray/segment intersection parameters.

    origin: (2,), dirs: (R, 2) unit vectors, segs: (M, 4) as x1,y1,x2,y2.
    Returns (R, M) ray parameters t (inf where no hit with t >= 0, 0 <= u <= 1).
    """
    if segs.shape[0] == 0:
        return np.full((dirs.shape[0], 0), np.inf)
    p1 = segs[:, 0:2]
    e = segs[:, 2:4] - p1  # (M, 2)
    # Solve origin + t*d = p1 + u*e  via 2x2 cross products.
    dxm = dirs[:, 0][:, None]
    dym = dirs[:, 1][:, None]
    ex = e[:, 0][None, :]
    ey = e[:, 1][None, :]
    denom = dxm * ey - dym * ex  # (R, M)
    qx = (p1[:, 0] - origin[0])[None, :]
    qy = (p1[:, 1] - origin[1])[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qx * ey - qy * ex) / denom
        u = (qx * dym - qy * dxm) / denom
    valid = (np.abs(denom) > 1e-300) & (u >= 0.0) & (u <= 1.0) & (t >= 0.0)
    return np.where(valid, t, np.inf)


def ray_circles_hits(origin: np.ndarray, dirs: np.ndarray, circles: np.ndarray) -> np.ndarray:
    """Ray/circle intersection parameters.

    circles: (G, 3) as cx, cy, r. Returns (R, G) smallest nonnegative t (inf if none).
    """
    if circles.shape[0] == 0:
        return np.full((dirs.shape[0], 0), np.inf)
    oc = origin[None, :] - circles[:, 0:2]  # (G, 2)
    b = dirs @ oc.T  # (R, G): d . (o - c)
    c = (oc[:, 0] ** 2 + oc[:, 1] ** 2 - circles[:, 2] ** 2)[None, :]  # (1, G)
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 >= 0.0, t1, np.where(t2 >= 0.0, t2, np.nan))
    return np.where(np.isnan(t), np.inf, t)
