"""Occupancy grid shortest paths: 8-connected search with octile costs.

Backs the geometric waypoint oracle, the reachability check at scenario
generation time and the shortest-path lengths used by the benchmark metrics.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from .geometry import (
    closest_point_on_segment,
    point_in_polygon,
    segment_polygon_distance,
)
from .world import Pose, Scenario

SQRT2 = math.sqrt(2.0)


class UnreachableGoalError(RuntimeError):
    """No collision-free grid path exists to the requested goal."""


def _points_segment_distance(px: np.ndarray, py: np.ndarray,
                             x1: float, y1: float, x2: float, y2: float) -> np.ndarray:
    dx, dy = x2 - x1, y2 - y1
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return np.hypot(px - x1, py - y1)
    t = np.clip(((px - x1) * dx + (py - y1) * dy) / l2, 0.0, 1.0)
    return np.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def _points_in_polygon(px: np.ndarray, py: np.ndarray, poly) -> np.ndarray:
    inside = np.zeros(px.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        if y2 != y1:
            xi = x1 + (py - y1) / (y2 - y1) * (x2 - x1)
            inside ^= crosses & (px < xi)
    return inside


def _points_polygon_close(px: np.ndarray, py: np.ndarray, poly, margin: float) -> np.ndarray:
    """Vectorized: which points are inside the polygon or within margin of it."""
    close = _points_in_polygon(px, py, poly)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        close |= _points_segment_distance(px, py, x1, y1, x2, y2) <= margin
    return close


class ScenarioClearance:
    """Vectorized clearance queries against all obstacle edges of a scenario."""

    def __init__(self, scenario: Scenario) -> None:
        self.scenario = scenario
        edges = []
        for poly in scenario.obstacles:
            n = len(poly)
            for i in range(n):
                x1, y1 = poly[i]
                x2, y2 = poly[(i + 1) % n]
                edges.append((x1, y1, x2, y2))
        self.edges = np.asarray(edges, dtype=np.float64).reshape(-1, 4)
        # per-polygon edge slices for closest-point queries
        self.poly_slices: list[tuple[int, int]] = []
        start = 0
        for poly in scenario.obstacles:
            self.poly_slices.append((start, start + len(poly)))
            start += len(poly)

    def segment_clearance(self, a: tuple[float, float], b: tuple[float, float]) -> float:
        """Distance from segment ab to the nearest obstacle (0 on contact/containment)."""
        if self.edges.shape[0] == 0:
            return math.inf
        for x, y in (a, b):
            for poly in self.scenario.obstacles:
                if point_in_polygon(x, y, poly):
                    return 0.0
        e = self.edges
        ax, ay = a
        bx, by = b

        def orient(ox, oy, px_, py_, qx, qy):
            return (px_ - ox) * (qy - oy) - (py_ - oy) * (qx - ox)

        d1 = orient(e[:, 0], e[:, 1], e[:, 2], e[:, 3], ax, ay)
        d2 = orient(e[:, 0], e[:, 1], e[:, 2], e[:, 3], bx, by)
        d3 = orient(ax, ay, bx, by, e[:, 0], e[:, 1])
        d4 = orient(ax, ay, bx, by, e[:, 2], e[:, 3])
        if np.any(((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))):
            return 0.0
        dists = np.minimum.reduce([
            _seg_pt(e, ax, ay),
            _seg_pt(e, bx, by),
            _points_segment_distance(e[:, 0], e[:, 1], ax, ay, bx, by),
            _points_segment_distance(e[:, 2], e[:, 3], ax, ay, bx, by),
        ])
        return float(dists.min())

    def point_clearances(self, x: float, y: float) -> list[tuple[float, tuple[float, float]]]:
        """Per-polygon (distance, closest boundary point); distance 0 inside."""
        out = []
        for poly, (s, e) in zip(self.scenario.obstacles, self.poly_slices):
            edges = self.edges[s:e]
            d = _seg_pt(edges, x, y)
            k = int(np.argmin(d))
            x1, y1, x2, y2 = edges[k]
            cp = closest_point_on_segment(x, y, x1, y1, x2, y2)
            dist = 0.0 if point_in_polygon(x, y, poly) else float(d[k])
            out.append((dist, cp))
        return out


def _seg_pt(edges: np.ndarray, x: float, y: float) -> np.ndarray:
    """Distances from a point to each edge row (x1,y1,x2,y2)."""
    dx = edges[:, 2] - edges[:, 0]
    dy = edges[:, 3] - edges[:, 1]
    l2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((x - edges[:, 0]) * dx + (y - edges[:, 1]) * dy) / l2
    t = np.where(l2 == 0.0, 0.0, np.clip(t, 0.0, 1.0))
    return np.hypot(x - (edges[:, 0] + t * dx), y - (edges[:, 1] + t * dy))


class OccupancyGrid:
    """Boolean occupancy over the scenario bounds; True marks blocked cells.

    A cell is blocked when its center is within `inflation` of an obstacle
    polygon or of the arena boundary, so free cells are traversable by the
    UAV disk.
    """

    def __init__(self, blocked: np.ndarray, xmin: float, ymin: float, cell: float,
                 scenario: Scenario, inflation: float) -> None:
        self.blocked = blocked
        self.xmin = xmin
        self.ymin = ymin
        self.cell = cell
        self.scenario = scenario
        self.inflation = inflation
        self.nx, self.ny = blocked.shape

    @classmethod
    def from_scenario(cls, scenario: Scenario, inflation: float, cell: float = 0.25) -> "OccupancyGrid":
        b = scenario.bounds
        nx = max(1, int(round(b.width / cell)))
        ny = max(1, int(round(b.height / cell)))
        xs = b.xmin + (np.arange(nx) + 0.5) * cell
        ys = b.ymin + (np.arange(ny) + 0.5) * cell
        blocked = np.zeros((nx, ny), dtype=bool)
        near_wall_x = (xs - b.xmin < inflation) | (b.xmax - xs < inflation)
        near_wall_y = (ys - b.ymin < inflation) | (b.ymax - ys < inflation)
        blocked |= near_wall_x[:, None]
        blocked |= near_wall_y[None, :]
        px = np.repeat(xs, ny)
        py = np.tile(ys, nx)
        for poly in scenario.obstacles:
            near = _points_polygon_close(px, py, poly, inflation)
            blocked |= near.reshape(nx, ny)
        return cls(blocked, b.xmin, b.ymin, cell, scenario, inflation)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int((x - self.xmin) / self.cell)
        iy = int((y - self.ymin) / self.cell)
        return (min(max(ix, 0), self.nx - 1), min(max(iy, 0), self.ny - 1))

    def center_of(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.xmin + (ix + 0.5) * self.cell, self.ymin + (iy + 0.5) * self.cell)

    def nearest_free_cell(self, x: float, y: float, max_radius: int = 8) -> tuple[int, int] | None:
        """Closest free cell to a point, searched over growing square rings."""
        cx, cy = self.cell_of(x, y)
        if not self.blocked[cx, cy]:
            return (cx, cy)
        for r in range(1, max_radius + 1):
            best = None
            best_d = math.inf
            for ix in range(max(0, cx - r), min(self.nx, cx + r + 1)):
                for iy in range(max(0, cy - r), min(self.ny, cy + r + 1)):
                    if max(abs(ix - cx), abs(iy - cy)) != r or self.blocked[ix, iy]:
                        continue
                    px, py = self.center_of(ix, iy)
                    d = (px - x) ** 2 + (py - y) ** 2
                    if d < best_d:
                        best_d = d
                        best = (ix, iy)
            if best is not None:
                return best
        return None

    def distance_field(self, goal_xy: tuple[float, float],
                       snap_radius: int = 2) -> "DistanceField":
        """Dijkstra from the goal cell with octile edge costs (meters).

        The goal may sit in an inflated cell; it is snapped to the nearest
        free cell within snap_radius cells. A goal sealed off entirely yields
        an all-infinite field.
        """
        goal_cell = self.nearest_free_cell(*goal_xy, max_radius=snap_radius)
        dist = np.full((self.nx, self.ny), np.inf)
        if goal_cell is None:
            return DistanceField(self, dist, goal_xy)
        gx, gy = goal_cell
        dist[gx, gy] = 0.0
        pq: list[tuple[float, int, int]] = [(0.0, gx, gy)]
        step = self.cell
        diag = SQRT2 * self.cell
        blocked = self.blocked
        while pq:
            d, ix, iy = heapq.heappop(pq)
            if d > dist[ix, iy]:
                continue
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == 0 and dy == 0:
                        continue
                    jx, jy = ix + dx, iy + dy
                    if not (0 <= jx < self.nx and 0 <= jy < self.ny) or blocked[jx, jy]:
                        continue
                    if dx != 0 and dy != 0:
                        # no corner cutting: both orthogonal neighbors must be free
                        if blocked[ix + dx, iy] or blocked[ix, iy + dy]:
                            continue
                        nd = d + diag
                    else:
                        nd = d + step
                    if nd < dist[jx, jy]:
                        dist[jx, jy] = nd
                        heapq.heappush(pq, (nd, jx, jy))
        return DistanceField(self, dist, goal_xy)


class DistanceField:
    """Octile distances-to-goal over a grid; supports greedy path extraction."""

    def __init__(self, grid: OccupancyGrid, dist: np.ndarray, goal_xy: tuple[float, float]) -> None:
        self.grid = grid
        self.dist = dist
        self.goal_xy = goal_xy

    def distance_from(self, x: float, y: float) -> float:
        cell = self.grid.nearest_free_cell(x, y)
        if cell is None:
            return math.inf
        return float(self.dist[cell])

    def cell_path_from(self, x: float, y: float) -> list[tuple[int, int]] | None:
        """Steepest-descent cell chain from (x, y) to the goal cell."""
        cell = self.grid.nearest_free_cell(x, y)
        if cell is None or not math.isfinite(self.dist[cell]):
            return None
        path = [cell]
        ix, iy = cell
        blocked = self.grid.blocked
        while self.dist[ix, iy] > 0.0:
            best = None
            best_d = self.dist[ix, iy]
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == 0 and dy == 0:
                        continue
                    jx, jy = ix + dx, iy + dy
                    if not (0 <= jx < self.grid.nx and 0 <= jy < self.grid.ny) or blocked[jx, jy]:
                        continue
                    if dx != 0 and dy != 0 and (blocked[ix + dx, iy] or blocked[ix, iy + dy]):
                        continue
                    if self.dist[jx, jy] < best_d:
                        best_d = self.dist[jx, jy]
                        best = (jx, jy)
            if best is None:
                return None  # stuck on a plateau; cannot happen on a Dijkstra field
            path.append(best)
            ix, iy = best
        return path


def _segment_clear(scenario: Scenario, inflation: float,
                   a: tuple[float, float], b: tuple[float, float],
                   clearance: ScenarioClearance | None = None) -> bool:
    bounds = scenario.bounds
    for x, y in (a, b):
        if not bounds.contains(x, y, margin=inflation):
            return False
    if clearance is not None:
        return clearance.segment_clearance(a, b) > inflation
    for poly in scenario.obstacles:
        if segment_polygon_distance(a[0], a[1], b[0], b[1], poly) <= inflation:
            return False
    return True


def shortcut_path(scenario: Scenario, inflation: float, points: list[tuple[float, float]],
                  clearance: ScenarioClearance | None = None) -> list[tuple[float, float]]:
    """String-pulling: greedily keep the farthest vertex with a clear sightline.

    On an empty scenario this collapses the grid polyline to the exact
    start-goal segment.
    """
    if len(points) <= 2:
        return points
    out = [points[0]]
    i = 0
    n = len(points)
    while i < n - 1:
        j = n - 1
        while j > i + 1 and not _segment_clear(scenario, inflation, points[i], points[j],
                                               clearance):
            j -= 1
        out.append(points[j])
        i = j
    return out


def polyline_length(points: list[tuple[float, float]]) -> float:
    return sum(math.hypot(points[k + 1][0] - points[k][0], points[k + 1][1] - points[k][1])
               for k in range(len(points) - 1))


def sample_at_arclength(points: list[tuple[float, float]], s: float) -> tuple[float, float]:
    """Point at arc length s along a polyline; clamps to the endpoints."""
    if s <= 0.0 or len(points) == 1:
        return points[0]
    acc = 0.0
    for k in range(len(points) - 1):
        x1, y1 = points[k]
        x2, y2 = points[k + 1]
        seg = math.hypot(x2 - x1, y2 - y1)
        if acc + seg >= s and seg > 0.0:
            t = (s - acc) / seg
            return (x1 + t * (x2 - x1), y1 + t * (y2 - y1))
        acc += seg
    return points[-1]


class GridPlanner:
    """Per-(scenario, goal) shortest-path helper reused across control steps."""

    def __init__(self, scenario: Scenario, goal_xy: tuple[float, float],
                 inflation: float = 0.2, cell: float = 0.25) -> None:
        self.scenario = scenario
        self.inflation = inflation
        self.grid = OccupancyGrid.from_scenario(scenario, inflation=inflation, cell=cell)
        self.field = self.grid.distance_field(goal_xy)
        self.clearance = ScenarioClearance(scenario)
        self.goal_xy = goal_xy

    def path_from(self, pose: Pose) -> list[tuple[float, float]]:
        """Smoothed collision-free polyline from the pose to the goal point."""
        cells = self.field.cell_path_from(pose.x, pose.y)
        if cells is None:
            raise UnreachableGoalError(
                f"goal at {self.goal_xy} unreachable from ({pose.x:.2f}, {pose.y:.2f})")
        pts = [(pose.x, pose.y)]
        pts.extend(self.grid.center_of(ix, iy) for ix, iy in cells)
        pts.append(self.goal_xy)
        return shortcut_path(self.scenario, self.inflation, pts, self.clearance)

    def octile_distance_from(self, x: float, y: float) -> float:
        d = self.field.distance_from(x, y)
        if not math.isfinite(d):
            raise UnreachableGoalError(f"goal at {self.goal_xy} unreachable from ({x:.2f}, {y:.2f})")
        return d


def shortest_path_length(scenario: Scenario, goal_xy: tuple[float, float],
                         inflation: float = 0.2, cell: float = 0.25) -> float:
    """Octile grid shortest-path length (meters) from the scenario spawn."""
    planner = GridPlanner(scenario, goal_xy, inflation=inflation, cell=cell)
    return planner.octile_distance_from(scenario.spawn.x, scenario.spawn.y)


def planning_grid(scenario: Scenario, goal_xy: tuple[float, float], r_uav: float = 0.2,
                  margin: float = 0.1, cell: float = 0.25) -> GridPlanner:
    """GridPlanner with extra clearance margin for closed-loop tracking error.

    Falls back to the bare UAV radius when the margin closes every route from
    the spawn (generation only guarantees reachability at the bare radius).
    """
    planner = GridPlanner(scenario, goal_xy, inflation=r_uav + margin, cell=cell)
    if math.isfinite(planner.field.distance_from(scenario.spawn.x, scenario.spawn.y)):
        return planner
    return GridPlanner(scenario, goal_xy, inflation=r_uav, cell=cell)
