"""Deterministic 2D continuous-space environment.

Scenario generation, unicycle kinematics, collision/success detection and the
egocentric ray-cast panorama that stands in for the onboard camera.
"""
from __future__ import annotations

import enum
import functools
import json
import math
import random
from dataclasses import dataclass

import numpy as np

from .geometry import (
    convex_hull,
    point_polygon_distance,
    ray_circles_hits,
    ray_segments_hits,
    wrap_angle,
)

OBSTACLE_SEMANTIC = 255
DEFAULT_FOV = math.radians(82.6)


class ScenarioKind(enum.Enum):
    BOX = "box"
    FURNITURE = "furniture"
    BARRIER = "barrier"


class EpisodeStatus(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


class GenerationError(RuntimeError):
    """Raised when rejection sampling cannot place a valid layout."""


@dataclass(frozen=True)
class Pose:
    """Planar UAV state; heading is kept in (-pi, pi]."""

    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(self.x - x, self.y - y)


@dataclass(frozen=True)
class ContinuousAction:
    """Velocity command: forward speed v (m/s) and yaw rate omega (rad/s)."""

    v: float
    omega: float


@dataclass(frozen=True)
class GoalObject:
    id: str
    descriptor: str
    position: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"goal {self.id!r} must have positive radius")


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned arena rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (self.xmin + margin <= x <= self.xmax - margin
                and self.ymin + margin <= y <= self.ymax - margin)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    seed: int
    bounds: Bounds
    obstacles: tuple[tuple[tuple[float, float], ...], ...]
    goals: tuple[GoalObject, ...]
    spawn: Pose

    def goal_by_id(self, goal_id: str) -> GoalObject:
        for g in self.goals:
            if g.id == goal_id:
                return g
        raise KeyError(f"no goal with id {goal_id!r}")


@dataclass(frozen=True)
class EgoObservation:
    """1D semantic depth panorama.

    depths[i] is the range (clamped to d_max) along bearing
    -fov/2 + i * fov/(R-1) relative to the current heading; semantics[i] is 0
    for free space / arena walls, 1-based goal index for goal disks, and 255
    for obstacle polygons.
    """

    depths: np.ndarray
    semantics: np.ndarray
    fov: float
    timestamp_step: int


@dataclass(frozen=True)
class SensorConfig:
    rays: int = 64
    d_max: float = 10.0
    fov: float = DEFAULT_FOV


@dataclass(frozen=True)
class GenConfig:
    """Layout constants for the three scenario kinds (workbench choices)."""

    box_size: float = 10.0
    furniture_size: float = 15.0
    barrier_size: float = 20.0
    box_obstacles: tuple[int, int] = (0, 2)
    furniture_obstacles: tuple[int, int] = (4, 8)
    barrier_obstacles: tuple[int, int] = (8, 16)
    goal_count: int = 3
    goal_radius: float = 0.3
    r_uav: float = 0.2
    clearance: float = 0.35       # extra margin around spawn/goals beyond r_uav
    min_goal_spacing: float = 1.5
    min_spawn_goal_dist: float = 2.5
    box_max_goal_dist: float = 6.0  # keeps the easy scenario short-range
    max_attempts: int = 300
    items: tuple[str, ...] = ()   # descriptors; defaults to the bundled item list


def step_dynamics(pose: Pose, action: ContinuousAction, dt: float) -> Pose:
    """Euler-integrated unicycle step; pure function of its arguments."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(
        x=pose.x + action.v * math.cos(pose.heading) * dt,
        y=pose.y + action.v * math.sin(pose.heading) * dt,
        heading=wrap_angle(pose.heading + action.omega * dt),
    )


class ScenarioGeometry:
    """Precomputed ray-cast arrays for one scenario (immutable, shareable)."""

    def __init__(self, scenario: Scenario) -> None:
        segs: list[tuple[float, float, float, float]] = []
        codes: list[int] = []
        b = scenario.bounds
        wall = [
            (b.xmin, b.ymin, b.xmax, b.ymin),
            (b.xmax, b.ymin, b.xmax, b.ymax),
            (b.xmax, b.ymax, b.xmin, b.ymax),
            (b.xmin, b.ymax, b.xmin, b.ymin),
        ]
        for s in wall:
            segs.append(s)
            codes.append(0)
        for poly in scenario.obstacles:
            n = len(poly)
            for i in range(n):
                x1, y1 = poly[i]
                x2, y2 = poly[(i + 1) % n]
                segs.append((x1, y1, x2, y2))
                codes.append(OBSTACLE_SEMANTIC)
        self.segments = np.asarray(segs, dtype=np.float64)
        self.segment_codes = np.asarray(codes, dtype=np.int64)
        self.circles = np.asarray(
            [(g.position[0], g.position[1], g.radius) for g in scenario.goals],
            dtype=np.float64,
        ).reshape(-1, 3)
        self.circle_codes = np.arange(1, len(scenario.goals) + 1, dtype=np.int64)


@functools.lru_cache(maxsize=8)
def _geometry_for(scenario: Scenario) -> ScenarioGeometry:
    return ScenarioGeometry(scenario)


def render_observation(pose: Pose, scenario: Scenario, cfg: SensorConfig,
                       timestamp_step: int = 0) -> EgoObservation:
    """Cast cfg.rays rays across the field of view and report first hits."""
    geo = _geometry_for(scenario)
    r = cfg.rays
    if r < 2:
        raise ValueError("need at least 2 rays")
    bearings = np.linspace(-cfg.fov / 2.0, cfg.fov / 2.0, r)
    angles = pose.heading + bearings
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    origin = np.array([pose.x, pose.y])

    t_seg = ray_segments_hits(origin, dirs, geo.segments)       # (R, M)
    t_cir = ray_circles_hits(origin, dirs, geo.circles)         # (R, G)
    t_all = np.concatenate([t_seg, t_cir], axis=1)
    codes = np.concatenate([geo.segment_codes, geo.circle_codes])
    best = np.argmin(t_all, axis=1)
    depth = t_all[np.arange(r), best]
    sem = codes[best]
    clipped = depth > cfg.d_max
    depth = np.minimum(depth, cfg.d_max)
    sem = np.where(clipped | ~np.isfinite(depth), 0, sem)
    return EgoObservation(
        depths=depth.astype(np.float64),
        semantics=sem.astype(np.int64),
        fov=cfg.fov,
        timestamp_step=timestamp_step,
    )


def in_collision(pose: Pose, scenario: Scenario, r_uav: float) -> bool:
    """UAV disk against obstacle polygons and the arena boundary."""
    if not scenario.bounds.contains(pose.x, pose.y, margin=r_uav):
        return True
    for poly in scenario.obstacles:
        if point_polygon_distance(pose.x, pose.y, poly) <= r_uav:
            return True
    return False


def episode_status(pose: Pose, scenario: Scenario, goal: GoalObject, delta: float,
                   step: int, max_steps: int, r_uav: float = 0.2) -> EpisodeStatus:
    """Success > Collision > Timeout > Running."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if pose.distance_to(*goal.position) <= delta:
        return EpisodeStatus.SUCCESS
    if in_collision(pose, scenario, r_uav):
        return EpisodeStatus.COLLISION
    if step >= max_steps:
        return EpisodeStatus.TIMEOUT
    return EpisodeStatus.RUNNING


# --- scenario generation -----------------------------------------------------

def _default_items() -> tuple[str, ...]:
    from .data import default_items

    return tuple(default_items())


def _rect(cx: float, cy: float, hw: float, hh: float) -> tuple[tuple[float, float], ...]:
    return ((cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh))


def _random_convex(rng: random.Random, cx: float, cy: float, r_max: float) -> tuple[tuple[float, float], ...]:
    pts = [
        (cx + rng.uniform(0.3, r_max) * math.cos(a), cy + rng.uniform(0.3, r_max) * math.sin(a))
        for a in sorted(rng.uniform(0.0, 2.0 * math.pi) for _ in range(rng.randint(5, 9)))
    ]
    hull = convex_hull(pts)
    return tuple(hull)


def _clear_of_obstacles(x: float, y: float, obstacles, margin: float) -> bool:
    return all(point_polygon_distance(x, y, poly) > margin for poly in obstacles)


def generate_scenario(kind: ScenarioKind, seed: int, cfg: GenConfig | None = None) -> Scenario:
    """Rejection-sample a layout with reachable goals; deterministic in (kind, seed, cfg)."""
    cfg = cfg or GenConfig()
    items = cfg.items or _default_items()
    if cfg.goal_count > len(items):
        raise ValueError("not enough items for the requested goal count")

    size = {
        ScenarioKind.BOX: cfg.box_size,
        ScenarioKind.FURNITURE: cfg.furniture_size,
        ScenarioKind.BARRIER: cfg.barrier_size,
    }[kind]
    count_range = {
        ScenarioKind.BOX: cfg.box_obstacles,
        ScenarioKind.FURNITURE: cfg.furniture_obstacles,
        ScenarioKind.BARRIER: cfg.barrier_obstacles,
    }[kind]
    if count_range[0] < 0:
        raise ValueError("obstacle counts must be nonnegative")
    if size <= 0:
        raise ValueError("arena size must be positive")

    half = size / 2.0
    bounds = Bounds(-half, -half, half, half)
    kind_salt = {ScenarioKind.BOX: 0, ScenarioKind.FURNITURE: 1, ScenarioKind.BARRIER: 2}[kind]
    rng = random.Random((int(seed) << 2) | kind_salt)
    margin = cfg.r_uav + cfg.clearance

    for _ in range(cfg.max_attempts):
        n_obs = rng.randint(*count_range)
        obstacles: list[tuple[tuple[float, float], ...]] = []
        for _ in range(n_obs):
            cx = rng.uniform(bounds.xmin + 1.2, bounds.xmax - 1.2)
            cy = rng.uniform(bounds.ymin + 1.2, bounds.ymax - 1.2)
            if kind is ScenarioKind.BARRIER:
                poly = _random_convex(rng, cx, cy, r_max=min(1.3, half / 4))
                if len(poly) < 3:
                    continue
            else:
                hw = rng.uniform(0.4, 1.1)
                hh = rng.uniform(0.4, 1.1)
                poly = _rect(cx, cy, hw, hh)
            obstacles.append(poly)

        spawn_xy = None
        for _ in range(50):
            x = rng.uniform(bounds.xmin + margin, bounds.xmax - margin)
            y = rng.uniform(bounds.ymin + margin, bounds.ymax - margin)
            if _clear_of_obstacles(x, y, obstacles, margin):
                spawn_xy = (x, y)
                break
        if spawn_xy is None:
            continue
        heading = rng.uniform(-math.pi, math.pi)

        max_goal_dist = cfg.box_max_goal_dist if kind is ScenarioKind.BOX else math.inf
        goal_positions: list[tuple[float, float]] = []
        for _ in range(200):
            if len(goal_positions) == cfg.goal_count:
                break
            x = rng.uniform(bounds.xmin + margin, bounds.xmax - margin)
            y = rng.uniform(bounds.ymin + margin, bounds.ymax - margin)
            if not _clear_of_obstacles(x, y, obstacles, margin + cfg.goal_radius):
                continue
            spawn_dist = math.hypot(x - spawn_xy[0], y - spawn_xy[1])
            if not (cfg.min_spawn_goal_dist <= spawn_dist <= max_goal_dist):
                continue
            if any(math.hypot(x - gx, y - gy) < cfg.min_goal_spacing for gx, gy in goal_positions):
                continue
            goal_positions.append((x, y))
        if len(goal_positions) < cfg.goal_count:
            continue

        descriptors = rng.sample(list(items), cfg.goal_count)
        goals = tuple(
            GoalObject(id=f"goal-{i}", descriptor=descriptors[i], position=goal_positions[i],
                       radius=cfg.goal_radius)
            for i in range(cfg.goal_count)
        )
        scenario = Scenario(
            kind=kind,
            seed=seed,
            bounds=bounds,
            obstacles=tuple(obstacles),
            goals=goals,
            spawn=Pose(spawn_xy[0], spawn_xy[1], heading),
        )
        if _all_goals_reachable(scenario, cfg.r_uav):
            return scenario

    raise GenerationError(f"could not generate a valid {kind.value} scenario for seed {seed}")


def _all_goals_reachable(scenario: Scenario, r_uav: float) -> bool:
    from .grid import OccupancyGrid

    grid = OccupancyGrid.from_scenario(scenario, inflation=r_uav)
    for goal in scenario.goals:
        field = grid.distance_field(goal.position)
        if not math.isfinite(field.distance_from(scenario.spawn.x, scenario.spawn.y)):
            return False
    return True


def make_u_trap() -> Scenario:
    """Bundled fixture: a U-shaped pocket between spawn and goal.

    Straight-line goal attraction pulls into the pocket, so potential-field
    control stalls there while a grid planner routes around the arms.
    """
    bounds = Bounds(-8.0, -8.0, 8.0, 8.0)
    wall = 0.25
    depth = 3.0
    width = 2.4
    # Opening faces -x (toward the spawn); the goal sits behind the back wall.
    back = _rect(1.0, 0.0, wall, width / 2 + wall * 2)
    top = _rect(1.0 - depth / 2, width / 2 + wall, depth / 2 + wall, wall)
    bot = _rect(1.0 - depth / 2, -width / 2 - wall, depth / 2 + wall, wall)
    goals = (
        GoalObject(id="goal-0", descriptor="blue backpack", position=(4.5, 0.0), radius=0.3),
        GoalObject(id="goal-1", descriptor="pink toy", position=(4.5, 4.5), radius=0.3),
        GoalObject(id="goal-2", descriptor="apriltag", position=(4.5, -4.5), radius=0.3),
    )
    return Scenario(
        kind=ScenarioKind.BARRIER,
        seed=0,
        bounds=bounds,
        obstacles=(back, top, bot),
        goals=goals,
        spawn=Pose(-5.0, 0.0, 0.0),
    )


# --- serialization ------------------------------------------------------------

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "kind": s.kind.value,
        "seed": s.seed,
        "bounds": [s.bounds.xmin, s.bounds.ymin, s.bounds.xmax, s.bounds.ymax],
        "obstacles": [[list(v) for v in poly] for poly in s.obstacles],
        "goals": [
            {"id": g.id, "descriptor": g.descriptor, "position": list(g.position), "radius": g.radius}
            for g in s.goals
        ],
        "spawn": [s.spawn.x, s.spawn.y, s.spawn.heading],
    }


def scenario_from_dict(d: dict) -> Scenario:
    return Scenario(
        kind=ScenarioKind(d["kind"]),
        seed=int(d["seed"]),
        bounds=Bounds(*[float(v) for v in d["bounds"]]),
        obstacles=tuple(tuple((float(x), float(y)) for x, y in poly) for poly in d["obstacles"]),
        goals=tuple(
            GoalObject(id=g["id"], descriptor=g["descriptor"],
                       position=(float(g["position"][0]), float(g["position"][1])),
                       radius=float(g["radius"]))
            for g in d["goals"]
        ),
        spawn=Pose(*[float(v) for v in d["spawn"]]),
    )


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), sort_keys=True)


def load_scenario(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))
