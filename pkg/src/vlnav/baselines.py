"""Non-learning comparison policies sharing the ContinuousAction interface.

Hybrid potential-field control (goal attraction plus obstacle repulsion in the
classical Khatib form, with saturated attraction) and two scripted
lower-bound controllers.
"""
from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass

from .controller import ControllerConfig, PIDState, pid_step
from .geometry import body_frame, closest_point_on_polygon, point_polygon_distance
from .world import ContinuousAction, Pose, Scenario


class ScriptedKind(enum.Enum):
    STRAIGHT_LINE = "straight"
    RANDOM = "random"


@dataclass(frozen=True)
class APFParams:
    k_att: float = 1.0
    k_rep: float = 0.5
    rho0: float = 1.5     # repulsion influence radius, meters
    att_sat: float = 2.0  # attraction saturates beyond this distance

    def __post_init__(self) -> None:
        if min(self.k_att, self.k_rep, self.rho0, self.att_sat) <= 0:
            raise ValueError("APF parameters must be positive")


def apf_force(pose: Pose, goal_xy: tuple[float, float], scenario: Scenario,
              params: APFParams, r_uav: float = 0.2,
              clearance=None) -> tuple[float, float]:
    """Total world-frame force: saturated attraction plus polygon repulsion.

    Repulsion follows -grad of 0.5 * k_rep * (1/rho - 1/rho0)^2 where rho is
    the UAV-disk clearance to each obstacle; it vanishes for rho >= rho0.
    Passing a precomputed ScenarioClearance avoids per-call edge scans.
    """
    dx = goal_xy[0] - pose.x
    dy = goal_xy[1] - pose.y
    dist = math.hypot(dx, dy)
    if dist > params.att_sat:
        fx = params.k_att * params.att_sat * dx / dist
        fy = params.k_att * params.att_sat * dy / dist
    else:
        fx = params.k_att * dx
        fy = params.k_att * dy

    if clearance is not None:
        per_poly = clearance.point_clearances(pose.x, pose.y)
    else:
        per_poly = [
            (point_polygon_distance(pose.x, pose.y, poly),
             closest_point_on_polygon(pose.x, pose.y, poly))
            for poly in scenario.obstacles
        ]
    for poly_dist, (cx, cy) in per_poly:
        rho = poly_dist - r_uav
        if rho >= params.rho0:
            continue
        rho = max(rho, 1e-6)
        away = math.hypot(pose.x - cx, pose.y - cy)
        if away == 0.0:
            continue  # center exactly on the boundary: direction undefined
        ux, uy = (pose.x - cx) / away, (pose.y - cy) / away
        mag = params.k_rep * (1.0 / rho - 1.0 / params.rho0) / (rho * rho)
        fx += mag * ux
        fy += mag * uy
    return (fx, fy)


def apf_action(pose: Pose, goal_xy: tuple[float, float], scenario: Scenario,
               params: APFParams, ctrl: ControllerConfig, state: PIDState,
               r_uav: float = 0.2, clearance=None) -> ContinuousAction:
    """Map the total force onto the shared PID: force direction in the body
    frame, displacement magnitude capped at one control step (v_max/f_c)."""
    fx, fy = apf_force(pose, goal_xy, scenario, params, r_uav, clearance)
    norm = math.hypot(fx, fy)
    if norm == 0.0:
        return pid_step((0.0, 0.0), ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)
    step = ctrl.step_len * min(1.0, norm)
    bx, by = body_frame(fx / norm * step, fy / norm * step, pose.heading)
    return pid_step((bx, by), ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)


def scripted_action(kind: ScriptedKind, pose: Pose, goal_xy: tuple[float, float],
                    ctrl: ControllerConfig, state: PIDState,
                    rng: random.Random | None = None) -> ContinuousAction:
    if kind is ScriptedKind.STRAIGHT_LINE:
        bx, by = body_frame(goal_xy[0] - pose.x, goal_xy[1] - pose.y, pose.heading)
        return pid_step((bx, by), ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)
    if rng is None:
        raise ValueError("random policy needs a seeded generator")
    return ContinuousAction(v=rng.uniform(0.0, ctrl.v_max),
                            omega=rng.uniform(-ctrl.omega_max, ctrl.omega_max))
