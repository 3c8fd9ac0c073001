"""Waypoint-to-velocity control.

A normalized waypoint is scaled to a metric body-frame displacement
(v_max / f_c per unit) and a PID pair maps the displacement to a forward
speed and a yaw rate. Forward speed is gated by max(0, cos(heading error))
so the UAV turns in place instead of lunging sideways.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .world import ContinuousAction


@dataclass(frozen=True)
class PIDGains:
    # kp_v is large because the tracked displacement is one control step
    # (at most v_max/f_c meters); tuned against the closed-loop sanity check.
    kp_v: float = 60.0
    ki_v: float = 0.0
    kd_v: float = 0.05
    kp_w: float = 2.0
    ki_w: float = 0.0
    kd_w: float = 0.1
    integral_clamp: float = 1.0


@dataclass(frozen=True)
class ControllerConfig:
    v_max: float = 1.0
    omega_max: float = 2.0
    f_c: float = 15.0
    gains: PIDGains = field(default_factory=PIDGains)

    def __post_init__(self) -> None:
        if self.v_max <= 0 or self.omega_max <= 0 or self.f_c <= 0:
            raise ValueError("v_max, omega_max and f_c must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.f_c

    @property
    def step_len(self) -> float:
        return self.v_max / self.f_c


@dataclass
class PIDState:
    integral_v: float = 0.0
    integral_w: float = 0.0
    prev_rho: float | None = None
    prev_alpha: float | None = None


def reset_pid(state: PIDState) -> PIDState:
    state.integral_v = 0.0
    state.integral_w = 0.0
    state.prev_rho = None
    state.prev_alpha = None
    return state


def scale_waypoint(wp: tuple[float, float], v_max: float, f_c: float) -> tuple[float, float]:
    """Normalized waypoint to metric displacement: exact multiplication by v_max/f_c."""
    s = v_max / f_c
    return (wp[0] * s, wp[1] * s)


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def pid_step(disp: tuple[float, float], gains: PIDGains, state: PIDState,
             dt: float, v_max: float = 1.0, omega_max: float = 2.0) -> ContinuousAction:
    """One control update toward a body-frame displacement (meters)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dx, dy = disp
    rho = math.hypot(dx, dy)
    alpha = math.atan2(dy, dx) if rho > 0.0 else 0.0

    state.integral_w = _clamp(state.integral_w + alpha * dt,
                              -gains.integral_clamp, gains.integral_clamp)
    d_alpha = 0.0 if state.prev_alpha is None else (alpha - state.prev_alpha) / dt
    state.prev_alpha = alpha
    omega = gains.kp_w * alpha + gains.ki_w * state.integral_w + gains.kd_w * d_alpha
    omega = _clamp(omega, -omega_max, omega_max)

    state.integral_v = _clamp(state.integral_v + rho * dt,
                              -gains.integral_clamp, gains.integral_clamp)
    d_rho = 0.0 if state.prev_rho is None else (rho - state.prev_rho) / dt
    state.prev_rho = rho
    v = gains.kp_v * rho + gains.ki_v * state.integral_v + gains.kd_v * d_rho
    v *= max(0.0, math.cos(alpha))
    v = _clamp(v, 0.0, v_max)

    return ContinuousAction(v=v, omega=omega)
