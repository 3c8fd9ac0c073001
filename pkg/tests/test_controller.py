import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vlnav.controller import ControllerConfig, PIDGains, PIDState, pid_step, reset_pid, scale_waypoint

P_ONLY = PIDGains(kp_v=1.0, ki_v=0.0, kd_v=0.0, kp_w=1.0, ki_w=0.0, kd_w=0.0)


class TestScaleWaypoint:
    def test_unit_forward_at_defaults(self):
        assert scale_waypoint((1.0, 0.0), v_max=1.0, f_c=15.0) == (1 / 15, 0.0)

    def test_zero_is_zero(self):
        assert scale_waypoint((0.0, 0.0), v_max=0.37, f_c=9.0) == (0.0, 0.0)

    def test_mixed_components(self):
        assert scale_waypoint((-1.0, 0.5), v_max=0.6, f_c=10.0) == (-0.06, 0.03)

    @given(st.floats(-1, 1), st.floats(-1, 1))
    def test_matches_direct_product(self, x, y):
        out = scale_waypoint((x, y), v_max=1.0, f_c=15.0)
        s = 1.0 / 15.0
        assert out == (x * s, y * s)  # bitwise

    @given(st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_linearity_in_scalar(self, c, x, y):
        s = 0.8 / 12.0
        scaled = scale_waypoint((c * x, c * y), v_max=0.8, f_c=12.0)
        assert scaled == ((c * x) * s, (c * y) * s)


class TestPidStep:
    def test_straight_ahead_p_only(self):
        action = pid_step((0.1, 0.0), P_ONLY, PIDState(), dt=1 / 15)
        assert action.v == pytest.approx(0.1)
        assert action.omega == 0.0

    def test_pure_lateral_gates_speed(self):
        action = pid_step((0.0, 0.1), P_ONLY, PIDState(), dt=1 / 15)
        assert action.v == pytest.approx(0.0, abs=1e-15)  # cos(pi/2) gate
        assert action.omega == pytest.approx(math.pi / 2)

    def test_zero_displacement(self):
        action = pid_step((0.0, 0.0), P_ONLY, PIDState(), dt=1 / 15)
        assert action.v == 0.0
        assert action.omega == 0.0

    def test_reset_makes_state_fresh(self):
        state = PIDState()
        pid_step((0.3, 0.2), PIDGains(ki_v=0.5, ki_w=0.5), state, dt=0.1)
        assert state.integral_v != 0.0
        reset_pid(state)
        assert state == PIDState()
        action = pid_step((0.0, 0.0), PIDGains(ki_v=0.5, ki_w=0.5), state, dt=0.1)
        assert (action.v, action.omega) == (0.0, 0.0)

    def test_reset_idempotent(self):
        state = reset_pid(PIDState())
        assert reset_pid(state) == PIDState()

    def test_p_only_is_stateless(self):
        s1, s2 = PIDState(), PIDState()
        pid_step((0.5, -0.4), P_ONLY, s1, dt=0.1)
        a = pid_step((0.2, 0.1), P_ONLY, s1, dt=0.1)
        b = pid_step((0.2, 0.1), P_ONLY, s2, dt=0.1)
        assert a.v == b.v and a.omega == b.omega

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=1, max_size=40))
    def test_saturation_over_any_history(self, disps):
        gains = PIDGains(kp_v=60.0, ki_v=0.4, kd_v=0.05, kp_w=2.0, ki_w=0.2, kd_w=0.1)
        state = PIDState()
        for disp in disps:
            action = pid_step(disp, gains, state, dt=1 / 15, v_max=1.0, omega_max=2.0)
            assert 0.0 <= action.v <= 1.0
            assert -2.0 <= action.omega <= 2.0
            assert abs(state.integral_v) <= gains.integral_clamp
            assert abs(state.integral_w) <= gains.integral_clamp

    @given(st.floats(0.01, 2.0), st.floats(-2.0, 2.0))
    def test_mirror_symmetry(self, x, y):
        a = pid_step((x, y), P_ONLY, PIDState(), dt=1 / 15)
        b = pid_step((x, -y), P_ONLY, PIDState(), dt=1 / 15)
        assert a.v == pytest.approx(b.v, abs=1e-12)
        assert a.omega == pytest.approx(-b.omega, abs=1e-12)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            pid_step((0.1, 0.0), P_ONLY, PIDState(), dt=0.0)


class TestControllerConfig:
    def test_defaults(self):
        cfg = ControllerConfig()
        assert cfg.dt == pytest.approx(1 / 15)
        assert cfg.step_len == pytest.approx(1 / 15)

    def test_validation(self):
        with pytest.raises(ValueError):
            ControllerConfig(v_max=0.0)


def test_closed_loop_converges_from_three_meters():
    """Default gains must track oracle waypoints to the goal in an empty arena."""
    from vlnav.planner import PlannerConfig, oracle_plan
    from vlnav.world import Bounds, GoalObject, Pose, Scenario, ScenarioKind, step_dynamics

    goal = GoalObject(id="g", descriptor="pink toy", position=(3.0, 0.0), radius=0.3)
    scn = Scenario(kind=ScenarioKind.BOX, seed=0, bounds=Bounds(-10, -10, 10, 10),
                   obstacles=(), goals=(goal,), spawn=Pose(0, 0, math.pi / 2))
    ctrl = ControllerConfig()
    pcfg = PlannerConfig()
    pose = scn.spawn
    state = PIDState()
    for step in range(600):
        if pose.distance_to(3.0, 0.0) <= 0.5:
            break
        plan = oracle_plan(pose, goal, scn, pcfg)
        disp = scale_waypoint(tuple(plan.waypoints[0]), ctrl.v_max, ctrl.f_c)
        action = pid_step(disp, ctrl.gains, state, ctrl.dt, ctrl.v_max, ctrl.omega_max)
        pose = step_dynamics(pose, action, ctrl.dt)
    assert pose.distance_to(3.0, 0.0) <= 0.5
