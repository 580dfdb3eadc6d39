import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plumetrace.world import (ActuationLimits, CollisionGeometry,
                              ObstacleState, UavState, check_collisions,
                              safety_override, step_obstacle, step_uav,
                              wrap_angle)

AREA = (200.0, 200.0)
DT = 0.05
LIMITS = ActuationLimits()
GEOM = CollisionGeometry()


class TestWrapAngle:
    def test_identity_in_range(self):
        assert wrap_angle(1.0) == 1.0

    def test_wraps_down(self):
        assert wrap_angle(math.pi + 0.1) == pytest.approx(-math.pi + 0.1)

    def test_pi_maps_to_pi(self):
        assert wrap_angle(math.pi) == math.pi

    @given(st.floats(-100, 100))
    def test_always_in_half_open_interval(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi


class TestStepUav:
    def test_straight_line(self):
        u = UavState(np.array([10.0, 10.0]), theta=0.0)
        step_uav(u, (1.0, 0.0), DT, LIMITS)
        assert u.p[0] == pytest.approx(10.05)
        assert u.p[1] == 10.0

    def test_zero_speed_only_rotates(self):
        u = UavState(np.array([10.0, 10.0]), theta=0.0)
        step_uav(u, (0.0, 0.5), DT, LIMITS)
        assert np.array_equal(u.p, [10.0, 10.0])
        assert u.theta == pytest.approx(0.5 * DT)

    def test_clamping(self):
        u = UavState(np.array([10.0, 10.0]), theta=0.0)
        step_uav(u, (99.0, 99.0), DT, LIMITS)
        assert u.v == LIMITS.v_max
        assert u.omega == LIMITS.omega_max

    def test_clamp_idempotent_for_legal_action(self):
        u = UavState(np.array([10.0, 10.0]), theta=0.3)
        step_uav(u, (1.5, 0.4), DT, LIMITS)
        assert u.v == 1.5 and u.omega == 0.4

    def test_heading_stays_wrapped(self):
        u = UavState(np.array([100.0, 100.0]), theta=3.0)
        for _ in range(1000):
            step_uav(u, (0.0, LIMITS.omega_max), DT, LIMITS)
            assert -math.pi < u.theta <= math.pi

    def test_circular_arc_radius(self):
        # constant (v, omega) traces a circle of radius v/omega as dt -> 0
        v, omega, dt = 2.0, 0.5, 0.005
        u = UavState(np.array([0.0, 0.0]), theta=0.0)
        xs, ys = [], []
        n = int(2 * math.pi / omega / dt)
        for _ in range(n):
            step_uav(u, (v, omega), dt, LIMITS)
            xs.append(u.p[0])
            ys.append(u.p[1])
        radius = (max(ys) - min(ys)) / 2.0
        assert radius == pytest.approx(v / omega, rel=0.01)


class TestStepObstacle:
    def test_straight_motion(self):
        o = ObstacleState(np.array([100.0, 100.0]), v=1.0, theta=0.0)
        step_obstacle(o, DT, AREA)
        assert o.p[0] == pytest.approx(100.05)

    def test_reflection_at_far_x(self):
        o = ObstacleState(np.array([199.99, 100.0]), v=1.0, theta=0.0)
        for _ in range(10):
            step_obstacle(o, DT, AREA)
        assert abs(o.theta) == pytest.approx(math.pi)
        assert o.p[0] < 200.0

    def test_reflection_specular_at_y(self):
        o = ObstacleState(np.array([100.0, 0.01]), v=1.0, theta=-math.pi / 3)
        for _ in range(10):
            step_obstacle(o, DT, AREA)
        assert o.theta == pytest.approx(math.pi / 3)

    def test_long_run_containment(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            o = ObstacleState(rng.uniform(0, 200, 2), v=2.0,
                              theta=rng.uniform(-math.pi, math.pi))
            for _ in range(10000):
                step_obstacle(o, DT, AREA)
                assert 0.0 <= o.p[0] < 200.0 and 0.0 <= o.p[1] < 200.0


def brute_force_events(uavs, obstacles, geom):
    out = set()
    for i in range(len(uavs)):
        for j in range(len(uavs)):
            if i < j and np.linalg.norm(uavs[i] - uavs[j]) < 2 * geom.r_u + geom.epsilon:
                out.add(("uav", i, j))
    for i in range(len(uavs)):
        for m in range(len(obstacles)):
            if (np.linalg.norm(uavs[i] - obstacles[m])
                    < geom.r_u + geom.r_o + geom.epsilon):
                out.add(("obs", i, m))
    return out


class TestCheckCollisions:
    def test_boundary_distance_is_safe(self):
        # distance exactly 2*r_u + epsilon: strict inequality, no event
        d = GEOM.uav_pair_threshold
        uavs = np.array([[0.0, 50.0], [d, 50.0]])
        assert check_collisions(uavs, np.zeros((0, 2)), GEOM) == []

    def test_slightly_inside_collides(self):
        d = GEOM.uav_pair_threshold - 0.001
        uavs = np.array([[0.0, 50.0], [d, 50.0]])
        assert check_collisions(uavs, np.zeros((0, 2)), GEOM) == [("uav", 0, 1)]

    def test_obstacle_threshold(self):
        d = GEOM.uav_obstacle_threshold
        uavs = np.array([[0.0, 50.0]])
        obs = np.array([[d - 0.001, 50.0]])
        assert check_collisions(uavs, obs, GEOM) == [("obs", 0, 0)]
        obs = np.array([[d, 50.0]])
        assert check_collisions(uavs, obs, GEOM) == []

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            uavs = rng.uniform(99, 103, size=(3, 2))
            obstacles = rng.uniform(99, 103, size=(4, 2))
            got = set(check_collisions(uavs, obstacles, GEOM))
            assert got == brute_force_events(uavs, obstacles, GEOM)

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        uavs = rng.uniform(100, 102, size=(3, 2))
        events = check_collisions(uavs, np.zeros((0, 2)), GEOM)
        pairs = {(i, j) for kind, i, j in events}
        for i, j in pairs:
            d = np.linalg.norm(uavs[i] - uavs[j])
            assert d < GEOM.uav_pair_threshold
            assert (j, i) not in pairs   # one event per unordered pair


class TestSafetyOverride:
    def test_passthrough_when_clear(self):
        uavs = [UavState(np.array([100.0, 100.0]), theta=0.0),
                UavState(np.array([150.0, 150.0]), theta=0.0)]
        got = safety_override(0, (2.0, 0.1), uavs, [], GEOM, LIMITS, DT, AREA)
        assert got == (2.0, 0.1)

    def test_head_on_engagement(self):
        # closing at 2*v_max with exactly one inflated margin of gap: the
        # override must keep the post-step distance at or above the threshold
        gap = GEOM.uav_pair_threshold + LIMITS.v_max * DT
        uavs = [UavState(np.array([100.0, 100.0]), theta=0.0),
                UavState(np.array([100.0 + gap, 100.0]), theta=math.pi)]
        actions = []
        for i in range(2):
            actions.append(safety_override(i, (LIMITS.v_max, 0.0), uavs, [],
                                           GEOM, LIMITS, DT, AREA))
        for u, a in zip(uavs, actions):
            step_uav(u, a, DT, LIMITS)
        dist = np.linalg.norm(uavs[0].p - uavs[1].p)
        assert dist >= GEOM.uav_pair_threshold

    def test_boundary_containment(self):
        u = UavState(np.array([0.05, 100.0]), theta=math.pi)
        got = safety_override(0, (LIMITS.v_max, 0.0), [u], [], GEOM, LIMITS,
                              DT, AREA)
        step_uav(u, got, DT, LIMITS)
        assert 0.0 <= u.p[0] < AREA[0]

    def test_containment_applies_without_neighbors(self):
        # no entity in range, yet the boundary still overrides the action
        u = UavState(np.array([199.9, 100.0]), theta=0.0)
        v, omega = safety_override(0, (LIMITS.v_max, 0.0), [u], [], GEOM,
                                   LIMITS, DT, AREA)
        assert v < LIMITS.v_max

    def test_obstacle_avoidance_one_step(self):
        o = ObstacleState(np.array([101.5, 100.0]), v=0.0, theta=0.0)
        u = UavState(np.array([100.0, 100.0]), theta=0.0)
        a = safety_override(0, (LIMITS.v_max, 0.0), [u], [o], GEOM, LIMITS,
                            DT, AREA)
        step_uav(u, a, DT, LIMITS)
        # already within the reaction margin: must not close in further
        assert np.linalg.norm(u.p - o.p) >= 1.5


class TestGeometry:
    def test_invalid_sensing_radius(self):
        with pytest.raises(ValueError):
            CollisionGeometry(r_u=5.0, r_o=0.5, epsilon=1.0, r_s=10.0)

    def test_thresholds(self):
        g = CollisionGeometry(r_u=0.3, r_o=0.5, epsilon=1.0, r_s=20.0)
        assert g.uav_pair_threshold == pytest.approx(1.6)
        assert g.uav_obstacle_threshold == pytest.approx(1.8)
