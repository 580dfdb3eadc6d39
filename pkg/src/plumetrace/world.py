"""Kinematic world: unicycle UAVs, drifting obstacles, collision geometry.

UAVs follow the planar unicycle model x' = v cos(theta), y' = v sin(theta),
theta' = omega with actuation clamped to box limits. The safety override
filters proposed actions with a one-step lookahead so that the post-step
configuration cannot violate the collision margins or leave the search area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass
class ActuationLimits:
    v_min: float = 0.0
    v_max: float = 3.0
    omega_min: float = -math.pi / 2
    omega_max: float = math.pi / 2

    def clamp(self, v: float, omega: float) -> tuple[float, float]:
        return (min(max(v, self.v_min), self.v_max),
                min(max(omega, self.omega_min), self.omega_max))


@dataclass
class UavState:
    p: np.ndarray
    theta: float = 0.0
    v: float = 0.0
    omega: float = 0.0
    h: float = 2.0      # constant altitude in 2-D mode

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).copy()


@dataclass
class ObstacleState:
    p: np.ndarray
    v: float = 1.0
    theta: float = 0.0
    r_o: float = 0.5

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).copy()


@dataclass
class CollisionGeometry:
    r_u: float = 0.3       # UAV radius, m
    r_o: float = 0.5       # obstacle radius, m
    epsilon: float = 1.0   # safety distance, m
    r_s: float = 20.0      # sensing radius, m

    def __post_init__(self):
        if min(self.r_u, self.r_o, self.epsilon, self.r_s) <= 0:
            raise ValueError("all collision geometry parameters must be positive")
        if self.r_s <= 2 * self.r_u + self.epsilon:
            raise ValueError("sensing radius must exceed the UAV pair margin")

    @property
    def uav_pair_threshold(self) -> float:
        return 2 * self.r_u + self.epsilon

    @property
    def uav_obstacle_threshold(self) -> float:
        return self.r_u + self.r_o + self.epsilon


def step_uav(state: UavState, action, dt: float, limits: ActuationLimits) -> UavState:
    """Advance one step; the displacement uses the pre-update heading."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v, omega = limits.clamp(float(action[0]), float(action[1]))
    state.p[0] += dt * v * math.cos(state.theta)
    state.p[1] += dt * v * math.sin(state.theta)
    state.theta = wrap_angle(state.theta + dt * omega)
    state.v = v
    state.omega = omega
    return state


def step_obstacle(obs: ObstacleState, dt: float, area) -> ObstacleState:
    """Straight-line motion with specular reflection off the area edges."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    X, Y = float(area[0]), float(area[1])
    obs.p[0] += dt * obs.v * math.cos(obs.theta)
    obs.p[1] += dt * obs.v * math.sin(obs.theta)
    if obs.p[0] < 0.0:
        obs.p[0] = -obs.p[0]
        obs.theta = wrap_angle(math.pi - obs.theta)
    elif obs.p[0] >= X:
        obs.p[0] = 2 * X - obs.p[0]
        obs.theta = wrap_angle(math.pi - obs.theta)
    if obs.p[1] < 0.0:
        obs.p[1] = -obs.p[1]
        obs.theta = wrap_angle(-obs.theta)
    elif obs.p[1] >= Y:
        obs.p[1] = 2 * Y - obs.p[1]
        obs.theta = wrap_angle(-obs.theta)
    # reflections of a nearly-stationary overshoot cannot escape the area,
    # but numerical edge cases get clamped just inside
    obs.p[0] = min(max(obs.p[0], 0.0), np.nextafter(X, 0.0))
    obs.p[1] = min(max(obs.p[1], 0.0), np.nextafter(Y, 0.0))
    return obs


def check_collisions(uav_positions: np.ndarray, obstacle_positions: np.ndarray,
                     geom: CollisionGeometry) -> list[tuple]:
    """Strict-inequality collision events: ("uav", i, j) with i < j, ("obs", i, m)."""
    events = []
    n = len(uav_positions)
    thr_uu = geom.uav_pair_threshold
    thr_uo = geom.uav_obstacle_threshold
    for i in range(n):
        for j in range(i + 1, n):
            if math.hypot(uav_positions[i][0] - uav_positions[j][0],
                          uav_positions[i][1] - uav_positions[j][1]) < thr_uu:
                events.append(("uav", i, j))
    for i in range(n):
        for m in range(len(obstacle_positions)):
            if math.hypot(uav_positions[i][0] - obstacle_positions[m][0],
                          uav_positions[i][1] - obstacle_positions[m][1]) < thr_uo:
                events.append(("obs", i, m))
    return events


@dataclass
class OverrideConfig:
    """Margins and sampling for the safety override.

    The UAV-UAV check inflates the collision threshold by v_max*dt (the worst
    a neighbor can close in one step, since neighbor actions are unknown when
    filtering). Obstacles are checked against their already-updated positions
    with an extra reaction margin: a stopped UAV may need a half-turn (about
    2 s at the default turn rate) before it can flee, during which a closing
    obstacle covers ~2 m, so avoidance must start well outside that envelope.
    """

    speed_candidates: int = 6
    omega_candidates: int = 9
    obstacle_reaction_margin: float = 3.5


def _containment_ok(p: np.ndarray, area) -> bool:
    return 0.0 <= p[0] < area[0] and 0.0 <= p[1] < area[1]


def safety_override(i: int, proposed, uavs: list[UavState],
                    obstacles: list[ObstacleState], geom: CollisionGeometry,
                    limits: ActuationLimits, dt: float, area,
                    cfg: OverrideConfig | None = None) -> tuple[float, float]:
    """One-step action filter for UAV i.

    Entities outside the sensing radius are ignored (boundary containment
    always applies). Fallback ladder when the proposed action fails: (1) keep
    the proposed omega and reduce speed toward v_min; (2) hold v_min and steer
    omega toward the direction whose reachable next-step position has the
    largest minimum clearance, tie-breaking toward smaller |omega|; (3) if
    v_min > 0 forces motion and nothing clears, search the full action grid
    for the maximum worst-case clearance.
    """
    cfg = cfg or OverrideConfig()
    me = uavs[i]
    heading = np.array([math.cos(me.theta), math.sin(me.theta)])

    neighbors = [u.p for k, u in enumerate(uavs)
                 if k != i and math.hypot(u.p[0] - me.p[0],
                                          u.p[1] - me.p[1]) <= geom.r_s]
    near_obs = [o.p for o in obstacles
                if math.hypot(o.p[0] - me.p[0], o.p[1] - me.p[1]) <= geom.r_s]

    thr_uu = geom.uav_pair_threshold + limits.v_max * dt
    thr_uo = geom.uav_obstacle_threshold + cfg.obstacle_reaction_margin

    def admissible(p_next: np.ndarray) -> bool:
        if not _containment_ok(p_next, area):
            return False
        for q in neighbors:
            if math.hypot(p_next[0] - q[0], p_next[1] - q[1]) < thr_uu:
                return False
        for q in near_obs:
            if math.hypot(p_next[0] - q[0], p_next[1] - q[1]) < thr_uo:
                return False
        return True

    v0, w0 = limits.clamp(float(proposed[0]), float(proposed[1]))
    if not neighbors and not near_obs and admissible(me.p + dt * v0 * heading):
        return v0, w0

    # stage 1: keep omega, back off the speed
    for v in np.linspace(v0, limits.v_min, cfg.speed_candidates):
        if admissible(me.p + dt * float(v) * heading):
            return float(v), w0

    # stage 2: v_min, steer toward max clearance of the reachable escape ray
    def clearance(p_next: np.ndarray) -> float:
        c = min((p_next[0], area[0] - p_next[0], p_next[1], area[1] - p_next[1]))
        for q in neighbors:
            c = min(c, math.hypot(p_next[0] - q[0], p_next[1] - q[1]) - thr_uu)
        for q in near_obs:
            c = min(c, math.hypot(p_next[0] - q[0], p_next[1] - q[1]) - thr_uo)
        return c

    omegas = np.linspace(limits.omega_min, limits.omega_max, cfg.omega_candidates)
    order = sorted(range(len(omegas)), key=lambda k: (abs(omegas[k]), omegas[k]))
    best = None
    for k in order:
        w = float(omegas[k])
        # escape ray: where full speed along the post-rotation heading would land
        th = me.theta + dt * w
        probe = me.p + dt * limits.v_max * np.array([math.cos(th), math.sin(th)])
        stay = me.p + dt * limits.v_min * heading
        if limits.v_min == 0.0 or admissible(stay):
            score = clearance(probe)
            if best is None or score > best[0] + 1e-12:
                best = (score, limits.v_min, w)
    if best is not None:
        return best[1], best[2]

    # stage 3: forced motion (v_min > 0), take the least-bad action
    best = None
    for v in np.linspace(limits.v_min, limits.v_max, cfg.speed_candidates):
        p_next = me.p + dt * float(v) * heading
        for k in order:
            w = float(omegas[k])
            score = clearance(p_next)
            if best is None or score > best[0] + 1e-12:
                best = (score, float(v), w)
    return best[1], best[2]
