"""Multi-agent plume-tracing POMDP.

One environment instance is one episode. Each step advances the subsystems in
a fixed order: wind field, plume (release/advect/grow/cull), obstacles, the
per-agent safety override, UAV kinematics, sensor sampling into the moving
windows, the anchor update, then observations, rewards, and the termination
check. Sensing happens after motion so observations reflect post-step
positions.

Agents sense the concentration at the centre of the lookup cell containing
them and the wind of their flow-grid cell, both through the noisy sensor
models. The shared anchor node is the most upwind confirmed in-plume
detection; it moves only when the best-detecting agent lies within the upwind
acceptance cone of the previous anchor.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .flowfield import ColoredNoiseState, DiffusionSpec, FlowGrid
from .plume import (Anemometer, ChemicalSensor, EmitterSpec, GasConstants,
                    PlumeState, PlumeTable, advect_filaments, concentration_at,
                    cull_filaments, grow_filaments, release_filaments)
from .scenario import DeclarationConfig, RewardConfig, ScenarioConfig
from .world import (ActuationLimits, CollisionGeometry, ObstacleState,
                    OverrideConfig, UavState, check_collisions, safety_override,
                    step_obstacle, step_uav, wrap_angle)

ENV_SCHEMA_VERSION = 1

# seed-stream axes: changing one randomization axis leaves the others fixed
AXIS_PLUME, AXIS_WIND, AXIS_OBSTACLE, AXIS_START, AXIS_SENSOR = range(5)


def stream_rng(seed: int, axis: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(axis))))


class EpisodeFinishedError(RuntimeError):
    """step() was called on an episode that already terminated."""


@dataclass
class AnchorNode:
    """Shared virtual tracer: bias-corrected concentration, position, altitude."""

    rho_a: float = 0.0
    p_a: np.ndarray = field(default_factory=lambda: np.zeros(2))
    h_a: float = 0.0
    established: bool = False

    def __post_init__(self):
        self.p_a = np.asarray(self.p_a, dtype=float).copy()


class SensorWindow:
    """Ring buffer of the last tau_m sensor samples, zero-padded until full."""

    def __init__(self, tau_m: int):
        if tau_m <= 0:
            raise ValueError("tau_m must be positive")
        self.tau_m = int(tau_m)
        self.rho = np.zeros(self.tau_m)
        self.wind = np.zeros((self.tau_m, 2))
        self._idx = 0
        self._means = None

    def push(self, rho: float, wind):
        k = self._idx % self.tau_m
        self.rho[k] = rho
        self.wind[k] = wind
        self._idx += 1
        self._means = None

    def _compute(self):
        # full arithmetic mean of the stored buffer, cached between pushes
        self._means = (float(np.mean(self.rho)), self.wind.mean(axis=0))
        return self._means

    @property
    def rho_avg(self) -> float:
        return (self._means or self._compute())[0]

    @property
    def wind_avg(self) -> np.ndarray:
        return (self._means or self._compute())[1]


@dataclass
class Observation:
    """Per-agent observation blocks; see flatten_observation for the layout."""

    own: np.ndarray            # [rho_avg, wind_x, wind_y, q, h]
    centroid: np.ndarray       # [d_centroid, theta_centroid]
    peers: np.ndarray          # (N-1, 3): [d, psi, lambda], ascending peer index
    peer_sensors: np.ndarray   # (N-1, 5): peer own-blocks, same order
    anchor: np.ndarray         # [valid, d_anchor, theta_anchor, h_anchor]
    obstacles: np.ndarray      # (M, 3): [valid, d, psi]; zeroed outside r_s


@dataclass
class WorldView:
    """Read-only snapshot handed to controllers and reward/anchor logic."""

    step: int
    time: float
    positions: np.ndarray      # (N, 2)
    headings: np.ndarray       # (N,)
    speeds: np.ndarray
    omegas: np.ndarray
    altitudes: np.ndarray
    rho_avg: np.ndarray        # (N,) windowed measured concentration
    wind_avg: np.ndarray       # (N, 2) windowed measured wind
    q: np.ndarray              # (N,) detection indicators
    anchor: AnchorNode
    obstacle_positions: np.ndarray   # (M, 2)
    centroid: np.ndarray
    phase: str
    collisions: list
    area: tuple


def bearing(from_p, to_p) -> float:
    d = np.asarray(to_p, dtype=float) - np.asarray(from_p, dtype=float)
    return math.atan2(d[1], d[0])


def build_observation(i: int, view: WorldView, r_s: float) -> Observation:
    N = len(view.positions)
    p_i = view.positions[i]
    th_i = view.headings[i]
    own = np.array([view.rho_avg[i], view.wind_avg[i, 0], view.wind_avg[i, 1],
                    float(view.q[i]), view.altitudes[i]])
    d_c = float(np.hypot(*(view.centroid - p_i)))
    th_c = wrap_angle(bearing(p_i, view.centroid) - th_i) if d_c > 0 else 0.0
    centroid = np.array([d_c, th_c])
    peers = np.zeros((N - 1, 3))
    peer_sensors = np.zeros((N - 1, 5))
    row = 0
    for j in range(N):
        if j == i:
            continue
        p_j = view.positions[j]
        d = float(np.hypot(*(p_j - p_i)))
        psi = wrap_angle(bearing(p_i, p_j) - th_i) if d > 0 else 0.0
        lam = wrap_angle(bearing(p_j, p_i) - view.headings[j]) if d > 0 else 0.0
        peers[row] = (d, psi, lam)
        peer_sensors[row] = (view.rho_avg[j], view.wind_avg[j, 0],
                             view.wind_avg[j, 1], float(view.q[j]),
                             view.altitudes[j])
        row += 1
    if view.anchor.established:
        d_a = float(np.hypot(*(view.anchor.p_a - p_i)))
        th_a = wrap_angle(bearing(p_i, view.anchor.p_a) - th_i) if d_a > 0 else 0.0
        anchor = np.array([1.0, d_a, th_a, view.anchor.h_a])
    else:
        anchor = np.zeros(4)
    M = len(view.obstacle_positions)
    obstacles = np.zeros((M, 3))
    for m in range(M):
        d = float(np.hypot(*(view.obstacle_positions[m] - p_i)))
        if d <= r_s:
            psi = wrap_angle(bearing(p_i, view.obstacle_positions[m]) - th_i)
            obstacles[m] = (1.0, d, psi)
    return Observation(own, centroid, peers, peer_sensors, anchor, obstacles)


def flat_layout_size(N: int, M: int) -> int:
    return 5 + 2 + (N - 1) * 3 + (N - 1) * 5 + 4 + M * 3


def flat_layout_fields(N: int, M: int) -> list[str]:
    """Field names of the flattened observation, in order."""
    names = ["rho_avg", "wind_avg_x", "wind_avg_y", "q", "altitude",
             "d_centroid", "theta_centroid"]
    peers = [j for j in range(N)]
    for j in peers[:N - 1]:
        names += [f"peer{j}_d", f"peer{j}_psi", f"peer{j}_lambda"]
    for j in peers[:N - 1]:
        names += [f"peer{j}_rho_avg", f"peer{j}_wind_x", f"peer{j}_wind_y",
                  f"peer{j}_q", f"peer{j}_altitude"]
    names += ["anchor_valid", "d_anchor", "theta_anchor", "anchor_altitude"]
    for m in range(M):
        names += [f"obstacle{m}_valid", f"obstacle{m}_d", f"obstacle{m}_psi"]
    return names


def flatten_observation(obs: Observation) -> np.ndarray:
    return np.concatenate([obs.own, obs.centroid, obs.peers.ravel(),
                           obs.peer_sensors.ravel(), obs.anchor,
                           obs.obstacles.ravel()])


# -- anchor update rule --------------------------------------------------------


def update_anchor(anchor: AnchorNode, positions, altitudes, rho_avg, wind_avg,
                  q, bias: float, rho_th: float, beta_max: float):
    """Apply the anchor update rule to one step's shared measurements.

    Returns (anchor, event) where event is None when nothing changed, else a
    dict with kind "establish" or "update" (the latter carries beta in
    degrees). Ties on the best corrected concentration resolve to the lowest
    agent index; a zero displacement or zero mean wind leaves the anchor
    unchanged because the upwind angle is undefined.
    """
    detectors = np.flatnonzero(q)
    if len(detectors) == 0:
        return anchor, None
    corrected = np.asarray(rho_avg)[detectors] - bias
    i_star = int(detectors[int(np.argmax(corrected))])
    if not rho_avg[i_star] > rho_th:
        return anchor, None
    rho_new = float(rho_avg[i_star] - bias)
    if not anchor.established:
        new = AnchorNode(rho_new, np.array(positions[i_star]),
                         float(altitudes[i_star]), True)
        return new, {"kind": "establish", "agent": i_star}
    dp = np.asarray(positions[i_star], dtype=float) - anchor.p_a
    V = np.asarray(wind_avg).mean(axis=0)
    ndp = float(np.hypot(*dp))
    nV = float(np.hypot(*V))
    if ndp == 0.0 or nV == 0.0:
        return anchor, None
    cos_b = float(np.clip(dp @ (-V) / (ndp * nV), -1.0, 1.0))
    beta = math.degrees(math.acos(cos_b))
    if 0.0 <= beta <= beta_max:
        new = AnchorNode(rho_new, np.array(positions[i_star]),
                         float(altitudes[i_star]), True)
        return new, {"kind": "update", "agent": i_star, "beta": beta}
    return anchor, None


# -- rewards --------------------------------------------------------------------


def interior_angles(positions: np.ndarray) -> np.ndarray:
    """Per-agent (gamma_ij, gamma_ik, gamma_jk) central angles at the centroid.

    Neighbors j (successor) and k (predecessor) come from the cyclic angular
    order around the centroid, recomputed from the given positions; gamma_jk
    is the forward gap from j around to k. Agents coincident with the
    centroid take angular position 0.
    """
    N = len(positions)
    c = positions.mean(axis=0)
    rel = positions - c
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    order = sorted(range(N), key=lambda a: (phi[a], a))
    rank = {a: r for r, a in enumerate(order)}
    out = np.zeros((N, 3))
    for i in range(N):
        r = rank[i]
        j = order[(r + 1) % N]
        k = order[(r - 1) % N]
        g_ij = (phi[j] - phi[i]) % (2 * math.pi)
        g_ki = (phi[i] - phi[k]) % (2 * math.pi)
        g_jk = (phi[k] - phi[j]) % (2 * math.pi)
        out[i] = (g_ij, g_ki, g_jk)
    return out


def compute_reward(i: int, view: WorldView, cfg: RewardConfig,
                   beta_max: float, angles: np.ndarray | None = None
                   ) -> tuple[float, dict]:
    """Weighted five-component reward for agent i on the given snapshot."""
    N = len(view.positions)
    d_c = math.hypot(view.positions[i][0] - view.centroid[0],
                     view.positions[i][1] - view.centroid[1])
    if cfg.d_ideal_min <= d_c <= cfg.d_ideal_max:
        r_d = cfg.r_in
    else:
        delta = min(abs(d_c - cfg.d_ideal_min), abs(d_c - cfg.d_ideal_max))
        r_d = -cfg.k_d1 * delta

    if angles is None:
        angles = interior_angles(view.positions)
    g_ij, g_ik, g_jk = angles[i]
    target = 2 * math.pi / N
    r_theta1 = math.exp(-abs(g_ij - target)) + math.exp(-abs(g_ik - target)) - 2.0
    r_theta2 = math.exp(-abs(g_ij - g_jk)) - 1.0
    r_theta = cfg.k_theta1 * r_theta1 + cfg.k_theta2 * r_theta2

    r_col = 0.0
    for ev in view.collisions:
        if ev[0] == "uav" and i in (ev[1], ev[2]):
            r_col -= cfg.k_col_uav
        elif ev[0] == "obs" and ev[1] == i:
            r_col -= cfg.k_col_obs

    if view.anchor.established:
        d_a = math.hypot(view.positions[i][0] - view.anchor.p_a[0],
                         view.positions[i][1] - view.anchor.p_a[1])
        r_plume = -cfg.eta * d_a
    else:
        r_plume = -cfg.eta * cfg.d_max

    if view.anchor.established:
        dp = view.positions[i] - view.anchor.p_a
        V = view.wind_avg.mean(axis=0)
        ndp = float(np.hypot(*dp))
        nV = float(np.hypot(*V))
        if ndp > 0.0 and nV > 0.0:
            cos_b = float(np.clip(dp @ (-V) / (ndp * nV), -1.0, 1.0))
            beta = math.degrees(math.acos(cos_b))
        else:
            beta = 180.0   # undefined direction is not verified upwind
        r_upwind = r_plume / 4.0 if beta <= beta_max else r_plume / 2.0
    else:
        r_upwind = r_plume

    total = (cfg.alpha_d * r_d + cfg.alpha_theta * r_theta + cfg.alpha_col * r_col
             + cfg.alpha_plume * r_plume + cfg.alpha_upwind * r_upwind)
    return total, {"r_d": r_d, "r_theta": r_theta, "r_col": r_col,
                   "r_plume": r_plume, "r_upwind": r_upwind}


def compute_return(rewards: np.ndarray, gamma: float) -> np.ndarray:
    """Discounted return G(t) = sum_{k>t} gamma^(k-t-1) R(k); diagnostic only.

    rewards[t] is the reward received after the action at step t, so
    G(t) = rewards[t] + gamma * G(t+1).
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    rewards = np.asarray(rewards, dtype=float)
    G = np.zeros_like(rewards)
    acc = np.zeros(rewards.shape[1:])
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        G[t] = acc
    return G


# -- environment -----------------------------------------------------------------


class CpslEnv:
    """One seeded episode of the multi-agent source-localization POMDP."""

    def __init__(self, cfg: ScenarioConfig, seed: int, plume_seed: int | None = None,
                 plume_table: PlumeTable | None = None, record_trace: bool = False,
                 record_flow_every: int = 0, build_observations: bool = True):
        self.cfg = cfg
        self.seed = int(seed)
        self.rng_plume = stream_rng(plume_seed if plume_seed is not None else seed,
                                    AXIS_PLUME)
        self.rng_wind = stream_rng(plume_seed if plume_seed is not None else seed,
                                   AXIS_WIND)
        self.rng_obstacle = stream_rng(seed, AXIS_OBSTACLE)
        self.rng_start = stream_rng(seed, AXIS_START)
        self.rng_sensor = stream_rng(seed, AXIS_SENSOR)

        ep = cfg.episode
        self.dt = ep.dt
        self.n_steps = ep.n_steps
        self.area = (cfg.area.X, cfg.area.Y)
        self.t = 0
        self.done = False
        self.phase = "seek"

        self.flow = FlowGrid(cfg.wind.mean, self.area, cfg.area.flow_cell_size,
                             cfg.wind.Kx, cfg.wind.Ky, ep.dt,
                             upwind_advection=cfg.wind.upwind_advection)
        self.meander = (ColoredNoiseState(cfg.wind.a, cfg.wind.b, cfg.wind.G, ep.dt)
                        if cfg.wind.G != 0.0 else None)
        self.diffusion = DiffusionSpec(*cfg.plume.sigma_vm)
        self.emitter = EmitterSpec(cfg.plume.emitter, cfg.plume.Nf, cfg.plume.Qbar,
                                   cfg.plume.R0, cfg.plume.gamma)
        self.gas = GasConstants(cfg.gas.P, cfg.gas.T, cfg.gas.k, cfg.gas.Rgas)
        self.plume = PlumeState()
        self.plume_table = plume_table

        self.limits = ActuationLimits(cfg.uav.v_min, cfg.uav.v_max,
                                      cfg.uav.omega_min, cfg.uav.omega_max)
        self.geom = CollisionGeometry(cfg.uav.r_u, cfg.obstacles.r_o,
                                      cfg.collision.epsilon, cfg.collision.r_s)
        self.override_cfg = OverrideConfig()
        self.uavs = self._init_uavs()
        self.obstacles = self._init_obstacles()

        self.sensors = [ChemicalSensor(cfg.sensors.B, cfg.sensors.ch,
                                       cfg.sensors.bias, cfg.sensors.rho_var)
                        for _ in range(cfg.uav.N)]
        self.anemometer = Anemometer(cfg.sensors.wind_var)
        self.windows = [SensorWindow(cfg.sensors.tau_m) for _ in range(cfg.uav.N)]

        self.anchor = AnchorNode()
        self.anchor_events: list[dict] = []
        win_steps = max(1, int(round(cfg.declaration.centroid_window / ep.dt)))
        self._centroid_hist: deque = deque(maxlen=win_steps)
        self.collision_count = {"uav": 0, "obs": 0}
        self._last_collisions: list = []
        self.declared = None
        self.success = False
        self.end_reason = None
        self.reward_component_sums = {k: np.zeros(cfg.uav.N) for k in
                                      ("r_d", "r_theta", "r_col", "r_plume", "r_upwind")}
        self.reward_sums = np.zeros(cfg.uav.N)
        self.reward_history: list[np.ndarray] = []

        self.build_observations = build_observations
        self._view_cache: WorldView | None = None
        self.record_trace = record_trace
        self.trace: list[tuple] = []
        self.record_flow_every = record_flow_every
        self.flow_snapshots: list[tuple] = []
        if record_trace:
            self._record_trace_row()

    # -- initialization -------------------------------------------------------

    def _init_uavs(self) -> list[UavState]:
        cfg = self.cfg
        N = cfg.uav.N
        if cfg.start.mode == "fixed":
            cx, cy = cfg.start.fixed_center
        else:
            xmin, xmax, ymin, ymax = cfg.start.region
            emitter = np.asarray(cfg.plume.emitter)
            for _ in range(1000):
                cx = self.rng_start.uniform(xmin, xmax)
                cy = self.rng_start.uniform(ymin, ymax)
                if np.hypot(cx - emitter[0], cy - emitter[1]) >= cfg.start.exclusion_radius:
                    break
            else:
                raise RuntimeError("could not sample a start outside the emitter zone")
        # first sweep heads for the nearer y boundary: the reversal there buys
        # one uninterrupted full-span pass early in the episode
        heading = -math.pi / 2 if cy <= cfg.area.Y / 2 else math.pi / 2
        uavs = []
        for i in range(N):
            x = cx + cfg.start.spacing * (i - (N - 1) / 2.0)
            x = min(max(x, 1.0), cfg.area.X - 1.0)
            y = min(max(cy, 1.0), cfg.area.Y - 1.0)
            uavs.append(UavState(np.array([x, y]), theta=heading, v=0.0,
                                 omega=0.0, h=cfg.uav.altitude))
        return uavs

    def _init_obstacles(self) -> list[ObstacleState]:
        cfg = self.cfg
        obstacles = []
        clearance = (self.geom.uav_obstacle_threshold + 2.0)
        for _ in range(cfg.obstacles.M):
            for _ in range(1000):
                p = self.rng_obstacle.uniform((0.0, 0.0), self.area)
                if all(np.hypot(*(p - u.p)) >= clearance for u in self.uavs):
                    break
            theta = self.rng_obstacle.uniform(-math.pi, math.pi)
            obstacles.append(ObstacleState(p, cfg.obstacles.speed, theta,
                                           cfg.obstacles.r_o))
        return obstacles

    # -- sensing helpers ------------------------------------------------------

    def _lookup_cell(self, p) -> tuple[int, int]:
        cs = self.cfg.area.cell_size
        return int(p[0] // cs), int(p[1] // cs)

    def _cell_center(self, p) -> np.ndarray:
        cs = self.cfg.area.cell_size
        i, j = self._lookup_cell(p)
        return np.array([(i + 0.5) * cs, (j + 0.5) * cs])

    def _raw_concentration(self, p) -> float:
        if self.plume_table is not None:
            i, j = self._lookup_cell(p)
            ncy = int(round(self.cfg.area.Y / self.cfg.area.cell_size))
            return self.plume_table.lookup(self.t, i * ncy + j)
        return concentration_at(self.plume, self._cell_center(p), self.gas,
                                self.emitter.Q_per_filament)

    # -- views and observations -----------------------------------------------

    def current_view(self) -> WorldView:
        if self._view_cache is not None and self._view_cache.step == self.t:
            return self._view_cache
        self._view_cache = self._build_view()
        return self._view_cache

    def _build_view(self) -> WorldView:
        positions = np.array([u.p for u in self.uavs])
        rho_avg = np.array([w.rho_avg for w in self.windows])
        wind_avg = np.array([w.wind_avg for w in self.windows])
        q = (rho_avg - self.cfg.sensors.bias) >= self.cfg.detection.rho_th
        return WorldView(
            step=self.t, time=self.t * self.dt, positions=positions,
            headings=np.array([u.theta for u in self.uavs]),
            speeds=np.array([u.v for u in self.uavs]),
            omegas=np.array([u.omega for u in self.uavs]),
            altitudes=np.array([u.h for u in self.uavs]),
            rho_avg=rho_avg, wind_avg=wind_avg, q=q, anchor=self.anchor,
            obstacle_positions=np.array([o.p for o in self.obstacles])
            if self.obstacles else np.zeros((0, 2)),
            centroid=positions.mean(axis=0), phase=self.phase,
            collisions=list(self._last_collisions), area=self.area)

    def observations(self, view: WorldView | None = None) -> list[Observation]:
        view = view or self.current_view()
        return [build_observation(i, view, self.geom.r_s)
                for i in range(self.cfg.uav.N)]

    # -- main loop -------------------------------------------------------------

    def step(self, actions):
        """Advance one step with per-agent (v, omega) actions."""
        if self.done:
            raise EpisodeFinishedError("episode already terminated")
        cfg = self.cfg
        dt = self.dt

        # 1. wind field (meander perturbs the boundary inflow)
        self.flow.step(self.meander, self.rng_wind)

        # 2. plume; in table mode concentrations come precomputed from the
        # same seed stream, so the live filaments are not advanced at all
        if self.plume_table is None:
            release_filaments(self.plume, self.emitter, dt, self.t)
            advect_filaments(self.plume, self.flow, self.diffusion, dt,
                             self.rng_plume)
            grow_filaments(self.plume, self.emitter.gamma, dt)
            cull_filaments(self.plume, self.area, cfg.plume.cull_margin)

        # 3. obstacles
        for o in self.obstacles:
            step_obstacle(o, dt, self.area)

        # 4. safety overrides on the proposed joint action
        applied = [safety_override(i, actions[i], self.uavs, self.obstacles,
                                   self.geom, self.limits, dt, self.area,
                                   self.override_cfg)
                   for i in range(cfg.uav.N)]

        # 5. UAV kinematics
        for u, a in zip(self.uavs, applied):
            step_uav(u, a, dt, self.limits)

        # 6. sensors into the moving windows (fixed agent order for determinism)
        for i, u in enumerate(self.uavs):
            raw = self._raw_concentration(u.p)
            rho = self.sensors[i].measure(raw, dt, self.rng_sensor)
            wind_true = self.flow.sample(u.p)
            wind = self.anemometer.measure(wind_true, self.rng_sensor)
            self.windows[i].push(rho, wind)

        self.t += 1

        # 7. anchor update on the fresh measurements
        rho_avg = np.array([w.rho_avg for w in self.windows])
        wind_avg = np.array([w.wind_avg for w in self.windows])
        q = (rho_avg - cfg.sensors.bias) >= cfg.detection.rho_th
        positions = np.array([u.p for u in self.uavs])
        altitudes = np.array([u.h for u in self.uavs])
        self.anchor, event = update_anchor(
            self.anchor, positions, altitudes, rho_avg, wind_avg, q,
            cfg.sensors.bias, cfg.detection.rho_th, cfg.detection.beta_max)
        if event is not None:
            event["step"] = self.t
            event["p_a"] = self.anchor.p_a.copy()
            self.anchor_events.append(event)
        if self.anchor.established:
            self.phase = "trace"

        # 8-9. collisions, observations, rewards
        obs_pos = (np.array([o.p for o in self.obstacles])
                   if self.obstacles else np.zeros((0, 2)))
        self._last_collisions = check_collisions(positions, obs_pos, self.geom)
        for ev in self._last_collisions:
            self.collision_count[ev[0]] += 1
        view = self.current_view()
        observations = self.observations(view) if self.build_observations else None
        angles = interior_angles(view.positions)
        rewards = np.zeros(cfg.uav.N)
        for i in range(cfg.uav.N):
            rewards[i], comps = compute_reward(i, view, cfg.reward,
                                               cfg.detection.beta_max, angles)
            for k, v in comps.items():
                self.reward_component_sums[k][i] += v
        self.reward_sums += rewards
        self.reward_history.append(rewards.copy())

        # 10. termination
        self._centroid_hist.append(view.centroid.copy())
        done, reason = self._check_done(view)
        if done:
            self.done = True
            self.end_reason = reason
            self.declared, self.success = self._declare(view)
        if self.record_trace:
            self._record_trace_row()
        if self.record_flow_every and self.t % self.record_flow_every == 0:
            self.flow_snapshots.append(
                (self.t, self.flow.v1.copy(), self.flow.v2.copy()))

        info = {"t": self.t, "phase": self.phase, "collisions": self._last_collisions,
                "anchor_established": self.anchor.established,
                "anchor_position": self.anchor.p_a.copy()
                if self.anchor.established else None,
                "filaments": self.plume.F}
        if self.done:
            info.update(reason=reason, declared=self.declared, success=self.success)
        return observations, rewards, self.done, info

    def _check_done(self, view: WorldView):
        if self.t >= self.n_steps:
            return True, "time_limit"
        hist = self._centroid_hist
        if (self.anchor.established and len(hist) == hist.maxlen):
            c_now = hist[-1]
            drift = max(float(np.hypot(*(c - c_now))) for c in hist)
            if drift < self.cfg.declaration.centroid_tolerance:
                return True, "centroid_stable"
        return False, None

    def _declare(self, view: WorldView):
        """Final declared location: centroid plus the upwind corrective offset."""
        centroid = view.centroid.copy()
        declared = centroid.copy()
        offset = self.cfg.declaration.upwind_offset
        if offset > 0.0:
            V = view.wind_avg.mean(axis=0)
            nV = float(np.hypot(*V))
            if nV > 0.0:
                declared = centroid - offset * V / nV
        emitter = np.asarray(self.cfg.plume.emitter)
        success = bool(np.hypot(*(declared - emitter))
                       <= self.cfg.declaration.radius)
        return declared, success

    # -- trace recording --------------------------------------------------------

    def _record_trace_row(self):
        view = self.current_view()
        row = [self.t, self.t * self.dt, self.phase]
        for i, u in enumerate(self.uavs):
            row += [u.p[0], u.p[1], u.theta, view.rho_avg[i]]
        row += [view.centroid[0], view.centroid[1]]
        if self.anchor.established:
            row += [1, self.anchor.p_a[0], self.anchor.p_a[1], self.anchor.rho_a]
        else:
            row += [0, 0.0, 0.0, 0.0]
        self.trace.append(tuple(row))

    def trace_header(self) -> list[str]:
        cols = ["step", "time", "phase"]
        for i in range(self.cfg.uav.N):
            cols += [f"uav{i}_x", f"uav{i}_y", f"uav{i}_theta", f"uav{i}_rho_avg"]
        cols += ["centroid_x", "centroid_y",
                 "anchor_valid", "anchor_x", "anchor_y", "anchor_rho"]
        return cols

    @property
    def centroid_distance_to_emitter(self) -> float:
        view_centroid = np.array([u.p for u in self.uavs]).mean(axis=0)
        return float(np.hypot(*(view_centroid - np.asarray(self.cfg.plume.emitter))))
