"""Executable controllers: scripted seek sweep, anchor-following heuristic,
and the fluxotaxis comparison agent.

The seek/heuristic pair drives the unicycle environment: vertical sweeps with
a slow upwind drift until first detection, then a clockwise orbit of a ring
around the anchor. The fluxotaxis agents use double-integrator dynamics with
Lennard-Jones formation control plus a mass-flux steering vector and an
artificial drag term; they bypass the unicycle model but share the collision
bookkeeping and boundary containment.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .env import CpslEnv, SensorWindow, WorldView
from .plume import (ChemicalSensor, advect_filaments, concentration_at,
                    cull_filaments, grow_filaments, release_filaments)
from .scenario import FluxConfig, RingConfig, ScenarioConfig, SeekConfig
from .world import check_collisions, step_obstacle, wrap_angle


def _heading_control(p, theta, desired_vec, v_max, k_heading, limits):
    """Map a desired velocity direction to clamped (v, omega)."""
    mag = float(np.hypot(*desired_vec))
    if mag < 1e-12:
        return 0.0, 0.0
    err = wrap_angle(math.atan2(desired_vec[1], desired_vec[0]) - theta)
    omega = min(max(k_heading * err, limits.omega_min), limits.omega_max)
    v = v_max * max(0.0, math.cos(err))
    return v, omega


class SeekAndAnchorController:
    """Seek sweeps until the anchor exists, then orbit the anchor ring.

    Seek: agents hold uniform x spacing, sweep +-y at fixed speed, reverse at
    the boundary margin, and drift their sweep line upwind so the team reaches
    detectable plume from anywhere in the start region. Trace: steer to a ring
    of radius mid(d_ideal band) around the anchor with a clockwise tangential
    bias and short-range peer repulsion.
    """

    name = "seek+anchor_heuristic"

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.seek: SeekConfig = cfg.seek
        self.ring: RingConfig = cfg.ring
        self._sweep_dir: np.ndarray | None = None
        self._sweep_x0: np.ndarray | None = None
        self._slot_angle: np.ndarray | None = None
        self._trace_t0: float | None = None
        self._rho_hist: list | None = None
        self._contact_time: float = 0.0
        self._contacts = None

    def reset(self, view: WorldView):
        N = len(view.positions)
        up = 1.0 if view.headings[0] > 0 else -1.0
        self._sweep_dir = np.full(N, up)
        # preserve the start formation's relative x offsets around the entry line
        x0 = view.positions[:, 0]
        self._sweep_x0 = np.minimum(x0, self.seek.entry_x + (x0 - x0.mean()))
        self._slot_angle = None
        self._trace_t0 = None
        self._rho_hist = [[] for _ in range(N)]
        self._contact_time = 0.0
        self._contacts = deque()

    def _track(self, view: WorldView):
        keep = self.ring.stale_window + 1
        for i, hist in enumerate(self._rho_hist):
            if hist and view.rho_avg[i] - hist[-1] > self.ring.pulse_eps:
                # genuine plume contact: remember where it happened
                self._contacts.append((view.time, view.positions[i].copy(),
                                       float(view.rho_avg[i] - hist[-1])))
            hist.append(float(view.rho_avg[i]))
            if len(hist) > keep:
                del hist[0]
        horizon = view.time - self.ring.contact_memory
        while self._contacts and self._contacts[0][0] < horizon:
            self._contacts.popleft()

    def _is_stale(self, i, view) -> bool:
        """Reading is above threshold but decaying at the sensor filter rate,
        i.e. the agent navigates on memory, not on live plume contact."""
        rc = self.ring
        hist = self._rho_hist[i]
        if len(hist) <= rc.stale_window:
            return False
        bias = self.cfg.sensors.bias
        corr_now = hist[-1] - bias
        corr_then = hist[-1 - rc.stale_window] - bias
        if corr_now < 0.6 * self.cfg.detection.rho_th or corr_then <= 0.0:
            return False
        return corr_now < rc.stale_decay_ratio * corr_then

    def _fresh(self, view: WorldView) -> list[bool]:
        """Live plume contact: detecting and not navigating on a decaying
        memory of a past contact."""
        return [bool(view.q[i]) and not self._is_stale(i, view)
                for i in range(len(view.positions))]

    def act(self, view: WorldView, limits) -> list[tuple[float, float]]:
        if self._sweep_dir is None:
            self.reset(view)
        self._track(view)
        if view.phase == "seek":
            return [self._act_seek(i, view, limits)
                    for i in range(len(view.positions))]
        fresh = self._fresh(view)
        if any(fresh):
            self._contact_time = view.time
        return [self._act_ring(i, view, limits, fresh)
                for i in range(len(view.positions))]

    def _act_seek(self, i, view, limits):
        sk = self.seek
        X, Y = view.area
        p = view.positions[i]
        if p[1] >= Y - sk.boundary_margin:
            self._sweep_dir[i] = -1.0
        elif p[1] <= sk.boundary_margin:
            self._sweep_dir[i] = 1.0
        x_target = max(self._sweep_x0[i] - sk.upwind_drift * view.time,
                       sk.min_sweep_x)
        v_sweep = sk.speed_fraction * limits.v_max
        desired = np.array([np.clip(0.8 * (x_target - p[0]), -0.7 * v_sweep,
                                    0.7 * v_sweep),
                            self._sweep_dir[i] * v_sweep])
        return _heading_control(p, view.headings[i], desired, v_sweep,
                                sk.k_heading, limits)

    def _assign_slots(self, view, center):
        # spread agents over the ring: keep their angular order, force 2pi/N gaps
        rel = view.positions - center
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        order = sorted(range(len(ang)), key=lambda a: (ang[a], a))
        N = len(order)
        base = float(ang[order[0]])
        slots = np.zeros(N)
        for rank, agent in enumerate(order):
            slots[agent] = base + 2.0 * math.pi * rank / N
        self._slot_angle = slots
        self._trace_t0 = view.time

    def _fresh_weights(self, view, fresh, exclude=None):
        w = np.maximum(view.rho_avg - self.cfg.sensors.bias, 0.0)
        for j in range(len(w)):
            if not fresh[j] or j == exclude:
                w[j] = 0.0
        return w

    def _act_ring(self, i, view, limits, fresh):
        rc = self.ring
        p = view.positions[i]
        V0 = view.wind_avg.mean(axis=0)
        nV0 = float(np.hypot(*V0))
        center = view.anchor.p_a
        if nV0 > 1e-9 and rc.ring_downwind_bias > 0.0:
            center = center + rc.ring_downwind_bias * V0 / nV0
        if self._slot_angle is None:
            self._assign_slots(view, center)
        band = self.cfg.reward
        r_ring = 0.5 * (band.d_ideal_min + band.d_ideal_max)
        # recovery cast: without live contact anywhere, widen the orbit
        lost_for = view.time - self._contact_time
        if lost_for > 1.0:
            r_ring = min(r_ring + rc.recovery_growth * (lost_for - 1.0),
                         rc.recovery_max_radius)
        V = view.wind_avg.mean(axis=0)
        nV = float(np.hypot(*V))
        d_anchor = float(np.hypot(*(p - center)))
        if fresh[i] and d_anchor <= rc.surge_leash:
            # live plume contact: surge upwind, the anchor rides the best of
            # the surging agents; a crosswind pull toward the detection-weighted
            # mean position keeps the surge from sliding off the plume edge
            upwind = (-V / nV if nV > 1e-9 else np.array([-1.0, 0.0]))
            # creep through the dense core: short turnarounds keep the anchor
            # and the formation tight around the plume head
            corr = view.rho_avg[i] - self.cfg.sensors.bias
            span = max(rc.surge_slow_hi - rc.surge_slow_lo, 1e-9)
            frac = 1.0 - (1.0 - rc.surge_slow_frac) * min(
                max((corr - rc.surge_slow_lo) / span, 0.0), 1.0)
            desired = upwind * (rc.surge_speed_fraction * frac * limits.v_max)
            w = self._fresh_weights(view, fresh)
            if w.sum() > 0.0:
                mean_pos = (w[:, None] * view.positions).sum(axis=0) / w.sum()
                delta = mean_pos - p
                crosswind = delta - (delta @ upwind) * upwind
                desired = desired + rc.crosswind_gain * crosswind
        elif self._is_stale(i, view):
            # decaying reading means no live contact: the stale value must not
            # drag the anchor upwind, and because it may still win the shared
            # best-detection vote it should regain contact fast, so park at
            # the ring point facing where the team currently senses plume
            downwind = (V / nV if nV > 1e-9 else np.array([1.0, 0.0]))
            w = self._fresh_weights(view, fresh, exclude=i)
            if w.sum() > 0.0:
                toward = (w[:, None] * view.positions).sum(axis=0) / w.sum() - center
                upwind_part = float(toward @ downwind)
                if upwind_part < 0.0:   # never park on the upwind arc
                    toward = toward - upwind_part * downwind
            else:
                toward = downwind
            n = float(np.hypot(*toward))
            u = toward / n if n > 1e-9 else downwind
            goal = center + r_ring * u
            desired = rc.k_radial * (goal - p)
        elif float(np.hypot(*(p - center))) > r_ring + rc.approach_distance:
            desired = center - p
        else:
            # clockwise rotation of the assigned ring slot around the anchor
            omega_orbit = rc.tangential_speed / r_ring
            ang = self._slot_angle[i] - omega_orbit * (view.time - self._trace_t0)
            goal = center + r_ring * np.array([math.cos(ang), math.sin(ang)])
            desired = rc.k_radial * (goal - p)
        for j in range(len(view.positions)):
            if j == i:
                continue
            sep = p - view.positions[j]
            d = float(np.hypot(*sep))
            if 1e-9 < d < band.d_ideal_min:
                desired = desired + (rc.repulsion_gain
                                     * (band.d_ideal_min - d) * sep / d)
        return _heading_control(p, view.headings[i], desired, limits.v_max,
                                rc.k_heading, limits)


def lennard_jones_force(distance: float, cfg: FluxConfig) -> float:
    """Signed radial 12-6 force: positive repulsive, zero at the equilibrium
    distance, smoothly tapered to zero over the last 10% before the cutoff."""
    if distance >= cfg.lj_cutoff:
        return 0.0
    if distance <= 0.0:
        return cfg.lj_force_cap
    sigma = cfg.lj_equilibrium / 2.0 ** (1.0 / 6.0)
    s6 = (sigma / distance) ** 6
    f = 24.0 * cfg.lj_depth * (2.0 * s6 * s6 - s6) / distance
    taper_start = 0.9 * cfg.lj_cutoff
    if distance > taper_start:
        u = (distance - taper_start) / (cfg.lj_cutoff - taper_start)
        f *= 1.0 - u * u * (3.0 - 2.0 * u)   # C1 smoothstep down to zero
    return float(min(max(f, -cfg.lj_force_cap), cfg.lj_force_cap))


def fluxotaxis_vector(i: int, positions: np.ndarray, rho: np.ndarray,
                      wind: np.ndarray, mean_wind: np.ndarray,
                      cfg: FluxConfig) -> np.ndarray:
    """Mass-flux steering vector for agent i.

    Each neighbor j contributes the unit displacement toward j weighted by the
    dot product of that displacement with the neighbor's mass flux rho_j*V_j.
    The sum is negated so the result points upwind of measured flux (toward
    the emitter). Contributions from crosswind-mirrored neighbors cancel; the
    stall fallback for such flat responses lives in the control step, not
    here, so this stays a pure function of the arguments.
    """
    total = np.zeros(2)
    n_valid = 0
    for j in range(len(positions)):
        if j == i:
            continue
        disp = positions[j] - positions[i]
        d = float(np.hypot(*disp))
        if d < 1e-9:
            continue
        flux = rho[j] * wind[j]
        total += (disp @ flux) * (disp / d)
        n_valid += 1
    if n_valid == 0:
        return np.zeros(2)
    return -total


@dataclass
class FluxAgentState:
    p: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).copy()
        self.vel = np.asarray(self.vel, dtype=float).copy()


def step_fluxotaxis(agents: list[FluxAgentState], rho: np.ndarray,
                    wind: np.ndarray, cfg: FluxConfig, dt: float, area):
    """Semi-implicit Euler step of the double-integrator flux agents."""
    positions = np.array([a.p for a in agents])
    mean_wind = wind.mean(axis=0)
    accels = []
    for i, agent in enumerate(agents):
        form = np.zeros(2)
        for j in range(len(agents)):
            if j == i:
                continue
            sep = agent.p - agents[j].p
            d = float(np.hypot(*sep))
            f = lennard_jones_force(d, cfg)
            if d > 1e-9:
                form += f * sep / d
            else:
                form += np.array([f, 0.0])
        flux = fluxotaxis_vector(i, positions, rho, wind, mean_wind, cfg)
        if float(np.hypot(*flux)) < cfg.flux_floor:
            # flat or cancelled flux response: fall back to plain upwind
            # motion while any concentration is present so agents do not stall
            if np.any(rho > 0.0) and float(np.hypot(*mean_wind)) > 0.0:
                flux = -mean_wind / float(np.hypot(*mean_wind))
        accels.append(cfg.formation_gain * form + cfg.flux_gain * flux
                      - cfg.drag * agent.vel)
    for agent, acc in zip(agents, accels):
        agent.vel += dt * acc
        speed = float(np.hypot(*agent.vel))
        if speed > cfg.speed_cap:
            agent.vel *= cfg.speed_cap / speed
        agent.p += dt * agent.vel
        for ax, limit in enumerate(area):
            if agent.p[ax] < 0.0:
                agent.p[ax] = 0.0
                agent.vel[ax] = 0.0
            elif agent.p[ax] >= limit:
                agent.p[ax] = np.nextafter(limit, 0.0)
                agent.vel[ax] = 0.0
    return agents


class FluxotaxisRunner:
    """Full fluxotaxis episode sharing the environment's plume, wind, sensors,
    obstacle motion and collision bookkeeping, with the same seed streams."""

    name = "fluxotaxis"

    def __init__(self, cfg: ScenarioConfig, seed: int, plume_seed: int | None = None,
                 record_trace: bool = False):
        # reuse the environment for world construction and stepping of the
        # shared subsystems; its UAVs are parked and never stepped
        self.env = CpslEnv(cfg, seed, plume_seed=plume_seed)
        self.cfg = cfg
        self.flux = cfg.flux
        start = np.array([u.p for u in self.env.uavs])
        self.agents = [FluxAgentState(p) for p in start]
        self.windows = [SensorWindow(cfg.sensors.tau_m) for _ in start]
        self.sensors = [ChemicalSensor(cfg.sensors.B, cfg.sensors.ch,
                                       cfg.sensors.bias, cfg.sensors.rho_var)
                        for _ in start]
        self.collision_count = {"uav": 0, "obs": 0}
        self.record_trace = record_trace
        self.trace: list[tuple] = []

    def run(self) -> dict:
        env = self.env
        cfg = self.cfg
        dt = env.dt
        bias = cfg.sensors.bias
        for t in range(env.n_steps):
            env.flow.step(env.meander, env.rng_wind)
            release_filaments(env.plume, env.emitter, dt, t)
            advect_filaments(env.plume, env.flow, env.diffusion, dt, env.rng_plume)
            grow_filaments(env.plume, env.emitter.gamma, dt)
            cull_filaments(env.plume, env.area, cfg.plume.cull_margin)
            for o in env.obstacles:
                step_obstacle(o, dt, env.area)

            rho = np.empty(len(self.agents))
            wind = np.empty((len(self.agents), 2))
            for i, agent in enumerate(self.agents):
                raw = concentration_at(env.plume, env._cell_center(agent.p),
                                       env.gas, env.emitter.Q_per_filament)
                measured = self.sensors[i].measure(raw, dt, env.rng_sensor)
                w = env.anemometer.measure(env.flow.sample(agent.p), env.rng_sensor)
                self.windows[i].push(measured, w)
                rho[i] = max(0.0, self.windows[i].rho_avg - bias)
                wind[i] = self.windows[i].wind_avg

            step_fluxotaxis(self.agents, rho, wind, self.flux, dt, env.area)

            positions = np.array([a.p for a in self.agents])
            obs_pos = (np.array([o.p for o in env.obstacles])
                       if env.obstacles else np.zeros((0, 2)))
            for ev in check_collisions(positions, obs_pos, env.geom):
                self.collision_count[ev[0]] += 1
            if self.record_trace:
                centroid = positions.mean(axis=0)
                row = [t + 1, (t + 1) * dt, "flux"]
                for i, a in enumerate(self.agents):
                    row += [a.p[0], a.p[1], 0.0, self.windows[i].rho_avg]
                row += [centroid[0], centroid[1], 0, 0.0, 0.0, 0.0]
                self.trace.append(tuple(row))

        positions = np.array([a.p for a in self.agents])
        centroid = positions.mean(axis=0)
        declared = centroid.copy()
        offset = cfg.declaration.upwind_offset
        if offset > 0.0:
            V = np.array([w.wind_avg for w in self.windows]).mean(axis=0)
            nV = float(np.hypot(*V))
            if nV > 0.0:
                declared = centroid - offset * V / nV
        emitter = np.asarray(cfg.plume.emitter)
        return {
            "declared": declared,
            "centroid": centroid,
            "success": bool(np.hypot(*(declared - emitter))
                            <= cfg.declaration.radius),
            "declared_distance": float(np.hypot(*(declared - emitter))),
            "centroid_distance": float(np.hypot(*(centroid - emitter))),
            "collision_count": dict(self.collision_count),
            "steps": env.n_steps,
            "end_reason": "time_limit",
        }


CONTROLLERS = {
    SeekAndAnchorController.name: SeekAndAnchorController,
    FluxotaxisRunner.name: FluxotaxisRunner,
}
