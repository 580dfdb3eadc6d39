"""Batch experiment runner: seeded episodes, metrics aggregation, file export.

Episodes are keyed by seed (seed_base + index) and the per-episode seed is
split into independent plume/wind/obstacle/start/sensor streams, so one
randomization axis can be varied while the others stay fixed. Batches are
embarrassingly parallel; aggregation is a deterministic fold over seed-ordered
results. Exported metrics JSON and trajectory CSVs contain no timestamps so
re-running the same (scenario, controller, seed) reproduces them byte for
byte; wall-clock statistics go to a separate timing file.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import CONTROLLERS, FluxotaxisRunner, SeekAndAnchorController
from .env import CpslEnv, compute_return
from .plume import (PlumeTable, PlumeTableWriter, advect_filaments,
                    candidate_cells, concentration_at, cull_filaments,
                    grow_filaments, release_filaments)
from .scenario import (BUNDLED_SCENARIOS, TEST_MATRIX, ScenarioConfig,
                       build_bundled_scenario, load_scenario)

RESULTS_SCHEMA_VERSION = 1


@dataclass
class EpisodeResult:
    seed: int
    controller: str
    scenario: str
    steps: int
    end_reason: str
    declared: tuple
    declared_distance: float
    centroid_distance: float
    success: bool
    collisions_uav: int
    collisions_obs: int
    anchor_updates: int
    reward_sums: list = field(default_factory=list)
    reward_components: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    trace: list = field(default_factory=list)
    trace_header: list = field(default_factory=list)
    anchor_events: list = field(default_factory=list)
    flow_snapshots: list = field(default_factory=list)

    def record(self) -> dict:
        """Deterministic per-episode record for the metrics file."""
        return {
            "seed": self.seed,
            "steps": self.steps,
            "end_reason": self.end_reason,
            "declared": [round(v, 12) for v in self.declared],
            "declared_distance": self.declared_distance,
            "centroid_distance": self.centroid_distance,
            "success": self.success,
            "collisions_uav": self.collisions_uav,
            "collisions_obs": self.collisions_obs,
            "anchor_updates": self.anchor_updates,
            "reward_sums": self.reward_sums,
        }


@dataclass
class BatchResult:
    scenario: ScenarioConfig
    controller: str
    seed_base: int
    episodes: list
    wall_seconds: float = 0.0

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / len(self.episodes)

    @property
    def mean_error_all(self) -> float:
        return float(np.mean([e.declared_distance for e in self.episodes]))

    @property
    def mean_error_success(self) -> float | None:
        errs = [e.declared_distance for e in self.episodes if e.success]
        return float(np.mean(errs)) if errs else None

    @property
    def sorted_distances(self) -> list[float]:
        return sorted(e.declared_distance for e in self.episodes)

    def metrics_dict(self) -> dict:
        return {
            "schema_version": RESULTS_SCHEMA_VERSION,
            "scenario": self.scenario.name,
            "controller": self.controller,
            "seed_base": self.seed_base,
            "n_episodes": self.n_episodes,
            "success_rate": self.success_rate,
            "mean_error_all": self.mean_error_all,
            "mean_error_success": self.mean_error_success,
            "median_error": float(np.median(self.sorted_distances)),
            "episodes": [e.record() for e in self.episodes],
        }


def run_episode(cfg: ScenarioConfig, controller_name: str, seed: int,
                plume_seed: int | None = None, record_trace: bool = False,
                record_flow_every: int = 0, plume_table=None) -> EpisodeResult:
    """Execute one full episode with the named controller."""
    if controller_name not in CONTROLLERS:
        raise ValueError(f"unknown controller '{controller_name}' "
                         f"(available: {sorted(CONTROLLERS)})")
    t0 = time.perf_counter()
    if controller_name == FluxotaxisRunner.name:
        runner = FluxotaxisRunner(cfg, seed, plume_seed=plume_seed,
                                  record_trace=record_trace)
        summary = runner.run()
        return EpisodeResult(
            seed=seed, controller=controller_name, scenario=cfg.name,
            steps=summary["steps"], end_reason=summary["end_reason"],
            declared=tuple(summary["declared"]),
            declared_distance=summary["declared_distance"],
            centroid_distance=summary["centroid_distance"],
            success=summary["success"],
            collisions_uav=summary["collision_count"]["uav"],
            collisions_obs=summary["collision_count"]["obs"],
            anchor_updates=0, reward_sums=[],
            wall_seconds=time.perf_counter() - t0,
            trace=runner.trace,
            trace_header=runner.env.trace_header())

    if plume_table is None and cfg.plume.precompute:
        import tempfile
        fd, tmp = tempfile.mkstemp(suffix=".plt")
        os.close(fd)
        try:
            generate_plume_table(
                cfg, plume_seed if plume_seed is not None else seed, tmp)
            plume_table = PlumeTable(tmp)
        finally:
            os.unlink(tmp)

    env = CpslEnv(cfg, seed, plume_seed=plume_seed, plume_table=plume_table,
                  record_trace=record_trace, record_flow_every=record_flow_every)
    controller = SeekAndAnchorController(cfg)
    controller.reset(env.current_view())
    done = False
    while not done:
        actions = controller.act(env.current_view(), env.limits)
        _, _, done, info = env.step(actions)
    emitter = np.asarray(cfg.plume.emitter)
    declared_distance = float(np.hypot(*(np.asarray(env.declared) - emitter)))
    components = {k: [float(x) for x in v]
                  for k, v in env.reward_component_sums.items()}
    return EpisodeResult(
        seed=seed, controller=controller_name, scenario=cfg.name,
        steps=env.t, end_reason=env.end_reason,
        declared=tuple(float(x) for x in env.declared),
        declared_distance=declared_distance,
        centroid_distance=env.centroid_distance_to_emitter,
        success=env.success,
        collisions_uav=env.collision_count["uav"],
        collisions_obs=env.collision_count["obs"],
        anchor_updates=len(env.anchor_events),
        reward_sums=[float(x) for x in env.reward_sums],
        reward_components=components,
        wall_seconds=time.perf_counter() - t0,
        trace=env.trace, trace_header=env.trace_header(),
        anchor_events=[{k: (v.tolist() if isinstance(v, np.ndarray) else v)
                        for k, v in ev.items()} for ev in env.anchor_events],
        flow_snapshots=env.flow_snapshots)


def _episode_task(args):
    cfg_dict, controller, seed, plume_seed, record_trace = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    return run_episode(cfg, controller, seed, plume_seed=plume_seed,
                       record_trace=record_trace)


def run_batch(cfg: ScenarioConfig, controller_name: str, n_episodes: int,
              seed_base: int, workers: int = 1,
              record_traces: bool = False) -> BatchResult:
    """Run n seeded episodes; results are ordered by seed, not completion."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    seeds = [seed_base + k for k in range(n_episodes)]
    share = cfg.randomization.share_plume
    plume_seeds = [seed_base if share else None for _ in seeds]
    t0 = time.perf_counter()
    if workers <= 1:
        episodes = [run_episode(cfg, controller_name, s, plume_seed=ps,
                                record_trace=record_traces)
                    for s, ps in zip(seeds, plume_seeds)]
    else:
        tasks = [(cfg.to_dict(), controller_name, s, ps, record_traces)
                 for s, ps in zip(seeds, plume_seeds)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            episodes = list(pool.map(_episode_task, tasks))
    episodes.sort(key=lambda e: e.seed)
    return BatchResult(cfg, controller_name, seed_base, episodes,
                       wall_seconds=time.perf_counter() - t0)


# -- export ---------------------------------------------------------------------


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export_results(batch: BatchResult, out_dir, export_trajectories: bool = False,
                   export_flow: bool = False) -> list[str]:
    """Write metrics, CDF, config echo, timing, and optional per-episode files.

    Everything except timing.json is byte-deterministic for a fixed
    (scenario, controller, seed).
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    metrics_path = os.path.join(out_dir, "metrics.json")
    _write_json(metrics_path, batch.metrics_dict())
    written.append(metrics_path)

    cdf_path = os.path.join(out_dir, "cdf.csv")
    dists = batch.sorted_distances
    n = len(dists)
    with open(cdf_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["final_distance_m", "empirical_quantile"])
        for k, d in enumerate(dists):
            w.writerow([repr(d), repr((k + 1) / n)])
    written.append(cdf_path)

    echo_path = os.path.join(out_dir, "scenario_echo.json")
    _write_json(echo_path, batch.scenario.to_dict())
    written.append(echo_path)

    timing_path = os.path.join(out_dir, "timing.json")
    _write_json(timing_path, {
        "note": "wall-clock statistics; excluded from the determinism contract",
        "total_seconds": batch.wall_seconds,
        "mean_episode_seconds": float(np.mean([e.wall_seconds
                                               for e in batch.episodes])),
        "max_episode_seconds": float(max(e.wall_seconds for e in batch.episodes)),
    })
    written.append(timing_path)

    if export_trajectories:
        traj_dir = os.path.join(out_dir, "trajectories")
        os.makedirs(traj_dir, exist_ok=True)
        for ep in batch.episodes:
            if not ep.trace:
                continue
            path = os.path.join(traj_dir, f"episode_{ep.seed}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(ep.trace_header)
                for row in ep.trace:
                    w.writerow([v if isinstance(v, (str, int)) else
                                repr(float(v)) for v in row])
            written.append(path)

    if export_flow:
        flow_dir = os.path.join(out_dir, "flowfield")
        os.makedirs(flow_dir, exist_ok=True)
        for ep in batch.episodes:
            if not ep.flow_snapshots:
                continue
            path = os.path.join(flow_dir, f"episode_{ep.seed}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["step", "cell_i", "cell_j", "v1", "v2"])
                for step, v1, v2 in ep.flow_snapshots:
                    nx, ny = v1.shape
                    for i in range(nx):
                        for j in range(ny):
                            w.writerow([step, i, j, repr(float(v1[i, j])),
                                        repr(float(v2[i, j]))])
            written.append(path)

    return written


def recompute_aggregates(metrics_path) -> dict:
    """Re-derive the batch aggregates from the exported per-episode records."""
    with open(metrics_path) as fh:
        data = json.load(fh)
    eps = data["episodes"]
    succ = [e for e in eps if e["success"]]
    return {
        "success_rate": len(succ) / len(eps),
        "mean_error_all": float(np.mean([e["declared_distance"] for e in eps])),
        "mean_error_success": (float(np.mean([e["declared_distance"]
                                              for e in succ])) if succ else None),
        "median_error": float(np.median(sorted(e["declared_distance"]
                                               for e in eps))),
    }


# -- plume precompute --------------------------------------------------------------


def generate_plume_table(cfg: ScenarioConfig, seed: int, path,
                         n_steps: int | None = None):
    """Pre-simulate the plume and store per-step cell concentrations.

    Uses the same seed streams the live environment would, and evaluates the
    same concentration function at the same cell centres, so sensor streams
    from the table match live simulation exactly. Only cells within the
    filaments' numerical support are stored; everything else reads zero.
    """
    from .env import AXIS_PLUME, AXIS_WIND, stream_rng
    from .flowfield import ColoredNoiseState, DiffusionSpec, FlowGrid
    from .plume import EmitterSpec, GasConstants, PlumeState

    n_steps = n_steps or cfg.episode.n_steps
    rng_plume = stream_rng(seed, AXIS_PLUME)
    rng_wind = stream_rng(seed, AXIS_WIND)
    flow = FlowGrid(cfg.wind.mean, (cfg.area.X, cfg.area.Y),
                    cfg.area.flow_cell_size, cfg.wind.Kx, cfg.wind.Ky,
                    cfg.episode.dt, upwind_advection=cfg.wind.upwind_advection)
    meander = (ColoredNoiseState(cfg.wind.a, cfg.wind.b, cfg.wind.G, cfg.episode.dt)
               if cfg.wind.G != 0.0 else None)
    diffusion = DiffusionSpec(*cfg.plume.sigma_vm)
    emitter = EmitterSpec(cfg.plume.emitter, cfg.plume.Nf, cfg.plume.Qbar,
                          cfg.plume.R0, cfg.plume.gamma)
    gas = GasConstants(cfg.gas.P, cfg.gas.T, cfg.gas.k, cfg.gas.Rgas)
    plume = PlumeState()
    cs = cfg.area.cell_size
    ncy = int(round(cfg.area.Y / cs))
    area = (cfg.area.X, cfg.area.Y)
    header = {"grid": {"cell_size": cs, "X": cfg.area.X, "Y": cfg.area.Y},
              "dt": cfg.episode.dt, "seed": seed, "n_steps": n_steps,
              "emitter": {"position": list(cfg.plume.emitter), "Nf": cfg.plume.Nf,
                          "Qbar": cfg.plume.Qbar, "R0": cfg.plume.R0,
                          "gamma": cfg.plume.gamma}}
    with PlumeTableWriter(path, header) as writer:
        for t in range(n_steps):
            flow.step(meander, rng_wind)
            release_filaments(plume, emitter, cfg.episode.dt, t)
            advect_filaments(plume, flow, diffusion, cfg.episode.dt, rng_plume)
            grow_filaments(plume, emitter.gamma, cfg.episode.dt)
            cull_filaments(plume, area, cfg.plume.cull_margin)
            cells = candidate_cells(plume, cs, area)
            ppm = np.empty(len(cells))
            for k, flat in enumerate(cells):
                i, j = divmod(int(flat), ncy)
                center = np.array([(i + 0.5) * cs, (j + 0.5) * cs])
                ppm[k] = concentration_at(plume, center, gas,
                                          emitter.Q_per_filament)
            keep = ppm != 0.0
            writer.write_step(t + 1, cells[keep], ppm[keep])
    return path


def export_filament_trace(cfg: ScenarioConfig, seed: int, path,
                          every: int = 20, n_steps: int | None = None):
    """Dump filament positions per sampled frame for the animation pipeline."""
    from .env import AXIS_PLUME, AXIS_WIND, stream_rng
    from .flowfield import ColoredNoiseState, DiffusionSpec, FlowGrid
    from .plume import EmitterSpec, PlumeState

    n_steps = n_steps or cfg.episode.n_steps
    rng_plume = stream_rng(seed, AXIS_PLUME)
    rng_wind = stream_rng(seed, AXIS_WIND)
    flow = FlowGrid(cfg.wind.mean, (cfg.area.X, cfg.area.Y),
                    cfg.area.flow_cell_size, cfg.wind.Kx, cfg.wind.Ky,
                    cfg.episode.dt, upwind_advection=cfg.wind.upwind_advection)
    meander = (ColoredNoiseState(cfg.wind.a, cfg.wind.b, cfg.wind.G, cfg.episode.dt)
               if cfg.wind.G != 0.0 else None)
    diffusion = DiffusionSpec(*cfg.plume.sigma_vm)
    emitter = EmitterSpec(cfg.plume.emitter, cfg.plume.Nf, cfg.plume.Qbar,
                          cfg.plume.R0, cfg.plume.gamma)
    plume = PlumeState()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "filament", "x", "y", "radius_cm"])
        for t in range(n_steps):
            flow.step(meander, rng_wind)
            release_filaments(plume, emitter, cfg.episode.dt, t)
            advect_filaments(plume, flow, diffusion, cfg.episode.dt, rng_plume)
            grow_filaments(plume, emitter.gamma, cfg.episode.dt)
            cull_filaments(plume, (cfg.area.X, cfg.area.Y), cfg.plume.cull_margin)
            if (t + 1) % every == 0:
                for f in range(plume.F):
                    w.writerow([t + 1, f, repr(plume.positions[f, 0]),
                                repr(plume.positions[f, 1]),
                                repr(plume.radii[f])])
    return path
