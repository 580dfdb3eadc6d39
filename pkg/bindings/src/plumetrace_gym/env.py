"""Environment handle: reset/step with flattened observations."""

from __future__ import annotations

import numpy as np

from plumetrace.env import (ENV_SCHEMA_VERSION, CpslEnv, flat_layout_fields,
                            flat_layout_size, flatten_observation)
from plumetrace.scenario import ScenarioConfig, ScenarioError, load_scenario

# pinned to the native environment schema; bump together
LAYOUT_VERSION = ENV_SCHEMA_VERSION


def agent_id(i: int) -> str:
    return f"uav_{i}"


def layout_size(N: int, M: int) -> int:
    return flat_layout_size(N, M)


def layout_fields(N: int, M: int) -> list[str]:
    return flat_layout_fields(N, M)


def layout_doc(N: int, M: int) -> str:
    """Markdown table documenting the flat observation layout, generated from
    the native schema so the two can never drift apart."""
    lines = [f"Flat observation layout v{LAYOUT_VERSION} for N={N} agents, "
             f"M={M} obstacle slots ({layout_size(N, M)} entries):", "",
             "| index | field |", "|---|---|"]
    for k, name in enumerate(layout_fields(N, M)):
        lines.append(f"| {k} | {name} |")
    return "\n".join(lines)


class EpisodeDone(RuntimeError):
    """step() called after the episode terminated."""


class PlumeTraceEnv:
    """One episode stream over the native environment."""

    def __init__(self, scenario, raw_actions: bool = False,
                 include_state: bool = False):
        if isinstance(scenario, ScenarioConfig):
            self._cfg = scenario.copy()
        elif isinstance(scenario, dict):
            self._cfg = ScenarioConfig.from_dict(scenario)
        else:
            self._cfg = load_scenario(scenario)
        self.raw_actions = raw_actions
        self.include_state = include_state
        self._env: CpslEnv | None = None
        self.n_agents = self._cfg.uav.N
        self.n_obstacle_slots = self._cfg.obstacles.M
        self.observation_size = layout_size(self.n_agents, self.n_obstacle_slots)
        self.agent_ids = [agent_id(i) for i in range(self.n_agents)]

    # -- episode control --------------------------------------------------------

    def reset(self, seed: int) -> dict[str, np.ndarray]:
        self._env = CpslEnv(self._cfg, seed=int(seed))
        return self._flatten(self._env.observations())

    def step(self, actions: dict):
        if self._env is None:
            raise RuntimeError("reset() must be called before step()")
        if self._env.done:
            raise EpisodeDone("episode already terminated; call reset()")
        joint = [self._map_action(actions[agent_id(i)])
                 for i in range(self.n_agents)]
        obs, rewards, done, info = self._env.step(joint)
        obs_dict = self._flatten(obs)
        reward_dict = {agent_id(i): float(rewards[i])
                       for i in range(self.n_agents)}
        info_out = {
            "t": info["t"],
            "phase": info["phase"],
            "anchor_established": info["anchor_established"],
            "anchor_position": (None if info["anchor_position"] is None
                                else np.asarray(info["anchor_position"])),
            "collisions": info["collisions"],
        }
        if done:
            info_out.update(reason=info["reason"],
                            declared=np.asarray(info["declared"]),
                            success=info["success"])
        if self.include_state:
            info_out["state"] = {
                agent_id(i): np.array([u.p[0], u.p[1], u.theta, u.v, u.omega])
                for i, u in enumerate(self._env.uavs)}
        return obs_dict, reward_dict, bool(done), info_out

    def close(self):
        self._env = None

    # -- helpers ------------------------------------------------------------------

    def _map_action(self, action) -> tuple[float, float]:
        a = np.asarray(action, dtype=float)
        if self.raw_actions:
            return float(a[0]), float(a[1])
        u = self._cfg.uav
        a = np.clip(a, -1.0, 1.0)
        v = u.v_min + 0.5 * (a[0] + 1.0) * (u.v_max - u.v_min)
        omega = u.omega_min + 0.5 * (a[1] + 1.0) * (u.omega_max - u.omega_min)
        return float(v), float(omega)

    def _flatten(self, observations) -> dict[str, np.ndarray]:
        return {agent_id(i): flatten_observation(o)
                for i, o in enumerate(observations)}

    @property
    def done(self) -> bool:
        return self._env is not None and self._env.done


def make_env(scenario, raw_actions: bool = False,
             include_state: bool = False) -> PlumeTraceEnv:
    """Build a handle from a scenario path, bundled name, config object or dict."""
    return PlumeTraceEnv(scenario, raw_actions=raw_actions,
                         include_state=include_state)
