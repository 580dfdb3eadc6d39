"""Scenario configuration: schema, strict loading, echo, bundled registry.

A scenario file is a nested JSON object, one section per subsystem. Loading
rejects unknown sections and keys, validates value ranges and the explicit
flow-solver stability bounds, and materializes every default so the echoed
config is complete. An optional "_units" block, when present, must match the
canonical unit annotations below.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file failed validation; message names the offending key."""


@dataclass
class AreaConfig:
    X: float = 200.0                 # m
    Y: float = 200.0                 # m
    cell_size: float = 2.0           # m, concentration/wind lookup cells
    flow_cell_size: float = 20.0     # m, flow-solver grid (coarser for stability)


@dataclass
class WindConfig:
    mean: tuple = (1.0, 0.0)         # m/s
    a: float = 0.005                 # meander filter coefficient
    b: float = 0.02                  # meander filter coefficient
    G: float = 1.0                   # meander filter gain
    Kx: float = 1000.0               # m^2/s
    Ky: float = 1000.0               # m^2/s
    upwind_advection: bool = False

    def __post_init__(self):
        self.mean = tuple(float(v) for v in self.mean)


@dataclass
class PlumeConfig:
    emitter: tuple = (80.0, 60.0)    # m
    Nf: float = 50.0                 # filaments/s
    Qbar: float = 1.967243976e21     # molecules/s
    R0: float = 1.0                  # cm
    gamma: float = 0.1               # cm/s
    sigma_vm: tuple = (2.0, 2.0)     # m/s/sqrt(Hz)
    cull_margin: float = 20.0        # m
    precompute: bool = False

    def __post_init__(self):
        self.emitter = tuple(float(v) for v in self.emitter)
        self.sigma_vm = tuple(float(v) for v in self.sigma_vm)


@dataclass
class GasConfig:
    P: float = 101325.0              # Pa
    T: float = 288.0                 # K
    k: float = 6.02214076e23         # 1/mol
    Rgas: float = 8.31446            # J/(mol K)


@dataclass
class SensorConfig:
    B: float = 0.1                   # chemical sensor filter bandwidth
    ch: float = 1e-4                 # detector threshold, ppm
    bias: float = 1.98               # ppm
    rho_var: float = 0.005           # ppm^2
    wind_var: float = 0.01           # (m/s)^2 per axis
    tau_m: int = 20                  # moving-average window, samples


@dataclass
class UavConfig:
    N: int = 3
    v_min: float = 0.0               # m/s
    v_max: float = 3.0               # m/s
    omega_min: float = -math.pi / 2  # rad/s
    omega_max: float = math.pi / 2   # rad/s
    r_u: float = 0.3                 # m
    altitude: float = 2.0            # m, constant


@dataclass
class ObstacleConfig:
    M: int = 5
    r_o: float = 0.5                 # m
    speed: float = 1.0               # m/s


@dataclass
class CollisionConfig:
    r_s: float = 20.0                # sensing radius, m
    epsilon: float = 1.0             # safety distance, m


@dataclass
class EpisodeConfig:
    T: float = 160.0                 # s
    dt: float = 0.05                 # s

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class DetectionConfig:
    rho_th: float = 0.52             # ppm, on bias-corrected averaged readings
    beta_max: float = 90.0           # deg, upwind acceptance half-angle


@dataclass
class RewardConfig:
    alpha_d: float = 1.0
    alpha_theta: float = 1.0
    alpha_col: float = 1.0
    alpha_plume: float = 1.0
    alpha_upwind: float = 1.0
    r_in: float = 0.1
    k_d1: float = 0.05
    d_ideal_min: float = 2.0         # m
    d_ideal_max: float = 8.0         # m
    k_theta1: float = 0.5
    k_theta2: float = 0.5
    k_col_uav: float = 10.0
    k_col_obs: float = 10.0
    eta: float = 0.01
    gamma_discount: float = 0.99
    d_max: float = 0.0               # m; materialized to the area diagonal

    def __post_init__(self):
        if not self.d_ideal_min < self.d_ideal_max:
            raise ScenarioError("reward.d_ideal_min must be below reward.d_ideal_max")


@dataclass
class DeclarationConfig:
    radius: float = 4.0              # m, success region around the emitter
    centroid_window: float = 12.0    # s; must outlast normal plume-contact gaps
    centroid_tolerance: float = 1.0  # m
    upwind_offset: float = 0.0       # m, applied along -wind at declaration


@dataclass
class StartConfig:
    mode: str = "random"             # "random" | "fixed"
    region: tuple = ()               # (xmin, xmax, ymin, ymax); default downwind third
    fixed_center: tuple = (130.0, 60.0)
    spacing: float = 10.0            # inter-agent x spacing at start, m
    exclusion_radius: float = 20.0   # m around the emitter

    def __post_init__(self):
        if self.mode not in ("random", "fixed"):
            raise ScenarioError("start.mode must be 'random' or 'fixed'")
        self.region = tuple(float(v) for v in self.region)
        self.fixed_center = tuple(float(v) for v in self.fixed_center)


@dataclass
class SeekConfig:
    speed_fraction: float = 1.0      # sweep speed as a fraction of v_max
    boundary_margin: float = 5.0     # m, reversal distance from the y edges
    entry_x: float = 130.0           # m, sweep line converges here before drifting
    upwind_drift: float = 0.35      # m/s drift of the sweep line toward -wind
    min_sweep_x: float = 20.0        # m, drift floor
    k_heading: float = 4.0


@dataclass
class RingConfig:
    """Anchor-following heuristic: one fresh detector surges upwind while the
    rest orbit a ring around the anchor, clockwise.

    The anchor rides the surging agent step by step, which is what moves it
    toward the emitter. The staleness test guards against the slow sensor
    filter: a reading that decays at the filter rate for a full window means
    the agent lost live plume contact, so it stops surging and rejoins the
    ring before it can drag the anchor past the plume head.
    """

    k_radial: float = 1.5
    tangential_speed: float = 2.2    # m/s
    approach_distance: float = 10.0  # m; beyond this, head straight at the anchor
    repulsion_gain: float = 20.0     # dominates the slot pull inside d_ideal_min
    k_heading: float = 4.0
    surge_speed_fraction: float = 1.0  # surge speed as a fraction of v_max
    crosswind_gain: float = 0.8      # 1/s pull toward the detection-weighted mean
    surge_leash: float = 25.0        # m; sanity bound on the surge excursion
    surge_slow_lo: float = 10.0      # ppm; readings above start slowing the surge
    surge_slow_hi: float = 30.0      # ppm; fully slowed at/above this reading
    surge_slow_frac: float = 0.35    # slowed surge speed fraction
    ring_downwind_bias: float = 0.0  # m; ring sits downwind of the anchor,
                                     # cancelling the surge turnaround overshoot
    pulse_eps: float = 0.05          # ppm rise in the window mean marking contact
    contact_memory: float = 15.0     # s of remembered contact locations
    stale_window: int = 14           # steps over which the decay test runs
    stale_decay_ratio: float = 0.95  # reading decayed below this fraction -> stale
    recovery_growth: float = 0.5     # m/s ring expansion while contact is lost
    recovery_max_radius: float = 16.0  # m cap for the recovery cast


@dataclass
class FluxConfig:
    lj_depth: float = 0.5
    lj_equilibrium: float = 6.0      # m
    lj_cutoff: float = 20.0          # m
    lj_force_cap: float = 50.0
    formation_gain: float = 10.0
    flux_gain: float = 1.0
    drag: float = 1.0
    speed_cap: float = 3.0           # m/s
    flux_floor: float = 1e-9         # below this, fall back to mean upwind


@dataclass
class RandomizationConfig:
    share_plume: bool = False        # one plume realization for the whole batch


_SECTIONS = {
    "area": AreaConfig,
    "wind": WindConfig,
    "plume": PlumeConfig,
    "gas": GasConfig,
    "sensors": SensorConfig,
    "uav": UavConfig,
    "obstacles": ObstacleConfig,
    "collision": CollisionConfig,
    "episode": EpisodeConfig,
    "detection": DetectionConfig,
    "reward": RewardConfig,
    "declaration": DeclarationConfig,
    "start": StartConfig,
    "seek": SeekConfig,
    "ring": RingConfig,
    "flux": FluxConfig,
    "randomization": RandomizationConfig,
}

# canonical unit annotations; a scenario's "_units" block must match these
UNITS = {
    "area.X": "m", "area.Y": "m", "area.cell_size": "m", "area.flow_cell_size": "m",
    "wind.mean": "m/s", "wind.Kx": "m^2/s", "wind.Ky": "m^2/s",
    "plume.emitter": "m", "plume.Nf": "filaments/s", "plume.Qbar": "molecules/s",
    "plume.R0": "cm", "plume.gamma": "cm/s", "plume.sigma_vm": "m/s/sqrt(Hz)",
    "plume.cull_margin": "m",
    "gas.P": "Pa", "gas.T": "K", "gas.k": "1/mol", "gas.Rgas": "J/(mol K)",
    "sensors.bias": "ppm", "sensors.rho_var": "ppm^2", "sensors.wind_var": "(m/s)^2",
    "sensors.tau_m": "samples",
    "uav.v_min": "m/s", "uav.v_max": "m/s", "uav.omega_min": "rad/s",
    "uav.omega_max": "rad/s", "uav.r_u": "m", "uav.altitude": "m",
    "obstacles.r_o": "m", "obstacles.speed": "m/s",
    "collision.r_s": "m", "collision.epsilon": "m",
    "episode.T": "s", "episode.dt": "s",
    "detection.rho_th": "ppm", "detection.beta_max": "deg",
    "reward.d_ideal_min": "m", "reward.d_ideal_max": "m", "reward.d_max": "m",
    "declaration.radius": "m", "declaration.centroid_window": "s",
    "declaration.centroid_tolerance": "m", "declaration.upwind_offset": "m",
    "start.spacing": "m", "start.exclusion_radius": "m",
    "seek.upwind_drift": "m/s", "seek.boundary_margin": "m", "seek.min_sweep_x": "m",
    "seek.entry_x": "m",
    "ring.tangential_speed": "m/s", "ring.approach_distance": "m",
    "ring.stale_window": "steps", "ring.recovery_growth": "m/s",
    "ring.recovery_max_radius": "m", "ring.surge_leash": "m",
    "ring.surge_slow_lo": "ppm", "ring.surge_slow_hi": "ppm",
    "ring.ring_downwind_bias": "m", "ring.pulse_eps": "ppm",
    "ring.contact_memory": "s",
    "flux.lj_equilibrium": "m", "flux.lj_cutoff": "m", "flux.speed_cap": "m/s",
}


@dataclass
class ScenarioConfig:
    name: str = "default"
    controller: str = "seek+anchor_heuristic"
    area: AreaConfig = field(default_factory=AreaConfig)
    wind: WindConfig = field(default_factory=WindConfig)
    plume: PlumeConfig = field(default_factory=PlumeConfig)
    gas: GasConfig = field(default_factory=GasConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    uav: UavConfig = field(default_factory=UavConfig)
    obstacles: ObstacleConfig = field(default_factory=ObstacleConfig)
    collision: CollisionConfig = field(default_factory=CollisionConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    declaration: DeclarationConfig = field(default_factory=DeclarationConfig)
    start: StartConfig = field(default_factory=StartConfig)
    seek: SeekConfig = field(default_factory=SeekConfig)
    ring: RingConfig = field(default_factory=RingConfig)
    flux: FluxConfig = field(default_factory=FluxConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)

    def __post_init__(self):
        self.materialize()
        self.validate()

    def materialize(self):
        """Fill the derived defaults that depend on other sections."""
        if self.reward.d_max == 0.0:
            self.reward.d_max = math.hypot(self.area.X, self.area.Y)
        if not self.start.region:
            # downwind third of the area (mean wind is +x in every scenario here)
            self.start.region = (2.0 * self.area.X / 3.0, self.area.X - 5.0,
                                 5.0, self.area.Y - 5.0)

    def validate(self):
        def positive(key, value):
            if not value > 0:
                raise ScenarioError(f"{key} must be positive, got {value}")

        positive("area.X", self.area.X)
        positive("area.Y", self.area.Y)
        positive("area.cell_size", self.area.cell_size)
        positive("area.flow_cell_size", self.area.flow_cell_size)
        positive("episode.dt", self.episode.dt)
        positive("episode.T", self.episode.T)
        positive("plume.Nf", self.plume.Nf)
        positive("plume.R0", self.plume.R0)
        positive("plume.gamma", self.plume.gamma)
        positive("sensors.tau_m", self.sensors.tau_m)
        positive("uav.N", self.uav.N)
        if self.obstacles.M < 0:
            raise ScenarioError("obstacles.M must be non-negative")
        if self.plume.sigma_vm[0] < 0 or self.plume.sigma_vm[1] < 0:
            raise ScenarioError("plume.sigma_vm entries must be non-negative")
        if self.uav.v_min >= self.uav.v_max:
            raise ScenarioError("uav.v_min must be below uav.v_max")
        if not 0.0 < self.detection.beta_max <= 180.0:
            raise ScenarioError("detection.beta_max must be in (0, 180] degrees")
        if not 0.0 <= self.reward.gamma_discount <= 1.0:
            raise ScenarioError("reward.gamma_discount must be in [0, 1]")
        if abs(self.reward.d_max - math.hypot(self.area.X, self.area.Y)) > 1e-6:
            raise ScenarioError("reward.d_max must equal the search-area diagonal")
        for key in ("radius", "centroid_window", "centroid_tolerance"):
            positive(f"declaration.{key}", getattr(self.declaration, key))
        if self.declaration.upwind_offset < 0:
            raise ScenarioError("declaration.upwind_offset must be non-negative")
        if self.flux.lj_equilibrium >= self.flux.lj_cutoff:
            raise ScenarioError("flux.lj_equilibrium must be below flux.lj_cutoff")
        if self.flux.formation_gain <= 0 or self.flux.flux_gain <= 0:
            raise ScenarioError("flux gains must be positive")
        # explicit flow-solver stability bounds, checked at load time so a bad
        # combination fails before any episode starts
        vmax = max(abs(v) for v in self.wind.mean)
        adv = self.episode.dt * vmax / self.area.flow_cell_size
        if adv >= 1.0:
            raise ScenarioError(
                f"advective CFL violated (episode.dt, wind.mean, area.flow_cell_size):"
                f" dt*|v|/dx = {adv:.3g} >= 1")
        dif = (self.episode.dt * max(self.wind.Kx, self.wind.Ky)
               / self.area.flow_cell_size ** 2)
        if dif >= 0.25:
            raise ScenarioError(
                f"diffusive stability violated (episode.dt, wind.Kx/Ky, "
                f"area.flow_cell_size): dt*K/dx^2 = {dif:.3g} >= 0.25")

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "name": self.name,
               "controller": self.controller}
        for section, cls in _SECTIONS.items():
            obj = getattr(self, section)
            out[section] = {f.name: _jsonable(getattr(obj, f.name))
                            for f in fields(cls)}
        out["_units"] = dict(UNITS)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        data = dict(data)
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema_version {version}")
        units = data.pop("_units", None)
        if units is not None:
            for key, unit in units.items():
                if key not in UNITS:
                    raise ScenarioError(f"unknown unit annotation key: {key}")
                if unit != UNITS[key]:
                    raise ScenarioError(
                        f"unit mismatch for {key}: expected {UNITS[key]}, got {unit}")
        kwargs = {"name": data.pop("name", "unnamed"),
                  "controller": data.pop("controller", "seek+anchor_heuristic")}
        for section, seccls in _SECTIONS.items():
            raw = data.pop(section, None)
            if raw is None:
                kwargs[section] = seccls()
                continue
            allowed = {f.name for f in fields(seccls)}
            unknown = set(raw) - allowed
            if unknown:
                raise ScenarioError(
                    f"unknown key(s) in section '{section}': {sorted(unknown)}")
            try:
                kwargs[section] = seccls(**raw)
            except TypeError as exc:
                raise ScenarioError(f"bad value in section '{section}': {exc}") from exc
        if data:
            raise ScenarioError(f"unknown section(s): {sorted(data)}")
        return cls(**kwargs)

    def copy(self) -> "ScenarioConfig":
        return ScenarioConfig.from_dict(self.to_dict())


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def load_scenario(path_or_name) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    path = str(path_or_name)
    if path in BUNDLED_SCENARIOS:
        text = (resources.files("plumetrace.scenarios")
                .joinpath(BUNDLED_SCENARIOS[path]).read_text())
    else:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario '{path}': {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario '{path}' is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_dict(data)


def save_scenario(cfg: ScenarioConfig, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# bundled test matrix: {no, small, medium} meander x two emitter locations
BUNDLED_SCENARIOS = {
    "no_meander_80_60": "no_meander_80_60.json",
    "no_meander_60_120": "no_meander_60_120.json",
    "small_meander_80_60": "small_meander_80_60.json",
    "small_meander_60_120": "small_meander_60_120.json",
    "medium_meander_80_60": "medium_meander_80_60.json",
    "medium_meander_60_120": "medium_meander_60_120.json",
    # short aliases
    "no_80_60": "no_meander_80_60.json",
    "no_60_120": "no_meander_60_120.json",
    "small_80_60": "small_meander_80_60.json",
    "small_60_120": "small_meander_60_120.json",
    "medium_80_60": "medium_meander_80_60.json",
    "medium_60_120": "medium_meander_60_120.json",
}

TEST_MATRIX = [
    ("no_meander_80_60", (80.0, 60.0), 1.0),
    ("no_meander_60_120", (60.0, 120.0), 1.0),
    ("small_meander_80_60", (80.0, 60.0), 3.0),
    ("small_meander_60_120", (60.0, 120.0), 3.0),
    ("medium_meander_80_60", (80.0, 60.0), 5.0),
    ("medium_meander_60_120", (60.0, 120.0), 5.0),
]


def build_bundled_scenario(name: str) -> ScenarioConfig:
    """Construct one of the six test-matrix scenarios programmatically."""
    for sname, emitter, G in TEST_MATRIX:
        if sname == name:
            cfg = ScenarioConfig(name=sname)
            cfg.plume.emitter = emitter
            cfg.wind.G = G
            return cfg
    raise ScenarioError(f"unknown bundled scenario: {name}")
