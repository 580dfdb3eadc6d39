"""Filament-based plume: release, transport, growth, point concentration, sensors.

The plume is a set of Gaussian puffs ("filaments"), each carrying a fixed
molecule budget Q and a radius that grows linearly in time. The point
concentration in ppm is

    ppm(p) = sum_f  Q / (sqrt(8 pi^3) R_f^3) * exp(-|p - p_f|^2 / R_f^2) * 1e6 / N0

evaluated in cgs units: radii and distances in cm, N0 in molecules/cm^3 with
N0 = P*k/(T*Rgas) computed in molecules/m^3 and scaled by 1e-6. Positions are
carried in metres everywhere else; only this formula converts to cm.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

SQRT_8_PI3 = math.sqrt(8.0 * math.pi ** 3)

# exp(-x) underflows to exactly 0.0 beyond x ~ 745.13; a filament cannot
# contribute to points farther than sqrt(745.14)*R, used to bound table support
_UNDERFLOW_DIST_FACTOR = math.sqrt(745.14)


@dataclass
class GasConstants:
    """Ambient gas state; the number density N0 is always derived, never stored."""

    P: float = 101325.0            # Pa
    T: float = 288.0               # K
    k: float = 6.02214076e23      # 1/mol
    Rgas: float = 8.31446          # J/(mol K)

    @property
    def N0_per_m3(self) -> float:
        return self.P * self.k / (self.T * self.Rgas)

    @property
    def N0_per_cm3(self) -> float:
        return self.N0_per_m3 * 1e-6


@dataclass
class EmitterSpec:
    """Source position and release bookkeeping parameters.

    `Qbar` is the molecule release rate in molecules/s; the per-filament
    budget is Q = Qbar / Nf. Radii are carried in cm.
    """

    position: tuple[float, float] = (80.0, 60.0)
    Nf: float = 50.0               # filaments/s
    Qbar: float = 1.967243976e21   # molecules/s
    R0: float = 1.0                # initial filament radius, cm
    gamma: float = 0.1             # radius growth rate, cm/s

    def __post_init__(self):
        if self.Nf <= 0 or self.R0 <= 0 or self.gamma <= 0:
            raise ValueError("Nf, R0 and gamma must all be positive")

    @property
    def Q_per_filament(self) -> float:
        return self.Qbar / self.Nf


class PlumeState:
    """Live filament set stored as parallel arrays (positions m, radii cm)."""

    def __init__(self, capacity: int = 16384):
        self._pos = np.zeros((capacity, 2))
        self._R = np.zeros(capacity)
        self._born = np.zeros(capacity, dtype=np.int64)
        self._n = 0
        self.release_accumulator = 0.0
        self.total_released = 0

    @property
    def F(self) -> int:
        return self._n

    @property
    def positions(self) -> np.ndarray:
        return self._pos[:self._n]

    @property
    def radii(self) -> np.ndarray:
        return self._R[:self._n]

    @property
    def born(self) -> np.ndarray:
        return self._born[:self._n]

    def _grow_capacity(self, need: int):
        cap = max(2 * len(self._R), self._n + need)
        pos = np.zeros((cap, 2))
        R = np.zeros(cap)
        born = np.zeros(cap, dtype=np.int64)
        pos[:self._n] = self._pos[:self._n]
        R[:self._n] = self._R[:self._n]
        born[:self._n] = self._born[:self._n]
        self._pos, self._R, self._born = pos, R, born

    def append(self, position, R: float, born: int, count: int = 1):
        if self._n + count > len(self._R):
            self._grow_capacity(count)
        self._pos[self._n:self._n + count] = position
        self._R[self._n:self._n + count] = R
        self._born[self._n:self._n + count] = born
        self._n += count

    def keep_mask(self, mask: np.ndarray):
        kept = int(np.count_nonzero(mask))
        self._pos[:kept] = self._pos[:self._n][mask]
        self._R[:kept] = self._R[:self._n][mask]
        self._born[:kept] = self._born[:self._n][mask]
        self._n = kept


def release_filaments(plume: PlumeState, emitter: EmitterSpec, dt: float,
                      step_index: int = 0) -> PlumeState:
    """Accumulate Nf*dt fractional releases; emit the integer part at the source."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    plume.release_accumulator += emitter.Nf * dt
    n_new = int(math.floor(plume.release_accumulator))
    if n_new > 0:
        plume.release_accumulator -= n_new
        plume.append(emitter.position, emitter.R0, step_index, count=n_new)
        plume.total_released += n_new
    return plume


def advect_filaments(plume: PlumeState, grid, diff: "object", dt: float,
                     rng: np.random.Generator) -> PlumeState:
    """Displace every filament by dt * (cell wind + relative-diffusion velocity).

    The diffusion velocity per axis is N(0, (sigma/sqrt(dt))^2) so displacement
    variance accumulates as sigma^2 * t independent of the step size. Filaments
    drifting outside the grid use the nearest boundary cell's wind.
    """
    n = plume.F
    if n == 0:
        return plume
    pos = plume.positions
    wind = grid.sample_clamped_many(pos)
    sig = np.array([diff.sigma_vm1, diff.sigma_vm2]) / math.sqrt(dt)
    vdiff = rng.standard_normal((n, 2)) * sig
    pos += dt * (wind + vdiff)
    return plume


def grow_filaments(plume: PlumeState, gamma: float, dt: float) -> PlumeState:
    plume.radii[:] += gamma * dt
    return plume


def cull_filaments(plume: PlumeState, area, margin: float = 20.0) -> PlumeState:
    """Drop filaments farther than `margin` outside the search area."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if plume.F == 0:
        return plume
    p = plume.positions
    inside = ((p[:, 0] >= -margin) & (p[:, 0] <= area[0] + margin)
              & (p[:, 1] >= -margin) & (p[:, 1] <= area[1] + margin))
    if not inside.all():
        plume.keep_mask(inside)
    return plume


def concentration_at(plume: PlumeState, point, constants: GasConstants,
                     Q_per_filament: float) -> float:
    """Total filament concentration at `point` (metres), in ppm.

    Summation order is the filament insertion order, fixed for determinism.
    """
    n = plume.F
    if n == 0:
        return 0.0
    d_cm = (plume.positions - np.asarray(point, dtype=float)) * 100.0
    d2 = d_cm[:, 0] ** 2 + d_cm[:, 1] ** 2
    R = plume.radii
    contrib = Q_per_filament / (SQRT_8_PI3 * R ** 3) * np.exp(-d2 / R ** 2)
    return float(np.sum(contrib)) * 1e6 / constants.N0_per_cm3


@dataclass
class ChemicalSensor:
    """First-order low-pass filter + threshold detector + bias/noise model.

    The filter state advances as state += B*dt*(raw - state); the reported
    value thresholds the state at `ch` before adding the background bias and
    Gaussian noise. The internal state itself is never zeroed by the
    threshold, which keeps the filter a contraction toward the raw input.
    """

    B: float = 0.1
    ch: float = 1e-4
    bias: float = 1.98
    var: float = 0.005
    state: float = 0.0

    def __post_init__(self):
        if self.bias < 0 or self.var < 0:
            raise ValueError("bias and variance must be non-negative")

    def measure(self, raw: float, dt: float, rng: np.random.Generator | None = None,
                noisy: bool = True) -> float:
        if dt <= 0:
            raise ValueError("dt must be positive")
        if raw < 0:
            raise ValueError("raw concentration must be non-negative")
        self.state += self.B * dt * (raw - self.state)
        out = self.state if self.state > self.ch else 0.0
        if noisy and self.var > 0:
            out += rng.normal(0.0, math.sqrt(self.var))
        return out + self.bias

    def reset(self):
        self.state = 0.0


def sense_concentration(sensor: ChemicalSensor, raw: float, dt: float,
                        rng: np.random.Generator | None = None,
                        noisy: bool = True) -> float:
    return sensor.measure(raw, dt, rng, noisy=noisy)


@dataclass
class Anemometer:
    """Additive white-noise wind sensor; var is per-axis."""

    var: float = 0.01

    def __post_init__(self):
        if self.var < 0:
            raise ValueError("variance must be non-negative")

    def measure(self, true_wind, rng: np.random.Generator | None = None,
                noisy: bool = True) -> np.ndarray:
        w = np.asarray(true_wind, dtype=float).copy()
        if noisy and self.var > 0:
            w += rng.normal(0.0, math.sqrt(self.var), 2)
        return w


def sense_wind(anemometer: Anemometer, true_wind, rng=None, noisy=True) -> np.ndarray:
    return anemometer.measure(true_wind, rng, noisy=noisy)


# -- precomputed lookup table -------------------------------------------------

TABLE_MAGIC = b"PLTB"
TABLE_VERSION = 1


def candidate_cells(plume: PlumeState, cell_size: float, area) -> np.ndarray:
    """Flat indices of lookup cells whose centre a filament could reach.

    Support bound: exp underflows beyond sqrt(745.14)*R, radii in cm, so the
    reach in metres is R/100 * 27.3. Cells outside the area are discarded.
    """
    if plume.F == 0:
        return np.empty(0, dtype=np.int64)
    ncx = int(round(area[0] / cell_size))
    ncy = int(round(area[1] / cell_size))
    reach_m = plume.radii * (_UNDERFLOW_DIST_FACTOR / 100.0)
    span = np.ceil(reach_m / cell_size).astype(np.int64)
    ci = np.floor(plume.positions[:, 0] / cell_size).astype(np.int64)
    cj = np.floor(plume.positions[:, 1] / cell_size).astype(np.int64)
    out = set()
    for i, j, s in zip(ci, cj, span):
        for ii in range(i - s, i + s + 1):
            if not 0 <= ii < ncx:
                continue
            for jj in range(j - s, j + s + 1):
                if 0 <= jj < ncy:
                    out.add(ii * ncy + jj)
    return np.array(sorted(out), dtype=np.int64)


class PlumeTableWriter:
    """Streams per-timestep (cell index -> ppm) blocks to a versioned binary file."""

    def __init__(self, path, header: dict):
        self._fh = open(path, "wb")
        payload = json.dumps(dict(header, format_version=TABLE_VERSION),
                             sort_keys=True).encode()
        self._fh.write(TABLE_MAGIC)
        self._fh.write(struct.pack("<I", len(payload)))
        self._fh.write(payload)

    def write_step(self, step: int, cells: np.ndarray, ppm: np.ndarray):
        self._fh.write(struct.pack("<qI", step, len(cells)))
        self._fh.write(cells.astype(np.int64).tobytes())
        self._fh.write(ppm.astype(np.float64).tobytes())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class PlumeTable:
    """Loaded per-timestep concentration lookup; cells absent from a block read 0."""

    def __init__(self, path):
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != TABLE_MAGIC:
                raise ValueError(f"not a plume table file: {path}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            self.header = json.loads(fh.read(hlen).decode())
            if self.header.get("format_version") != TABLE_VERSION:
                raise ValueError("unsupported plume table version")
            self._steps: dict[int, tuple[np.ndarray, np.ndarray]] = {}
            while True:
                hdr = fh.read(12)
                if len(hdr) < 12:
                    break
                step, n = struct.unpack("<qI", hdr)
                cells = np.frombuffer(fh.read(8 * n), dtype=np.int64)
                ppm = np.frombuffer(fh.read(8 * n), dtype=np.float64)
                self._steps[step] = (cells, ppm)

    def lookup(self, step: int, flat_cell: int) -> float:
        block = self._steps.get(step)
        if block is None:
            return 0.0
        cells, ppm = block
        k = np.searchsorted(cells, flat_cell)
        if k < len(cells) and cells[k] == flat_cell:
            return float(ppm[k])
        return 0.0
