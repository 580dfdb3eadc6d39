"""Time-varying 2-D wind field.

Mean advection is solved on a coarse grid with an explicit finite-difference
scheme (forward Euler in time, central differences in space) applied to the
simplified advection-diffusion momentum equations

    dv1/dt = -v1 dv1/dx - v2 dv1/dy + (Kx/2) d2v1/dx2 + (Ky/2) d2v1/dy2
    dv2/dt = -v1 dv2/dx - v2 dv2/dy + (Kx/2) d2v2/dx2 + (Ky/2) d2v2/dy2

with fixed inflow on all four edges. Low-frequency meander of the flow is a
second-order colored-noise process G*a/(s^2 + b*s + a) driven by unit-variance
white noise, discretized exactly (zero-order hold) so the DC gain is G for any
time step. The meander output perturbs the boundary inflow uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


class FlowConfigError(ValueError):
    """Invalid flow-field configuration (bad geometry or unstable scheme)."""


class OutOfDomainError(ValueError):
    """Sampled position lies outside the search area."""


@dataclass
class DiffusionSpec:
    """Relative-diffusion spectral densities, m/s/sqrt(Hz) per axis."""

    sigma_vm1: float = 2.0
    sigma_vm2: float = 2.0

    def __post_init__(self):
        if self.sigma_vm1 < 0 or self.sigma_vm2 < 0:
            raise FlowConfigError("diffusion spectral densities must be non-negative")


class ColoredNoiseState:
    """Second-order colored-noise filter state, one independent filter per axis.

    Continuous form G*a/(s^2 + b*s + a) in controllable canonical state space,
    discretized by zero-order hold at construction. `a` and `b` are treated as
    literal transfer-function coefficients with no physical interpretation
    attached. Stepping draws one fresh unit-variance Gaussian sample per axis.
    """

    def __init__(self, a: float, b: float, G: float, dt: float):
        if dt <= 0:
            raise FlowConfigError("dt must be positive")
        self.a = float(a)
        self.b = float(b)
        self.G = float(G)
        self.dt = float(dt)
        A = np.array([[0.0, 1.0], [-self.a, -self.b]])
        B = np.array([[0.0], [1.0]])
        # expm of the augmented matrix yields [[Ad, Bd], [0, I]] in one shot
        M = np.zeros((3, 3))
        M[:2, :2] = A * self.dt
        M[:2, 2:] = B * self.dt
        E = expm(M)
        self.Ad = E[:2, :2].copy()
        self.Bd = E[:2, 2].copy()
        self.C = np.array([self.G * self.a, 0.0])
        # state x[axis] = (position-like, velocity-like) per axis
        self.x = np.zeros((2, 2))

    def step(self, rng: np.random.Generator | None, forced_input=None) -> np.ndarray:
        """Advance one step and return the 2-axis filter output.

        `forced_input` substitutes the white-noise draw (used by tests for
        impulse/step responses); otherwise two N(0,1) samples are drawn.
        """
        if forced_input is None:
            w = rng.standard_normal(2)
        else:
            w = np.asarray(forced_input, dtype=float)
        self.x = self.x @ self.Ad.T + np.outer(w, self.Bd)
        return self.x @ self.C

    @property
    def output(self) -> np.ndarray:
        return self.x @ self.C

    def copy(self) -> "ColoredNoiseState":
        dup = ColoredNoiseState(self.a, self.b, self.G, self.dt)
        dup.x = self.x.copy()
        return dup


def step_colored_noise(state: ColoredNoiseState, dt: float,
                       rng: np.random.Generator) -> tuple[ColoredNoiseState, np.ndarray]:
    """Functional wrapper: advance the filter one step, return (state, output)."""
    if dt != state.dt:
        raise FlowConfigError("colored-noise filter was discretized for a different dt")
    out = state.step(rng)
    return state, out


class FlowGrid:
    """Discretized mean wind over the search area, plus boundary inflow state.

    Cells are half-open intervals [i*dx, (i+1)*dx) x [j*dy, (j+1)*dy); lookups
    return the value of the containing cell with no interpolation. The solver
    grid may be coarser than the concentration lookup grid: the explicit
    scheme requires dt*K/dx^2 < 0.25, which fixes a minimum cell size for
    large diffusivities.
    """

    def __init__(self, mean_wind, area, cell_size: float, Kx: float, Ky: float,
                 dt: float, upwind_advection: bool = False):
        X, Y = float(area[0]), float(area[1])
        if cell_size <= 0 or X <= 0 or Y <= 0:
            raise FlowConfigError("grid dimensions and cell size must be positive")
        nx = round(X / cell_size)
        ny = round(Y / cell_size)
        if nx < 3 or ny < 3:
            raise FlowConfigError("flow grid needs at least 3 cells per axis")
        if abs(nx * cell_size - X) > 1e-9 or abs(ny * cell_size - Y) > 1e-9:
            raise FlowConfigError("cell size must divide the search area exactly")
        mean_wind = np.asarray(mean_wind, dtype=float)
        if mean_wind.shape != (2,) or not np.all(np.isfinite(mean_wind)):
            raise FlowConfigError("mean wind must be a finite 2-vector")

        # Explicit-scheme stability guard, enforced at construction.
        vmax = float(np.max(np.abs(mean_wind)))
        if dt * vmax / cell_size >= 1.0:
            raise FlowConfigError(
                f"advective CFL violated: dt*|v|/dx = {dt * vmax / cell_size:.3g} >= 1")
        if dt * max(Kx, Ky) / cell_size ** 2 >= 0.25:
            raise FlowConfigError(
                f"diffusive stability violated: dt*K/dx^2 = "
                f"{dt * max(Kx, Ky) / cell_size ** 2:.3g} >= 0.25 "
                f"(increase flow_cell_size or reduce dt)")

        self.nx, self.ny = nx, ny
        self.dx = self.dy = float(cell_size)
        self.X, self.Y = X, Y
        self.Kx, self.Ky = float(Kx), float(Ky)
        self.dt = float(dt)
        self.upwind_advection = bool(upwind_advection)
        self.base_inflow = mean_wind.copy()
        self.inflow = mean_wind.copy()          # current boundary value incl. meander
        self.v1 = np.full((nx, ny), mean_wind[0])
        self.v2 = np.full((nx, ny), mean_wind[1])

    # -- solver ---------------------------------------------------------------

    def _advect_diffuse(self, f: np.ndarray) -> np.ndarray:
        """Interior update increment for one field component."""
        dx, dy = self.dx, self.dy
        c = f[1:-1, 1:-1]
        u = self.v1[1:-1, 1:-1]
        v = self.v2[1:-1, 1:-1]
        if self.upwind_advection:
            dfdx_b = (c - f[:-2, 1:-1]) / dx
            dfdx_f = (f[2:, 1:-1] - c) / dx
            dfdx = np.where(u > 0, dfdx_b, dfdx_f)
            dfdy_b = (c - f[1:-1, :-2]) / dy
            dfdy_f = (f[1:-1, 2:] - c) / dy
            dfdy = np.where(v > 0, dfdy_b, dfdy_f)
        else:
            dfdx = (f[2:, 1:-1] - f[:-2, 1:-1]) / (2 * dx)
            dfdy = (f[1:-1, 2:] - f[1:-1, :-2]) / (2 * dy)
        d2fdx2 = (f[2:, 1:-1] - 2 * c + f[:-2, 1:-1]) / dx ** 2
        d2fdy2 = (f[1:-1, 2:] - 2 * c + f[1:-1, :-2]) / dy ** 2
        return (-u * dfdx - v * dfdy
                + 0.5 * self.Kx * d2fdx2 + 0.5 * self.Ky * d2fdy2)

    def step(self, meander: ColoredNoiseState | None, rng: np.random.Generator | None):
        """Advance the field one dt: meander -> boundary inflow -> interior FD step."""
        if meander is not None:
            out = meander.step(rng)
            self.inflow = self.base_inflow + out
        else:
            self.inflow = self.base_inflow.copy()
        # Dirichlet edges first so the interior stencil sees current inflow.
        for f, val in ((self.v1, self.inflow[0]), (self.v2, self.inflow[1])):
            f[0, :] = val
            f[-1, :] = val
            f[:, 0] = val
            f[:, -1] = val
        inc1 = self._advect_diffuse(self.v1)
        inc2 = self._advect_diffuse(self.v2)
        self.v1[1:-1, 1:-1] += self.dt * inc1
        self.v2[1:-1, 1:-1] += self.dt * inc2

    # -- queries --------------------------------------------------------------

    def cell_index(self, position) -> tuple[int, int]:
        x, y = float(position[0]), float(position[1])
        if not (0.0 <= x < self.X and 0.0 <= y < self.Y):
            raise OutOfDomainError(f"position ({x}, {y}) outside [0,{self.X}) x [0,{self.Y})")
        return int(x / self.dx), int(y / self.dy)

    def sample(self, position) -> np.ndarray:
        """Mean-field wind of the cell containing `position` (no interpolation)."""
        i, j = self.cell_index(position)
        return np.array([self.v1[i, j], self.v2[i, j]])

    def sample_clamped(self, position) -> np.ndarray:
        """Like sample() but clamps to the nearest cell; for out-of-area filaments."""
        i = min(max(int(float(position[0]) // self.dx), 0), self.nx - 1)
        j = min(max(int(float(position[1]) // self.dy), 0), self.ny - 1)
        return np.array([self.v1[i, j], self.v2[i, j]])

    def sample_clamped_many(self, positions: np.ndarray) -> np.ndarray:
        """Vectorized clamped lookup for an (n, 2) position array."""
        # truncation equals floor after the clip to non-negative indices
        i = np.clip((positions[:, 0] * (1.0 / self.dx)).astype(np.int64),
                    0, self.nx - 1)
        j = np.clip((positions[:, 1] * (1.0 / self.dy)).astype(np.int64),
                    0, self.ny - 1)
        out = np.empty((len(positions), 2))
        out[:, 0] = self.v1[i, j]
        out[:, 1] = self.v2[i, j]
        return out

    def continuity_residual(self) -> np.ndarray:
        """|dv1/dx + dv2/dy| per interior cell (central differences)."""
        dv1dx = (self.v1[2:, 1:-1] - self.v1[:-2, 1:-1]) / (2 * self.dx)
        dv2dy = (self.v2[1:-1, 2:] - self.v2[1:-1, :-2]) / (2 * self.dy)
        return np.abs(dv1dx + dv2dy)

    def snapshot_rows(self):
        """(i, j, v1, v2) rows for the grid export."""
        for i in range(self.nx):
            for j in range(self.ny):
                yield i, j, self.v1[i, j], self.v2[i, j]


def init_flowfield(mean_wind, area, cell_size, Kx, Ky, dt,
                   upwind_advection=False) -> FlowGrid:
    """Uniform field at `mean_wind` with matching boundary inflow."""
    return FlowGrid(mean_wind, area, cell_size, Kx, Ky, dt,
                    upwind_advection=upwind_advection)


def step_flowfield(grid: FlowGrid, meander: ColoredNoiseState | None, dt: float,
                   rng: np.random.Generator | None) -> FlowGrid:
    """Functional wrapper over FlowGrid.step; dt must match the construction dt."""
    if abs(dt - grid.dt) > 1e-15:
        raise FlowConfigError("step dt differs from the dt the grid was built for")
    grid.step(meander, rng)
    return grid


def sample_wind(grid: FlowGrid, position) -> np.ndarray:
    return grid.sample(position)
