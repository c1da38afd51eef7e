# Copyright 2020 Google LLC
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Handler for the radial root-density transport equation.

Evolves a radial root density psi(t, x) under

  d psi / dt = d/dx ( A(x)^-1 psi(x) ),   A(x) = (1/x) int_0^x psi(y) dy,

where t is the fraction of derivatives taken. The discretization is a first
order conservative finite volume scheme on cell averages. Mass only leaves
through the origin; the outer boundary has no inflow.

The handler also provides the exact indicator solution, the scaling symmetry
psi(x) -> lambda psi(lambda x) and mass diagnostics.
"""

import dataclasses

import numpy as np

from absl import logging

from typing import List, Optional, Tuple

from utils import util

EPS_VAC = 1e-10
CFL_MAX = 0.9
# First order upwind is least diffusive at the largest stable Courant number.
DEFAULT_CFL = CFL_MAX
DT_MIN_FACTOR = 1e-12
INITIAL_MASS_TOL = 1e-3

INITIAL_PROFILES = ('indicator', 'gaussian', 'uniform_disk', 'bump')

_LOG_EVERY = 1000
# Relative slack when comparing dt against the stability bound.
_DT_RTOL = 1e-12


class Error(Exception):
  pass


class StabilityViolation(Error):
  pass


class DomainTooSmall(Error):
  pass


@dataclasses.dataclass(frozen=True)
class RadialGrid:
  """Uniform cell-centered grid on [0, x_max]."""
  x_max: float
  m: int

  def __post_init__(self):
    if not self.x_max > 0:
      raise Error(f'x_max must be positive, got {self.x_max}')
    if int(self.m) != self.m or self.m < 1:
      raise Error(f'm must be a positive integer, got {self.m}')

  @property
  def dx(self) -> float:
    return self.x_max / self.m

  @property
  def centers(self) -> np.ndarray:
    return (np.arange(self.m) + 0.5) * self.dx

  @property
  def edges(self) -> np.ndarray:
    return np.arange(self.m + 1) * self.dx


def _as_values(grid: RadialGrid, values) -> np.ndarray:
  arr = np.array(values, dtype=np.float64)
  if arr.shape != (grid.m,):
    raise Error(f'Expected {grid.m} values, got shape {arr.shape}')
  if not np.all(np.isfinite(arr)):
    raise Error('Values must be finite')
  return arr


@dataclasses.dataclass(frozen=True, eq=False)
class RadialDensity:
  grid: RadialGrid
  values: np.ndarray
  time: float = 0.0

  def __post_init__(self):
    arr = _as_values(self.grid, self.values)
    if np.any(arr < 0):
      raise Error(f'Density must be nonnegative, min is {arr.min()}')
    if self.time < 0:
      raise Error(f'Time must be nonnegative, got {self.time}')
    object.__setattr__(self, 'values', arr)


@dataclasses.dataclass(frozen=True, eq=False)
class CumulativeAverage:
  grid: RadialGrid
  values: np.ndarray


@dataclasses.dataclass(frozen=True, eq=False)
class VelocityField:
  grid: RadialGrid
  values: np.ndarray


@dataclasses.dataclass
class MassHistory:
  """Time series recorded by evolve(); one row per accepted step."""
  times: List[float] = dataclasses.field(default_factory=list)
  masses: List[float] = dataclasses.field(default_factory=list)
  origin_fluxes: List[float] = dataclasses.field(default_factory=list)

  def append(self, t: float, m: float, flux: float):
    self.times.append(t)
    self.masses.append(m)
    self.origin_fluxes.append(flux)

  def rows(self) -> List[Tuple[float, float, float]]:
    return list(zip(self.times, self.masses, self.origin_fluxes))


def mass(psi: RadialDensity) -> float:
  return float(psi.grid.dx * np.sum(psi.values))


def l1_distance(a: RadialDensity, b: RadialDensity) -> float:
  if a.grid != b.grid:
    raise Error(f'Grids differ: {a.grid} vs {b.grid}')
  return float(a.grid.dx * np.sum(np.abs(a.values - b.values)))


def cumulative_average(psi: RadialDensity) -> CumulativeAverage:
  """Midpoint cumulative quadrature of (1/x) int_0^x psi at cell centers."""
  grid = psi.grid
  cumulative = grid.dx * (np.cumsum(psi.values) - 0.5 * psi.values)
  return CumulativeAverage(grid, cumulative / grid.centers)


def velocity(average: CumulativeAverage,
             eps_vac: float = EPS_VAC) -> VelocityField:
  if not eps_vac > 0:
    raise Error(f'eps_vac must be positive, got {eps_vac}')
  return VelocityField(average.grid, -1.0 / np.maximum(average.values, eps_vac))


def _interface_average(psi: RadialDensity) -> np.ndarray:
  """A at the left interface of every cell.

  Interface i - 1/2 sits at x = i dx, where the cumulative mass is exact. The
  origin interface of cell 0 uses the value at x = dx (interface 1/2), the
  limit of A at the origin being psi(0).
  """
  grid = psi.grid
  cumulative = grid.dx * np.cumsum(psi.values)
  averages = np.empty(grid.m)
  averages[0] = cumulative[0] / grid.dx
  averages[1:] = cumulative[:-1] / grid.edges[1:-1]
  return averages


def _interface_speeds(psi: RadialDensity, eps_vac: float) -> np.ndarray:
  return 1.0 / np.maximum(_interface_average(psi), eps_vac)


def _max_speed(psi: RadialDensity, eps_vac: float) -> Optional[float]:
  """Largest wind speed over interfaces that carry flux (nonempty upwind)."""
  occupied = psi.values > 0
  if not np.any(occupied):
    return None
  return float(np.max(_interface_speeds(psi, eps_vac)[occupied]))


def origin_flux(psi: RadialDensity, eps_vac: float = EPS_VAC) -> float:
  """Instantaneous flux through x = 0 (nonpositive)."""
  return -float(_interface_speeds(psi, eps_vac)[0] * psi.values[0])


def adaptive_dt(psi: RadialDensity, cfl: float,
                eps_vac: float = EPS_VAC) -> float:
  """CFL time step: cfl * dx * min A over cells that carry mass.

  An empty density gets cfl * dx * eps_vac (every cell is vacuum capped).
  Otherwise the step is floored at DT_MIN_FACTOR * x_max.
  """
  if not 0 < cfl <= CFL_MAX:
    raise Error(f'cfl must be in (0, {CFL_MAX}], got {cfl}')
  grid = psi.grid
  speed = _max_speed(psi, eps_vac)
  if speed is None:
    return cfl * grid.dx * eps_vac
  return max(cfl * grid.dx / speed, DT_MIN_FACTOR * grid.x_max)


def step_with_flux(psi: RadialDensity,
                   dt: float,
                   eps_vac: float = EPS_VAC,
                   cfl_max: float = CFL_MAX) -> Tuple[RadialDensity, float]:
  """One forward Euler upwind step.

  Args:
    psi: Current density.
    dt: Time step.
    eps_vac: Vacuum threshold for the cumulative average.
    cfl_max: Largest admissible Courant number.

  Returns:
    The updated density and the origin flux F_{-1/2} used in the step, so
    that mass(new) - mass(psi) == dt * flux up to rounding.

  Raises:
    StabilityViolation: If dt exceeds cfl_max * dx / (max wind speed).
  """
  if not dt > 0:
    raise Error(f'dt must be positive, got {dt}')
  grid = psi.grid
  dx = grid.dx
  speed = _max_speed(psi, eps_vac)
  if speed is None:
    return RadialDensity(grid, psi.values, psi.time + dt), 0.0

  bound = cfl_max * dx / speed
  if dt > bound * (1.0 + _DT_RTOL):
    raise StabilityViolation(
        f'dt={dt:.3e} exceeds the stability bound {bound:.3e} '
        f'(max speed {speed:.3e}, dx={dx:.3e})')

  # The wind points to the origin everywhere, so the upwind value of
  # interface i - 1/2 is cell i. The limiter caps the outflow at the cell
  # content, which keeps the update nonnegative.
  speeds = np.minimum(_interface_speeds(psi, eps_vac), dx / dt)
  outflow = speeds * psi.values
  inflow = np.zeros(grid.m)
  inflow[:-1] = outflow[1:]
  values = psi.values + (dt / dx) * (inflow - outflow)
  values = np.maximum(values, 0.0)
  return RadialDensity(grid, values, psi.time + dt), -float(outflow[0])


def step(psi: RadialDensity,
         dt: float,
         eps_vac: float = EPS_VAC,
         cfl_max: float = CFL_MAX) -> RadialDensity:
  return step_with_flux(psi, dt, eps_vac, cfl_max)[0]


def evolve(psi0: RadialDensity,
           t_end: float,
           cfl: float = DEFAULT_CFL,
           eps_vac: float = EPS_VAC) -> Tuple[RadialDensity, MassHistory]:
  """Evolves psi0 from its own time up to t_end.

  Args:
    psi0: Initial density.
    t_end: Final time, psi0.time <= t_end < 1.
    cfl: Courant number used by adaptive_dt.
    eps_vac: Vacuum threshold.

  Returns:
    The density at t_end and the (t, mass, origin_flux) history, starting
    with the initial state.

  Raises:
    StabilityViolation: If even the floored time step is unstable.
  """
  if not 0 <= t_end < 1:
    raise Error(f't_end must be in [0, 1), got {t_end}')
  if t_end < psi0.time:
    raise Error(f't_end={t_end} is before the initial time {psi0.time}')

  psi = psi0
  t = psi0.time
  history = MassHistory()
  history.append(t, mass(psi), origin_flux(psi, eps_vac))
  steps = 0

  while t < t_end:
    if not np.any(psi.values > 0):
      # Nothing left to transport.
      t = t_end
      history.append(t, 0.0, 0.0)
      break

    dt = adaptive_dt(psi, cfl, eps_vac)
    last = t + dt >= t_end
    if last:
      dt = t_end - t
    psi, flux = step_with_flux(psi, dt, eps_vac)
    t = t_end if last else t + dt
    history.append(t, mass(psi), flux)
    steps += 1
    if steps % _LOG_EVERY == 0:
      logging.debug('evolve: step %d, t=%.6f, mass=%.6f', steps, t,
                    history.masses[-1])

  logging.info('evolve: reached t=%.6f after %d steps, mass=%.6f', t, steps,
               history.masses[-1])
  return RadialDensity(psi.grid, psi.values, t), history


def indicator_solution(t: float, grid: RadialGrid) -> RadialDensity:
  """Cell averages of the exact solution chi_{0 <= x <= 1 - t}."""
  if not 0 <= t <= 1:
    raise Error(f't must be in [0, 1], got {t}')
  front = 1.0 - t
  left = grid.edges[:-1]
  values = np.clip((front - left) / grid.dx, 0.0, 1.0)
  return RadialDensity(grid, values, t)


def rescale(psi: RadialDensity, lam: float) -> RadialDensity:
  """Applies the scaling symmetry x -> lam * psi(lam * x).

  Raises:
    DomainTooSmall: If the rescaled support leaves the grid.
  """
  if not lam > 0:
    raise Error(f'lambda must be positive, got {lam}')
  grid = psi.grid
  occupied = np.nonzero(psi.values > 0)[0]
  support_end = grid.edges[occupied[-1] + 1] if occupied.size else 0.0
  if support_end / lam > grid.x_max * (1.0 + _DT_RTOL):
    raise DomainTooSmall(
        f'Support ends at {support_end}; rescaling by {lam} needs '
        f'x_max >= {support_end / lam}, grid has {grid.x_max}')

  x = grid.centers
  values = lam * np.interp(
      lam * x, x, psi.values, left=psi.values[0], right=0.0)
  return RadialDensity(grid, values, psi.time)


def _profile(name: str, grid: RadialGrid) -> RadialDensity:
  x = grid.centers
  if name == 'indicator':
    return indicator_solution(0.0, grid)
  if name == 'gaussian':
    return RadialDensity(grid, 2.0 * x * np.exp(-x * x))
  if name == 'uniform_disk':
    # Exact cell averages of 2x on [0, 1].
    left = np.minimum(grid.edges[:-1], 1.0)
    right = np.minimum(grid.edges[1:], 1.0)
    return RadialDensity(grid, (right**2 - left**2) / grid.dx)
  if name == 'bump':
    values = np.where(x < 1.0, (1.0 - x * x)**2, 0.0) * 15.0 / 8.0
    return RadialDensity(grid, values)
  raise Error(f'Unknown initial profile {name}, expected one of '
              f'{INITIAL_PROFILES}')


def initial_density(name: str, grid: RadialGrid) -> RadialDensity:
  """Named unit-mass initial profiles.

  Raises:
    DomainTooSmall: If the grid holds less than 1 - INITIAL_MASS_TOL of the
      profile's mass, e.g. a gaussian on [0, 1.2].
  """
  psi = _profile(name, grid)
  held = mass(psi)
  if held < 1.0 - INITIAL_MASS_TOL:
    raise DomainTooSmall(
        f'The grid [0, {grid.x_max}] holds only {held:.4f} of the unit mass '
        f'of {name}; increase x_max')
  return psi


def planar_to_radial(u: np.ndarray, grid: RadialGrid) -> RadialDensity:
  """psi(r) = 2 pi r u(r) for a planar radial density u."""
  return RadialDensity(grid, 2.0 * np.pi * grid.centers * _as_values(grid, u))


def radial_to_planar(psi: RadialDensity) -> np.ndarray:
  return psi.values / (2.0 * np.pi * psi.grid.centers)


def write_density(path: str, psi: RadialDensity) -> None:
  util.write_csv(path, ['x', 'psi'],
                 list(zip(psi.grid.centers.tolist(), psi.values.tolist())))


def read_density(path: str, time: float = 0.0) -> RadialDensity:
  header, rows = util.read_csv(path)
  if header != ['x', 'psi'] or not rows:
    raise Error(f'{path} is not a density snapshot (header {header})')
  x = np.array([float(r[0]) for r in rows])
  values = np.array([float(r[1]) for r in rows])
  dx = 2.0 * x[0]
  return RadialDensity(RadialGrid(dx * len(rows), len(rows)), values, time)


def write_history(path: str, history: MassHistory) -> None:
  util.write_csv(path, ['t', 'mass', 'origin_flux'], history.rows())
