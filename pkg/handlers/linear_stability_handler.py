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
"""Handler for the linearized equation around psi = 1 and Hardy inequalities.

A perturbation w of the constant solution evolves by

  dw/dt = dw/dx - d/dx ( (1/x) int_0^x w(y) dy ).

The L2 energy of a compactly supported mean-zero w is nonincreasing; its rate
splits into a boundary term -w(0)^2 and minus twice a Hardy bracket. This
handler evaluates both forms of the rate, evolves the linearized equation and
checks the two Hardy-type inequalities on seeded random corpora.
"""

import concurrent.futures
import dataclasses

import numpy as np

from absl import logging

from typing import Callable, List, Optional, Tuple

from handlers import radial_pde_handler
from utils import util

RadialGrid = radial_pde_handler.RadialGrid

FAMILIES = ('lemma', 'generalized')
GENERALIZED_EXPONENTS = ((2.0, 3.0), (2.0, 2.5), (3.0, 3.0))

MEAN_ZERO_TOL = 1e-10
WAVE_CFL_MAX = 0.5
# Relative growth of the rhs under refinement that counts as divergence.
DIVERGENCE_TOL = 1e-3

_KNOTS = 6
_PERTURBATION_SUPPORT = (0.4, 0.9)
_ADMISSIBLE_SUPPORT = (0.3, 0.9)
_MAX_WORKERS = 4
_LOG_EVERY = 100

CORPUS_HEADER = ['case_id', 'seed', 'lhs', 'rhs', 'slack']
ENERGY_HEADER = [
    'case_id', 'seed', 'direct', 'decomposed', 'boundary_term',
    'hardy_bracket', 'norm2'
]


class Error(Exception):
  pass


class StabilityViolation(Error):
  pass


class NonIntegrable(Error):
  pass


class BadExponents(Error):
  pass


@dataclasses.dataclass(frozen=True, eq=False)
class Perturbation:
  """Signed cell values of w on a radial grid."""
  grid: RadialGrid
  values: np.ndarray
  time: float = 0.0

  def __post_init__(self):
    arr = np.array(self.values, dtype=np.float64)
    if arr.shape != (self.grid.m,):
      raise Error(f'Expected {self.grid.m} values, got shape {arr.shape}')
    if not np.all(np.isfinite(arr)):
      raise Error('Perturbation values must be finite')
    object.__setattr__(self, 'values', arr)

  @property
  def support_end(self) -> int:
    """Index of the last nonzero cell, -1 for w = 0."""
    nonzero = np.nonzero(self.values)[0]
    return int(nonzero[-1]) if nonzero.size else -1

  @property
  def compact(self) -> bool:
    return self.support_end < self.grid.m - 1

  @property
  def mean_zero(self) -> bool:
    return abs(self.grid.dx * np.sum(self.values)) <= MEAN_ZERO_TOL


@dataclasses.dataclass(frozen=True)
class HardyPair:
  lhs: float
  rhs: float
  tol: float = 0.0

  @property
  def slack(self) -> float:
    return self.rhs - self.lhs


@dataclasses.dataclass(frozen=True)
class EnergyRate:
  direct: float
  decomposed: float
  boundary_term: float
  hardy_bracket: float


def norm2(w: Perturbation) -> float:
  """Squared L2 norm int w^2."""
  return float(w.grid.dx * np.sum(w.values**2))


def _cumulative(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
  """Midpoint cumulative integral at cell centers, as in radial_pde."""
  return grid.dx * (np.cumsum(values) - 0.5 * values)


def _require_compact(w: Perturbation):
  if not w.compact:
    raise Error(f'Perturbation must be compactly supported, support ends at '
                f'cell {w.support_end} of {w.grid.m}')


def linearized_rhs(w: Perturbation) -> np.ndarray:
  """Centered differences of w and of its cumulative average.

  np.gradient falls back to one-sided differences at the two boundary cells.
  """
  grid = w.grid
  average = _cumulative(grid, w.values) / grid.centers
  return np.gradient(w.values, grid.dx) - np.gradient(average, grid.dx)


def _rk3_step(values: np.ndarray, dt: float,
              rhs: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
  """Strong stability preserving third order Runge-Kutta step."""
  stage1 = values + dt * rhs(values)
  stage2 = 0.75 * values + 0.25 * (stage1 + dt * rhs(stage1))
  return values / 3.0 + 2.0 / 3.0 * (stage2 + dt * rhs(stage2))


def _check_step(grid: RadialGrid, dt: float):
  if not dt > 0:
    raise Error(f'dt must be positive, got {dt}')
  if dt > WAVE_CFL_MAX * grid.dx:
    raise StabilityViolation(
        f'dt={dt:.3e} exceeds {WAVE_CFL_MAX} dx = {WAVE_CFL_MAX * grid.dx:.3e}')


def _integrate(grid: RadialGrid, values: np.ndarray, t: float, t_end: float,
               dt: float, support_end: Optional[int]) -> np.ndarray:
  """RK3 steps from t to t_end; cells past support_end are kept at zero."""

  def rhs(v):
    return linearized_rhs(Perturbation(grid, v))

  steps = 0
  while t < t_end:
    h = min(dt, t_end - t)
    values = _rk3_step(values, h, rhs)
    if support_end is not None:
      values[support_end + 1:] = 0.0
    t = t_end if h == t_end - t else t + h
    steps += 1
    if steps % _LOG_EVERY == 0:
      logging.debug('evolve_linearized: step %d, t=%.6f', steps, t)
  return values


def _support_bound(w0: Perturbation) -> Optional[int]:
  # A mean-zero w has W = 0 past its support, so the support can only move
  # left. Otherwise M / x^2 feeds every cell.
  return w0.support_end if w0.mean_zero else None


def evolve_linearized(w0: Perturbation, t_end: float,
                      dt: float) -> Perturbation:
  """Evolves w0 from its own time to t_end with steps of at most dt.

  Raises:
    StabilityViolation: If dt > 0.5 dx (unit wave speed).
  """
  grid = w0.grid
  _check_step(grid, dt)
  if t_end < w0.time:
    raise Error(f't_end={t_end} is before the initial time {w0.time}')
  _require_compact(w0)
  values = _integrate(grid, w0.values.copy(), w0.time, t_end, dt,
                      _support_bound(w0))
  return Perturbation(grid, values, max(t_end, w0.time))


def contraction_series(w0: Perturbation,
                       t_end: float,
                       samples: int,
                       cfl: float = 0.4) -> List[Tuple[float, float]]:
  """(t, int w^2) at w0.time and `samples` equally spaced later times."""
  if samples < 1:
    raise Error(f'samples must be positive, got {samples}')
  grid = w0.grid
  dt = cfl * grid.dx
  _check_step(grid, dt)
  _require_compact(w0)
  bound = _support_bound(w0)
  values = w0.values.copy()
  t = w0.time
  series = [(t, norm2(w0))]
  for k in range(1, samples + 1):
    t_next = w0.time + (t_end - w0.time) * k / samples
    values = _integrate(grid, values, t, t_next, dt, bound)
    t = t_next
    series.append((t, float(grid.dx * np.sum(values**2))))
  return series


def energy_derivative(w: Perturbation) -> EnergyRate:
  """Rate of int w^2 evaluated directly and through its decomposition.

  direct is 2 int w * rhs(w). decomposed is -w(0)^2 - 2 * bracket with
  w(0) extrapolated linearly from the first two cells and

    bracket = int (w^2/x - (w/x^2) W) = int w (w - W/x) / x,

  the second form avoiding the cancellation of two 1/x singularities.
  """
  _require_compact(w)
  grid = w.grid
  values = w.values
  direct = 2.0 * grid.dx * float(np.sum(values * linearized_rhs(w)))

  average = _cumulative(grid, values) / grid.centers
  bracket = grid.dx * float(
      np.sum(values * (values - average) / grid.centers))
  w_origin = 1.5 * values[0] - 0.5 * values[1] if grid.m > 1 else values[0]
  boundary = -float(w_origin)**2
  return EnergyRate(direct, boundary - 2.0 * bracket, boundary, bracket)


def _lipschitz(grid: RadialGrid, integrand: np.ndarray) -> float:
  if integrand.size < 2:
    return 0.0
  return float(np.max(np.abs(np.diff(integrand))) / grid.dx)


def _coarsen(grid: RadialGrid,
             values: np.ndarray) -> Tuple[RadialGrid, np.ndarray]:
  """Merges pairs of cells; an odd trailing cell is dropped."""
  pairs = grid.m // 2
  coarse = RadialGrid(2 * pairs * grid.dx, pairs)
  return coarse, values[:2 * pairs].reshape(pairs, 2).mean(axis=1)


def _lemma_sides(grid: RadialGrid,
                 values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  x = grid.centers
  cumulative = _cumulative(grid, values)
  return values * cumulative / x**2, values**2 / x


def hardy_pair(f: Perturbation) -> HardyPair:
  """int f/x^2 (int_0^x f) against int f^2/x.

  Raises:
    NonIntegrable: If the rhs keeps growing when the grid is refined, i.e. f
      does not vanish at the origin.
  """
  grid = f.grid
  lhs_density, rhs_density = _lemma_sides(grid, f.values)
  lhs = grid.dx * float(np.sum(lhs_density))
  rhs = grid.dx * float(np.sum(rhs_density))

  if rhs > 0 and grid.m >= 4:
    coarse, coarse_values = _coarsen(grid, f.values)
    coarse_rhs = coarse.dx * float(np.sum(_lemma_sides(coarse,
                                                        coarse_values)[1]))
    if rhs - coarse_rhs > DIVERGENCE_TOL * rhs:
      raise NonIntegrable(
          f'int f^2/x grows from {coarse_rhs:.6g} to {rhs:.6g} under '
          'refinement; f must vanish at the origin')

  tol = 10.0 * grid.dx * max(
      _lipschitz(grid, lhs_density), _lipschitz(grid, rhs_density))
  return HardyPair(lhs, rhs, tol)


def generalized_hardy_pair(f: Perturbation,
                           p: float,
                           r: float,
                           include_tail: bool = False) -> HardyPair:
  """int x^-r F^p against (p/(r-1))^p int x^-r (x f)^p, F = int_0^x f.

  By default both sides are integrated over the support of f, so f = x on
  [0, 1] with p = 2 and r = 3 gives (1/8, 1/2) on any grid.

  Args:
    f: Nonnegative sampled function.
    p: Exponent, p > 1.
    r: Weight exponent, r > 1.
    include_tail: Integrates the lhs over the whole half line instead: the
      rest of the grid plus the exact contribution of (x_max, inf), where F
      is the constant total mass. The rhs integrand vanishes there.

  Raises:
    BadExponents: If p <= 1 or r <= 1.
  """
  if not (p > 1 and r > 1):
    raise BadExponents(f'Need p > 1 and r > 1, got p={p}, r={r}')
  if np.any(f.values < 0):
    raise Error('generalized_hardy_pair needs a nonnegative f')
  grid = f.grid
  x = grid.centers
  cumulative = _cumulative(grid, f.values)
  lhs_density = x**-r * cumulative**p
  rhs_density = (p / (r - 1.0))**p * x**-r * (x * f.values)**p
  rhs = grid.dx * float(np.sum(rhs_density))
  if include_tail:
    lhs = grid.dx * float(np.sum(lhs_density))
    total = grid.dx * float(np.sum(f.values))
    lhs += total**p * grid.x_max**(1.0 - r) / (r - 1.0)
  else:
    lhs = grid.dx * float(np.sum(lhs_density[:f.support_end + 1]))
  tol = 10.0 * grid.dx * max(
      _lipschitz(grid, lhs_density), _lipschitz(grid, rhs_density))
  return HardyPair(lhs, rhs, tol)


def project_mean_zero(w: Perturbation) -> Perturbation:
  """w - (mean over the support) on the support."""
  end = w.support_end
  if end < 0:
    return w
  values = w.values.copy()
  values[:end + 1] -= np.mean(values[:end + 1])
  return Perturbation(w.grid, values, w.time)


def _knot_profile(grid: RadialGrid, length: float,
                  knots: np.ndarray) -> np.ndarray:
  x = grid.centers
  nodes = np.linspace(0.0, length, knots.size)
  return np.where(x < length, np.interp(x, nodes, knots), 0.0)


def random_perturbation(grid: RadialGrid,
                        seed: int,
                        knots: int = _KNOTS) -> Perturbation:
  """Seeded piecewise linear, compactly supported, mean-zero perturbation.

  The first segment is flat and the last knot equals the knot mean, so the
  mean-zero projection leaves w continuous at the end of its support.
  """
  rng = np.random.default_rng(seed)
  length = grid.x_max * rng.uniform(*_PERTURBATION_SUPPORT)
  v = rng.uniform(-1.0, 1.0, knots + 1)
  v[0] = v[1]
  v[-1] = (0.5 * v[0] + np.sum(v[1:-1])) / (knots - 0.5)
  return project_mean_zero(Perturbation(grid, _knot_profile(grid, length, v)))


def random_admissible_f(grid: RadialGrid,
                        seed: int,
                        nonnegative: bool = False,
                        knots: int = _KNOTS) -> Perturbation:
  """Seeded piecewise linear f vanishing at 0 and at the end of its support."""
  rng = np.random.default_rng(seed)
  length = grid.x_max * rng.uniform(*_ADMISSIBLE_SUPPORT)
  low = 0.0 if nonnegative else -1.0
  v = rng.uniform(low, 1.0, knots + 1)
  v[0] = 0.0
  v[-1] = 0.0
  return Perturbation(grid, _knot_profile(grid, length, v))


def _hardy_case(family: str, grid: RadialGrid, case_id: int, seed: int,
                p: float, r: float):
  if family == 'lemma':
    pair = hardy_pair(random_admissible_f(grid, seed))
  else:
    pair = generalized_hardy_pair(
        random_admissible_f(grid, seed, nonnegative=True), p, r,
        include_tail=True)
  return (case_id, seed, pair.lhs, pair.rhs, pair.slack)


def hardy_corpus(family: str,
                 cases: int,
                 seed: int,
                 grid: RadialGrid,
                 p: float = 2.0,
                 r: float = 3.0,
                 jobs: Optional[int] = None) -> List[tuple]:
  """Evaluates one inequality family on `cases` random admissible f.

  Returns:
    Rows (case_id, seed, lhs, rhs, slack) sorted by case_id.
  """
  if family not in FAMILIES:
    raise Error(f'Unknown family {family}, expected one of {FAMILIES}')
  if family == 'generalized' and not (p > 1 and r > 1):
    raise BadExponents(f'Need p > 1 and r > 1, got p={p}, r={r}')
  rows = []
  with concurrent.futures.ThreadPoolExecutor(
      max_workers=jobs or _MAX_WORKERS) as executor:
    wait_for = [
        executor.submit(_hardy_case, family, grid, case_id,
                        util.derive_seed(seed, family, case_id), p, r)
        for case_id in range(cases)
    ]
    for f in concurrent.futures.as_completed(wait_for):
      rows.append(f.result())
  rows.sort(key=lambda row: row[0])
  logging.info('Hardy corpus %s: %d cases, min slack %.3e', family, len(rows),
               min((row[4] for row in rows), default=0.0))
  return rows


def _energy_case(grid: RadialGrid, case_id: int, seed: int):
  w = random_perturbation(grid, seed)
  rate = energy_derivative(w)
  return (case_id, seed, rate.direct, rate.decomposed, rate.boundary_term,
          rate.hardy_bracket, norm2(w))


def energy_corpus(cases: int,
                  seed: int,
                  grid: RadialGrid,
                  jobs: Optional[int] = None) -> List[tuple]:
  """Energy rates of `cases` random mean-zero perturbations.

  Returns:
    Rows matching ENERGY_HEADER sorted by case_id.
  """
  rows = []
  with concurrent.futures.ThreadPoolExecutor(
      max_workers=jobs or _MAX_WORKERS) as executor:
    wait_for = [
        executor.submit(_energy_case, grid, case_id,
                        util.derive_seed(seed, 'energy', case_id))
        for case_id in range(cases)
    ]
    for f in concurrent.futures.as_completed(wait_for):
      rows.append(f.result())
  rows.sort(key=lambda row: row[0])
  logging.info('Energy corpus: %d cases, max direct/norm2 %.3e', len(rows),
               max((row[2] / row[6] for row in rows), default=0.0))
  return rows


def min_relative_slack(rows: List[tuple]) -> float:
  """min slack / rhs over corpus rows, ignoring the f = 0 equality case."""
  ratios = [row[4] / row[3] for row in rows if row[3] > 0]
  return min(ratios, default=0.0)
