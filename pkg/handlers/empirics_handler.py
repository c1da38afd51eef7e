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
"""Handler for Monte Carlo root flow experiments.

Samples or constructs random polynomials, differentiates them floor(t * n)
times, bins the radii of the surviving roots and compares the histograms with
the radial transport equation.
"""

import concurrent.futures
import dataclasses
import math
import os

import numpy as np
from scipy import optimize
from scipy import stats

from absl import logging

from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from handlers import polyroots_handler as polyroots
from handlers import radial_pde_handler as radial_pde
from utils import config
from utils import util

# Coefficient models first, then the i.i.d. radial laws of polyroots.
DISTRIBUTIONS = ('taylor', 'taylor_quarter', 'taylor_limit',
                 'complex_gaussian', 'uniform_disk')
# Initial profile whose evolution is compared with each distribution.
REFERENCE_PROFILES = {
    'taylor': 'indicator',
    'taylor_limit': 'indicator',
    'complex_gaussian': 'gaussian',
    'uniform_disk': 'uniform_disk',
}
# Reference grid length holding the whole initial mass of each profile.
REFERENCE_X_MAX = {
    'indicator': 1.2,
    'gaussian': 4.5,
    'uniform_disk': 1.2,
}
DEFAULT_X_MAX = 1.2
QUARTER_POWER = 0.25

EXACT_MATCHING_MAX = 256
MIN_PAIRING_DEGREE = 8
MIN_KZ_DEGREE = 16

METRICS_HEADER = ['t', 'seed', 'ks', 'w1', 'mass_gap']
HISTOGRAM_HEADER = ['left', 'right', 'mass']
PAIRING_HEADER = ['root', 'critical_point', 'distance', 'shift_error']

_MAX_WORKERS = 4
# Guards floor(t * n) against products like 0.29 * 100 = 28.999999999999996.
_COUNT_SLACK = 1e-9


class Error(Exception):
  pass


class ExperimentConfigError(Error):
  pass


def derivative_count(t: float, n: int) -> int:
  return int(math.floor(t * n + _COUNT_SLACK))


def default_x_max(dist: str) -> float:
  return REFERENCE_X_MAX.get(REFERENCE_PROFILES.get(dist), DEFAULT_X_MAX)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
  """One flow experiment.

  Attributes:
    n: Degree of the initial polynomial.
    t_grid: Fractions of n to differentiate away, each in [0, 1).
    dist: One of DISTRIBUTIONS.
    trials: Seeds, one trial each.
    bins: Histogram bins on [0, grid.x_max].
    grid: Grid of the reference PDE solution and of the histograms.
    policy: Root finder precision.
    cfl: Courant number of the reference evolution.
    jobs: Worker cap, None for the default.
  """
  n: int
  t_grid: Tuple[float, ...]
  dist: str
  trials: Tuple[int, ...]
  bins: int
  grid: radial_pde.RadialGrid
  policy: polyroots.PrecisionPolicy
  cfl: float = radial_pde.DEFAULT_CFL
  jobs: Optional[int] = None

  def __post_init__(self):
    object.__setattr__(self, 't_grid', tuple(float(t) for t in self.t_grid))
    object.__setattr__(self, 'trials', tuple(int(s) for s in self.trials))
    if self.n < 1:
      raise ExperimentConfigError(f'n must be positive, got {self.n}')
    if not self.t_grid:
      raise ExperimentConfigError('t_grid must not be empty')
    for t in self.t_grid:
      if not 0 <= t < 1:
        raise ExperimentConfigError(f't values must be in [0, 1), got {t}')
    if len(set(self.derivative_counts)) != len(self.t_grid):
      raise ExperimentConfigError(
          f't_grid {self.t_grid} repeats a derivative count at n={self.n}')
    if self.dist not in DISTRIBUTIONS:
      raise ExperimentConfigError(
          f'Unknown dist {self.dist}, expected one of {DISTRIBUTIONS}')
    if not self.trials or len(set(self.trials)) != len(self.trials):
      raise ExperimentConfigError(
          f'trials must be distinct seeds, got {self.trials}')
    if self.bins < 1:
      raise ExperimentConfigError(f'bins must be positive, got {self.bins}')

  @property
  def derivative_counts(self) -> List[int]:
    return [derivative_count(t, self.n) for t in self.t_grid]

  @property
  def rescale(self) -> float:
    """Radius divisor: n for taylor, n^(1/4) for its quarter variant."""
    if self.dist == 'taylor':
      return float(self.n)
    if self.dist == 'taylor_quarter':
      return float(self.n)**QUARTER_POWER
    return 1.0

  @classmethod
  def from_params(cls, flow: Dict[str, Any], precision: Dict[str, Any],
                  seed: int, jobs: Optional[int] = None) -> 'ExperimentConfig':
    """Builds a config from the flow and precision config sections.

    An integer `trials` means that many consecutive seeds from `seed` on. A
    missing or null `x_max` is the REFERENCE_X_MAX of the distribution's
    profile.
    """
    try:
      trials = flow['trials']
      if isinstance(trials, int):
        trials = list(range(seed, seed + trials))
      n = int(flow['n'])
      x_max = flow.get('x_max')
      if x_max is None:
        x_max = default_x_max(flow['dist'])
      policy = polyroots.PrecisionPolicy.for_degree(
          n,
          bits=precision.get('bits'),
          residual_tol=precision.get('residual_tol'),
          max_iters=precision.get('max_iters', polyroots.MAX_ITERS),
          max_doublings=precision.get('max_doublings',
                                      polyroots.MAX_DOUBLINGS))
      return cls(
          n=n,
          t_grid=flow['t_grid'],
          dist=flow['dist'],
          trials=trials,
          bins=int(flow['bins']),
          grid=radial_pde.RadialGrid(float(x_max), int(flow['m'])),
          policy=policy,
          cfl=float(flow.get('cfl') or radial_pde.DEFAULT_CFL),
          jobs=jobs)
    except (KeyError, TypeError, ValueError) as e:
      raise ExperimentConfigError(f'Invalid flow config: {e!r}') from e
    except (polyroots.Error, radial_pde.Error) as e:
      raise ExperimentConfigError(str(e)) from e

  def to_dict(self) -> Dict[str, Any]:
    return {
        'n': self.n,
        't_grid': list(self.t_grid),
        'derivative_counts': self.derivative_counts,
        'dist': self.dist,
        'trials': list(self.trials),
        'bins': self.bins,
        'x_max': self.grid.x_max,
        'm': self.grid.m,
        'cfl': self.cfl,
        'rescale': self.rescale,
        'precision': {
            'bits': self.policy.bits,
            'residual_tol': self.policy.residual_tol,
            'max_iters': self.policy.max_iters,
            'max_doublings': self.policy.max_doublings,
        },
    }


@dataclasses.dataclass(frozen=True, eq=False)
class RadialHistogram:
  """Root counts per radial bin, normalised by the original degree."""
  edges: np.ndarray
  counts: np.ndarray
  n_original: int
  rescale: float = 1.0

  @property
  def masses(self) -> np.ndarray:
    return self.counts / self.n_original

  @property
  def total(self) -> float:
    return float(np.sum(self.counts)) / self.n_original

  def rows(self) -> List[Tuple[float, float, float]]:
    return list(
        zip(self.edges[:-1].tolist(), self.edges[1:].tolist(),
            self.masses.tolist()))


def radial_histogram(ens: polyroots.RootEnsemble,
                     n_original: int,
                     bins: int,
                     x_max: float,
                     rescale: float = 1.0) -> RadialHistogram:
  """Bins |z| / rescale on [0, x_max]; radii past x_max go to the last bin."""
  if not rescale > 0:
    raise Error(f'rescale must be positive, got {rescale}')
  if n_original < 1 or bins < 1 or not x_max > 0:
    raise Error(f'Bad histogram shape: n_original={n_original}, bins={bins}, '
                f'x_max={x_max}')
  edges = np.linspace(0.0, x_max, bins + 1)
  radii = ens.moduli() / rescale
  index = np.minimum((radii / (x_max / bins)).astype(np.int64), bins - 1)
  counts = np.bincount(index, minlength=bins)
  return RadialHistogram(edges, counts, n_original, rescale)


def mean_histogram(histograms: Sequence[RadialHistogram]) -> RadialHistogram:
  """Pools trials; the mass stays (#roots) / n per trial."""
  first = histograms[0]
  counts = np.sum([h.counts for h in histograms], axis=0)
  return RadialHistogram(first.edges, counts,
                         first.n_original * len(histograms), first.rescale)


class CdfDistance(NamedTuple):
  ks: float
  w1: float
  mass_gap: float


def _abs_integral(x: np.ndarray, d: np.ndarray) -> float:
  """Exact integral of |d| for d linear between the nodes x."""
  lengths = np.diff(x)
  a, b = np.abs(d[:-1]), np.abs(d[1:])
  same_sign = d[:-1] * d[1:] >= 0
  with np.errstate(divide='ignore', invalid='ignore'):
    crossing = np.where(a + b > 0, (a * a + b * b) / (2.0 * (a + b)), 0.0)
  return float(np.sum(lengths * np.where(same_sign, 0.5 * (a + b), crossing)))


def cdf_distance(h: RadialHistogram,
                 psi: radial_pde.RadialDensity) -> CdfDistance:
  """Sup and L1 distances of the two cumulative mass functions.

  Both cumulatives are linear inside bins and cells, so evaluating on the
  union of the edges is exact. Past its own domain each cumulative stays at
  its total mass.
  """
  h_cum = np.concatenate([[0.0], np.cumsum(h.masses)])
  psi_cum = np.concatenate([[0.0], np.cumsum(psi.values * psi.grid.dx)])
  nodes = np.union1d(h.edges, psi.grid.edges)
  diff = (np.interp(nodes, h.edges, h_cum) -
          np.interp(nodes, psi.grid.edges, psi_cum))
  return CdfDistance(
      ks=float(np.max(np.abs(diff))),
      w1=_abs_integral(nodes, diff),
      mass_gap=abs(float(h_cum[-1] - psi_cum[-1])))


def solve_with_retry(p: polyroots.BigPoly,
                     policy: polyroots.PrecisionPolicy,
                     trial: Optional[int] = None,
                     t: Optional[float] = None) -> polyroots.RootEnsemble:
  """find_roots, doubling the bits up to policy.max_doublings times.

  Raises:
    polyroots.NoConvergence: Annotated with (trial, t) once every precision
      failed.
  """
  attempt = policy
  for doubling in range(policy.max_doublings + 1):
    try:
      return polyroots.find_roots(p, attempt)
    except polyroots.NoConvergence as e:
      failure = e
      logging.warning('Trial %s, t=%s: no convergence at %d bits (%d/%d)',
                      trial, t, attempt.bits, doubling + 1,
                      policy.max_doublings + 1)
      attempt = attempt.doubled()
  raise polyroots.NoConvergence(failure.iterations, failure.worst_residual,
                                trial=trial, t=t) from failure


def _initial_poly(cfg: ExperimentConfig, seed: int):
  """Returns (p, roots of p or None when they must be solved for)."""
  bits = cfg.policy.bits
  if cfg.dist == 'taylor':
    return polyroots.random_taylor(cfg.n, seed, bits=bits), None
  if cfg.dist == 'taylor_quarter':
    return polyroots.random_taylor(
        cfg.n, seed, power=QUARTER_POWER, bits=bits), None
  ens = polyroots.sample_radial_roots(cfg.dist, cfg.n, seed, bits=bits)
  return polyroots.poly_from_roots(ens, cfg.policy), ens


@dataclasses.dataclass
class TrialResult:
  seed: int
  roots: Dict[int, polyroots.RootEnsemble]
  histograms: Dict[int, RadialHistogram]


def run_trial(cfg: ExperimentConfig, seed: int) -> TrialResult:
  """Differentiates one polynomial through every count of cfg.t_grid."""
  p, known = _initial_poly(cfg, seed)
  result = TrialResult(seed, {}, {})
  done = 0
  for t, k in sorted(zip(cfg.t_grid, cfg.derivative_counts),
                     key=lambda item: item[1]):
    p = polyroots.differentiate(p, k - done)
    done = k
    if k == 0 and known is not None:
      roots = known
    else:
      roots = solve_with_retry(p, cfg.policy, trial=seed, t=t)
    result.roots[k] = roots
    result.histograms[k] = radial_histogram(roots, cfg.n, cfg.bins,
                                            cfg.grid.x_max, cfg.rescale)
  logging.info('Trial %d done (%s, n=%d)', seed, cfg.dist, cfg.n)
  return result


def reference_densities(
    cfg: ExperimentConfig) -> Dict[int, radial_pde.RadialDensity]:
  """PDE solution at each t, keyed by derivative count; empty if unknown.

  Raises:
    ExperimentConfigError: If cfg.grid cannot hold the initial profile.
  """
  profile = REFERENCE_PROFILES.get(cfg.dist)
  if profile is None:
    logging.info('No reference solution for dist=%s', cfg.dist)
    return {}
  try:
    psi0 = radial_pde.initial_density(profile, cfg.grid)
  except radial_pde.DomainTooSmall as e:
    raise ExperimentConfigError(f'dist={cfg.dist}: {e}') from e
  references = {}
  for t, k in zip(cfg.t_grid, cfg.derivative_counts):
    if profile == 'indicator':
      references[k] = radial_pde.indicator_solution(t, cfg.grid)
    else:
      references[k] = radial_pde.evolve(psi0, t, cfg.cfl)[0]
  return references


@dataclasses.dataclass
class FlowReport:
  config: Dict[str, Any]
  mean_histograms: Dict[int, RadialHistogram]
  # Rows matching METRICS_HEADER; seed 'mean' rows compare the pooled
  # histogram.
  metrics: List[tuple]
  trials: List[TrialResult]


def run_flow_experiment(cfg: ExperimentConfig,
                        output_dir: Optional[str] = None) -> FlowReport:
  """Runs all trials of cfg and compares them with the PDE.

  Args:
    cfg: The experiment.
    output_dir: Where config.json, metrics.csv, the pooled hist_t<k>.csv
      files and one trial_<seed> directory per trial are written. Nothing is
      written when None.

  Returns:
    The aggregated report.

  Raises:
    polyroots.NoConvergence: With the (trial, t) coordinates of the failure.
    ExperimentConfigError: If the reference grid is too short for the initial
      profile.
  """
  references = reference_densities(cfg)
  trials = []
  with concurrent.futures.ThreadPoolExecutor(
      max_workers=cfg.jobs or _MAX_WORKERS) as executor:
    wait_for = [executor.submit(run_trial, cfg, seed) for seed in cfg.trials]
    for f in concurrent.futures.as_completed(wait_for):
      trials.append(f.result())
  trials.sort(key=lambda trial: trial.seed)

  metrics = []
  means = {}
  for t, k in zip(cfg.t_grid, cfg.derivative_counts):
    means[k] = mean_histogram([trial.histograms[k] for trial in trials])
    if k not in references:
      continue
    for trial in trials:
      metrics.append((t, trial.seed) +
                     tuple(cdf_distance(trial.histograms[k], references[k])))
    metrics.append((t, 'mean') + tuple(cdf_distance(means[k], references[k])))

  report = FlowReport(cfg.to_dict(), means, metrics, trials)
  if output_dir:
    write_report(output_dir, report)
  return report


def write_report(output_dir: str, report: FlowReport) -> None:
  os.makedirs(output_dir, exist_ok=True)
  with open(os.path.join(output_dir, 'config.json'), 'w') as f:
    f.write(config.canonical_json(report.config))
  for trial in report.trials:
    trial_dir = os.path.join(output_dir, f'trial_{trial.seed}')
    for k, roots in trial.roots.items():
      polyroots.write_roots(os.path.join(trial_dir, f'roots_t{k}.csv'), roots)
      util.write_csv(
          os.path.join(trial_dir, f'hist_t{k}.csv'), HISTOGRAM_HEADER,
          trial.histograms[k].rows())
  for k, h in report.mean_histograms.items():
    util.write_csv(
        os.path.join(output_dir, f'hist_t{k}.csv'), HISTOGRAM_HEADER, h.rows())
  util.write_csv(
      os.path.join(output_dir, 'metrics.csv'), METRICS_HEADER, report.metrics)
  logging.info('Flow report written to %s', output_dir)


def _taylor_limit_cdf(r):
  return np.clip(r, 0.0, 1.0)


def kz_check(n: int,
             seed: int,
             policy: Optional[polyroots.PrecisionPolicy] = None) -> float:
  """KS distance of the radii / n of a random Taylor polynomial to U[0, 1]."""
  if n < MIN_KZ_DEGREE:
    raise ExperimentConfigError(f'kz_check needs n >= {MIN_KZ_DEGREE}, got {n}')
  policy = policy or polyroots.PrecisionPolicy.for_degree(n)
  roots = solve_with_retry(
      polyroots.random_taylor(n, seed, bits=policy.bits), policy, seed, 0.0)
  return float(stats.kstest(roots.moduli() / n, _taylor_limit_cdf).statistic)


def kz_sweep(ns: Sequence[int],
             seeds: Sequence[int],
             bits: Optional[int] = None,
             jobs: Optional[int] = None) -> Dict[int, List[float]]:
  """kz_check for every (n, seed).

  Returns:
    n -> KS values ordered like `seeds`. Medians via kz_medians().
  """
  results = {}
  with concurrent.futures.ThreadPoolExecutor(
      max_workers=jobs or _MAX_WORKERS) as executor:
    futures = {}
    for n in ns:
      policy = polyroots.PrecisionPolicy.for_degree(n, bits)
      for seed in seeds:
        futures[executor.submit(kz_check, n, seed, policy)] = (n, seed)
    for f in concurrent.futures.as_completed(futures):
      results[futures[f]] = f.result()
  sweep = {n: [results[(n, seed)] for seed in seeds] for n in ns}
  for n, values in sweep.items():
    logging.info('KZ n=%d: median ks %.4f over %d seeds', n,
                 float(np.median(values)), len(values))
  return sweep


def kz_medians(sweep: Dict[int, List[float]]) -> Dict[int, float]:
  return {n: float(np.median(values)) for n, values in sweep.items()}


def match_exact(cost: np.ndarray) -> List[Tuple[int, int]]:
  """Minimum total cost assignment of every column to a distinct row."""
  rows, cols = optimize.linear_sum_assignment(cost)
  return sorted(zip(rows.tolist(), cols.tolist()))


def match_greedy(cost: np.ndarray) -> List[Tuple[int, int]]:
  """Repeatedly pairs the globally closest free (row, column).

  Ties go to the smaller row index, then the smaller column index.
  """
  n_rows, n_cols = cost.shape
  row_index, col_index = np.meshgrid(
      np.arange(n_rows), np.arange(n_cols), indexing='ij')
  order = np.lexsort((col_index.ravel(), row_index.ravel(), cost.ravel()))
  used_rows = np.zeros(n_rows, dtype=bool)
  used_cols = np.zeros(n_cols, dtype=bool)
  pairs = []
  for flat in order:
    i, j = divmod(int(flat), n_cols)
    if used_rows[i] or used_cols[j]:
      continue
    used_rows[i] = used_cols[j] = True
    pairs.append((i, j))
    if len(pairs) == n_cols:
      break
  return sorted(pairs)


@dataclasses.dataclass
class PairingReport:
  unpaired_index: int
  unpaired_modulus: float
  median_modulus: float
  method: str
  # (root index, critical point index, distance, predicted shift error);
  # the error is nan where the prediction is undefined.
  pairs: List[Tuple[int, int, float, float]]

  def summary(self) -> Dict[str, Any]:
    distances = [pair[2] for pair in self.pairs]
    return {
        'unpaired_index': self.unpaired_index,
        'unpaired_modulus': self.unpaired_modulus,
        'median_modulus': self.median_modulus,
        'median_pair_distance': float(np.median(distances)),
        'method': self.method,
    }


def _shift_error(ens: polyroots.RootEnsemble, index: int,
                 critical: complex) -> float:
  try:
    return abs(complex(polyroots.predicted_shift(ens, index)) - critical)
  except (polyroots.PoleHit, polyroots.SumNearZero) as e:
    logging.debug('No predicted shift for root %d: %s', index, e)
    return math.nan


def pairing_check(
    ens: polyroots.RootEnsemble,
    policy: Optional[polyroots.PrecisionPolicy] = None) -> PairingReport:
  """Matches the n roots of p to the n - 1 roots of p'.

  Uses the exact minimum-weight matching up to EXACT_MATCHING_MAX roots and
  the greedy one above. Exactly one root of p stays unpaired.
  """
  n = len(ens)
  if n < MIN_PAIRING_DEGREE:
    raise ExperimentConfigError(
        f'pairing_check needs at least {MIN_PAIRING_DEGREE} roots, got {n}')
  policy = policy or polyroots.PrecisionPolicy.for_degree(n)
  p = polyroots.poly_from_roots(ens, policy)
  critical = solve_with_retry(
      polyroots.differentiate(p), policy, trial=ens.seed).as_array()
  roots = ens.as_array()
  cost = np.abs(roots[:, None] - critical[None, :])

  if n <= EXACT_MATCHING_MAX:
    method, pairs = 'exact', match_exact(cost)
  else:
    method, pairs = 'greedy', match_greedy(cost)
  paired = {i for i, _ in pairs}
  unpaired = next(i for i in range(n) if i not in paired)

  moduli = np.abs(roots)
  report = PairingReport(
      unpaired_index=unpaired,
      unpaired_modulus=float(moduli[unpaired]),
      median_modulus=float(np.median(moduli)),
      method=method,
      pairs=[(i, j, float(cost[i, j]), _shift_error(ens, i, critical[j]))
             for i, j in pairs])
  logging.info('Pairing (%s, n=%d): unpaired root %d at |z|=%.4f', method, n,
               unpaired, report.unpaired_modulus)
  return report


def write_pairing(path: str, report: PairingReport) -> None:
  util.write_csv(path, PAIRING_HEADER, report.pairs)
