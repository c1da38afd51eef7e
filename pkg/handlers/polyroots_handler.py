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
"""Handler for multiprecision complex polynomials and their roots.

Polynomials are stored as ascending coefficient tuples of mpmath complex
numbers. Every precision B gets its own mpmath context so that polynomials of
different precision can be handled from concurrent threads without touching
the global mpmath state.

Roots are found with a simultaneous Aberth-Ehrlich iteration. Starting points
sit on the circles of the Newton polygon, a double precision warm start
evaluates every term in the log domain, and Jacobi style multiprecision
sweeps then refine at 128, 512, ... bits up to the working precision.
"""

import dataclasses
import functools
import math

import mpmath
import numpy as np

from absl import logging

from typing import Any, List, Optional, Sequence, Tuple

from utils import util

DEFAULT_BITS = 256
MIN_BITS = 64
MAX_ITERS = 500
MAX_DOUBLINGS = 3
ABERTH_OFFSET = 0.37
QUADRATURE_NODES = 10000

PROVENANCES = ('sampled', 'solved', 'rescaled')
RADIAL_LAWS = ('complex_gaussian', 'uniform_disk', 'taylor_limit', 'table')

_WARM_START_ITERS = 200
_WARM_START_TOL = 1e-14
# Multiprecision sweeps start here and grow by _STAGE_FACTOR up to B.
_FIRST_STAGE_BITS = 128
_STAGE_FACTOR = 4
# Pairs closer than this (relative) cannot be told apart in double precision.
_DOUBLE_CLUSTER = 1e-14
_BISECTION_ITERS = 80
_ON_CIRCLE_TOL = 1e-12
_TABLE_TOL = 1e-12
_NUDGE = complex(math.cos(ABERTH_OFFSET), math.sin(ABERTH_OFFSET))


class Error(Exception):
  pass


class DegreeUnderflow(Error):
  pass


class NoConvergence(Error):
  """Aberth iteration hit its cap; retry with more bits."""

  def __init__(self, iterations: int, worst_residual: float,
               trial: Optional[int] = None, t: Optional[float] = None):
    self.iterations = iterations
    self.worst_residual = worst_residual
    self.trial = trial
    self.t = t
    message = (f'No convergence after {iterations} iterations, worst relative '
               f'residual {worst_residual:.3e}')
    if trial is not None:
      message += f' (trial {trial}, t={t})'
    super().__init__(message)


class BadTable(Error):
  pass


class PoleHit(Error):
  pass


class SumNearZero(Error):
  pass


class OnCircle(Error):
  pass


@functools.lru_cache(maxsize=None)
def context(bits: int) -> mpmath.MPContext:
  """Returns the shared, never mutated mpmath context for a precision."""
  ctx = mpmath.MPContext()
  ctx.prec = bits
  return ctx


def _convert(ctx, value):
  if isinstance(value, (int, np.integer)):
    return ctx.mpc(int(value))
  return ctx.mpc(ctx.mpf(value.real), ctx.mpf(value.imag))


def _log_abs(ctx, value) -> float:
  if value == 0:
    return -math.inf
  return float(ctx.log(abs(value)))


@dataclasses.dataclass(frozen=True)
class PrecisionPolicy:
  """Working precision and acceptance rule for the root finder.

  Attributes:
    bits: Mantissa bits B of every multiprecision number.
    residual_tol: Relative residual bound of accepted roots. None means
      2^(-B/2), which is also the smallest value allowed.
    max_iters: Aberth iteration cap.
    max_doublings: How often callers may double B after NoConvergence.
  """
  bits: int = DEFAULT_BITS
  residual_tol: Optional[float] = None
  max_iters: int = MAX_ITERS
  max_doublings: int = MAX_DOUBLINGS

  def __post_init__(self):
    if int(self.bits) != self.bits or self.bits < MIN_BITS:
      raise Error(f'bits must be an integer >= {MIN_BITS}, got {self.bits}')
    if self.max_iters < 1:
      raise Error(f'max_iters must be positive, got {self.max_iters}')
    if self.max_doublings < 0:
      raise Error(f'max_doublings must be >= 0, got {self.max_doublings}')
    if self.residual_tol is not None:
      if not 0 < self.residual_tol < 1:
        raise Error(f'residual_tol must be in (0, 1), got {self.residual_tol}')
      if math.log2(self.residual_tol) < -self.bits / 2:
        raise Error(f'residual_tol {self.residual_tol} is below 2^(-B/2) for '
                    f'B={self.bits}')

  @classmethod
  def for_degree(cls, n: int, bits: Optional[int] = None,
                 **kwargs) -> 'PrecisionPolicy':
    return cls(bits=bits or max(DEFAULT_BITS, 4 * n), **kwargs)

  @property
  def log_tol(self) -> float:
    """Natural log of the residual tolerance (2^(-B/2) underflows floats)."""
    if self.residual_tol is not None:
      return math.log(self.residual_tol)
    return -0.5 * self.bits * math.log(2.0)

  @property
  def cluster_tol(self) -> float:
    return 2.0**(-self.bits / 4)

  def doubled(self) -> 'PrecisionPolicy':
    return dataclasses.replace(self, bits=2 * self.bits)


@dataclasses.dataclass(frozen=True, eq=False)
class BigPoly:
  """p(z) = sum_k coeffs[k] z^k with coefficients at `bits` precision."""
  coeffs: Tuple[Any, ...]
  bits: int = DEFAULT_BITS

  def __post_init__(self):
    if self.bits < MIN_BITS:
      raise Error(f'bits must be >= {MIN_BITS}, got {self.bits}')
    if not len(self.coeffs):
      raise Error('A polynomial needs at least one coefficient')
    ctx = context(self.bits)
    coeffs = tuple(_convert(ctx, c) for c in self.coeffs)
    if coeffs[-1] == 0:
      raise Error('Leading coefficient must be nonzero')
    object.__setattr__(self, 'coeffs', coeffs)

  @property
  def degree(self) -> int:
    return len(self.coeffs) - 1

  @property
  def ctx(self):
    return context(self.bits)

  def __call__(self, z):
    return self.ctx.polyval(self.coeffs[::-1], _convert(self.ctx, z))

  def derivative_at(self, z):
    """Returns (p(z), p'(z))."""
    return self.ctx.polyval(
        self.coeffs[::-1], _convert(self.ctx, z), derivative=True)


@dataclasses.dataclass(frozen=True, eq=False)
class RootEnsemble:
  roots: Tuple[Any, ...]
  provenance: str
  seed: Optional[int] = None
  bits: int = DEFAULT_BITS

  def __post_init__(self):
    if self.provenance not in PROVENANCES:
      raise Error(f'Unknown provenance {self.provenance}')
    ctx = context(self.bits)
    object.__setattr__(self, 'roots',
                       tuple(_convert(ctx, z) for z in self.roots))

  def __len__(self):
    return len(self.roots)

  def as_array(self) -> np.ndarray:
    return np.array([complex(z) for z in self.roots], dtype=np.complex128)

  def moduli(self) -> np.ndarray:
    return np.abs(self.as_array())

  def scaled(self, factor) -> 'RootEnsemble':
    ctx = context(self.bits)
    f = _convert(ctx, factor)
    return RootEnsemble(
        tuple(z * f for z in self.roots), 'rescaled', self.seed, self.bits)


def poly_from_roots(ens: RootEnsemble,
                    policy: Optional[PrecisionPolicy] = None) -> BigPoly:
  """Monic expansion of prod_k (z - z_k)."""
  bits = policy.bits if policy else ens.bits
  ctx = context(bits)
  coeffs = [ctx.mpc(1)]
  for root in ens.roots:
    r = _convert(ctx, root)
    expanded = [ctx.mpc(0)] * (len(coeffs) + 1)
    for k, c in enumerate(coeffs):
      expanded[k + 1] += c
      expanded[k] -= r * c
    coeffs = expanded
  return BigPoly(tuple(coeffs), bits)


def differentiate(p: BigPoly, k: int = 1) -> BigPoly:
  """k-th derivative; coefficient j becomes a_{j+k} (j+1)(j+2)...(j+k).

  Raises:
    DegreeUnderflow: If k exceeds the degree.
  """
  if k < 0:
    raise Error(f'k must be nonnegative, got {k}')
  if k > p.degree:
    raise DegreeUnderflow(f'Cannot differentiate a degree {p.degree} '
                          f'polynomial {k} times')
  if k == 0:
    return p
  coeffs = []
  for j in range(p.degree - k + 1):
    coeffs.append(p.coeffs[j + k] * math.prod(range(j + 1, j + k + 1)))
  return BigPoly(tuple(coeffs), p.bits)


def scale_poly(p: BigPoly, lam) -> BigPoly:
  """Coefficients of z -> p(lam z)."""
  ctx = p.ctx
  factor = _convert(ctx, lam)
  power = ctx.mpc(1)
  coeffs = []
  for c in p.coeffs:
    coeffs.append(c * power)
    power *= factor
  return BigPoly(tuple(coeffs), p.bits)


def _newton_polygon_guesses(log_abs: np.ndarray) -> np.ndarray:
  """Starting points on circles read off the Newton polygon.

  Each edge of the upper convex hull of (k, log|a_k|) from k1 to k2 puts
  k2 - k1 points on a circle of radius exp((y1 - y2) / (k2 - k1)).
  """
  hull = []
  for k, y in enumerate(log_abs):
    if y == -math.inf:
      continue
    while len(hull) >= 2:
      (k1, y1), (k2, y2) = hull[-2], hull[-1]
      if (y2 - y1) * (k - k1) <= (y - y1) * (k2 - k1):
        hull.pop()
      else:
        break
    hull.append((k, y))

  guesses = []
  for edge, ((k1, y1), (k2, y2)) in enumerate(zip(hull, hull[1:])):
    count = k2 - k1
    radius = math.exp((y1 - y2) / count)
    angles = 2.0 * np.pi * np.arange(count) / count + ABERTH_OFFSET * (edge + 1)
    guesses.append(radius * np.exp(1j * angles))
  return np.concatenate(guesses)


def _warm_start(log_abs: np.ndarray, phase: np.ndarray,
                y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """Double precision Aberth with terms evaluated in the log domain.

  Every term a_k z^k is formed as exp(log|a_k| + k log|z| - max), so
  coefficients far outside the double range neither underflow nor overflow.

  Returns:
    The approximations and their relative residuals
    |p(z)| / sum_k |a_k z^k|.
  """
  keep = np.isfinite(log_abs)
  log_a = log_abs[keep]
  arg_a = phase[keep]
  powers = np.arange(len(log_abs))[keep]
  residuals = np.full(len(y), np.inf)
  with np.errstate(all='ignore'):
    for _ in range(_WARM_START_ITERS):
      exponents = log_a[None, :] + powers[None, :] * np.log(np.abs(y))[:, None]
      exponents -= np.max(exponents, axis=1, keepdims=True)
      terms = np.exp(exponents + 1j *
                     (arg_a[None, :] + powers[None, :] * np.angle(y)[:, None]))
      value = np.sum(terms, axis=1)
      slope = np.sum(terms * powers[None, :], axis=1)
      residuals = np.abs(value) / np.sum(np.abs(terms), axis=1)

      # p / p' = z * value / slope; the common factor exp(max) cancels.
      ratio = y * value / slope
      diff = y[:, None] - y[None, :]
      np.fill_diagonal(diff, np.inf)
      sums = np.sum(1.0 / diff, axis=1)
      delta = ratio / (1.0 - ratio * sums)
      candidate = y - delta
      if not np.all(np.isfinite(candidate)):
        break
      y = candidate
      if np.max(np.abs(delta) / (1.0 + np.abs(y))) <= _WARM_START_TOL:
        break
  return y, residuals


def _stages(bits: int) -> List[int]:
  """Precision ramp, e.g. 2048 -> [128, 512, 2048]."""
  stages = []
  b = _FIRST_STAGE_BITS
  while b < bits:
    stages.append(b)
    b *= _STAGE_FACTOR
  return stages + [bits]


def _refine(ctx, coeffs: Sequence[Any], z: List[Any], log_abs: np.ndarray,
            log_tol: float, iterations: int, cluster: float, scale: float):
  """Jacobi style multiprecision Aberth sweeps at the precision of ctx.

  Returns:
    (roots, sweeps used, log relative residuals, converged).
  """
  d = len(coeffs) - 1
  desc = list(coeffs[::-1])
  powers = np.arange(d + 1)
  done = [False] * d
  residuals = np.full(d, np.inf)
  nudge = ctx.mpc(_NUDGE) * cluster * scale

  for sweep in range(1, iterations + 1):
    approx = np.array([complex(v) for v in z], dtype=np.complex128)
    diff = approx[:, None] - approx[None, :]
    near = np.abs(diff) <= cluster * (scale + np.abs(approx)[:, None])
    np.fill_diagonal(near, True)
    with np.errstate(divide='ignore', invalid='ignore'):
      sums = np.sum(np.where(near, 0.0, 1.0 / diff), axis=1)

    updated = list(z)
    for i in range(d):
      if done[i]:
        continue
      pv, dv = ctx.polyval(desc, z[i], derivative=True)
      lz = _log_abs(ctx, z[i])
      if lz == -math.inf:
        log_scale_i = log_abs[0]
      else:
        log_scale_i = float(np.max(log_abs + powers * lz))
      residuals[i] = _log_abs(ctx, pv) - log_scale_i
      if residuals[i] <= log_tol:
        done[i] = True
        continue
      denom = dv - pv * ctx.mpc(complex(sums[i]))
      if denom == 0:
        updated[i] = z[i] + nudge
      else:
        updated[i] = z[i] - pv / denom
    z = updated
    if all(done):
      return z, sweep, residuals, True
  return z, iterations, residuals, False


def _aberth(ctx, coeffs: Sequence[Any], policy: PrecisionPolicy):
  """Roots of a polynomial with nonzero constant and leading coefficient.

  A log domain double precision warm start from Newton polygon radii, then
  multiprecision sweeps at increasing precision. Sweeps of every stage count
  against policy.max_iters.
  """
  d = len(coeffs) - 1
  log_abs = np.array([_log_abs(ctx, c) for c in coeffs])
  phase = np.array([float(ctx.arg(c)) if c != 0 else 0.0 for c in coeffs])
  powers = np.arange(d + 1)
  # Root radius scale: max_k |a_k / a_d|^(1/(d-k)).
  scale = math.exp(
      float(np.max((log_abs[:d] - log_abs[d]) / (d - powers[:d]))))

  y, warm = _warm_start(log_abs, phase, _newton_polygon_guesses(log_abs))
  logging.debug('Aberth: degree %d warm start, %d of %d roots below 1e-8', d,
                int(np.sum(warm <= 1e-8)), d)
  z = list(y)

  budget = policy.max_iters
  residuals = np.full(d, np.inf)
  for bits in _stages(ctx.prec):
    final = bits == ctx.prec
    stage_ctx = ctx if final else context(bits)
    stage_coeffs = [_convert(stage_ctx, c) for c in coeffs]
    z = [_convert(stage_ctx, v) for v in z]
    if final:
      log_tol = policy.log_tol
      cluster = max(policy.cluster_tol, _DOUBLE_CLUSTER)
      sweeps = budget
    else:
      log_tol = -0.5 * bits * math.log(2.0)
      cluster = max(2.0**(-bits / 4), _DOUBLE_CLUSTER)
      sweeps = max(1, budget // 2)
    if sweeps < 1:
      break
    z, used, residuals, converged = _refine(stage_ctx, stage_coeffs, z,
                                            log_abs, log_tol, sweeps, cluster,
                                            scale)
    budget -= used
    logging.debug('Aberth: degree %d, %d sweeps at %d bits', d, used, bits)
    if final and converged:
      return z

  worst = float(np.max(residuals))
  raise NoConvergence(policy.max_iters, math.exp(worst))


def find_roots(p: BigPoly,
               policy: Optional[PrecisionPolicy] = None) -> RootEnsemble:
  """All roots of p, counted with multiplicity.

  Args:
    p: Polynomial of degree >= 1.
    policy: Precision policy; the arithmetic runs at max(p.bits,
      policy.bits).

  Returns:
    An ensemble of exactly p.degree roots, provenance 'solved'.

  Raises:
    NoConvergence: If the iteration cap is hit. Callers double the bits.
  """
  if p.degree < 1:
    raise Error('find_roots needs degree >= 1')
  policy = policy or PrecisionPolicy(bits=p.bits)
  bits = max(p.bits, policy.bits)
  ctx = context(bits)
  coeffs = [_convert(ctx, c) for c in p.coeffs]

  # Vanishing low coefficients are exact roots at the origin.
  zeros = 0
  while coeffs[zeros] == 0:
    zeros += 1
  roots = [ctx.mpc(0)] * zeros
  if p.degree > zeros:
    roots.extend(_aberth(ctx, coeffs[zeros:], policy))
  return RootEnsemble(tuple(roots), 'solved', bits=bits)


def _complex_gaussians(rng: np.random.Generator, size: int) -> np.ndarray:
  """Box-Muller standard complex Gaussians (E|g|^2 = 1)."""
  u = rng.random((2, size))
  radius = np.sqrt(-np.log1p(-u[0]))
  return radius * np.exp(2j * np.pi * u[1])


def random_taylor(n: int, seed: int, power: float = 1.0,
                  bits: Optional[int] = None) -> BigPoly:
  """sum_k gamma_k z^k / (k!)^power with gamma_k standard complex Gaussian.

  power=1 is the random Taylor polynomial.
  """
  if n < 1:
    raise Error(f'n must be >= 1, got {n}')
  if not power > 0:
    raise Error(f'power must be positive, got {power}')
  bits = bits or max(DEFAULT_BITS, 4 * n)
  rng = np.random.default_rng(seed)
  gammas = _complex_gaussians(rng, n + 1)
  while gammas[n] == 0:
    gammas[n] = _complex_gaussians(rng, 1)[0]

  ctx = context(bits)
  exponent = ctx.mpf(power)
  coeffs = []
  factorial = 1
  for k, g in enumerate(gammas):
    if k:
      factorial *= k
    weight = ctx.mpf(factorial)
    if power != 1:
      weight = weight**exponent
    coeffs.append(ctx.mpc(complex(g)) / weight)
  return BigPoly(tuple(coeffs), bits)


def _invert_table(table: Tuple[Sequence[float], Sequence[float]],
                  u: np.ndarray) -> np.ndarray:
  """Inverse of a piecewise linear CDF by vectorized bisection."""
  r, cdf = (np.asarray(a, dtype=np.float64) for a in table)
  if r.ndim != 1 or r.shape != cdf.shape or r.size < 2:
    raise BadTable('Table needs two equally long 1-d arrays of size >= 2')
  if np.any(np.diff(r) <= 0) or r[0] < 0:
    raise BadTable('Table radii must be nonnegative and increasing')
  if np.any(np.diff(cdf) < 0) or cdf[0] < 0:
    raise BadTable('Table CDF must be nonnegative and nondecreasing')
  if abs(cdf[-1] - 1.0) > _TABLE_TOL:
    raise BadTable(f'Table CDF must end at 1, ends at {cdf[-1]}')

  lo = np.full(u.shape, r[0])
  hi = np.full(u.shape, r[-1])
  for _ in range(_BISECTION_ITERS):
    mid = 0.5 * (lo + hi)
    below = np.interp(mid, r, cdf) < u
    lo = np.where(below, mid, lo)
    hi = np.where(below, hi, mid)
    if np.all(hi - lo <= _TABLE_TOL * np.maximum(hi, 1e-300)):
      break
  return hi


def sample_radial_roots(dist: str,
                        n: int,
                        seed: int,
                        table: Optional[Tuple[Sequence[float],
                                              Sequence[float]]] = None,
                        bits: int = DEFAULT_BITS) -> RootEnsemble:
  """Samples n i.i.d. roots of a radial law.

  Args:
    dist: One of RADIAL_LAWS.
    n: Number of roots.
    seed: Generator seed.
    table: (radii, cdf) of the radial CDF when dist is 'table'.
    bits: Precision of the ensemble.

  Returns:
    A 'sampled' ensemble.

  Raises:
    BadTable: If the user CDF is not a nondecreasing function ending at 1.
  """
  if dist not in RADIAL_LAWS:
    raise Error(f'Unknown radial law {dist}, expected one of {RADIAL_LAWS}')
  if n < 0:
    raise Error(f'n must be nonnegative, got {n}')
  rng = np.random.default_rng(seed)
  u = rng.random(n)
  angles = 2.0 * np.pi * rng.random(n)

  if dist == 'complex_gaussian':
    radii = np.sqrt(-np.log1p(-u))
  elif dist == 'uniform_disk':
    radii = np.sqrt(u)
  elif dist == 'taylor_limit':
    radii = u
  else:
    if table is None:
      raise BadTable('dist=table needs a table')
    radii = _invert_table(table, u)

  roots = radii * np.exp(1j * angles)
  return RootEnsemble(tuple(roots.tolist()), 'sampled', seed, bits)


def cauchy_stieltjes(ens: RootEnsemble, z, tol: Optional[float] = None):
  """sum_k 1 / (z - z_k), i.e. p'(z) / p(z).

  Raises:
    PoleHit: If z lies within the cluster tolerance of a root.
  """
  ctx = context(ens.bits)
  tol = tol if tol is not None else 2.0**(-ens.bits / 4)
  point = _convert(ctx, z)
  limit = tol * max(1.0, float(abs(point)))
  total = ctx.mpc(0)
  for root in ens.roots:
    gap = point - root
    if abs(gap) <= limit:
      raise PoleHit(f'{complex(point)} is within {limit:.3e} of a root')
    total += 1 / gap
  return total


def predicted_shift(ens: RootEnsemble, index: int,
                    tol: Optional[float] = None):
  """First order position of the root of p' next to root `index`.

  Returns z_l - (sum_{k != l} 1 / (z_l - z_k))^-1.

  Raises:
    PoleHit: If another root is within the cluster tolerance of z_l.
    SumNearZero: If the excluded sum cancels to below the tolerance.
  """
  if not 0 <= index < len(ens):
    raise Error(f'Index {index} out of range for {len(ens)} roots')
  if len(ens) < 2:
    raise Error('predicted_shift needs at least two roots')
  ctx = context(ens.bits)
  tol = tol if tol is not None else 2.0**(-ens.bits / 4)
  z = ens.roots[index]
  others = ens.roots[:index] + ens.roots[index + 1:]
  total = ctx.mpc(0)
  magnitude = ctx.mpf(0)
  for root in others:
    gap = z - root
    if abs(gap) <= tol * max(1.0, float(abs(z))):
      raise PoleHit(f'Root {index} is not isolated')
    term = 1 / gap
    total += term
    magnitude += abs(term)
  if abs(total) <= tol * magnitude:
    raise SumNearZero(f'Excluded sum at root {index} vanishes '
                      f'(|sum|={float(abs(total)):.3e})')
  return z - 1 / total


def circle_kernel_average(r: float, s: float, mode: str = 'closed',
                          nodes: int = QUADRATURE_NODES) -> float:
  """(1/2pi) int_0^2pi 1 / (r - s e^{it}) dt, which is 1/r if r > s else 0.

  Args:
    r: Evaluation radius.
    s: Circle radius.
    mode: 'closed' or 'quadrature' (trapezoid rule with `nodes` nodes).
    nodes: Quadrature nodes.

  Raises:
    OnCircle: If r and s coincide within the tolerance.
  """
  if not (r > 0 and s > 0):
    raise Error(f'r and s must be positive, got {r}, {s}')
  if abs(r - s) <= _ON_CIRCLE_TOL * max(r, s):
    raise OnCircle(f'r={r} lies on the circle of radius {s}')
  if mode == 'closed':
    return 1.0 / r if r > s else 0.0
  if mode == 'quadrature':
    t = 2.0 * np.pi * np.arange(nodes) / nodes
    return float(np.mean(1.0 / (r - s * np.exp(1j * t))).real)
  raise Error(f'Unknown mode {mode}')


def write_roots(path: str, ens: RootEnsemble) -> None:
  values = ens.as_array()
  util.write_csv(path, ['re', 'im'],
                 list(zip(values.real.tolist(), values.imag.tolist())))


def read_roots(path: str, provenance: str = 'solved',
               bits: int = DEFAULT_BITS) -> RootEnsemble:
  header, rows = util.read_csv(path)
  if header != ['re', 'im']:
    raise Error(f'{path} is not a root file (header {header})')
  roots = [complex(float(re), float(im)) for re, im in rows]
  return RootEnsemble(tuple(roots), provenance, bits=bits)


def _hex_float(x) -> str:
  sign, man, exp, _ = x._mpf_
  man = -int(man) if sign else int(man)
  return f'{man:#x}p{int(exp):+d}'


def _parse_hex_float(ctx, text: str):
  man, exp = text.split('p')
  return ctx.mpf((int(man, 16), int(exp)))


def write_poly(path: str, p: BigPoly) -> None:
  """Writes a `degree,B` line, then one `re,im` hex-float pair per line."""
  lines = [f'{p.degree},{p.bits}']
  for c in p.coeffs:
    lines.append(f'{_hex_float(c.real)},{_hex_float(c.imag)}')
  with open(path, 'w') as f:
    f.write('\n'.join(lines) + '\n')


def read_poly(path: str) -> BigPoly:
  with open(path) as f:
    lines = f.read().split()
  try:
    degree, bits = (int(v) for v in lines[0].split(','))
    ctx = context(bits)
    coeffs = []
    for line in lines[1:]:
      re, im = line.split(',')
      coeffs.append(
          ctx.mpc(_parse_hex_float(ctx, re), _parse_hex_float(ctx, im)))
  except (IndexError, ValueError) as e:
    raise Error(f'{path} is not a polynomial file: {e}') from e
  if len(coeffs) != degree + 1:
    raise Error(f'{path} declares degree {degree} but has {len(coeffs)} '
                'coefficients')
  return BigPoly(tuple(coeffs), bits)
