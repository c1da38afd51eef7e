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
"""Handler for static SVG figures of the CSV artifacts.

Output is byte-identical for identical input: an 800x600 canvas, no date
metadata, a fixed hash salt and text kept as text.
"""

import math
import os

import matplotlib
from matplotlib import figure
from matplotlib import ticker
import numpy as np

from absl import logging

from typing import List, Optional, Tuple

from utils import util

SCHEMAS = {
    'density': ['x', 'psi'],
    'histogram': ['left', 'right', 'mass'],
    'scatter': ['re', 'im'],
    'mass_series': ['t', 'mass', 'origin_flux'],
}

FIGSIZE = (8, 6)
DPI = 100
DIVISIONS = 10
_STEPS = (1, 2, 5, 10)

_RC = {
    'svg.hashsalt': 'rootflow',
    'svg.fonttype': 'none',
    'path.simplify': False,
}


class Error(Exception):
  pass


class SchemaMismatch(Error):
  pass


def nice_range(lo: float, hi: float) -> Tuple[float, float]:
  """Widens [lo, hi] to multiples of a 1-2-5 step of about span / 10."""
  if not (math.isfinite(lo) and math.isfinite(hi)):
    return 0.0, 1.0
  if hi <= lo:
    pad = abs(lo) or 1.0
    lo, hi = lo - 0.5 * pad, hi + 0.5 * pad
  raw = (hi - lo) / DIVISIONS
  exponent = math.floor(math.log10(raw))
  fraction = raw / 10**exponent
  step = next(s for s in _STEPS if s >= fraction - 1e-9) * 10**exponent
  return math.floor(lo / step + 1e-9) * step, math.ceil(hi / step - 1e-9) * step


def _load(artifact: str, kind: str) -> np.ndarray:
  if kind not in SCHEMAS:
    raise Error(f'Unknown kind {kind}, expected one of {sorted(SCHEMAS)}')
  if not os.path.isfile(artifact):
    raise Error(f'Artifact {artifact} is not a file')
  header, rows = util.read_csv(artifact)
  if header != SCHEMAS[kind]:
    raise SchemaMismatch(
        f'{artifact} has columns {header}, kind {kind} needs {SCHEMAS[kind]}')
  try:
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
  except ValueError as e:
    raise SchemaMismatch(f'{artifact} has a non numeric value: {e}') from e
  return data.reshape(len(rows), len(header))


def _density_series(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """Cell edges and values of a density snapshot."""
  if not len(data):
    return np.zeros(1), np.zeros(0)
  dx = 2.0 * data[0, 0]
  return np.arange(len(data) + 1) * dx, data[:, 1]


def _histogram_series(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
  """Bin edges and mass per unit radius."""
  if not len(data):
    return np.zeros(1), np.zeros(0)
  edges = np.append(data[:, 0], data[-1, 1])
  return edges, data[:, 2] / (data[:, 1] - data[:, 0])


def _apply_ticks(ax, xs: List[np.ndarray], ys: List[np.ndarray]):
  for axis, values, set_lim in ((ax.xaxis, xs, ax.set_xlim),
                                (ax.yaxis, ys, ax.set_ylim)):
    flat = np.concatenate([np.ravel(v) for v in values])
    if flat.size:
      set_lim(*nice_range(float(np.min(flat)), float(np.max(flat))))
    else:
      set_lim(0.0, 1.0)
    axis.set_major_locator(
        ticker.MaxNLocator(nbins=DIVISIONS, steps=list(_STEPS)))


def render_svg(artifact: str, kind: str, output: Optional[str] = None) -> str:
  """Draws one CSV artifact as an SVG file.

  Args:
    artifact: A density, histogram, roots or mass history CSV.
    kind: One of SCHEMAS.
    output: Target path, defaults to the artifact path with an .svg suffix.

  Returns:
    The path of the written SVG.

  Raises:
    SchemaMismatch: If the artifact's columns do not belong to kind.
  """
  data = _load(artifact, kind)
  output = output or os.path.splitext(artifact)[0] + '.svg'

  with matplotlib.rc_context(_RC):
    fig = figure.Figure(figsize=FIGSIZE, dpi=DPI)
    ax = fig.subplots()
    if kind in ('density', 'histogram'):
      series = _density_series if kind == 'density' else _histogram_series
      edges, values = series(data)
      if values.size:
        ax.stairs(values, edges, color='black')
      xs, ys = [edges], [values, np.zeros(1)]
      ax.set_xlabel('x')
      ax.set_ylabel('psi' if kind == 'density' else 'mass / dx')
    elif kind == 'scatter':
      if len(data):
        ax.scatter(data[:, 0], data[:, 1], s=4, color='black', linewidths=0)
      xs, ys = [data[:, 0]], [data[:, 1]]
      ax.set_xlabel('Re z')
      ax.set_ylabel('Im z')
    else:
      if len(data):
        ax.plot(data[:, 0], data[:, 1], color='black', label='mass')
        ax.plot(data[:, 0], data[:, 2], color='gray', label='origin flux')
        ax.legend(loc='upper right')
      xs, ys = [data[:, 0]], [data[:, 1], data[:, 2]]
      ax.set_xlabel('t')
    _apply_ticks(ax, xs, ys)
    ax.set_title(f'{kind}: {os.path.basename(artifact)}')
    os.makedirs(os.path.dirname(os.path.abspath(output)), exist_ok=True)
    fig.savefig(output, format='svg', metadata={'Date': None})

  logging.info('Rendered %s (%s, %d rows) to %s', artifact, kind, len(data),
               output)
  return output
