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
"""The main file where processing begins.

All processing begins in this file. Each experiment family is a subcommand,
given as the first positional argument:

  pde      evolve a radial density and record its mass history
  linear   energy rates and contraction of the linearized equation
  hardy    Hardy inequality corpus (--family=lemma or generalized)
  flow     Monte Carlo root flow against the transport equation
  kz       radial law of random Taylor polynomial roots
  pairing  matching between the roots of p and p'
  render   SVG figure of a CSV artifact

Defaults come from config.yaml (or config_template.yaml). An experiment config
given with --config is merged on top, then every --override=a.b=value, then
the subcommand flags.

Sample usage:
  python main.py pde --init=indicator --t=0.5 --output_dir=out/pde
  python main.py hardy --family=lemma --cases=100 --seed=7
  python main.py render --kind=density --artifact=out/pde/density.csv

Enable debug messages:
  python main.py pde --verbosity=1 --alsologtostderr

Exit codes: 0 success, 2 configuration, usage or file system error, 3 numerical
failure (details in <output_dir>/error.json).
"""

import os
import pathlib
import sys
import time

from absl import app
from absl import flags
from absl import logging

from typing import Any, Callable, Dict, Tuple

from handlers import empirics_handler
from handlers import linear_stability_handler
from handlers import polyroots_handler
from handlers import radial_pde_handler
from handlers import svg_handler

from utils import config
from utils import util

FLAGS = flags.FLAGS

SUBCOMMANDS = ('pde', 'linear', 'hardy', 'flow', 'kz', 'pairing', 'render')

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SUMMARY_FILE = 'summary.json'
ERROR_FILE = 'error.json'
CONFIG_FILE = 'config.json'

_HELP_ARGS = ('-h', '--help', '-help', '--helpshort', '--helpfull', '-?')
_GREEN = '\033[32m'
_RED = '\033[31m'
_RESET = '\033[0m'

flags.DEFINE_string('config', None, 'JSON or YAML experiment config.')
flags.DEFINE_string('output_dir', None,
                    'Where artifacts go. Defaults to output_dir in the config.')
flags.DEFINE_multi_string('override', [],
                          'Dotted config override, e.g. pde.m=4000.')
flags.DEFINE_boolean('force', False, 'Overwrite an existing summary.json.')
flags.DEFINE_integer('jobs', None, 'Worker cap for corpora and trials.')
flags.DEFINE_integer('seed', None, 'Base seed. Overrides ROOTFLOW_SEED.')

flags.DEFINE_enum('init', None, radial_pde_handler.INITIAL_PROFILES,
                  'pde: initial profile.')
flags.DEFINE_float('t', None, 'pde: final time.')
flags.DEFINE_integer('m', None, 'Grid cells (pde, linear, hardy, flow).')
flags.DEFINE_float('x_max', None, 'Grid length (pde, linear, hardy, flow).')
flags.DEFINE_float('cfl', None, 'Courant number (pde, flow).')
flags.DEFINE_integer('cases', None, 'Corpus size (linear, hardy).')
flags.DEFINE_enum('family', None, linear_stability_handler.FAMILIES,
                  'hardy: inequality family.')
flags.DEFINE_float('p', None, 'hardy: exponent of the generalized family.')
flags.DEFINE_float('r', None, 'hardy: weight of the generalized family.')
flags.DEFINE_integer('n', None, 'Degree (flow, kz, pairing).')
flags.DEFINE_list('t_grid', None, 'flow: comma separated fractions of n.')
flags.DEFINE_string('dist', None, 'Root distribution (flow, pairing).')
flags.DEFINE_integer('trials', None,
                     'Number of seeds (flow, kz, pairing), from --seed on.')
flags.DEFINE_integer('bins', None, 'flow: histogram bins.')
flags.DEFINE_string('artifact', None, 'render: CSV file to draw.')
flags.DEFINE_enum('kind', None, sorted(svg_handler.SCHEMAS),
                  'render: artifact kind.')

# flag name -> (config section, key) for each subcommand.
_FLAG_TARGETS = {
    'pde': {
        'init': 'init',
        't': 't_end',
        'm': 'm',
        'x_max': 'x_max',
        'cfl': 'cfl'
    },
    'linear': {
        'cases': 'cases',
        'm': 'm',
        'x_max': 'x_max',
        't': 't_end'
    },
    'hardy': {
        'family': 'family',
        'cases': 'cases',
        'm': 'm',
        'x_max': 'x_max',
        'p': 'p',
        'r': 'r'
    },
    'flow': {
        'n': 'n',
        't_grid': 't_grid',
        'dist': 'dist',
        'trials': 'trials',
        'bins': 'bins',
        'm': 'm',
        'x_max': 'x_max',
        'cfl': 'cfl'
    },
    'kz': {
        'n': 'n',
        'trials': 'seeds'
    },
    'pairing': {
        'n': 'n',
        'dist': 'dist',
        'trials': 'trials'
    },
    'render': {
        'kind': 'kind',
        'artifact': 'artifact'
    },
}


def _value(cfg: Dict[str, Any], section: str, key: str, kind: Callable):
  """Typed config lookup; missing or ill-typed values are config errors."""
  try:
    raw = cfg[section][key]
    if kind in (int, float) and isinstance(raw, bool):
      raise TypeError('boolean')
    value = kind(raw)
    if kind is int and value != raw:
      raise TypeError('not an integer')
    return value
  except (KeyError, TypeError, ValueError) as e:
    raise config.ConfigError(
        f'Config value {section}.{key} is missing or not {kind.__name__}: '
        f'{e!r}') from e


def _grid(cfg: Dict[str, Any], section: str) -> radial_pde_handler.RadialGrid:
  try:
    return radial_pde_handler.RadialGrid(
        _value(cfg, section, 'x_max', float), _value(cfg, section, 'm', int))
  except radial_pde_handler.Error as e:
    raise config.ConfigError(f'Bad grid in section {section}: {e}') from e


def _policy(cfg: Dict[str, Any], n: int) -> polyroots_handler.PrecisionPolicy:
  precision = cfg.get('precision') or {}
  try:
    return polyroots_handler.PrecisionPolicy.for_degree(
        n,
        bits=precision.get('bits'),
        residual_tol=precision.get('residual_tol'),
        max_iters=precision.get('max_iters', polyroots_handler.MAX_ITERS),
        max_doublings=precision.get('max_doublings',
                                    polyroots_handler.MAX_DOUBLINGS))
  except (polyroots_handler.Error, TypeError) as e:
    raise config.ConfigError(f'Bad precision section: {e}') from e


def process_pde(cfg, output_dir, seed, jobs):
  """Evolves a named initial profile and writes snapshots and history."""
  del seed, jobs  # Deterministic and serial.
  grid = _grid(cfg, 'pde')
  init = _value(cfg, 'pde', 'init', str)
  t_end = _value(cfg, 'pde', 't_end', float)
  cfl = _value(cfg, 'pde', 'cfl', float)
  eps_vac = _value(cfg, 'pde', 'eps_vac', float)
  if init not in radial_pde_handler.INITIAL_PROFILES:
    raise config.ConfigError(f'Unknown initial profile {init}')

  psi0 = radial_pde_handler.initial_density(init, grid)
  psi, history = radial_pde_handler.evolve(psi0, t_end, cfl, eps_vac)
  radial_pde_handler.write_density(
      os.path.join(output_dir, 'density_t0.csv'), psi0)
  radial_pde_handler.write_density(
      os.path.join(output_dir, 'density.csv'), psi)
  radial_pde_handler.write_history(
      os.path.join(output_dir, 'mass_history.csv'), history)

  results = {
      'time': psi.time,
      'mass': radial_pde_handler.mass(psi),
      'steps': len(history.times) - 1,
      'final_origin_flux': history.origin_fluxes[-1],
  }
  if init == 'indicator':
    exact = radial_pde_handler.indicator_solution(psi.time, grid)
    results['l1_to_exact'] = radial_pde_handler.l1_distance(psi, exact)
  return results, f'pde {init}: t={psi.time:g} mass={results["mass"]:.6f}'


def process_linear(cfg, output_dir, seed, jobs):
  """Energy rate corpus and one contraction series."""
  grid = _grid(cfg, 'linear')
  cases = _value(cfg, 'linear', 'cases', int)
  t_end = _value(cfg, 'linear', 't_end', float)
  samples = _value(cfg, 'linear', 'samples', int)

  rows = linear_stability_handler.energy_corpus(cases, seed, grid, jobs)
  util.write_csv(
      os.path.join(output_dir, 'energy.csv'),
      linear_stability_handler.ENERGY_HEADER, rows)
  w0 = linear_stability_handler.random_perturbation(grid, seed)
  series = linear_stability_handler.contraction_series(w0, t_end, samples)
  util.write_csv(
      os.path.join(output_dir, 'contraction.csv'), ['t', 'norm2'], series)

  worst_rate = max((row[2] / row[6] for row in rows), default=0.0)
  worst_gap = max((abs(row[2] - row[3]) / row[6] for row in rows), default=0.0)
  energies = [e for _, e in series]
  results = {
      'cases': len(rows),
      'max_rate_over_norm2': worst_rate,
      'max_decomposition_gap_over_norm2': worst_gap,
      'contraction_monotone': all(
          b <= a + 1e-6 * energies[0] for a, b in zip(energies, energies[1:])),
  }
  return results, (f'linear: {len(rows)} cases, max rate/norm2 '
                   f'{worst_rate:.3e}, gap/norm2 {worst_gap:.3e}')


def process_hardy(cfg, output_dir, seed, jobs):
  """Hardy inequality corpus of one family."""
  grid = _grid(cfg, 'hardy')
  family = _value(cfg, 'hardy', 'family', str)
  cases = _value(cfg, 'hardy', 'cases', int)
  p = _value(cfg, 'hardy', 'p', float)
  r = _value(cfg, 'hardy', 'r', float)
  if family not in linear_stability_handler.FAMILIES:
    raise config.ConfigError(f'Unknown Hardy family {family}')

  rows = linear_stability_handler.hardy_corpus(family, cases, seed, grid, p, r,
                                               jobs)
  util.write_csv(
      os.path.join(output_dir, f'hardy_{family}.csv'),
      linear_stability_handler.CORPUS_HEADER, rows)
  slack = linear_stability_handler.min_relative_slack(rows)
  results = {'family': family, 'cases': len(rows), 'min_relative_slack': slack}
  if family == 'generalized':
    results.update(p=p, r=r)
  return results, f'hardy {family}: {len(rows)} cases, min slack/rhs {slack:.3e}'


def process_flow(cfg, output_dir, seed, jobs):
  """Monte Carlo root flow against the reference densities."""
  experiment = empirics_handler.ExperimentConfig.from_params(
      cfg.get('flow') or {}, cfg.get('precision') or {}, seed, jobs)
  report = empirics_handler.run_flow_experiment(experiment, output_dir)
  means = {
      str(row[0]): dict(zip(['ks', 'w1', 'mass_gap'], row[2:]))
      for row in report.metrics
      if row[1] == 'mean'
  }
  results = {
      'trials': list(experiment.trials),
      'derivative_counts': experiment.derivative_counts,
      'mean_metrics': means,
  }
  w1 = ', '.join(f't={t}: {m["w1"]:.4f}' for t, m in means.items())
  return results, (f'flow {experiment.dist} n={experiment.n}: '
                   f'{len(experiment.trials)} trials; w1 {w1 or "n/a"}')


def process_kz(cfg, output_dir, seed, jobs):
  """KS distances of random Taylor roots to the uniform radial law."""
  try:
    raw = cfg['kz']['n']
    ns = [int(n) for n in (raw if isinstance(raw, list) else [raw])]
  except (KeyError, TypeError, ValueError) as e:
    raise config.ConfigError(f'kz.n must be an integer or a list: {e!r}') from e
  count = _value(cfg, 'kz', 'seeds', int)
  seeds = list(range(seed, seed + count))
  bits = (cfg.get('precision') or {}).get('bits')

  sweep = empirics_handler.kz_sweep(ns, seeds, bits, jobs)
  util.write_csv(
      os.path.join(output_dir, 'kz.csv'), ['n', 'seed', 'ks'],
      [(n, s, ks) for n in ns for s, ks in zip(seeds, sweep[n])])
  medians = empirics_handler.kz_medians(sweep)
  results = {'seeds': seeds, 'median_ks': {str(n): v for n, v in medians.items()}}
  text = ', '.join(f'n={n}: {v:.4f}' for n, v in medians.items())
  return results, f'kz median ks {text}'


def process_pairing(cfg, output_dir, seed, jobs):
  """Pairs the roots of p and p' for a few sampled ensembles."""
  del jobs
  n = _value(cfg, 'pairing', 'n', int)
  dist = _value(cfg, 'pairing', 'dist', str)
  trials = _value(cfg, 'pairing', 'trials', int)
  if dist not in polyroots_handler.RADIAL_LAWS or dist == 'table':
    raise config.ConfigError(f'pairing.dist must be a radial law, got {dist}')
  policy = _policy(cfg, n)

  reports = []
  for s in range(seed, seed + trials):
    ens = polyroots_handler.sample_radial_roots(dist, n, s, bits=policy.bits)
    report = empirics_handler.pairing_check(ens, policy)
    empirics_handler.write_pairing(
        os.path.join(output_dir, f'pairing_{s}.csv'), report)
    reports.append(dict(report.summary(), seed=s))

  below = sum(r['unpaired_modulus'] < r['median_modulus'] for r in reports)
  results = {'trials': reports, 'unpaired_below_median': below}
  return results, (f'pairing {dist} n={n}: unpaired root below the median '
                   f'modulus in {below}/{len(reports)} trials')


def process_render(cfg, output_dir, seed, jobs):
  """Renders one artifact to <output_dir>/<artifact name>.svg."""
  del seed, jobs
  kind = _value(cfg, 'render', 'kind', str)
  artifact = _value(cfg, 'render', 'artifact', str)
  if not artifact:
    raise config.ConfigError('render needs --artifact')
  name = os.path.splitext(os.path.basename(artifact))[0] + '.svg'
  output = svg_handler.render_svg(artifact, kind, os.path.join(output_dir, name))
  return {'svg': output}, f'render {kind}: {output}'


_PROCESSORS = {
    'pde': process_pde,
    'linear': process_linear,
    'hardy': process_hardy,
    'flow': process_flow,
    'kz': process_kz,
    'pairing': process_pairing,
    'render': process_render,
}


def resolve_config(subcommand: str) -> Dict[str, Any]:
  """Defaults, then --config, then --override, then subcommand flags."""
  cfg = config.params
  if FLAGS.config:
    cfg = config.merge(cfg, config.load(FLAGS.config))
  cfg = config.apply_overrides(cfg, FLAGS.override)
  assignments = []
  for flag, key in _FLAG_TARGETS[subcommand].items():
    value = FLAGS[flag].value
    if value is None:
      continue
    if flag == 't_grid':
      try:
        value = [float(v) for v in value]
      except ValueError as e:
        raise config.ConfigError(f'--t_grid must be numbers: {e}') from e
    if subcommand == 'kz' and flag == 'n':
      value = [value]
    assignments.append((key, value))
  section = dict(cfg.get(subcommand) or {})
  section.update(assignments)
  cfg = config.merge(cfg, {subcommand: section})
  if FLAGS.seed is not None:
    cfg['seed'] = FLAGS.seed
  if FLAGS.jobs is not None:
    cfg['jobs'] = FLAGS.jobs
  if FLAGS.output_dir:
    cfg['output_dir'] = FLAGS.output_dir
  return cfg


def _start_file_logging(log_dir: str):
  if not log_dir:
    return
  # Create log directory if it doesn't exist.
  pathlib.Path(log_dir).mkdir(parents=True, exist_ok=True)
  logging.get_absl_handler().start_logging_to_file(log_dir=log_dir)


def _print_summary(line: str, ok: bool):
  stream = sys.stdout if ok else sys.stderr
  if stream.isatty() and not os.environ.get('NO_COLOR'):
    line = (_GREEN if ok else _RED) + line + _RESET
  print(line, file=stream)


def _write_error(output_dir: str, subcommand: str, error: Exception):
  util.write_json(
      os.path.join(output_dir, ERROR_FILE), {
          'error': type(error).__name__,
          'message': str(error),
          'subcommand': subcommand,
      })


def execute(subcommand: str) -> Tuple[int, str]:
  """Runs a subcommand against the parsed flags.

  Returns:
    The exit code and the one-line summary.
  """
  try:
    config.init()
    cfg = resolve_config(subcommand)
    output_dir = cfg.get('output_dir')
    if not output_dir:
      raise config.ConfigError('No output_dir configured')
    seed = int(cfg.get('seed', 0))
    jobs = cfg.get('jobs')
    _start_file_logging(cfg.get('log_dir') or '')
    summary_path = os.path.join(output_dir, SUMMARY_FILE)
    if os.path.exists(summary_path) and not FLAGS.force:
      raise config.ConfigError(
          f'{summary_path} exists; pass --force to overwrite it')
    pathlib.Path(output_dir).mkdir(parents=True, exist_ok=True)
  except (config.ConfigError, TypeError, ValueError) as e:
    logging.error('Configuration error: %s', e)
    return EXIT_CONFIG, f'{subcommand}: configuration error: {e}'
  except OSError as e:
    logging.error('File system error: %s', e)
    return EXIT_CONFIG, f'{subcommand}: I/O error: {e}'

  logging.info('Running %s into %s (seed %d)', subcommand, output_dir, seed)
  started = util.get_current_time()
  clock = time.monotonic()
  try:
    if subcommand != 'flow':
      with open(os.path.join(output_dir, CONFIG_FILE), 'w') as f:
        f.write(config.canonical_json(cfg))
    results, line = _PROCESSORS[subcommand](cfg, output_dir, seed, jobs)
  except (config.ConfigError, empirics_handler.ExperimentConfigError,
          radial_pde_handler.DomainTooSmall) as e:
    logging.error('Configuration error: %s', e)
    return EXIT_CONFIG, f'{subcommand}: configuration error: {e}'
  except (radial_pde_handler.Error, linear_stability_handler.Error,
          polyroots_handler.Error, empirics_handler.Error,
          svg_handler.Error) as e:
    logging.error('%s failed: %s: %s', subcommand, type(e).__name__, e)
    _write_error(output_dir, subcommand, e)
    return EXIT_NUMERICAL, f'{subcommand}: {type(e).__name__}: {e}'
  except OSError as e:
    # Unwritable output or unreadable input paths.
    logging.error('%s failed: %s', subcommand, e)
    return EXIT_CONFIG, f'{subcommand}: I/O error: {e}'

  util.write_json(
      summary_path, {
          'subcommand': subcommand,
          'version': config.VERSION,
          'seed': seed,
          'config': cfg,
          'fingerprint': util.hash_single(config.canonical_json(cfg)),
          'started': started.isoformat(),
          'wall_clock_seconds': time.monotonic() - clock,
          'results': results,
      })
  logging.info('%s done: %s', subcommand, line)
  return EXIT_OK, line


def run(argv) -> int:
  """Parses argv and runs the subcommand; returns the exit code."""
  if any(arg in _HELP_ARGS for arg in argv[1:]):
    print(__doc__)
    print(FLAGS.main_module_help())
    return EXIT_OK

  FLAGS.unparse_flags()
  try:
    remaining = FLAGS(argv)
  except flags.Error as e:
    _print_summary(f'usage error: {e}', ok=False)
    return EXIT_CONFIG

  if len(remaining) != 2 or remaining[1] not in SUBCOMMANDS:
    _print_summary(
        f'usage: main.py <{"|".join(SUBCOMMANDS)}> [flags]; got '
        f'{remaining[1:]}', ok=False)
    return EXIT_CONFIG

  code, line = execute(remaining[1])
  _print_summary(line, ok=code == EXIT_OK)
  return code


def _parse_argv(argv):
  """flags_parser for app.run: help exits 0 and usage errors exit 2."""
  if any(arg in _HELP_ARGS for arg in argv[1:]):
    print(__doc__)
    print(FLAGS.main_module_help())
    sys.exit(EXIT_OK)
  try:
    FLAGS(argv)
  except flags.Error as e:
    _print_summary(f'usage error: {e}', ok=False)
    sys.exit(EXIT_CONFIG)
  return argv


def main(argv):
  return run(argv)


if __name__ == '__main__':
  app.run(main, flags_parser=_parse_argv)
