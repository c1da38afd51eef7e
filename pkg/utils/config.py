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
"""Helper module to read and handle the config.

Reads the config.yaml file (or the bundled config_template.yaml when no local
config exists) and makes the contents available as a dictionary. Experiment
configs passed on the command line are JSON or YAML files with the same
schema and are merged on top of these defaults.
"""

import copy
import json
import os
import pathlib

import yaml

from absl import logging

from typing import Any, Dict, List

VERSION = '0.3.0'

_ROOT = pathlib.Path(__file__).resolve().parent.parent
_TEMPLATE = _ROOT / 'config_template.yaml'
_LOCAL = 'config.yaml'
_SEED_ENV = 'ROOTFLOW_SEED'

params = None


class ConfigError(Exception):
  pass


def load(path: str) -> Dict[str, Any]:
  """Reads a JSON or YAML config file.

  Files ending in .json use the JSON parser, which keeps exponent literals
  such as 1e-10 as floats. Everything else goes through the YAML loader.

  Args:
    path: Path to the config file.

  Returns:
    The parsed config as a dict.

  Raises:
    ConfigError: If the file is missing, unparsable or not a mapping.
  """
  try:
    with open(path) as f:
      if path.endswith('.json'):
        data = json.load(f)
      else:
        data = yaml.safe_load(f)
  except OSError as e:
    raise ConfigError(f'Cannot read config {path}: {e}') from e
  except (yaml.YAMLError, ValueError) as e:
    raise ConfigError(f'Cannot parse config {path}: {e}') from e

  if data is None:
    return {}
  if not isinstance(data, dict):
    raise ConfigError(f'Config {path} must be a mapping, got {type(data)}')
  return data


def merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
  """Recursively merges override into a copy of base."""
  merged = copy.deepcopy(base)
  for k, v in override.items():
    if isinstance(v, dict) and isinstance(merged.get(k), dict):
      merged[k] = merge(merged[k], v)
    else:
      merged[k] = copy.deepcopy(v)
  return merged


def _as_float(value: Any) -> Any:
  # YAML 1.1 reads 1e-6 as a string.
  if isinstance(value, str):
    try:
      return float(value)
    except ValueError:
      pass
  return value


def apply_overrides(cfg: Dict[str, Any], overrides: List[str]) -> Dict[str, Any]:
  """Applies dotted-key overrides such as 'pde.m=4000'.

  Values are parsed with the YAML loader so numbers, lists and booleans keep
  their types.
  """
  result = copy.deepcopy(cfg)
  for item in overrides or []:
    if '=' not in item:
      raise ConfigError(f'Override must look like key=value, got: {item}')
    key, raw_value = item.split('=', 1)
    path = [k for k in key.strip().split('.') if k]
    if not path:
      raise ConfigError(f'Empty override key in: {item}')
    try:
      value = yaml.safe_load(raw_value)
    except yaml.YAMLError as e:
      raise ConfigError(f'Cannot parse override value in {item}: {e}') from e
    value = _as_float(value)

    node = result
    for k in path[:-1]:
      if not isinstance(node.get(k), dict):
        node[k] = {}
      node = node[k]
    node[path[-1]] = value
    logging.debug('Override %s = %r', key, value)
  return result


def canonical_json(cfg: Dict[str, Any]) -> str:
  return json.dumps(cfg, sort_keys=True, indent=2) + '\n'


def _seed_from_env(data: Dict[str, Any]) -> Dict[str, Any]:
  raw = os.environ.get(_SEED_ENV)
  if raw is None or raw == '':
    return data
  try:
    data['seed'] = int(raw)
  except ValueError as e:
    raise ConfigError(f'{_SEED_ENV} must be an integer, got: {raw}') from e
  logging.info('Default seed taken from %s: %d', _SEED_ENV, data['seed'])
  return data


def init(path: str = None):
  # Initialize params.
  global params
  if path is None:
    path = _LOCAL if os.path.exists(_LOCAL) else str(_TEMPLATE)
  params = _seed_from_env(load(path))


# Run this when module is imported.
if not params:
  # Initialize only if params is None. A bad environment override is reported
  # again by main.run, which re-initializes inside its error mapping.
  try:
    init()
  except ConfigError as e:
    logging.error(e)
    params = load(str(_TEMPLATE))
