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
"""Utility file.

Collection of various utility functions used frequently throughout the code:
CSV/JSON emission, seeds and fingerprints.
"""

import base64
import csv
import datetime
import json
import pathlib

from absl import logging

from Crypto.Hash import SHA256

from typing import Any, List, Sequence, Tuple

_SEED_BITS = 63


def get_current_time():
  return datetime.datetime.now(datetime.timezone.utc)


def hash_single(data: str) -> str:
  return base64.b64encode(
      SHA256.new(data=data.encode('utf-8')).digest()).decode('utf-8')


def derive_seed(base_seed: int, *labels: Any) -> int:
  """Derives an independent seed for a labelled sub-task.

  The derived seed only depends on the base seed and the labels, so corpus
  entries can be evaluated in any order (or in parallel) with identical
  results.

  Args:
    base_seed: The run seed.
    *labels: Anything with a stable str(), e.g. family name and case index.

  Returns:
    A non-negative integer below 2**63.
  """
  text = ':'.join([str(base_seed)] + [str(l) for l in labels])
  digest = SHA256.new(data=text.encode('utf-8')).digest()
  return int.from_bytes(digest[:8], 'big') >> (64 - _SEED_BITS)


def format_value(value: Any) -> str:
  """Formats floats to 17 significant digits, everything else with str()."""
  if isinstance(value, float):
    return '%.17g' % value
  # numpy floats are not float subclasses in every version.
  if hasattr(value, 'dtype') and getattr(value.dtype, 'kind', '') == 'f':
    return '%.17g' % float(value)
  return str(value)


def write_csv(path: str, header: Sequence[str],
              rows: Sequence[Sequence[Any]]) -> None:
  pathlib.Path(path).parent.mkdir(parents=True, exist_ok=True)
  with open(path, 'w', newline='') as f:
    writer = csv.writer(f, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
      writer.writerow([format_value(v) for v in row])
  logging.debug('Wrote %d rows to %s', len(rows), path)


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
  """Reads a CSV file written by write_csv.

  Returns:
    The header and the remaining rows, all as strings.
  """
  with open(path, newline='') as f:
    rows = list(csv.reader(f))
  if not rows:
    return [], []
  return rows[0], rows[1:]


def write_json(path: str, data: Any) -> None:
  pathlib.Path(path).parent.mkdir(parents=True, exist_ok=True)
  with open(path, 'w') as f:
    f.write(json.dumps(data, sort_keys=True, indent=2) + '\n')
