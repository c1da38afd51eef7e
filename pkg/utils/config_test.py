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
"""Tests for utils.config."""

import os
from unittest import mock

from absl.testing import absltest

from utils import config


class ConfigTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.tmp = self.create_tempdir().full_path

  def _file(self, name, text):
    path = os.path.join(self.tmp, name)
    with open(path, 'w') as f:
      f.write(text)
    return path

  def test_template_sections(self):
    for section in ('precision', 'pde', 'linear', 'hardy', 'flow', 'kz',
                    'pairing', 'render'):
      self.assertIsInstance(config.params[section], dict, msg=section)
    self.assertIsInstance(config.params['pde']['eps_vac'], float)

  def test_load_yaml_and_json(self):
    self.assertEqual(
        config.load(self._file('a.yaml', 'pde:\n  m: 10\n')), {'pde': {'m': 10}})
    self.assertEqual(
        config.load(self._file('a.json', '{"pde": {"eps_vac": 1e-10}}')),
        {'pde': {'eps_vac': 1e-10}})
    self.assertEqual(config.load(self._file('empty.yaml', '')), {})

  def test_load_errors(self):
    with self.assertRaises(config.ConfigError):
      config.load(os.path.join(self.tmp, 'missing.yaml'))
    with self.assertRaises(config.ConfigError):
      config.load(self._file('list.yaml', '- 1\n- 2\n'))
    with self.assertRaises(config.ConfigError):
      config.load(self._file('bad.json', '{"pde": '))

  def test_merge(self):
    base = {'pde': {'m': 10, 'cfl': 0.5}, 'seed': 1}
    merged = config.merge(base, {'pde': {'m': 20}, 'jobs': 2})
    self.assertEqual(merged, {
        'pde': {'m': 20, 'cfl': 0.5},
        'seed': 1,
        'jobs': 2
    })
    self.assertEqual(base['pde']['m'], 10)

  def test_apply_overrides(self):
    cfg = config.apply_overrides({'pde': {'m': 10}}, [
        'pde.m=4000', 'pde.eps_vac=1e-6', 'flow.t_grid=[0, 0.5]',
        'pde.init=bump', 'force=true'
    ])
    self.assertEqual(cfg['pde'], {'m': 4000, 'eps_vac': 1e-6, 'init': 'bump'})
    self.assertEqual(cfg['flow']['t_grid'], [0, 0.5])
    self.assertIs(cfg['force'], True)

  def test_apply_overrides_errors(self):
    with self.assertRaises(config.ConfigError):
      config.apply_overrides({}, ['pde.m'])
    with self.assertRaises(config.ConfigError):
      config.apply_overrides({}, ['=3'])

  def test_canonical_json_round_trip(self):
    text = config.canonical_json({'b': [1, 2.5], 'a': {'eps': 1e-10}})
    self.assertTrue(text.endswith('\n'))
    self.assertLess(text.index('"a"'), text.index('"b"'))
    path = self._file('c.json', text)
    self.assertEqual(config.canonical_json(config.load(path)), text)

  def test_seed_from_environment(self):
    saved = config.params
    try:
      with mock.patch.dict(os.environ, {'ROOTFLOW_SEED': '42'}):
        config.init()
      self.assertEqual(config.params['seed'], 42)
      with mock.patch.dict(os.environ, {'ROOTFLOW_SEED': 'x'}):
        with self.assertRaises(config.ConfigError):
          config.init()
    finally:
      config.params = saved


if __name__ == '__main__':
  absltest.main()
