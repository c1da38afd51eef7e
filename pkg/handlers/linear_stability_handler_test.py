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
"""Tests for handlers.linear_stability_handler."""

import numpy as np

from absl.testing import absltest
from absl.testing import parameterized
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from handlers import linear_stability_handler as linear
from handlers import radial_pde_handler as pde

# Resolution of record for the energy checks.
_ENERGY_GRID = pde.RadialGrid(2.0, 4096)
_CORPUS_GRID = pde.RadialGrid(2.0, 2048)


def _sampled(grid, fn):
  x = grid.centers
  return linear.Perturbation(grid, np.where(x < 1.0, fn(x), 0.0))


class PerturbationTest(absltest.TestCase):

  def test_support(self):
    grid = pde.RadialGrid(2.0, 8)
    w = linear.Perturbation(grid, [1, -1, 0, 2, 0, 0, 0, 0])
    self.assertEqual(w.support_end, 3)
    self.assertTrue(w.compact)
    self.assertFalse(w.mean_zero)

  def test_zero(self):
    grid = pde.RadialGrid(2.0, 8)
    w = linear.Perturbation(grid, np.zeros(8))
    self.assertEqual(w.support_end, -1)
    self.assertTrue(w.mean_zero)

  def test_random_perturbation_is_admissible(self):
    for seed in range(20):
      w = linear.random_perturbation(_CORPUS_GRID, seed)
      self.assertTrue(w.mean_zero)
      self.assertTrue(w.compact)
      self.assertGreater(linear.norm2(w), 0)

  def test_random_admissible_f_vanishes_at_origin(self):
    f = linear.random_admissible_f(_CORPUS_GRID, 3, nonnegative=True)
    self.assertTrue(np.all(f.values >= 0))
    self.assertLess(f.values[0], 0.01)
    self.assertTrue(f.compact)


class LinearizedRhsTest(absltest.TestCase):

  def test_zero(self):
    grid = pde.RadialGrid(2.0, 100)
    rhs = linear.linearized_rhs(linear.Perturbation(grid, np.zeros(100)))
    np.testing.assert_array_equal(rhs, 0.0)

  def test_linear(self):
    grid = pde.RadialGrid(2.0, 400)
    rhs = linear.linearized_rhs(_sampled(grid, lambda x: x))
    np.testing.assert_allclose(rhs[20:198], 0.5, atol=1e-3)

  def test_constant(self):
    grid = pde.RadialGrid(2.0, 400)
    rhs = linear.linearized_rhs(_sampled(grid, lambda x: 0.7 * np.ones_like(x)))
    np.testing.assert_allclose(rhs[:198], 0.0, atol=1e-9)


class EvolveLinearizedTest(absltest.TestCase):

  def test_zero_stays_zero(self):
    grid = pde.RadialGrid(2.0, 200)
    w = linear.evolve_linearized(
        linear.Perturbation(grid, np.zeros(200)), 0.3, 0.4 * grid.dx)
    np.testing.assert_array_equal(w.values, 0.0)
    self.assertAlmostEqual(w.time, 0.3)

  def test_zero_time(self):
    w0 = linear.random_perturbation(pde.RadialGrid(2.0, 256), 1)
    w = linear.evolve_linearized(w0, 0.0, 0.4 * w0.grid.dx)
    np.testing.assert_array_equal(w.values, w0.values)

  def test_cfl_breach(self):
    w0 = linear.random_perturbation(pde.RadialGrid(2.0, 256), 1)
    with self.assertRaises(linear.StabilityViolation):
      linear.evolve_linearized(w0, 0.1, 0.6 * w0.grid.dx)

  def test_support_only_moves_left(self):
    w0 = linear.random_perturbation(pde.RadialGrid(2.0, 512), 4)
    w = linear.evolve_linearized(w0, 0.2, 0.4 * w0.grid.dx)
    self.assertLessEqual(w.support_end, w0.support_end)

  def test_contraction_over_time(self):
    for seed in (0, 1, 2):
      w0 = linear.random_perturbation(pde.RadialGrid(2.0, 1024), seed)
      series = linear.contraction_series(w0, 0.5, 10)
      self.assertLen(series, 11)
      energies = np.array([e for _, e in series])
      self.assertTrue(
          np.all(np.diff(energies) <= 1e-6 * energies[0]), msg=energies)

  def test_sine_bump_contracts(self):
    w0 = _sampled(pde.RadialGrid(2.0, 1024), lambda x: np.sin(2 * np.pi * x))
    self.assertTrue(w0.mean_zero)
    energies = np.array([e for _, e in linear.contraction_series(w0, 0.1, 10)])
    self.assertTrue(np.all(np.diff(energies) <= 1e-6 * energies[0]))


class EnergyDerivativeTest(absltest.TestCase):

  def test_zero(self):
    grid = pde.RadialGrid(2.0, 64)
    rate = linear.energy_derivative(linear.Perturbation(grid, np.zeros(64)))
    self.assertEqual(rate, linear.EnergyRate(0.0, 0.0, 0.0, 0.0))

  def test_sine(self):
    w = _sampled(_ENERGY_GRID, lambda x: np.sin(2 * np.pi * x))
    rate = linear.energy_derivative(w)
    norm = linear.norm2(w)
    self.assertLessEqual(rate.direct, 0.0)
    self.assertLessEqual(abs(rate.direct - rate.decomposed), 1e-3 * norm)
    self.assertGreater(rate.hardy_bracket, 0.0)

  def test_linear_bracket(self):
    rate = linear.energy_derivative(_sampled(_ENERGY_GRID, lambda x: x))
    self.assertAlmostEqual(rate.hardy_bracket, 0.25, delta=1e-4)
    self.assertAlmostEqual(rate.boundary_term, 0.0, delta=1e-12)

  def test_not_compact(self):
    grid = pde.RadialGrid(1.0, 16)
    with self.assertRaises(linear.Error):
      linear.energy_derivative(linear.Perturbation(grid, np.ones(16)))

  def test_corpus(self):
    rows = linear.energy_corpus(200, 7, _ENERGY_GRID)
    self.assertLen(rows, 200)
    self.assertEqual([row[0] for row in rows], list(range(200)))
    for _, _, direct, decomposed, _, bracket, norm in rows:
      self.assertLessEqual(direct, 1e-6 * norm)
      self.assertLessEqual(abs(direct - decomposed), 1e-3 * norm)
      self.assertGreater(bracket, 0.0)

  def test_decomposition_converges(self):
    worst = []
    for m in (1024, 4096):
      gaps = []
      for seed in range(5):
        rate = linear.energy_derivative(
            linear.random_perturbation(pde.RadialGrid(2.0, m), seed))
        gaps.append(abs(rate.direct - rate.decomposed))
      worst.append(max(gaps))
    self.assertLess(worst[1], worst[0])


class HardyPairTest(parameterized.TestCase):

  def test_zero(self):
    pair = linear.hardy_pair(
        linear.Perturbation(_CORPUS_GRID, np.zeros(_CORPUS_GRID.m)))
    self.assertEqual((pair.lhs, pair.rhs, pair.slack), (0.0, 0.0, 0.0))

  def test_linear(self):
    pair = linear.hardy_pair(
        _sampled(pde.RadialGrid(2.0, 4000), lambda x: x))
    self.assertAlmostEqual(pair.lhs / 0.25, 1.0, delta=1e-4)
    self.assertAlmostEqual(pair.rhs / 0.5, 1.0, delta=1e-4)
    self.assertGreater(pair.tol, 0.0)

  def test_strict(self):
    pair = linear.hardy_pair(_sampled(_CORPUS_GRID, lambda x: x * (1 - x)))
    self.assertGreater(pair.slack, pair.tol)

  def test_non_integrable(self):
    with self.assertRaises(linear.NonIntegrable):
      linear.hardy_pair(_sampled(_CORPUS_GRID, np.ones_like))

  def test_lemma_corpus(self):
    rows = linear.hardy_corpus('lemma', 200, 7, _CORPUS_GRID)
    self.assertLen(rows, 200)
    self.assertGreaterEqual(linear.min_relative_slack(rows), -1e-8)
    self.assertEqual(rows, linear.hardy_corpus('lemma', 200, 7, _CORPUS_GRID,
                                               jobs=1))

  @settings(max_examples=25, deadline=None)
  @given(st.integers(min_value=0, max_value=2**32))
  def test_lemma_holds(self, seed):
    pair = linear.hardy_pair(linear.random_admissible_f(_CORPUS_GRID, seed))
    self.assertGreaterEqual(pair.slack, -1e-8 * pair.rhs)


class GeneralizedHardyPairTest(parameterized.TestCase):

  def test_bad_exponents(self):
    f = _sampled(_CORPUS_GRID, lambda x: x)
    with self.assertRaises(linear.BadExponents):
      linear.generalized_hardy_pair(f, 1.0, 3.0)
    with self.assertRaises(linear.BadExponents):
      linear.generalized_hardy_pair(f, 2.0, 0.5)

  def test_zero(self):
    pair = linear.generalized_hardy_pair(
        linear.Perturbation(_CORPUS_GRID, np.zeros(_CORPUS_GRID.m)), 2, 3)
    self.assertEqual((pair.lhs, pair.rhs), (0.0, 0.0))

  def test_linear_on_support(self):
    grid = pde.RadialGrid(1.0, 2000)
    f = linear.Perturbation(grid, grid.centers)
    pair = linear.generalized_hardy_pair(f, 2, 3)
    self.assertAlmostEqual(pair.lhs / 0.125, 1.0, delta=1e-4)
    self.assertAlmostEqual(pair.rhs / 0.5, 1.0, delta=1e-4)

  def test_default_ignores_grid_beyond_support(self):
    pair = linear.generalized_hardy_pair(
        _sampled(pde.RadialGrid(2.0, 4000), lambda x: x), 2, 3)
    self.assertAlmostEqual(pair.lhs / 0.125, 1.0, delta=1e-4)
    self.assertAlmostEqual(pair.rhs / 0.5, 1.0, delta=1e-4)

  def test_linear_on_half_line(self):
    pair = linear.generalized_hardy_pair(
        _sampled(pde.RadialGrid(2.0, 4000), lambda x: x), 2, 3,
        include_tail=True)
    # int_1^inf x^-3 / 4 adds another 1/8.
    self.assertAlmostEqual(pair.lhs / 0.25, 1.0, delta=1e-4)
    self.assertAlmostEqual(pair.rhs / 0.5, 1.0, delta=1e-4)

  @parameterized.parameters(*linear.GENERALIZED_EXPONENTS)
  def test_corpus(self, p, r):
    rows = linear.hardy_corpus('generalized', 200, 11, _CORPUS_GRID, p, r)
    self.assertGreaterEqual(linear.min_relative_slack(rows), -1e-8)

  def test_negative_f(self):
    f = _sampled(_CORPUS_GRID, lambda x: x * (x - 0.5))
    with self.assertRaises(linear.Error):
      linear.generalized_hardy_pair(f, 2, 3)


if __name__ == '__main__':
  absltest.main()
