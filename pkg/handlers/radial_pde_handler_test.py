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
"""Tests for handlers.radial_pde_handler."""

import os

import numpy as np

from absl.testing import absltest
from absl.testing import parameterized
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st

from handlers import radial_pde_handler as pde
from utils import config

# Grid of record for the exact-solution checks.
_X_MAX = 1.2
_M = 2000


def _density(grid, fn):
  return pde.RadialDensity(grid, fn(grid.centers))


class CumulativeAverageTest(absltest.TestCase):

  def test_constant(self):
    grid = pde.RadialGrid(1.0, 100)
    avg = pde.cumulative_average(_density(grid, np.ones_like))
    np.testing.assert_allclose(avg.values, 1.0, rtol=1e-12)

  def test_linear(self):
    grid = pde.RadialGrid(1.0, 400)
    avg = pde.cumulative_average(_density(grid, lambda x: x))
    x = grid.centers
    np.testing.assert_allclose(avg.values[10:], x[10:] / 2, atol=grid.dx**2)

  def test_indicator(self):
    grid = pde.RadialGrid(2.0, 400)
    psi = pde.indicator_solution(0.0, grid)
    avg = pde.cumulative_average(psi)
    x = grid.centers
    expected = np.where(x <= 1.0, 1.0, 1.0 / x)
    np.testing.assert_allclose(avg.values, expected, atol=grid.dx)

  def test_weighted_average_nondecreasing(self):
    grid = pde.RadialGrid(3.0, 300)
    psi = pde.initial_density('gaussian', grid)
    avg = pde.cumulative_average(psi)
    self.assertTrue(np.all(np.diff(avg.values * grid.centers) >= 0))


class VelocityTest(absltest.TestCase):

  def test_unit_average(self):
    grid = pde.RadialGrid(1.0, 50)
    avg = pde.cumulative_average(_density(grid, np.ones_like))
    np.testing.assert_allclose(pde.velocity(avg).values, -1.0)

  def test_linear_density(self):
    grid = pde.RadialGrid(1.0, 400)
    avg = pde.cumulative_average(_density(grid, lambda x: x))
    x = grid.centers
    v = pde.velocity(avg).values
    np.testing.assert_allclose(v[10:], -2.0 / x[10:], rtol=1e-3)

  def test_vacuum_is_capped(self):
    grid = pde.RadialGrid(1.0, 50)
    avg = pde.cumulative_average(_density(grid, np.zeros_like))
    v = pde.velocity(avg, eps_vac=1e-10).values
    np.testing.assert_allclose(v, -1e10)
    self.assertTrue(np.all(v <= 0))


class StepTest(parameterized.TestCase):

  def test_indicator_loses_dt(self):
    grid = pde.RadialGrid(_X_MAX, 600)
    psi = pde.indicator_solution(0.0, grid)
    dt = pde.adaptive_dt(psi, 0.5)
    new, flux = pde.step_with_flux(psi, dt)
    self.assertAlmostEqual(pde.mass(psi) - pde.mass(new), dt, delta=dt * 1e-9)
    self.assertAlmostEqual(flux, -1.0, places=12)
    self.assertAlmostEqual(new.time, dt)

  def test_vacuum_fixed_point(self):
    grid = pde.RadialGrid(1.0, 100)
    psi = pde.RadialDensity(grid, np.zeros(grid.m))
    new = pde.step(psi, 1e-3)
    np.testing.assert_array_equal(new.values, 0.0)
    self.assertEqual(pde.mass(new), 0.0)

  def test_interior_plateau_is_stationary(self):
    grid = pde.RadialGrid(_X_MAX, 600)
    psi, _ = pde.evolve(pde.indicator_solution(0.0, grid), 0.25, cfl=0.5)
    i = int(0.5 / grid.dx)
    self.assertAlmostEqual(psi.values[i], 1.0, delta=grid.dx)

  @parameterized.parameters('gaussian', 'bump', 'uniform_disk', 'indicator')
  def test_discrete_mass_balance(self, profile):
    grid = pde.RadialGrid(3.0, 300)
    psi = pde.initial_density(profile, grid)
    for _ in range(20):
      dt = pde.adaptive_dt(psi, 0.9)
      new, flux = pde.step_with_flux(psi, dt)
      self.assertLessEqual(flux, 0.0)
      self.assertAlmostEqual(
          pde.mass(new) - pde.mass(psi), dt * flux, delta=1e-14)
      psi = new

  def test_too_large_dt_is_rejected(self):
    grid = pde.RadialGrid(1.2, 120)
    psi = pde.indicator_solution(0.0, grid)
    with self.assertRaises(pde.StabilityViolation):
      pde.step(psi, grid.dx)

  @settings(max_examples=50, deadline=None)
  @given(
      st.lists(
          st.floats(min_value=0.0, max_value=10.0),
          min_size=16,
          max_size=16),
      st.floats(min_value=0.05, max_value=0.9))
  def test_nonnegative(self, values, cfl):
    grid = pde.RadialGrid(1.0, 16)
    psi = pde.RadialDensity(grid, np.array(values))
    dt = pde.adaptive_dt(psi, cfl)
    try:
      new = pde.step(psi, dt)
    except pde.StabilityViolation:
      # Only the floored step of a degenerate density may be rejected.
      self.assertEqual(dt, pde.DT_MIN_FACTOR * grid.x_max)
      return
    self.assertTrue(np.all(new.values >= 0))


class AdaptiveDtTest(absltest.TestCase):

  def test_unit_density(self):
    grid = pde.RadialGrid(1.0, 100)
    psi = _density(grid, np.ones_like)
    self.assertAlmostEqual(pde.adaptive_dt(psi, 0.5), 0.005, places=12)

  def test_empty_density(self):
    grid = pde.RadialGrid(1.0, 100)
    psi = _density(grid, np.zeros_like)
    self.assertAlmostEqual(
        pde.adaptive_dt(psi, 0.5), 0.5 * 0.01 * pde.EPS_VAC, places=20)

  def test_linear_density(self):
    grid = pde.RadialGrid(1.0, 200)
    psi = _density(grid, lambda x: x)
    x0 = grid.centers[0]
    dt = pde.adaptive_dt(psi, 0.5)
    # min A sits at the first cell, A ~ x0 / 2 up to O(dx).
    self.assertBetween(dt, 0.5 * grid.dx * x0 / 2, 0.5 * grid.dx * 2 * x0)

  def test_bad_cfl(self):
    grid = pde.RadialGrid(1.0, 10)
    with self.assertRaises(pde.Error):
      pde.adaptive_dt(_density(grid, np.ones_like), 1.0)


class EvolveTest(parameterized.TestCase):

  def test_zero_time_is_identity(self):
    grid = pde.RadialGrid(3.0, 100)
    psi0 = pde.initial_density('gaussian', grid)
    psi, history = pde.evolve(psi0, 0.0)
    np.testing.assert_array_equal(psi.values, psi0.values)
    self.assertLen(history.times, 1)

  @parameterized.parameters(0.1, 0.25, 0.5, 0.75)
  def test_exact_indicator_solution(self, t):
    grid = pde.RadialGrid(_X_MAX, _M)
    # Same Courant number as the pde subcommand.
    cfl = float(config.params['pde']['cfl'])
    psi, history = pde.evolve(pde.indicator_solution(0.0, grid), t, cfl=cfl)
    self.assertEqual(psi.time, t)
    self.assertEqual(history.times[-1], t)
    exact = pde.indicator_solution(t, grid)
    self.assertLessEqual(pde.l1_distance(psi, exact), 10 * grid.dx)

  def test_exact_indicator_solution_half_cfl(self):
    grid = pde.RadialGrid(_X_MAX, _M)
    psi, _ = pde.evolve(pde.indicator_solution(0.0, grid), 0.1, cfl=0.5)
    exact = pde.indicator_solution(0.1, grid)
    self.assertLessEqual(pde.l1_distance(psi, exact), 10 * grid.dx)

  def test_mass_loss_law(self):
    grid = pde.RadialGrid(_X_MAX, _M)
    _, history = pde.evolve(pde.indicator_solution(0.0, grid), 0.8, cfl=0.5)
    t = np.array(history.times)
    m = np.array(history.masses)
    self.assertLessEqual(np.max(np.abs(m - (1 - t))), 0.01)
    self.assertLessEqual(np.max(np.abs(m - (1 - t))), 10 * grid.dx)
    slope = np.polyfit(t, m, 1)[0]
    self.assertAlmostEqual(slope, -1.0, delta=0.02)
    self.assertAlmostEqual(m[-1], 0.2, delta=0.02)

  def test_grid_convergence(self):
    errors = []
    for m in (500, 1000):
      grid = pde.RadialGrid(_X_MAX, m)
      psi, _ = pde.evolve(pde.indicator_solution(0.0, grid), 0.5, cfl=0.5)
      errors.append(pde.l1_distance(psi, pde.indicator_solution(0.5, grid)))
    self.assertBetween(errors[1] / errors[0], 0.4, 0.8)

  @parameterized.parameters(0.5, 2.0)
  def test_scaling_commutes_with_evolution(self, lam):
    defects = []
    for m in (2000, 4000):
      grid = pde.RadialGrid(2.5, m)
      psi0 = pde.initial_density('bump', grid)
      left, _ = pde.evolve(pde.rescale(psi0, lam), 0.25, cfl=0.5)
      right = pde.rescale(pde.evolve(psi0, 0.25, cfl=0.5)[0], lam)
      defects.append(pde.l1_distance(left, right))
    self.assertLessEqual(defects[0], 0.02)
    self.assertLess(defects[1], defects[0])

  def test_bad_end_time(self):
    grid = pde.RadialGrid(1.2, 12)
    with self.assertRaises(pde.Error):
      pde.evolve(pde.indicator_solution(0.0, grid), 1.0)

  def test_gaussian_outflux_is_recorded(self):
    grid = pde.RadialGrid(4.0, 400)
    _, history = pde.evolve(pde.initial_density('gaussian', grid), 0.05)
    self.assertTrue(all(f <= 0 for f in history.origin_fluxes))
    # psi ~ 2x near the origin: the discrete outflux is psi_0 / A_0 = 1 at
    # the first interface, not the alpha + 1 = 2 of the continuum limit.
    self.assertGreater(-history.origin_fluxes[1], 0.5)


class IndicatorSolutionTest(absltest.TestCase):

  def test_initial(self):
    grid = pde.RadialGrid(1.2, 1000)
    psi = pde.indicator_solution(0.0, grid)
    self.assertAlmostEqual(pde.mass(psi), 1.0, delta=grid.dx)

  def test_vanished(self):
    grid = pde.RadialGrid(1.2, 1000)
    np.testing.assert_array_equal(pde.indicator_solution(1.0, grid).values, 0)

  def test_fractional_boundary_cell(self):
    grid = pde.RadialGrid(1.0, 100)
    psi = pde.indicator_solution(0.505, grid)
    self.assertAlmostEqual(pde.mass(psi), 0.495, places=12)
    self.assertAlmostEqual(psi.values[49], 0.5, places=9)


class RescaleTest(absltest.TestCase):

  def test_indicator(self):
    grid = pde.RadialGrid(1.2, 1200)
    psi = pde.rescale(pde.indicator_solution(0.0, grid), 2.0)
    expected = pde.RadialDensity(grid, 2.0 * pde.indicator_solution(
        0.5, grid).values)
    self.assertLessEqual(pde.l1_distance(psi, expected), 4 * grid.dx)

  def test_identity(self):
    grid = pde.RadialGrid(3.0, 300)
    psi = pde.initial_density('gaussian', grid)
    np.testing.assert_allclose(pde.rescale(psi, 1.0).values, psi.values)

  def test_mass_preserved(self):
    grid = pde.RadialGrid(6.0, 600)
    psi = pde.initial_density('gaussian', grid)
    self.assertAlmostEqual(
        pde.mass(pde.rescale(psi, 2.0)), pde.mass(psi), delta=2 * grid.dx)

  def test_domain_too_small(self):
    grid = pde.RadialGrid(1.2, 120)
    with self.assertRaises(pde.DomainTooSmall):
      pde.rescale(pde.indicator_solution(0.0, grid), 0.5)


class MassTest(absltest.TestCase):

  def test_empty(self):
    grid = pde.RadialGrid(1.0, 10)
    self.assertEqual(pde.mass(_density(grid, np.zeros_like)), 0.0)

  def test_gaussian(self):
    grid = pde.RadialGrid(6.0, 6000)
    self.assertAlmostEqual(
        pde.mass(pde.initial_density('gaussian', grid)), 1.0, delta=1e-3)

  def test_gaussian_on_short_grid(self):
    # [0, 1.2] holds 1 - e^-1.44 = 0.763 of the mass.
    with self.assertRaises(pde.DomainTooSmall):
      pde.initial_density('gaussian', pde.RadialGrid(1.2, 1200))

  def test_default_cfl_is_configured(self):
    self.assertEqual(float(config.params['pde']['cfl']), pde.DEFAULT_CFL)

  def test_planar_round_trip(self):
    grid = pde.RadialGrid(2.0, 200)
    psi = pde.initial_density('uniform_disk', grid)
    u = pde.radial_to_planar(psi)
    np.testing.assert_allclose(
        pde.planar_to_radial(u, grid).values, psi.values, rtol=1e-12)

  def test_negative_values_rejected(self):
    grid = pde.RadialGrid(1.0, 3)
    with self.assertRaises(pde.Error):
      pde.RadialDensity(grid, np.array([1.0, -0.5, 0.0]))


class SnapshotTest(absltest.TestCase):

  def test_density_csv(self):
    grid = pde.RadialGrid(1.0, 4)
    path = os.path.join(self.create_tempdir().full_path, 'psi.csv')
    pde.write_density(path, pde.indicator_solution(0.5, grid))
    with open(path) as f:
      lines = f.read().splitlines()
    self.assertEqual(lines[0], 'x,psi')
    self.assertEqual(lines[1], '0.125,1')
    psi = pde.read_density(path)
    self.assertEqual(psi.grid, grid)


if __name__ == '__main__':
  absltest.main()
