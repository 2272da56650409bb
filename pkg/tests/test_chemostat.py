import math
from unittest import TestCase

import numpy as np
from parameterized import parameterized

from bvp_continuation.chemostat import (
  ChemostatModel, HistoryFn, NonexistenceCertificate, PeriodicOrbit,
  compute_vstar, decay_constant, existence_margin, find_periodic_orbit,
  history_from, inner_fixed_point, integrate_dde, phi_functional,
  poincare_map, vstar_history,
)
from bvp_continuation.exceptions import ImproperlyConfigured
from bvp_continuation.numerics import PeriodicSignal


def monod(s: np.ndarray) -> np.ndarray:
  return s / (1.0 + s)


def model(
  dilution: PeriodicSignal | float = 0.25,
  steps_per_period: int = 256,
  tau: float = 0.25,
) -> ChemostatModel:
  if not isinstance(dilution, PeriodicSignal):
    dilution = PeriodicSignal.constant(dilution, 1.0)
  return ChemostatModel(
    omega=1.0, tau=tau, gamma=1.0, D=dilution,
    s0=PeriodicSignal.constant(1.0, 1.0), mu=monod,
    steps_per_period=steps_per_period,
  )


def pulsed_dilution() -> PeriodicSignal:
  return PeriodicSignal.from_function(
    lambda t: 0.25 + 0.05 * np.cos(2.0 * math.pi * t), 1.0,
  )


def sinusoidal_dilution() -> PeriodicSignal:
  return PeriodicSignal.from_function(
    lambda t: 0.25 * (1.0 + 0.5 * np.sin(2.0 * math.pi * t)), 1.0,
  )


def constant_history(chemostat: ChemostatModel, value: float) -> HistoryFn:
  return history_from(chemostat, PeriodicSignal.constant(value, 1.0))


class ChemostatModelTest(TestCase):

  @parameterized.expand([
    ('delay_too_long', {'tau': 1.0}),
    ('no_delay', {'tau': 0.0}),
    ('bad_yield', {'gamma': 0.0}),
    ('growth_at_zero', {'mu': lambda s: s + 1.0}),
    ('decreasing_growth', {'mu': lambda s: -s}),
    ('unknown_class', {'mu_class': 'hill'}),
    ('period_mismatch', {'D': PeriodicSignal.constant(0.25, 2.0)}),
    ('non_positive_supply', {'s0': PeriodicSignal.constant(0.0, 1.0)}),
    ('delay_below_two_steps', {'tau': 0.001, 'steps_per_period': 256}),
  ])
  def test_invalid_models(self, _name: str, kwargs: dict) -> None:
    arguments = {
      'omega': 1.0, 'tau': 0.25, 'gamma': 1.0,
      'D': PeriodicSignal.constant(0.25, 1.0),
      's0': PeriodicSignal.constant(1.0, 1.0), 'mu': monod,
    } | kwargs
    with self.assertRaises(ImproperlyConfigured):
      ChemostatModel(**arguments)

  @parameterized.expand([
    (0.25, 2048, 2048),
    (0.3, 2048, 2050),
    (1.0 / 3.0, 100, 102),
  ])
  def test_steps_are_commensurate_with_the_delay(
    self,
    tau: float,
    requested: int,
    expected: int,
  ) -> None:
    chemostat = model(tau=tau, steps_per_period=requested)
    self.assertEqual(chemostat.n_steps, expected)
    self.assertTrue(chemostat.commensurate)

  def test_history_grid_spans_the_delay(self) -> None:
    grid = model().history_grid
    self.assertEqual(grid.t_start, -0.25)
    self.assertEqual(grid.t_end, 0.0)
    self.assertEqual(grid.n_nodes, 65)


class VstarTest(TestCase):

  def test_constant_supply(self) -> None:
    vstar = compute_vstar(model())
    np.testing.assert_allclose(vstar.samples, 1.0, atol=1e-10)

  def test_varying_supply_satisfies_the_washout_equation(self) -> None:
    chemostat = ChemostatModel(
      omega=1.0, tau=0.25, gamma=1.0, D=pulsed_dilution(),
      s0=PeriodicSignal.from_function(
        lambda t: 1.0 + 0.2 * np.sin(2.0 * math.pi * t), 1.0,
      ),
      mu=monod,
    )
    vstar = chemostat.vstar
    t = vstar.nodes
    expected = chemostat.D(t) * (chemostat.s0(t) - vstar(t))
    np.testing.assert_allclose(vstar.slopes, expected, atol=1e-10)
    self.assertGreater(vstar.minimum(), 0.0)

  def test_history_is_admissible(self) -> None:
    chemostat = model()
    ceiling = vstar_history(chemostat)
    self.assertTrue(ceiling.is_admissible(ceiling))
    self.assertTrue(constant_history(chemostat, 0.5).is_admissible(ceiling))
    self.assertFalse(constant_history(chemostat, 1.5).is_admissible(ceiling))


class IntegrateDdeTest(TestCase):

  def test_equilibrium_is_preserved(self) -> None:
    chemostat = model()
    history = constant_history(chemostat, 1.0 / 3.0)
    trajectory = integrate_dde(chemostat, history, 2.0 / 3.0, 1.0)
    np.testing.assert_allclose(trajectory.s, 1.0 / 3.0, atol=1e-12)
    np.testing.assert_allclose(trajectory.x, 2.0 / 3.0, atol=1e-12)
    self.assertEqual(trajectory.t[-1], 1.0)

  def test_without_biomass_substrate_relaxes_to_supply(self) -> None:
    chemostat = model()
    history = constant_history(chemostat, 0.0)
    trajectory = integrate_dde(chemostat, history, 0.0, 1.0)
    np.testing.assert_allclose(
      trajectory.s, 1.0 - np.exp(-0.25 * trajectory.t), atol=1e-10,
    )
    np.testing.assert_array_equal(trajectory.x, 0.0)

  def test_poincare_map_of_equilibrium(self) -> None:
    chemostat = model()
    history = constant_history(chemostat, 1.0 / 3.0)
    mapped, x_omega = poincare_map(chemostat, history, 2.0 / 3.0)
    np.testing.assert_allclose(mapped.values, 1.0 / 3.0, atol=1e-12)
    self.assertAlmostEqual(x_omega, 2.0 / 3.0, delta=1e-12)


class InnerProblemTest(TestCase):

  def test_without_biomass_the_washout_history_is_fixed(self) -> None:
    chemostat = model(pulsed_dilution())
    ceiling = vstar_history(chemostat)
    mapped, x_omega = poincare_map(chemostat, ceiling, 0.0)
    np.testing.assert_allclose(mapped.values, ceiling.values, atol=1e-6)
    self.assertEqual(x_omega, 0.0)
    history = inner_fixed_point(chemostat, 0.0)
    np.testing.assert_allclose(history.values, ceiling.values, atol=1e-6)

  def test_phi_at_zero_biomass_is_the_existence_margin(self) -> None:
    chemostat = model(pulsed_dilution())
    value = phi_functional(chemostat, 0.0, vstar_history(chemostat))
    self.assertAlmostEqual(value, existence_margin(chemostat), delta=1e-6)

  @parameterized.expand([(0.1,), (0.5,)])
  def test_substrate_stays_below_washout(self, x0: float) -> None:
    chemostat = model(sinusoidal_dilution())
    trajectory = integrate_dde(
      chemostat, vstar_history(chemostat), x0, chemostat.omega,
    )
    vstar = chemostat.vstar(trajectory.t)[:, 0]
    self.assertTrue(np.all(trajectory.s[1:] < vstar[1:]))

  def test_inner_fixed_point_at_the_equilibrium_biomass(self) -> None:
    chemostat = model()
    history = inner_fixed_point(chemostat, 2.0 / 3.0)
    np.testing.assert_allclose(history.values, 1.0 / 3.0, atol=1e-7)
    value = phi_functional(chemostat, 2.0 / 3.0, history)
    self.assertAlmostEqual(value, 0.0, delta=1e-7)

  def test_phi_decreases_with_biomass(self) -> None:
    chemostat = model()
    start = vstar_history(chemostat)
    self.assertAlmostEqual(
      phi_functional(chemostat, 0.0, start), 0.25, delta=1e-10,
    )
    history = inner_fixed_point(chemostat, 1.0)
    self.assertLess(phi_functional(chemostat, 1.0, history), 0.0)

  def test_decay_constant_at_the_equilibrium(self) -> None:
    chemostat = model()
    history = constant_history(chemostat, 1.0 / 3.0)
    self.assertAlmostEqual(
      decay_constant(chemostat, 2.0 / 3.0, history), 1.0 / 6.0, delta=1e-12,
    )


class ExistenceTest(TestCase):

  @parameterized.expand([(0.25, 0.25), (0.6, -0.1)])
  def test_margin(self, dilution: float, expected: float) -> None:
    self.assertAlmostEqual(
      existence_margin(model(dilution)), expected, delta=1e-9,
    )

  def test_washout_certificate(self) -> None:
    result = find_periodic_orbit(model(0.6))
    self.assertIsInstance(result, NonexistenceCertificate)
    assert isinstance(result, NonexistenceCertificate)
    self.assertAlmostEqual(result.margin, -0.1, delta=1e-9)
    self.assertAlmostEqual(result.mean_growth, 0.5, delta=1e-9)
    self.assertAlmostEqual(result.mean_dilution, 0.6, delta=1e-12)

  def test_invalid_scan_limit(self) -> None:
    with self.assertRaises(ImproperlyConfigured):
      find_periodic_orbit(model(), x0_max=0.0)


class FindPeriodicOrbitTest(TestCase):

  def test_constant_environment(self) -> None:
    orbit = find_periodic_orbit(model())
    self.assertIsInstance(orbit, PeriodicOrbit)
    assert isinstance(orbit, PeriodicOrbit)
    self.assertAlmostEqual(orbit.x0, 2.0 / 3.0, delta=1e-6)
    np.testing.assert_allclose(orbit.history.values, 1.0 / 3.0, atol=1e-6)
    self.assertTrue(orbit.verified)

  def test_sinusoidal_dilution_with_incommensurate_delay(self) -> None:
    chemostat = model(sinusoidal_dilution(), 2048, tau=0.3)
    self.assertEqual(chemostat.n_steps, 2050)
    orbit = find_periodic_orbit(chemostat)
    self.assertIsInstance(orbit, PeriodicOrbit)
    assert isinstance(orbit, PeriodicOrbit)
    self.assertTrue(orbit.verified)
    self.assertLessEqual(orbit.poincare_residual, 1e-7)
    self.assertLessEqual(orbit.log_identity_residual, 1e-8)
    self.assertTrue(orbit.bounds_hold)
    self.assertAlmostEqual(orbit.x0, 0.6807, delta=1e-3)

    trajectory = orbit.trajectory
    vstar = chemostat.vstar(trajectory.t)[:, 0]
    self.assertTrue(np.all(trajectory.x > 0.0))
    self.assertTrue(np.all(trajectory.s[1:] > 0.0))
    self.assertTrue(np.all(trajectory.s[1:] < vstar[1:]))
    mapped, x_omega = poincare_map(chemostat, orbit.history, orbit.x0)
    np.testing.assert_allclose(
      mapped.values, orbit.history.values, atol=1e-7,
    )
    self.assertAlmostEqual(x_omega, orbit.x0, delta=1e-7)

  def test_pulsed_dilution_is_stable_under_step_halving(self) -> None:
    coarse = find_periodic_orbit(model(pulsed_dilution(), 512))
    fine = find_periodic_orbit(model(pulsed_dilution(), 1024))
    assert isinstance(coarse, PeriodicOrbit)
    assert isinstance(fine, PeriodicOrbit)
    self.assertTrue(fine.verified)
    self.assertLessEqual(fine.poincare_residual, 1e-7)
    self.assertLessEqual(fine.log_identity_residual, 1e-8)
    self.assertAlmostEqual(coarse.x0, fine.x0, delta=1e-6)
    self.assertGreater(fine.x0, 0.0)
    self.assertGreater(float(np.min(fine.trajectory.s)), 0.0)
