import math
from unittest import TestCase, mock

import numpy as np
from parameterized import parameterized

from bvp_continuation.conf import SolverOptions
from bvp_continuation.continuation import Branch, BranchPoint, trace_branch
from bvp_continuation.exceptions import (
  EmptyPointSet, ImproperlyConfigured, NoSignChange,
)
from bvp_continuation.numerics import GridFn, PeriodicSignal
from bvp_continuation.resonance import (
  IntervalEstimate, ResonantProblem, auto_window, check_wirtinger,
  compute_range, continuity_experiment, degeneracy_scan, hausdorff_distance,
  interval_distance, mean_nonlinearity, multistart_geometric,
  nonintersection_check, resonance_operator, sample_limits, sample_range_nd,
  solve_for_s, solve_wx, verify_periodic_solution,
)


TAU = 2.0 * math.pi


def pendulum(
  omega: float,
  forcing: PeriodicSignal | None = None,
  a: float = 0.0,
  n_nodes: int = 101,
) -> ResonantProblem:
  return ResonantProblem(
    omega, np.sin, a=a, g_class='periodic', periods=(TAU,), p0=forcing,
    n_nodes=n_nodes,
  )


def harmonic(omega: float, amplitude: float, order: int = 1) -> PeriodicSignal:
  frequency = TAU * order / omega
  return PeriodicSignal.from_function(
    lambda t: amplitude * np.cos(frequency * t), omega,
  )


def constant(value: float | list[float]):  # type: ignore[no-untyped-def]
  row = np.asarray(value, dtype=float)
  return lambda u: np.zeros_like(u) + row


def arctan_limits(u: np.ndarray) -> np.ndarray:
  return (2.0 / math.pi) * np.arctan(u)


def landesman_lazer(n_nodes: int = 401) -> ResonantProblem:
  return ResonantProblem(
    TAU, arctan_limits, a=0.5, g_class='landesman-lazer',
    limits=(-1.0, 1.0), p0=harmonic(TAU, 0.2), n_nodes=n_nodes,
  )


class ResonantProblemTest(TestCase):

  @parameterized.expand([
    ('bad_omega', {'omega': 0.0}),
    ('unknown_class', {'g_class': 'odd'}),
    ('periodic_without_periods', {'g_class': 'periodic'}),
    ('sampled_limits_reversed', {
      'g_class': 'landesman-lazer', 'g': lambda u: -np.arctan(u),
    }),
    ('limits_reversed', {
      'g_class': 'landesman-lazer', 'limits': (1.0, -1.0),
    }),
    ('planar_limits', {
      'g_class': 'landesman-lazer', 'limits': (-1.0, 1.0), 'dim': 2,
    }),
    ('forcing_period', {'p0': PeriodicSignal.constant(1.0, 1.0)}),
  ])
  def test_invalid_problems(self, _name: str, kwargs: dict) -> None:
    arguments = {'omega': TAU, 'g': np.sin} | kwargs
    with self.assertRaises(ImproperlyConfigured):
      ResonantProblem(**arguments)

  def test_forcing_mean_is_removed(self) -> None:
    forcing = PeriodicSignal.from_function(lambda t: 3.0 + np.cos(t), TAU)
    prob = pendulum(TAU, forcing)
    self.assertAlmostEqual(float(prob.forcing.mean()[0]), 0.0, delta=1e-14)
    self.assertAlmostEqual(float(prob.p0_nodes[:-1].mean()), 0.0, delta=1e-14)

  def test_auto_windows(self) -> None:
    self.assertEqual(auto_window(pendulum(TAU)), (0.0, TAU))
    low, high = auto_window(landesman_lazer())
    self.assertEqual(low, -high)
    self.assertGreater(high, 1024.0)
    with self.assertRaises(ImproperlyConfigured):
      auto_window(ResonantProblem(TAU, constant(0.3)))

  def test_sampled_limits(self) -> None:
    g_minus, g_plus = sample_limits(landesman_lazer())
    self.assertAlmostEqual(g_minus, -1.0, delta=1e-5)
    self.assertAlmostEqual(g_plus, 1.0, delta=1e-5)

  def test_missing_limits_are_sampled(self) -> None:
    prob = ResonantProblem(TAU, arctan_limits, g_class='landesman-lazer')
    assert prob.limits is not None
    self.assertEqual(prob.limits, sample_limits(prob))
    np.testing.assert_allclose(prob.limits, [-1.0, 1.0], atol=1e-5)


class ResonanceOperatorTest(TestCase):

  def test_constant_states_are_fixed_without_forcing(self) -> None:
    prob = pendulum(TAU)
    T = resonance_operator(prob)
    for c in (0.0, 1.0, 4.0):
      self.assertLessEqual(T(c, T.zero_state()).sup_norm(), 1e-14)
      self.assertAlmostEqual(
        mean_nonlinearity(c, T.zero_state(), prob), math.sin(c), places=14,
      )

  def test_image_vanishes_at_both_ends(self) -> None:
    prob = pendulum(math.pi, harmonic(math.pi, 0.5, 2))
    T = resonance_operator(prob)
    w = GridFn.from_function(prob.grid, np.sin)
    v = T(0.4, w)
    self.assertEqual(v.values[0, 0], 0.0)
    self.assertEqual(v.values[-1, 0], 0.0)
    self.assertLessEqual(v.sup_norm(), T.radius)


class ComputeRangeTest(TestCase):

  @parameterized.expand([(0.0,), (0.5,)])
  def test_unforced_pendulum(self, a: float) -> None:
    estimate = compute_range(pendulum(TAU, a=a))
    self.assertAlmostEqual(estimate.lo, -1.0, delta=1e-3)
    self.assertAlmostEqual(estimate.hi, 1.0, delta=1e-3)
    self.assertFalse(estimate.window_relative)

  def test_forced_pendulum_range_contains_zero(self) -> None:
    prob = pendulum(math.pi, harmonic(math.pi, 0.5, 2))
    estimate = compute_range(prob, steps=32)
    self.assertTrue(estimate.contains(0.0, slack=1e-6))
    self.assertGreaterEqual(estimate.lo, -1.0 - 1e-9)
    self.assertLessEqual(estimate.hi, 1.0 + 1e-9)

  def test_constant_nonlinearity(self) -> None:
    prob = ResonantProblem(TAU, constant(0.3), n_nodes=51)
    estimate = compute_range(prob, (-1.0, 1.0), steps=8)
    self.assertAlmostEqual(estimate.lo, 0.3, places=12)
    self.assertAlmostEqual(estimate.hi, 0.3, places=12)
    self.assertTrue(estimate.window_relative)

  def test_planar_problem_is_rejected(self) -> None:
    prob = ResonantProblem(TAU, np.sin, dim=2)
    with self.assertRaises(ImproperlyConfigured):
      compute_range(prob, (0.0, 1.0))


class DegeneracyScanTest(TestCase):

  def test_constant_nonlinearity_is_always_narrow(self) -> None:
    prob = ResonantProblem(
      TAU, constant(0.3), p0=harmonic(TAU, 1.0), n_nodes=51,
    )
    table = degeneracy_scan(prob, [0.0, 1.0], (-1.0, 1.0), steps=8)
    self.assertEqual([amplitude for amplitude, _, _ in table], [0.0, 1.0])
    self.assertTrue(all(narrow for _, _, narrow in table))

  def test_unforced_pendulum_is_not_narrow(self) -> None:
    table = degeneracy_scan(pendulum(TAU), [0.0], steps=16)
    _, estimate, narrow = table[0]
    self.assertFalse(narrow)
    self.assertGreater(estimate.width, 1.9)


class SolveForSTest(TestCase):

  def test_landesman_lazer_interior(self) -> None:
    solution = solve_for_s(landesman_lazer(), 0.5)
    self.assertTrue(solution.verified)
    self.assertLessEqual(solution.equation_residual, 1e-6)
    self.assertLessEqual(solution.mean_residual, 1e-8)

  def test_landesman_lazer_exterior(self) -> None:
    with self.assertRaises(NoSignChange) as context:
      solve_for_s(landesman_lazer(101), 1.5, steps=16)
    self.assertIsNotNone(context.exception.necessary_condition)

  def test_landesman_lazer_exterior_with_sampled_limits(self) -> None:
    prob = ResonantProblem(
      TAU, arctan_limits, a=0.5, g_class='landesman-lazer',
      p0=harmonic(TAU, 0.2), n_nodes=101,
    )
    with self.assertRaises(NoSignChange) as context:
      solve_for_s(prob, 1.5, steps=16)
    self.assertIsNotNone(context.exception.necessary_condition)

  def test_pendulum_out_of_range(self) -> None:
    with self.assertRaises(NoSignChange) as context:
      solve_for_s(pendulum(TAU), 2.0, steps=16)
    self.assertIsNone(context.exception.necessary_condition)

  def test_verify_constant_solution(self) -> None:
    prob = pendulum(TAU)
    u = GridFn(prob.grid, np.full(prob.grid.n_nodes, 0.5 * math.pi))
    equation, closure, mean = verify_periodic_solution(prob, u, 1.0)
    self.assertLessEqual(equation, 1e-14)
    self.assertEqual(closure, 0.0)
    self.assertLessEqual(mean, 1e-14)


class CheckWirtingerTest(TestCase):

  @parameterized.expand([
    ('pendulum', math.pi, np.sin, True, 1.0),
    ('steep_linear', TAU, lambda u: 5.0 * u, False, 5.0),
    ('constant', TAU, constant(0.3), True, 0.0),
  ])
  def test_sampled_quotient(
    self,
    _name: str,
    omega: float,
    g: object,
    holds: bool,
    expected: float,
  ) -> None:
    prob = ResonantProblem(omega, g)  # type: ignore[arg-type]
    result, quotient = check_wirtinger(prob)
    self.assertEqual(result, holds)
    self.assertLessEqual(quotient, expected + 1e-9)
    if expected:
      self.assertGreater(quotient, 0.9 * expected)

  def test_is_deterministic(self) -> None:
    prob = ResonantProblem(math.pi, np.sin)
    self.assertEqual(check_wirtinger(prob), check_wirtinger(prob))

  def test_too_few_samples(self) -> None:
    with self.assertRaises(ImproperlyConfigured):
      check_wirtinger(ResonantProblem(TAU, np.sin), n_samples=100)


class SolveWxTest(TestCase):

  def test_linear_forcing_without_nonlinearity(self) -> None:
    prob = ResonantProblem(TAU, constant(0.0), p0=harmonic(TAU, 1.0))
    solution = solve_wx(prob, 0.0)
    np.testing.assert_allclose(
      solution.w.scalar, -np.cos(solution.w.nodes), atol=1e-7,
    )
    np.testing.assert_allclose(solution.C, [0.0], atol=1e-9)
    self.assertLessEqual(solution.residual, 1e-9)

  def test_small_linear_nonlinearity(self) -> None:
    eps = 0.1
    prob = ResonantProblem(TAU, lambda u: eps * u, p0=harmonic(TAU, 1.0))
    solution = solve_wx(prob, 1.0)
    np.testing.assert_allclose(
      solution.w.scalar, np.cos(solution.w.nodes) / (eps - 1.0), atol=1e-7,
    )
    np.testing.assert_allclose(solution.C, [eps], atol=1e-9)
    np.testing.assert_allclose(solution.image(prob), [eps], atol=1e-9)

  def test_independent_starts_agree(self) -> None:
    prob = pendulum(math.pi, harmonic(math.pi, 0.5, 2))
    rng = np.random.default_rng(7)
    coefficients = rng.uniform(-0.3, 0.3, 4)
    start = PeriodicSignal.from_function(
      lambda t: sum(
        b * np.cos(2.0 * (k + 1) * t) for k, b in enumerate(coefficients)
      ),
      math.pi,
    )
    first = solve_wx(prob, 0.3)
    second = solve_wx(prob, 0.3, w0=start)
    np.testing.assert_allclose(
      first.w.samples, second.w.samples, atol=1e-7,
    )
    self.assertLessEqual(abs(first.mean), 1e-10)


class SampleRangeNdTest(TestCase):

  def test_constant_nonlinearity_has_a_single_image(self) -> None:
    prob = ResonantProblem(TAU, constant([0.2, -0.1]), dim=2)
    cloud = sample_range_nd(prob, ((-1.0, 1.0), (-1.0, 1.0)), 3)
    self.assertEqual(cloud.points.shape, (9, 2))
    np.testing.assert_allclose(cloud.points, [[0.2, -0.1]] * 9, atol=1e-12)
    self.assertLessEqual(cloud.max_jump, 1e-12)
    self.assertEqual(cloud.skipped, ())

  def test_unforced_images_are_g_of_x(self) -> None:
    prob = ResonantProblem(math.pi, np.sin, dim=2)
    rect = ((0.0, 1.0), (-1.0, 0.5))
    cloud = sample_range_nd(prob, rect, 3)
    np.testing.assert_allclose(cloud.points, np.sin(cloud.xs), atol=1e-9)
    parallel = sample_range_nd(prob, rect, 3, jobs=2)
    np.testing.assert_array_equal(parallel.points, cloud.points)

  def test_quotient_is_sampled_once_per_problem(self) -> None:
    prob = ResonantProblem(math.pi, np.sin, dim=2)
    with mock.patch(
      'bvp_continuation.resonance.check_wirtinger', wraps=check_wirtinger,
    ) as sampled:
      sample_range_nd(prob, ((0.0, 1.0), (-1.0, 0.5)), 3, jobs=2)
      solve_wx(prob, np.array([0.5, 0.5]))
    sampled.assert_called_once_with(prob)

  def test_scalar_problem_is_rejected(self) -> None:
    with self.assertRaises(ImproperlyConfigured):
      sample_range_nd(pendulum(TAU), ((0.0, 1.0), (0.0, 1.0)), 3)


class HausdorffDistanceTest(TestCase):

  @parameterized.expand([
    ('equal', [0.0, 1.0], [0.0, 1.0], 0.0),
    ('point_and_pair', [0.0], [0.0, 1.0], 1.0),
    ('nested_intervals', np.linspace(0.0, 1.0, 101),
     np.linspace(0.0, 2.0, 201), 1.0),
    ('planar', [[0.0, 0.0]], [[3.0, 4.0]], 5.0),
  ])
  def test_distances(
    self,
    _name: str,
    A: object,
    B: object,
    expected: float,
  ) -> None:
    self.assertAlmostEqual(
      hausdorff_distance(A, B), expected, places=12,  # type: ignore
    )

  def test_empty_set(self) -> None:
    with self.assertRaises(EmptyPointSet):
      hausdorff_distance([], [1.0])

  def test_interval_distance(self) -> None:
    first = IntervalEstimate(-1.0, 1.0, 0.0, ())
    second = IntervalEstimate(-0.5, 1.25, 0.0, ())
    self.assertEqual(interval_distance(first, second), 0.5)


class ContinuityExperimentTest(TestCase):

  def test_distances_shrink_with_the_amplitude(self) -> None:
    prob = pendulum(math.pi)
    amplitudes = [0.0] + [2.0 ** -k for k in range(7)]
    table = continuity_experiment(
      prob, harmonic(math.pi, 1.0, 2), amplitudes, steps=16,
    )
    self.assertEqual([amplitude for amplitude, _ in table], amplitudes)
    distances = [distance for _, distance in table]
    self.assertEqual(distances[0], 0.0)
    self.assertLessEqual(distances[-1], 1e-2)
    for larger, smaller in zip(distances[1:], distances[2:]):
      self.assertLessEqual(smaller, larger + 1e-4)


class NonintersectionTest(TestCase):

  def setUp(self) -> None:
    prob = pendulum(TAU, harmonic(TAU, 0.2), a=0.3, n_nodes=201)
    T = resonance_operator(prob)
    self.branch = trace_branch(
      T, lambda c, w: 0.0, (0.0, TAU), 50,
      SolverOptions(picard_max_iter=50),
    )

  def test_pendulum_branch_is_ordered(self) -> None:
    holds, min_gap = nonintersection_check(self.branch)
    self.assertTrue(holds)
    self.assertGreater(min_gap, 0.0)

  def test_shifted_state_breaks_the_order(self) -> None:
    first, *rest = self.branch.points
    raised = BranchPoint(first.c, first.state + 10.0, first.phi, 0.0)
    corrupted = Branch([raised, *rest], 0.0, TAU)
    holds, min_gap = nonintersection_check(corrupted)
    self.assertFalse(holds)
    self.assertLess(min_gap, 0.0)


class MultistartGeometricTest(TestCase):

  def test_unforced_pendulum_has_two_distinct_solutions(self) -> None:
    groups = multistart_geometric(pendulum(math.pi), 0.0, steps=17)
    self.assertEqual(len(groups), 2)
    offsets = sorted(
      float(np.mean(group[0].u.values)) % TAU for group in groups
    )
    offsets = [offset if offset < TAU - 1e-6 else 0.0 for offset in offsets]
    np.testing.assert_allclose(sorted(offsets), [0.0, math.pi], atol=1e-6)

  def test_needs_a_periodic_nonlinearity(self) -> None:
    with self.assertRaises(ImproperlyConfigured):
      multistart_geometric(landesman_lazer(101), 0.0)
