from pathlib import Path
from tempfile import TemporaryDirectory
from unittest import TestCase
import math

import numpy as np
from parameterized import parameterized

from bvp_continuation.exceptions import ImproperlyConfigured
from bvp_continuation.families import (
  FAMILIES, read_table, resolve, resolve_field, resolve_signal,
)


class ResolveTest(TestCase):

  @parameterized.expand([
    ('sin_by_name', 'sin', math.pi / 2, 1.0),
    ('sin_with_amplitude', {'family': 'sin', 'amplitude': 2.0}, 0.0, 0.0),
    ('cos', {'family': 'cos', 'frequency': 2.0}, math.pi, 1.0),
    ('const', {'family': 'const', 'value': 0.3}, 17.0, 0.3),
    ('poly', {'family': 'poly', 'coeffs': [1.0, 0.0, 2.0]}, 2.0, 9.0),
    ('atan_ll', {'family': 'atan_ll', 'amplitude': 2.0}, 1.0, 1.0),
    ('monod', 'monod', 1.0, 0.5),
    ('harmonic', {
      'family': 'harmonic', 'mean': 1.0, 'amplitude': 0.5, 'period': 4.0,
    }, 2.0, 0.5),
    ('cubic_root_shift', 'cubic_root_shift', 0.0, 0.0),
  ])
  def test_values(
    self,
    _name: str,
    spec: object,
    x: float,
    expected: float,
  ) -> None:
    resolved = resolve(spec)  # type: ignore[arg-type]
    self.assertAlmostEqual(float(resolved(x)), expected, delta=1e-12)

  def test_families_act_elementwise(self) -> None:
    u = np.array([[0.0, math.pi / 2], [-math.pi / 2, math.pi]])
    np.testing.assert_allclose(resolve('sin')(u), np.sin(u))

  def test_known_properties(self) -> None:
    g = resolve({'family': 'atan_ll', 'scale': 3.0, 'amplitude': 0.5})
    self.assertEqual(g.limits, (-0.5, 0.5))
    self.assertEqual(g.bound, 0.5)
    self.assertAlmostEqual(resolve('sin').period, 2 * math.pi)
    self.assertIsNone(resolve({'family': 'poly', 'coeffs': [0, 1]}).bound)
    self.assertEqual(resolve({'family': 'poly', 'coeffs': [3.0]}).bound, 3.0)

  def test_const_rows(self) -> None:
    g = resolve({'family': 'const', 'value': [2.0, -1.0]})
    np.testing.assert_allclose(g(np.zeros((3, 2))), [[2.0, -1.0]] * 3)
    self.assertEqual(g.bound, 2.0)

  @parameterized.expand([
    ('unknown_family', 'tanh'),
    ('missing_family', {'coeffs': [1.0]}),
    ('unexpected_parameter', {'family': 'sin', 'width': 2.0}),
    ('empty_poly', {'family': 'poly', 'coeffs': []}),
    ('flat_scale', {'family': 'atan_ll', 'scale': 0.0}),
    ('monod_rate', {'family': 'monod', 'm': -1.0}),
    ('harmonic_period', {'family': 'harmonic', 'period': 0.0}),
    ('const_matrix', {'family': 'const', 'value': [[1.0]]}),
  ])
  def test_invalid_specs(self, _name: str, spec: object) -> None:
    with self.assertRaises(ImproperlyConfigured):
      resolve(spec)  # type: ignore[arg-type]

  def test_registry(self) -> None:
    self.assertIn('tabulated', FAMILIES)
    self.assertIn('atan_ll', FAMILIES)


class TabulatedTest(TestCase):

  def setUp(self) -> None:
    self.directory = TemporaryDirectory()
    self.base = Path(self.directory.name)

  def tearDown(self) -> None:
    self.directory.cleanup()

  def write(self, name: str, text: str) -> Path:
    path = self.base / name
    path.write_text(text)
    return path

  def test_relative_file_with_header(self) -> None:
    self.write('mu.csv', 's,mu\n0,0\n1,0.5\n3,0.75\n')
    mu = resolve({'family': 'tabulated', 'file': 'mu.csv'}, self.base)
    np.testing.assert_allclose(mu(np.array([-1.0, 0.5, 2.0, 10.0])), [
      0.0, 0.25, 0.625, 0.75,
    ])
    self.assertEqual(mu.limits, (0.0, 0.75))

  def test_comments_are_skipped(self) -> None:
    path = self.write('table.csv', '# rate table\n0,1\n\n2,3\n')
    xs, ys = read_table(path)
    np.testing.assert_array_equal(xs, [0.0, 2.0])
    np.testing.assert_array_equal(ys, [1.0, 3.0])

  @parameterized.expand([
    ('three_columns', '0,1,2\n1,2,3\n'),
    ('single_row', '0,1\n'),
    ('not_increasing', '0,1\n0,2\n'),
    ('text_in_body', '0,1\nx,2\n'),
  ])
  def test_invalid_tables(self, _name: str, text: str) -> None:
    path = self.write('bad.csv', text)
    with self.assertRaises(ImproperlyConfigured):
      read_table(path)

  def test_missing_file(self) -> None:
    with self.assertRaises(OSError):
      resolve({'family': 'tabulated', 'file': 'absent.csv'}, self.base)


class ResolveFieldTest(TestCase):

  def test_default_argument_is_u(self) -> None:
    f = resolve_field({'family': 'poly', 'coeffs': [0.0, 2.0]})
    t, u = np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]])
    np.testing.assert_allclose(f(t, u), [[6.0], [8.0]])

  def test_argument_t(self) -> None:
    f = resolve_field({'family': 'cos', 'argument': 't'})
    t, u = np.array([[0.0], [math.pi]]), np.array([[5.0], [5.0]])
    np.testing.assert_allclose(f(t, u), [[1.0], [-1.0]])

  def test_unknown_argument(self) -> None:
    with self.assertRaises(ImproperlyConfigured):
      resolve_field({'family': 'sin', 'argument': 'x'})


class ResolveSignalTest(TestCase):

  def test_const_has_zero_slopes(self) -> None:
    signal = resolve_signal({'family': 'const', 'value': 0.6}, 1.0, 32)
    np.testing.assert_array_equal(signal.scalar, 0.6)
    self.assertIsNotNone(signal.slopes)
    np.testing.assert_array_equal(signal.slopes, 0.0)

  def test_sampled_on_one_period(self) -> None:
    signal = resolve_signal(
      {'family': 'harmonic', 'amplitude': 0.5, 'period': 2.0}, 2.0, 64,
    )
    self.assertEqual(signal.n_samples, 64)
    np.testing.assert_allclose(
      signal.scalar, 0.5 * np.cos(math.pi * signal.nodes), atol=1e-15,
    )
    self.assertAlmostEqual(float(signal.mean()[0]), 0.0, delta=1e-15)
