from unittest import TestCase
import math

from django.core.checks import (
  ERROR, INFO, WARNING, CheckMessage, Error, Info, Warning,
)
from parameterized import parameterized

from bvp_continuation.checks import (
  message_dict, register, registry, run_checks,
)
from bvp_continuation.config import NumericOptions, RunConfig


def chemostat(dilution: float) -> RunConfig:
  return RunConfig('chemostat', {
    'omega': 1.0,
    'tau': 0.25,
    'gamma': 1.0,
    'D': {'family': 'const', 'value': dilution},
    's0': {'family': 'const', 'value': 1.0},
    'mu': 'monod',
  }, NumericOptions(grid=256))


def nonlocal_run(g: object, **problem: object) -> RunConfig:
  return RunConfig('nonlocal', {
    'L': 1.0, 'f': {'family': 'const', 'value': 2.0}, 'g': g, **problem,
  }, NumericOptions(grid=51))


def planar_run(slope: float) -> RunConfig:
  return RunConfig('nonlocal', {
    'L': 1.0,
    'dim': 2,
    'f': {'family': 'const', 'value': [0.0, 0.0]},
    'g': {'family': 'poly', 'coeffs': [0.0, slope]},
    'growth_class': 'planar-degree',
    'rectangle': [[-1.0, 1.0], [-1.0, 1.0]],
  }, NumericOptions(grid=51))


def ids(messages: list[CheckMessage]) -> list[str | None]:
  return [message.id for message in messages]


class CheckMessageTest(TestCase):

  @parameterized.expand([
    (Info, INFO, 'INFO', False),
    (Warning, WARNING, 'WARNING', False),
    (Error, ERROR, 'ERROR', True),
  ])
  def test_levels(
    self,
    cls: type[CheckMessage],
    level: int,
    name: str,
    serious: bool,
  ) -> None:
    message = cls('msg', hint='hint', obj='demo', id='bvp_continuation.X001')
    self.assertEqual(message.level, level)
    self.assertEqual(message.is_serious(), serious)
    self.assertEqual(
      str(message), 'demo: (bvp_continuation.X001) msg\n\tHINT: hint',
    )
    self.assertEqual(message_dict(message), {
      'hint': 'hint', 'id': 'bvp_continuation.X001', 'level': name,
      'msg': 'msg',
    })


class ChemostatChecksTest(TestCase):

  def test_washout(self) -> None:
    messages = run_checks(chemostat(0.6))
    self.assertEqual(ids(messages), ['bvp_continuation.E003'])
    self.assertTrue(messages[0].is_serious())

  def test_existence(self) -> None:
    messages = run_checks(chemostat(0.25))
    self.assertEqual(ids(messages), ['bvp_continuation.I003'])
    self.assertIn('0.25', messages[0].msg)


class NonlocalChecksTest(TestCase):

  def test_bracket_found(self) -> None:
    messages = run_checks(
      nonlocal_run({'family': 'poly', 'coeffs': [0.0, 0.5]}),
    )
    self.assertEqual(ids(messages), ['bvp_continuation.I001'])
    self.assertIn('[-2, 2]', messages[0].msg)

  def test_failing_user_bracket(self) -> None:
    config = nonlocal_run(
      {'family': 'poly', 'coeffs': [0.0, 2.0]},
      growth_class='user-bracket', bracket=[-1.0, 1.0],
    )
    messages = run_checks(config)
    self.assertEqual(ids(messages), ['bvp_continuation.E001'])
    self.assertTrue(messages[0].is_serious())

  def test_planar_degree(self) -> None:
    messages = run_checks(planar_run(0.5))
    self.assertEqual(ids(messages), ['bvp_continuation.I002'])
    self.assertTrue(messages[0].msg.endswith('is 1.'))

  def test_planar_fixed_boundary(self) -> None:
    self.assertEqual(
      ids(run_checks(planar_run(1.0))), ['bvp_continuation.E002'],
    )


class ResonanceChecksTest(TestCase):

  def test_steep_nonlinearity_warns(self) -> None:
    config = RunConfig('resonance', {
      'omega': 2.0 * math.pi, 'g': {'family': 'poly', 'coeffs': [0.0, 5.0]},
    })
    messages = run_checks(config)
    self.assertEqual(ids(messages), ['bvp_continuation.W001'])
    self.assertFalse(messages[0].is_serious())

  def test_pendulum_satisfies_the_quotient_bound(self) -> None:
    config = RunConfig('resonance', {
      'omega': math.pi, 'g': 'sin', 'g_class': 'periodic',
    })
    self.assertEqual(ids(run_checks(config)), ['bvp_continuation.I004'])

  @parameterized.expand([
    ('declared_by_family', None, ['bvp_continuation.I004']),
    ('wrong_limits', [-2.0, 2.0], [
      'bvp_continuation.I004', 'bvp_continuation.W003',
    ]),
  ])
  def test_landesman_lazer_limits(
    self,
    _name: str,
    limits: list[float] | None,
    expected: list[str],
  ) -> None:
    problem: dict[str, object] = {
      'omega': 2.0 * math.pi, 'g': 'atan_ll', 'g_class': 'landesman-lazer',
    }
    if limits is not None:
      problem['limits'] = limits
    messages = run_checks(RunConfig('resonance', problem))
    self.assertEqual(ids(messages), expected)


class RegistryTest(TestCase):

  def test_untagged_check_runs_for_every_kind(self) -> None:
    seen: list[str] = []

    @register()
    def record_kind(*, config: RunConfig, **kwargs: object) -> list[Info]:
      seen.append(config.kind)
      return [Info('seen', obj=config.kind, id='bvp_continuation.I999')]

    self.addCleanup(registry.registered_checks.discard, record_kind)
    messages = run_checks(chemostat(0.25))
    self.assertEqual(seen, ['chemostat'])
    self.assertEqual(
      ids(messages), ['bvp_continuation.I003', 'bvp_continuation.I999'],
    )
    self.assertTrue(all(message.obj == 'chemostat' for message in messages))
