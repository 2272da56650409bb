"""Hypothesis checks reported by the `check condition` command.

Checks are plain functions registered on a private Django check registry,
tagged with the problem kinds they apply to. Each returns a list of
`django.core.checks` messages with a stable id.
"""
from typing import TYPE_CHECKING
import logging
import math

from django.core.checks import CheckMessage, Error, Info, Warning
from django.core.checks.registry import CheckRegistry

from .chemostat import existence_margin
from .exceptions import HypothesisFailed, NumericalFailure
from .nonlocal_bvp import check_planar_hypotheses, choose_bracket
from .resonance import LIMIT_TOL, sample_limits


if TYPE_CHECKING:
  from collections.abc import Iterable
  from typing import Any

  from .config import RunConfig


logger = logging.getLogger(__name__)

registry = CheckRegistry()
register = registry.register


def run_checks(config: RunConfig) -> list[CheckMessage]:
  """Messages of every check tagged with the run's kind, sorted by id.

  Notes
  -----
  A check registered without tags runs for every kind.
  """
  messages: list[CheckMessage] = []
  for check in registry.get_checks():
    tags = getattr(check, 'tags', ())
    if tags and config.kind not in tags:
      continue
    messages.extend(check(config=config))
  messages.sort(key=lambda message: message.id or '')
  for message in messages:
    logger.log(message.level, "%s", message)
  return messages


def message_dict(message: CheckMessage) -> dict[str, Any]:
  return {
    'hint': message.hint,
    'id': message.id,
    'level': logging.getLevelName(message.level),
    'msg': message.msg,
  }


@register('nonlocal')
def check_growth_bracket(
  *,
  config: RunConfig,
  **kwargs: Any,
) -> Iterable[CheckMessage]:
  prob = config.nonlocal_problem()
  if prob.dim != 1:
    return []
  try:
    a, b = choose_bracket(prob)
  except HypothesisFailed as e:
    return [
      Error(
        f"The {prob.growth_class} growth hypothesis fails: {e}",
        hint=(
          "Declare a user bracket (a, b) with g(a + r) <= a and "
          "g(b + r) >= b, or check the growth class of g."
        ),
        obj=config.kind,
        id='bvp_continuation.E001',
      )
    ]
  return [
    Info(
      f"Phi changes sign over the bracket [{a:.6g}, {b:.6g}].",
      obj=config.kind,
      id='bvp_continuation.I001',
    )
  ]


@register('nonlocal')
def check_planar_degree(
  *,
  config: RunConfig,
  **kwargs: Any,
) -> Iterable[CheckMessage]:
  prob = config.nonlocal_problem()
  if prob.dim != 2 or prob.rectangle is None:
    return []
  try:
    degree = check_planar_hypotheses(prob)
  except (HypothesisFailed, NumericalFailure) as e:
    return [
      Error(
        f"Planar hypothesis fails: {e}",
        hint=(
          "Choose a rectangle whose boundary keeps g(r + c) away from c "
          "and on which c - g(c) has nonzero winding number."
        ),
        obj=config.kind,
        id='bvp_continuation.E002',
      )
    ]
  return [
    Info(
      f"The winding number of c - g(c) on the rectangle is {degree}.",
      obj=config.kind,
      id='bvp_continuation.I002',
    )
  ]


@register('resonance')
def check_wirtinger_condition(
  *,
  config: RunConfig,
  **kwargs: Any,
) -> Iterable[CheckMessage]:
  prob = config.resonant_problem()
  holds, quotient = prob.wirtinger
  bound = (2.0 * math.pi / prob.omega) ** 2
  if not holds:
    return [
      Warning(
        f"Sampled difference quotient {quotient:.6g} of g is not below "
        f"(2 pi / omega)**2 = {bound:.6g}.",
        hint="w_x may not be unique; solve_wx results are not certified.",
        obj=config.kind,
        id='bvp_continuation.W001',
      )
    ]
  return [
    Info(
      f"Wirtinger condition holds: quotient {quotient:.6g} < {bound:.6g}.",
      obj=config.kind,
      id='bvp_continuation.I004',
    )
  ]


@register('resonance')
def check_landesman_lazer_limits(
  *,
  config: RunConfig,
  **kwargs: Any,
) -> Iterable[CheckMessage]:
  prob = config.resonant_problem()
  if prob.g_class != 'landesman-lazer' or prob.limits is None:
    return []
  declared = prob.limits
  sampled = sample_limits(prob)
  gaps = [abs(d - s) for d, s in zip(declared, sampled)]
  if max(gaps) > LIMIT_TOL:
    return [
      Warning(
        f"Declared limits {declared} differ from g(-1e6), g(1e6) = "
        f"({sampled[0]:.6g}, {sampled[1]:.6g}).",
        hint=f"Declare limits that g reaches within {LIMIT_TOL:g}.",
        obj=config.kind,
        id='bvp_continuation.W003',
      )
    ]
  return []


@register('chemostat')
def check_existence_condition(
  *,
  config: RunConfig,
  **kwargs: Any,
) -> Iterable[CheckMessage]:
  model = config.chemostat_model()
  margin = existence_margin(model)
  if margin <= 0:
    return [
      Error(
        f"mean(D) < mean(mu(v*)) fails with margin {margin:.9g}; no "
        "positive periodic orbit exists.",
        hint="Lower the dilution rate or raise the supply s0.",
        obj=config.kind,
        id='bvp_continuation.E003',
      )
    ]
  return [
    Info(
      f"mean(D) < mean(mu(v*)) holds with margin {margin:.9g}.",
      obj=config.kind,
      id='bvp_continuation.I003',
    )
  ]
