"""Solvers for v = T(c, v) with T a parameterised compact operator."""
from dataclasses import dataclass
from typing import TYPE_CHECKING
import logging
import math

import numpy as np
from scipy.linalg import LinAlgError, lu_factor, lu_solve

from .conf import (
  DEFAULT_DAMPING, DEFAULT_NEWTON_MAX_ITER, DEFAULT_PICARD_MAX_ITER,
  DEFAULT_TOL, MAX_STEP_HALVINGS, MIN_DAMPING, SolverOptions,
)
from .exceptions import NoDescent, NonFiniteState, SingularJacobian
from .numerics import GridFn


if TYPE_CHECKING:
  from collections.abc import Callable
  from numpy.typing import NDArray

  from .numerics import UniformGrid

  Array = NDArray[np.float64]
  Parameter = float | Array


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OperatorFamily:
  """A family of maps w -> T(c, w) on grid functions.

  Notes
  -----
  `radius` is the declared invariant ball: |T(c, w)| <= radius in the sup norm
  for every admissible (c, w). Families without a known bound use infinity.
  """

  evaluate: Callable[[Parameter, GridFn], GridFn]
  grid: UniformGrid
  dim: int = 1
  param_dim: int = 1
  radius: float = math.inf
  name: str = ''

  def __call__(self, c: Parameter, w: GridFn) -> GridFn:
    return self.evaluate(c, w)

  def zero_state(self) -> GridFn:
    return GridFn.zeros(self.grid, self.dim)

  def residual(self, c: Parameter, v: GridFn) -> float:
    """Sup norm of v - T(c, v)."""
    return (v - self(c, v)).sup_norm()


@dataclass(frozen=True)
class SolveReport:
  solution: GridFn
  residual: float
  iterations: int
  converged: bool


def _checked(image: GridFn, family: OperatorFamily) -> GridFn:
  if not np.all(np.isfinite(image.values)):
    message = f"Operator {family.name or 'T'} produced non-finite values."
    raise NonFiniteState(message)
  return image


def picard_solve(
  T: OperatorFamily,
  c: Parameter,
  v0: GridFn,
  tol: float = DEFAULT_TOL,
  max_iter: int = DEFAULT_PICARD_MAX_ITER,
  damping: float = DEFAULT_DAMPING,
) -> SolveReport:
  """Damped Picard iteration v <- (1 - d) v + d T(c, v).

  Notes
  -----
  The damping is halved, down to 0.25, every time the residual grows. When
  the iteration budget runs out the best iterate is returned with
  `converged=False`.
  """
  if v0.sup_norm() > T.radius + tol:
    logger.debug(
      "Start of norm %.3g lies outside the invariant ball of radius %.3g.",
      v0.sup_norm(), T.radius,
    )
  v = v0
  image = _checked(T(c, v), T)
  residual = (v - image).sup_norm()
  best, best_residual = v, residual
  iterations = 0
  while residual > tol and iterations < max_iter:
    candidate = v + damping * (image - v)
    candidate_image = _checked(T(c, candidate), T)
    candidate_residual = (candidate - candidate_image).sup_norm()
    iterations += 1
    if candidate_residual > residual and damping > MIN_DAMPING:
      damping = max(0.5 * damping, MIN_DAMPING)
      logger.debug("Picard residual grew, damping now %s.", damping)
    v, image, residual = candidate, candidate_image, candidate_residual
    if residual < best_residual:
      best, best_residual = v, residual

  if residual <= tol:
    return SolveReport(v, residual, iterations, True)
  logger.debug(
    "Picard stopped after %d iterations at residual %.3g.",
    iterations, best_residual,
  )
  return SolveReport(best, best_residual, iterations, False)


def _sup(vector: Array) -> float:
  return float(np.max(np.abs(vector))) if vector.size else 0.0


def _difference_jacobian(
  F: Callable[[Array], Array],
  x: Array,
  fx: Array,
) -> Array:
  eps = 1e-6 * (1.0 + _sup(x))
  jacobian = np.empty((fx.size, x.size))
  shifted = x.copy()
  for column in range(x.size):
    shifted[column] += eps
    jacobian[:, column] = (F(shifted) - fx) / eps
    shifted[column] = x[column]
  return jacobian


def newton_system(
  F: Callable[[Array], Array],
  x0: Array,
  tol: float = DEFAULT_TOL,
  max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> tuple[Array, float, int, bool]:
  """Damped Newton on a square system F(x) = 0.

  Notes
  -----
  The Jacobian is assembled column by column with forward differences of
  step 1e-6 * (1 + |x|) and factorised densely. Each step is halved until the
  sup norm of the residual decreases, at most 20 times.

  Returns
  -------
  (x, residual, iterations, converged)
  """
  x = np.array(x0, dtype=float)
  fx = F(x)
  residual = _sup(fx)
  iterations = 0
  while residual > tol and iterations < max_iter:
    jacobian = _difference_jacobian(F, x, fx)
    try:
      factors = lu_factor(jacobian)
    except (LinAlgError, ValueError) as exc:
      raise SingularJacobian(f"Jacobian factorisation failed: {exc}") from exc
    pivots = np.abs(np.diag(factors[0]))
    if not np.all(np.isfinite(pivots)) or np.min(pivots) == 0.0:
      raise SingularJacobian("Jacobian is singular.")
    delta = lu_solve(factors, -fx)

    scale = 1.0
    for _ in range(MAX_STEP_HALVINGS + 1):
      trial = x + scale * delta
      f_trial = F(trial)
      trial_residual = _sup(f_trial)
      if np.isfinite(trial_residual) and trial_residual < residual:
        break
      scale *= 0.5
    else:
      message = (
        f"Newton found no descent after {MAX_STEP_HALVINGS} halvings "
        f"(residual {residual:.3g})."
      )
      raise NoDescent(message)

    x, fx, residual = trial, f_trial, trial_residual
    iterations += 1
    logger.debug("Newton iteration %d: residual %.3g", iterations, residual)
  return x, residual, iterations, residual <= tol


def newton_solve(
  T: OperatorFamily,
  c: Parameter,
  v0: GridFn,
  tol: float = DEFAULT_TOL,
  max_iter: int = DEFAULT_NEWTON_MAX_ITER,
) -> SolveReport:
  """Newton on F(v) = v - T(c, v) over the node values of v."""
  shape = v0.values.shape

  def F(x: Array) -> Array:
    v = v0.with_values(x.reshape(shape))
    image = _checked(T(c, v), T)
    return (v.values - image.values).ravel()

  x, residual, iterations, converged = newton_system(
    F, v0.values.ravel(), tol=tol, max_iter=max_iter,
  )
  return SolveReport(
    v0.with_values(x.reshape(shape)), residual, iterations, converged,
  )


def solve_fixed_point(
  T: OperatorFamily,
  c: Parameter,
  v0: GridFn,
  options: SolverOptions | None = None,
) -> SolveReport:
  """Picard first, Newton from the best Picard iterate when it stalls."""
  options = options or SolverOptions()
  report = picard_solve(
    T, c, v0,
    tol=options.tol,
    max_iter=options.picard_max_iter,
    damping=options.damping,
  )
  if report.converged or not options.newton_fallback:
    return report

  logger.info(
    "Picard stalled at c=%s (residual %.3g), falling back to Newton.",
    c, report.residual,
  )
  try:
    newton = newton_solve(
      T, c, report.solution,
      tol=options.tol,
      max_iter=options.newton_max_iter,
    )
  except (SingularJacobian, NoDescent) as exc:
    logger.info("Newton fallback failed at c=%s: %s", c, exc)
    return report
  if newton.converged or newton.residual < report.residual:
    return SolveReport(
      newton.solution,
      newton.residual,
      report.iterations + newton.iterations,
      newton.converged,
    )
  return report
