"""Branch tracing over a real parameter and finite dimensional degree tools.

A branch is the numerical trace of a connected set of fixed points
(c, v) with v = T(c, v), swept over c with warm starts. Sign changes of a
functional Phi along the branch locate solutions of the original problem.
"""
from dataclasses import dataclass, field
from typing import TYPE_CHECKING
import logging
import math

import numpy as np
from scipy.optimize import bisect

from .conf import (
  DEFAULT_CONTINUATION_STEPS, DEFAULT_TOL_C, MAX_BRANCH_HALVINGS,
  PHI_ZERO_TOL, SolverOptions,
)
from .exceptions import (
  ImproperlyConfigured, NoSignChange, SignConditionViolated,
  UnresolvedAngleStep, UnresolvedBranch, ZeroOnBoundary,
)
from .fixed_point import solve_fixed_point


if TYPE_CHECKING:
  from collections.abc import Callable, Sequence
  from numpy.typing import NDArray

  from .fixed_point import OperatorFamily, SolveReport
  from .numerics import GridFn

  Array = NDArray[np.float64]
  Functional = Callable[[float, GridFn], float]
  PlanarMap = Callable[[Array], Array]
  Rectangle = tuple[tuple[float, float], tuple[float, float]]


logger = logging.getLogger(__name__)

MAX_ANGLE_STEP = 0.5 * math.pi
MAX_SUBDIVISION_ROUNDS = 4


@dataclass(frozen=True)
class BranchPoint:
  c: float
  state: GridFn
  phi: float
  residual: float


@dataclass
class Branch:
  """Continuation points ordered by the sweep direction."""

  points: list[BranchPoint] = field(default_factory=list)
  c_start: float = 0.0
  c_end: float = 0.0

  def __len__(self) -> int:
    return len(self.points)

  @property
  def cs(self) -> Array:
    return np.array([point.c for point in self.points])

  @property
  def phis(self) -> Array:
    return np.array([point.phi for point in self.points])

  @property
  def residuals(self) -> Array:
    return np.array([point.residual for point in self.points])

  def sign_changes(self) -> list[int]:
    """Indices i where phi vanishes at i or changes sign on [i, i+1]."""
    phis = self.phis
    indices = []
    for index, value in enumerate(phis):
      if abs(value) <= PHI_ZERO_TOL:
        indices.append(index)
      elif index + 1 < len(phis) and abs(phis[index + 1]) > PHI_ZERO_TOL:
        if value * phis[index + 1] < 0:
          indices.append(index)
    return indices

  def max_state_jump(self) -> float:
    """Largest sup-norm distance between consecutive states."""
    jumps = [
      (right.state - left.state).sup_norm()
      for left, right in zip(self.points, self.points[1:])
    ]
    return max(jumps, default=0.0)


def branch_point(
  Phi: Functional,
  c: float,
  report: SolveReport,
) -> BranchPoint:
  return BranchPoint(
    c=c,
    state=report.solution,
    phi=float(Phi(c, report.solution)),
    residual=report.residual,
  )


def trace_branch(
  T: OperatorFamily,
  Phi: Functional,
  c_range: Sequence[float],
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
  v0: GridFn | None = None,
) -> Branch:
  """Follow the fixed points of T(c, .) over the uniform grid of `c_range`.

  Notes
  -----
  Each solve is warm-started from the previous state. A failed solve halves
  the local step, up to 6 times, inserting the intermediate points.
  """
  if steps < 2:
    message = f"A branch needs at least 2 steps, got {steps}."
    raise ImproperlyConfigured(message)
  start, end = float(c_range[0]), float(c_range[1])
  if start == end:
    raise ImproperlyConfigured("The parameter range is empty.")
  options = options or SolverOptions()

  state = v0 if v0 is not None else T.zero_state()
  report = solve_fixed_point(T, start, state, options)
  if not report.converged:
    message = (
      f"No fixed point reached at the branch start c={start} "
      f"(residual {report.residual:.3g})."
    )
    raise UnresolvedBranch(message, c=start)
  points = [branch_point(Phi, start, report)]
  c_previous, state = start, report.solution

  for target in np.linspace(start, end, steps)[1:]:
    target = float(target)
    step = target - c_previous
    halvings = 0
    while c_previous != target:
      if abs(target - c_previous) <= abs(step) * (1.0 + 1e-12):
        c_try = target
      else:
        c_try = c_previous + step
      report = solve_fixed_point(T, c_try, state, options)
      if report.converged:
        points.append(branch_point(Phi, c_try, report))
        c_previous, state = c_try, report.solution
        continue
      halvings += 1
      if halvings > MAX_BRANCH_HALVINGS:
        message = (
          f"Branch solve failed at c={c_try} after {MAX_BRANCH_HALVINGS} "
          f"step halvings (residual {report.residual:.3g})."
        )
        raise UnresolvedBranch(message, c=c_try)
      step *= 0.5
      logger.info("Halving continuation step to %.3g at c=%s.", step, c_try)

  branch = Branch(points, start, end)
  logger.info(
    "Traced %d branch points over [%s, %s], max state jump %.3g.",
    len(branch), start, end, branch.max_state_jump(),
  )
  return branch


def find_phi_root(
  branch: Branch,
  T: OperatorFamily,
  Phi: Functional,
  tol_c: float = DEFAULT_TOL_C,
  options: SolverOptions | None = None,
  pair: int | None = None,
) -> tuple[float, GridFn]:
  """Refine a zero of Phi between two bracketing branch points.

  Notes
  -----
  Bisection on c re-solves the fixed point at every midpoint, warm-started
  from the bracket end that keeps the sign of the left point. Once the
  bracket is shorter than `tol_c` one secant step between its ends picks the
  returned point.
  """
  options = options or SolverOptions()
  if pair is None:
    indices = branch.sign_changes()
    if not indices:
      message = (
        f"Phi keeps one sign over c in [{branch.c_start}, {branch.c_end}]."
      )
      raise NoSignChange(message)
    pair = indices[0]

  lo = branch.points[pair]
  if abs(lo.phi) <= PHI_ZERO_TOL or pair + 1 >= len(branch):
    return lo.c, lo.state
  hi = branch.points[pair + 1]
  if abs(hi.phi) <= PHI_ZERO_TOL:
    return hi.c, hi.state
  if lo.phi * hi.phi > 0:
    raise NoSignChange(f"Points {pair} and {pair + 1} do not bracket a root.")

  def solve_at(c: float, start: GridFn) -> BranchPoint:
    report = solve_fixed_point(T, c, start, options)
    if not report.converged:
      message = f"Fixed point solve failed during bisection at c={c}."
      raise UnresolvedBranch(message, c=c)
    return branch_point(Phi, c, report)

  while abs(hi.c - lo.c) > tol_c:
    middle = solve_at(0.5 * (lo.c + hi.c), lo.state)
    if abs(middle.phi) <= PHI_ZERO_TOL:
      return middle.c, middle.state
    if (middle.phi > 0) == (lo.phi > 0):
      lo = middle
    else:
      hi = middle

  c_secant = lo.c - lo.phi * (hi.c - lo.c) / (hi.phi - lo.phi)
  candidates = [lo, hi, solve_at(c_secant, lo.state)]
  best = min(candidates, key=lambda point: abs(point.phi))
  logger.debug("Phi root at c=%.12g, |Phi|=%.3g", best.c, abs(best.phi))
  return best.c, best.state


def rectangle_loop(rect: Rectangle, params: Array) -> Array:
  """Points of the counterclockwise boundary at perimeter fractions."""
  (x0, x1), (y0, y1) = rect
  width, height = x1 - x0, y1 - y0
  perimeter = 2.0 * (width + height)
  s = np.mod(params, 1.0) * perimeter
  points = np.empty((len(s), 2))
  for index, arc in enumerate(s):
    if arc < width:
      points[index] = (x0 + arc, y0)
    elif arc < width + height:
      points[index] = (x1, y0 + arc - width)
    elif arc < 2.0 * width + height:
      points[index] = (x1 - (arc - width - height), y1)
    else:
      points[index] = (x0, y1 - (arc - 2.0 * width - height))
  return points


def _wrapped(delta: Array) -> Array:
  return np.asarray((delta + math.pi) % (2.0 * math.pi) - math.pi)


def winding_number(
  F: PlanarMap,
  rect: Rectangle,
  n_boundary: int = 256,
) -> int:
  """Degree of F on a rectangle from the accumulated boundary angle.

  Notes
  -----
  Consecutive angle increments are wrapped into (-pi, pi]; any increment
  larger than pi/2 triggers subdivision of its boundary segment, at most
  four rounds.
  """
  if n_boundary < 64:
    message = f"Use at least 64 boundary samples, got {n_boundary}."
    raise ImproperlyConfigured(message)
  (x0, x1), (y0, y1) = rect
  if not (x1 > x0 and y1 > y0):
    raise ImproperlyConfigured(f"Degenerate rectangle {rect}.")

  def evaluate(params: Array) -> Array:
    points = rectangle_loop(rect, params)
    values = np.array([np.asarray(F(point), dtype=float) for point in points])
    norms = np.hypot(values[:, 0], values[:, 1])
    if not np.all(np.isfinite(norms)) or np.any(norms == 0.0):
      where = points[int(np.argmin(np.nan_to_num(norms)))]
      raise ZeroOnBoundary(f"F vanishes on the boundary near {where}.")
    return np.arctan2(values[:, 1], values[:, 0])

  params = np.arange(n_boundary, dtype=float) / n_boundary
  angles = evaluate(params)
  for round_ in range(MAX_SUBDIVISION_ROUNDS + 1):
    closed = np.append(angles, angles[0])
    deltas = _wrapped(np.diff(closed))
    coarse = np.flatnonzero(np.abs(deltas) > MAX_ANGLE_STEP)
    if coarse.size == 0:
      total = float(np.sum(deltas))
      return int(round(total / (2.0 * math.pi)))
    if round_ == MAX_SUBDIVISION_ROUNDS:
      break
    ends = np.append(params, 1.0)
    midpoints = 0.5 * (ends[coarse] + ends[coarse + 1])
    params = np.concatenate([params, midpoints])
    angles = np.concatenate([angles, evaluate(midpoints)])
    order = np.argsort(params)
    params, angles = params[order], angles[order]
    logger.debug("Winding number: refined %d boundary segments.", coarse.size)

  message = (
    f"Angle steps above {MAX_ANGLE_STEP:.3g} remain after "
    f"{MAX_SUBDIVISION_ROUNDS} subdivision rounds."
  )
  raise UnresolvedAngleStep(message)


def poincare_miranda_solve(
  phi: Callable[[float, float], Sequence[float]],
  M: float | None = None,
  n_steps: int = DEFAULT_CONTINUATION_STEPS,
) -> tuple[float, float]:
  """Zero of phi on the unit square via the branch of x = x - phi_2(t, x)/M.

  Notes
  -----
  phi_2(t, 0) <= 0 <= phi_2(t, 1) is required on every sampled t; a
  violation of phi_1(0, x) < 0 < phi_1(1, x) away from the traced branch is
  only logged, since the sign change of phi_1 along the branch is all the
  method uses.
  """
  if n_steps < 2:
    raise ImproperlyConfigured(f"n_steps must be at least 2, got {n_steps}.")
  samples = np.linspace(0.0, 1.0, n_steps)

  def second(t: float, x: float) -> float:
    return float(phi(t, x)[1])

  def first(t: float, x: float) -> float:
    return float(phi(t, x)[0])

  for t in samples:
    if second(t, 0.0) > 0.0 or second(t, 1.0) < 0.0:
      message = f"phi_2(t, 0) <= 0 <= phi_2(t, 1) fails at t={t}."
      raise SignConditionViolated(message, hypothesis='phi_2', where=t)
  for x in samples:
    if not first(0.0, x) < 0.0 < first(1.0, x):
      logger.warning("phi_1(0, x) < 0 < phi_1(1, x) fails at x=%s.", x)
      break

  bound = max(abs(second(t, x)) for t in samples for x in samples)
  if M is None:
    M = bound if bound > 0 else 1.0
  elif M < bound:
    message = f"M={M} is below the sampled bound {bound} of |phi_2|."
    raise SignConditionViolated(message, hypothesis='M', where=M)
  scale = M

  def fixed_point(t: float) -> float:
    # x = f(t, x) with f(t, x) = x - phi_2(t, x)/M
    low, high = second(t, 0.0), second(t, 1.0)
    if low == 0.0:
      return 0.0
    if high == 0.0:
      return 1.0
    return float(bisect(
      lambda x: second(t, x) / scale, 0.0, 1.0, xtol=1e-14, rtol=1e-15,
    ))

  def along_branch(t: float) -> float:
    return first(t, fixed_point(t))

  values = [along_branch(t) for t in samples]
  for index, value in enumerate(values):
    if value == 0.0:
      t_star = float(samples[index])
      return t_star, fixed_point(t_star)
    if index + 1 < len(values) and value * values[index + 1] < 0:
      t_star = float(bisect(
        along_branch, samples[index], samples[index + 1],
        xtol=1e-14, rtol=1e-15,
      ))
      return t_star, fixed_point(t_star)
  raise NoSignChange("phi_1 keeps one sign along the fixed point branch.")
