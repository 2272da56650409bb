"""u'' = f(t, u) on (-L, L) with the nonlocal condition u(-L) = u(L) = g(u(0)).

Writing u = v + c with v = 0 on the boundary turns the problem into the
family v = T(c, v), T(c, w) solving v'' = f(t, w + c), together with the
scalar condition Phi(c, v) = c - g(v(0) + c) = 0.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING
import logging
import math

import numpy as np

from .conf import (
  DEFAULT_BVP_NODES, DEFAULT_CONTINUATION_STEPS, DEFAULT_TOL_C, SolverOptions,
)
from .continuation import (
  find_phi_root, rectangle_loop, trace_branch, winding_number,
)
from .exceptions import (
  BracketNotFound, HypothesisFailed, ImproperlyConfigured, NoDescent,
  NoSignChange, NoSolutionFound, SingularJacobian,
)
from .fixed_point import OperatorFamily, newton_system, picard_solve
from .numerics import GridFn, UniformGrid, solve_dirichlet


if TYPE_CHECKING:
  from collections.abc import Callable
  from numpy.typing import ArrayLike, NDArray

  from .continuation import Branch, Functional, Rectangle

  Array = NDArray[np.float64]
  Field = Callable[[Array, Array], ArrayLike]
  Map = Callable[[Array], ArrayLike]


logger = logging.getLogger(__name__)

GROWTH_CLASSES = (
  'bounded-sublinear', 'superlinear', 'user-bracket', 'planar-degree',
)
BRACKET_SAMPLES = 101
MAX_BRACKET_DOUBLINGS = 20
F_SUP_SAMPLES = 201
BOUNDARY_SAMPLES = 201
EQUATION_TOL = 1e-6
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class GrowthConstants:
  """Declared constants of |f(t, u)| <= eps |u| + C and |g(u)| <= A |u| + B."""

  eps: float
  A: float
  B: float
  C: float


def a_priori_bound(
  constants: GrowthConstants,
  k: float,
  superlinear: bool = False,
) -> float:
  """Sup-norm bound on solutions under relaxed growth of f.

  Notes
  -----
  Sublinear g gives (k C + B) / (1 - k eps - A). For superlinear g the
  constants describe the inverse growth and the bound is
  (B / A + C) / (1 - k eps - 1 / A).
  """
  eps, A, B, C = constants.eps, constants.A, constants.B, constants.C
  if superlinear:
    if not A > 1:
      message = f"Superlinear growth needs A > 1, got A={A}."
      raise ImproperlyConfigured(message)
    denominator = 1.0 - k * eps - 1.0 / A
    numerator = B / A + C
  else:
    denominator = 1.0 - k * eps - A
    numerator = k * C + B
  if denominator <= 0:
    message = (
      f"Growth constants {constants} leave no a priori bound with k={k} "
      f"(denominator {denominator:.3g})."
    )
    raise ImproperlyConfigured(message)
  return numerator / denominator


@dataclass(frozen=True, eq=False)
class NonlocalProblem:
  """Data of the nonlocal boundary value problem.

  Notes
  -----
  `f` is called as f(t, u) with t a column of nodes and u of shape
  (n, dim); `g` acts on arrays whose last axis has length `dim`. Both may
  return anything that broadcasts to the shape of u.
  """

  L: float
  f: Field
  g: Map
  dim: int = 1
  growth_class: str = 'bounded-sublinear'
  bracket: tuple[float, float] | None = None
  rectangle: Rectangle | None = None
  f_sup: float | None = None
  n_nodes: int = DEFAULT_BVP_NODES
  growth: GrowthConstants | None = None

  def __post_init__(self) -> None:
    if self.growth_class not in GROWTH_CLASSES:
      message = (
        f"Unknown growth class {self.growth_class!r}; expected one of "
        f"{', '.join(GROWTH_CLASSES)}."
      )
      raise ImproperlyConfigured(message)
    if self.dim not in (1, 2):
      raise ImproperlyConfigured(f"dim must be 1 or 2, got {self.dim}.")
    if not self.L > 0:
      raise ImproperlyConfigured(f"L must be positive, got {self.L}.")
    if self.growth_class == 'user-bracket':
      if self.bracket is None or not self.bracket[0] < self.bracket[1]:
        message = "The user-bracket class needs a bracket (a, b) with a < b."
        raise ImproperlyConfigured(message)
    if self.growth_class == 'planar-degree':
      if self.dim != 2 or self.rectangle is None:
        message = "The planar-degree class needs dim=2 and a rectangle."
        raise ImproperlyConfigured(message)

  @cached_property
  def grid(self) -> UniformGrid:
    return UniformGrid.symmetric(self.L, self.n_nodes)

  @property
  def k(self) -> float:
    """Constant of |v| <= k |v''| for v vanishing at both ends."""
    return self.L ** 2 / 2.0

  @cached_property
  def truncation(self) -> float:
    """Range outside which f is clipped, infinite without growth data."""
    if self.growth is None:
      return math.inf
    return a_priori_bound(
      self.growth, self.k, superlinear=self.growth_class == 'superlinear',
    )

  def field(self, t: Array, u: Array) -> Array:
    if math.isfinite(self.truncation):
      u = np.clip(u, -self.truncation, self.truncation)
    values = np.asarray(self.f(t.reshape(-1, 1), u), dtype=float)
    return np.broadcast_to(values, u.shape).copy()

  def boundary_map(self, u: ArrayLike) -> Array:
    values = np.asarray(u, dtype=float)
    image = np.asarray(self.g(values), dtype=float)
    return np.broadcast_to(image, values.shape).copy()

  def _working_range(self) -> float:
    if self.bracket is not None:
      return abs(self.bracket[0]) + abs(self.bracket[1])
    if self.rectangle is not None:
      return float(np.max(np.abs(self.rectangle)))
    return 0.0

  def _sampled_sup(self, width: float) -> float:
    nodes = self.grid.nodes
    levels = np.linspace(-width, width, F_SUP_SAMPLES)
    if self.dim == 2:
      coarse = np.linspace(-width, width, 41)
      points = [np.array([x, y]) for x in coarse for y in coarse]
    else:
      points = [np.array([level]) for level in levels]
    sup = 0.0
    for point in points:
      u = np.tile(point, (len(nodes), 1))
      sup = max(sup, float(np.max(np.abs(self.field(nodes, u)))))
    return sup

  @cached_property
  def sup_f(self) -> float:
    """Declared or sampled bound on |f|.

    Notes
    -----
    Under declared growth constants the bound is eps * bound + C on the
    truncated range. Otherwise f is sampled twice: first over the working
    range widened by 1, then over the range widened by 2R from that first
    pass.
    """
    if self.f_sup is not None:
      return float(self.f_sup)
    if self.growth is not None:
      return self.growth.eps * self.truncation + self.growth.C
    base = self._working_range()
    first = self._sampled_sup(base + 1.0)
    second = self._sampled_sup(base + 2.0 * self.k * first)
    return max(first, second)

  @property
  def radius(self) -> float:
    return self.k * self.sup_f


@dataclass(frozen=True)
class NonlocalSolution:
  c: float | Array
  u: GridFn
  equation_residual: float
  boundary_residual: float

  @property
  def verified(self) -> bool:
    return (
      self.equation_residual <= EQUATION_TOL
      and self.boundary_residual <= BOUNDARY_TOL
    )


def nonlocal_operator(prob: NonlocalProblem) -> OperatorFamily:
  """The family (c, w) -> solve_dirichlet(f(., w + c)), radius k * sup|f|."""
  grid, nodes = prob.grid, prob.grid.nodes

  def evaluate(c: float | Array, w: GridFn) -> GridFn:
    shift = np.reshape(np.asarray(c, dtype=float), (-1,))
    load = prob.field(nodes, w.values + shift)
    return solve_dirichlet(GridFn(grid, load))

  return OperatorFamily(
    evaluate,
    grid,
    dim=prob.dim,
    param_dim=prob.dim,
    radius=prob.radius,
    name='nonlocal',
  )


def nonlocal_phi(c: float, w: GridFn, prob: NonlocalProblem) -> float:
  """c - g(w(0) + c) for the scalar problem."""
  center = w.node_value(0.0)[0] + c
  return float(c - prob.boundary_map(np.array([center]))[0])


def verify_solution(prob: NonlocalProblem, u: GridFn) -> tuple[float, float]:
  """Discrete equation residual and boundary residual of u."""
  nodes = u.grid.nodes
  load = prob.field(nodes[1:-1], u.values[1:-1])
  equation = float(np.max(np.abs(u.second_difference() - load)))
  target = prob.boundary_map(u.node_value(0.0))
  boundary = float(max(
    np.max(np.abs(u.values[0] - target)),
    np.max(np.abs(u.values[-1] - target)),
  ))
  return equation, boundary


def _solution(
  prob: NonlocalProblem,
  c: float | Array,
  state: GridFn,
) -> NonlocalSolution:
  u = state + np.reshape(np.asarray(c, dtype=float), (-1,))
  equation, boundary = verify_solution(prob, u)
  solution = NonlocalSolution(c, u, equation, boundary)
  if not solution.verified:
    logger.warning(
      "Solution at c=%s misses its residual targets: equation %.3g, "
      "boundary %.3g.", c, equation, boundary,
    )
  return solution


def choose_bracket(prob: NonlocalProblem) -> tuple[float, float]:
  """An interval [a, b] with Phi(a, .) and Phi(b, .) of opposite signs.

  Notes
  -----
  r is sampled on 101 points of [-R, R]. Growth scans start at c = R, or at
  c = 1 when R = 0, and double c up to 2**20 times the start.
  """
  if prob.dim != 1:
    message = "Brackets apply to the scalar problem only."
    raise ImproperlyConfigured(message)
  R = prob.radius
  r = np.linspace(-R, R, BRACKET_SAMPLES)

  def g(values: Array) -> Array:
    return prob.boundary_map(values[:, None])[:, 0]

  if prob.growth_class == 'user-bracket':
    assert prob.bracket is not None
    a, b = prob.bracket
    if np.max(g(a + r)) > a:
      message = f"g(a + r) <= a fails at a={a} for some |r| <= {R:.6g}."
      raise BracketNotFound(message, hypothesis='non-asymptotic', where=a)
    if np.min(g(b + r)) < b:
      message = f"g(b + r) >= b fails at b={b} for some |r| <= {R:.6g}."
      raise BracketNotFound(message, hypothesis='non-asymptotic', where=b)
    return a, b

  superlinear = prob.growth_class == 'superlinear'
  start = R if R > 0 else 1.0
  for doubling in range(MAX_BRACKET_DOUBLINGS + 1):
    c = start * 2.0 ** doubling
    if superlinear:
      holds = np.min(g(c + r)) > c and np.max(g(-c + r)) < -c
    else:
      holds = np.max(g(c + r)) < c and np.min(g(-c + r)) > -c
    if holds:
      logger.info(
        "Bracket [%s, %s] found after %d doublings.", -c, c, doubling,
      )
      return -c, c

  message = (
    f"No bracket found for the {prob.growth_class} class up to "
    f"c={start * 2.0 ** MAX_BRACKET_DOUBLINGS:.6g}."
  )
  raise BracketNotFound(message, hypothesis=prob.growth_class)


def _scalar_phi(prob: NonlocalProblem) -> Functional:
  def Phi(c: float, w: GridFn) -> float:
    return nonlocal_phi(c, w, prob)
  return Phi


def nonlocal_branch(
  prob: NonlocalProblem,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
) -> Branch:
  """The fixed point branch of the scalar problem over its bracket."""
  if prob.dim != 1:
    raise ImproperlyConfigured("Branches exist for the scalar problem only.")
  bracket = choose_bracket(prob)
  return trace_branch(
    nonlocal_operator(prob), _scalar_phi(prob), bracket,
    steps=steps, options=options,
  )


def solve_nonlocal(
  prob: NonlocalProblem,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
  tol_c: float = DEFAULT_TOL_C,
  branch: Branch | None = None,
) -> list[NonlocalSolution]:
  """All solutions found along the branch over the bracket."""
  if branch is None:
    branch = nonlocal_branch(prob, steps, options)
  a, b = branch.c_start, branch.c_end
  T = nonlocal_operator(prob)
  Phi = _scalar_phi(prob)
  pairs = branch.sign_changes()
  if not pairs:
    message = f"Phi keeps one sign on the bracket [{a}, {b}]."
    raise NoSignChange(message)

  solutions: list[NonlocalSolution] = []
  for pair in pairs:
    c, state = find_phi_root(
      branch, T, Phi, tol_c=tol_c, options=options, pair=pair,
    )
    if any(abs(c - float(found.c)) <= 10 * tol_c for found in solutions):
      continue
    solutions.append(_solution(prob, c, state))
  logger.info("Found %d nonlocal solutions in [%s, %s].", len(solutions), a, b)
  return solutions


def schauder_iterate(
  prob: NonlocalProblem,
  options: SolverOptions | None = None,
  u0: GridFn | None = None,
) -> NonlocalSolution:
  """Direct iteration of u -> c + v with c = g(u(0)) and v'' = f(t, u)."""
  options = options or SolverOptions()
  grid, nodes = prob.grid, prob.grid.nodes

  def evaluate(_: float, u: GridFn) -> GridFn:
    shift = prob.boundary_map(u.node_value(0.0))
    return solve_dirichlet(GridFn(grid, prob.field(nodes, u.values))) + shift

  family = OperatorFamily(evaluate, grid, dim=prob.dim, name='schauder')
  start = u0 if u0 is not None else family.zero_state()
  report = picard_solve(
    family, 0.0, start,
    tol=options.tol,
    max_iter=options.picard_max_iter,
    damping=options.damping,
  )
  if not report.converged:
    message = (
      f"Direct iteration stopped at residual {report.residual:.3g} after "
      f"{report.iterations} iterations."
    )
    raise NoSolutionFound(message, attempts=1)
  u = report.solution
  c = u.values[0].copy()
  equation, boundary = verify_solution(prob, u)
  return NonlocalSolution(
    float(c[0]) if prob.dim == 1 else c, u, equation, boundary,
  )


def _disk_samples(R: float) -> Array:
  """The origin plus 5 radii times 8 angles of the disk |r| <= R."""
  angles = 2.0 * math.pi * np.arange(8) / 8
  radii = R * np.arange(1, 6) / 5
  ring = np.array([
    (radius * math.cos(angle), radius * math.sin(angle))
    for radius in radii for angle in angles
  ])
  return np.vstack([np.zeros((1, 2)), ring])


def check_planar_hypotheses(prob: NonlocalProblem) -> int:
  """Verify g(r + c) != c on the boundary and a nonzero degree of c - g(c).

  Returns the winding number of c - g(c) on the rectangle.
  """
  assert prob.rectangle is not None
  rect = prob.rectangle
  params = np.arange(BOUNDARY_SAMPLES, dtype=float) / BOUNDARY_SAMPLES
  boundary = rectangle_loop(rect, params)
  offsets = _disk_samples(prob.radius)
  scale = 1.0 + float(np.max(np.abs(rect)))
  for c in boundary:
    gaps = np.linalg.norm(prob.boundary_map(c + offsets) - c, axis=1)
    if np.min(gaps) <= 1e-12 * scale:
      message = f"g(r + c) = c for some |r| <= R at boundary point c={c}."
      raise HypothesisFailed(message, hypothesis='boundary', where=tuple(c))

  def displacement(c: Array) -> Array:
    return c - prob.boundary_map(c)

  degree = winding_number(displacement, rect)
  if degree == 0:
    message = "The degree of c - g(c) on the rectangle is zero."
    raise HypothesisFailed(message, hypothesis='degree', where=rect)
  return degree


def solve_nonlocal_planar(
  prob: NonlocalProblem,
  multistart_grid: int = 5,
  options: SolverOptions | None = None,
) -> NonlocalSolution:
  """Multistart Newton on the coupled unknowns (c, v) of the planar problem.

  Notes
  -----
  The unknowns are c in the plane and the node values of v. The equations are
  v - T(c, v) = 0 and c - g(v(0) + c) = 0. Starts place c on a uniform
  `multistart_grid` x `multistart_grid` lattice of the rectangle with v = 0.
  """
  if prob.dim != 2 or prob.rectangle is None:
    raise ImproperlyConfigured("The planar solve needs dim=2 and a rectangle.")
  if multistart_grid < 1:
    message = f"multistart_grid must be positive, got {multistart_grid}."
    raise ImproperlyConfigured(message)
  options = options or SolverOptions()
  degree = check_planar_hypotheses(prob)
  logger.info("Planar hypotheses hold; degree of c - g(c) is %d.", degree)

  T = nonlocal_operator(prob)
  shape = (prob.grid.n_nodes, 2)
  center = prob.grid.index_of(0.0)

  def F(x: Array) -> Array:
    c, v = x[:2], x[2:].reshape(shape)
    state = GridFn(prob.grid, v)
    image = T(c, state)
    boundary = c - prob.boundary_map(v[center] + c)
    return np.concatenate([(v - image.values).ravel(), boundary])

  (x0, x1), (y0, y1) = prob.rectangle
  if multistart_grid == 1:
    xs, ys = [0.5 * (x0 + x1)], [0.5 * (y0 + y1)]
  else:
    xs = list(np.linspace(x0, x1, multistart_grid))
    ys = list(np.linspace(y0, y1, multistart_grid))

  attempts = 0
  for cx in xs:
    for cy in ys:
      attempts += 1
      start = np.concatenate([[cx, cy], np.zeros(shape[0] * 2)])
      try:
        x, residual, _, converged = newton_system(
          F, start, tol=options.tol, max_iter=options.newton_max_iter,
        )
      except (SingularJacobian, NoDescent) as exc:
        logger.debug("Start (%s, %s) failed: %s", cx, cy, exc)
        continue
      if not converged:
        continue
      solution = _solution(
        prob, x[:2].copy(), GridFn(prob.grid, x[2:].reshape(shape)),
      )
      if solution.verified:
        logger.info("Planar solve converged from start %d.", attempts)
        return solution

  message = (
    f"No verified planar solution after {attempts} starts; the problem has "
    "a solution, so this is a numerical failure."
  )
  raise NoSolutionFound(message, attempts=attempts)
