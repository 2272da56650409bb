"""Periodic solutions of u'' + a u' + g(u) = p0(t) + s and the range of s.

The resonant problem is split into v = T(c, v), where T solves the Dirichlet
problem v'' + a v' = p0 - g(c + w) + mean(g(c + w)) on [0, omega], and the
scalar equation mean(g(c + v)) = s. The set of attainable means is the
solvability range of the forcing p0.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import cached_property
from typing import TYPE_CHECKING
import logging
import math

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.spatial.distance import cdist

from .conf import (
  DEFAULT_BVP_NODES, DEFAULT_CONTINUATION_STEPS, DEFAULT_TOL_C,
  MAX_STEP_HALVINGS, SolverOptions,
)
from .continuation import (
  Branch, branch_point, find_phi_root, trace_branch,
)
from .exceptions import (
  EmptyPointSet, ImproperlyConfigured, NoConvergence, NoSignChange,
  NumericalFailure, SingularSystem,
)
from .fixed_point import OperatorFamily, solve_fixed_point
from .numerics import (
  GridFn, PeriodicSignal, UniformGrid, solve_two_point_damped,
)


if TYPE_CHECKING:
  from collections.abc import Callable, Sequence
  from numpy.typing import ArrayLike, NDArray

  from .continuation import BranchPoint

  Array = NDArray[np.float64]
  Map = Callable[[Array], ArrayLike]
  Window = tuple[float, float]


logger = logging.getLogger(__name__)

G_CLASSES = ('periodic', 'landesman-lazer', 'generic-bounded')
REFINEMENT_ROUNDS = 3
LIMIT_TOL = 1e-3
LIMIT_MAGNITUDE = 1e6
SOLUTION_TOL = 1e-6
MEAN_IDENTITY_TOL = 1e-8
WX_RESIDUAL_TOL = 1e-9
WX_MEAN_TOL = 1e-10
GROUPING_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class ResonantProblem:
  """Data of the periodically forced problem.

  Notes
  -----
  `g` acts on arrays whose last axis has length `dim` and may return
  anything that broadcasts to that shape. The forcing p0 has its sample mean
  removed on construction; a missing p0 means zero forcing.
  """

  omega: float
  g: Map
  a: float = 0.0
  dim: int = 1
  g_class: str = 'generic-bounded'
  periods: tuple[float, ...] | None = None
  limits: tuple[float, float] | None = None
  p0: PeriodicSignal | None = None
  n_nodes: int = DEFAULT_BVP_NODES
  g_sup: float | None = None

  def __post_init__(self) -> None:
    if not self.omega > 0:
      raise ImproperlyConfigured(f"omega must be positive, got {self.omega}.")
    if self.dim not in (1, 2):
      raise ImproperlyConfigured(f"dim must be 1 or 2, got {self.dim}.")
    if self.g_class not in G_CLASSES:
      message = (
        f"Unknown nonlinearity class {self.g_class!r}; expected one of "
        f"{', '.join(G_CLASSES)}."
      )
      raise ImproperlyConfigured(message)
    if self.g_class == 'periodic':
      if not self.periods or len(self.periods) != self.dim:
        message = "A periodic nonlinearity needs one period per component."
        raise ImproperlyConfigured(message)
      if min(self.periods) <= 0:
        raise ImproperlyConfigured("Periods of g must be positive.")
    if self.g_class == 'landesman-lazer':
      if self.dim != 1:
        raise ImproperlyConfigured("Landesman-Lazer problems are scalar.")
      if self.limits is None:
        object.__setattr__(self, 'limits', sample_limits(self))
        logger.info("Sampled limits of g: %s.", self.limits)
      assert self.limits is not None
      if not self.limits[0] < self.limits[1]:
        message = f"Expected g_minus < g_plus, got {self.limits}."
        raise ImproperlyConfigured(message)

    p0 = self.p0
    if p0 is None:
      p0 = PeriodicSignal.constant(np.zeros(self.dim), self.omega)
    if abs(p0.period - self.omega) > 1e-12 * self.omega:
      message = f"p0 has period {p0.period}, expected {self.omega}."
      raise ImproperlyConfigured(message)
    if p0.dim != self.dim:
      message = f"p0 has {p0.dim} components, expected {self.dim}."
      raise ImproperlyConfigured(message)
    object.__setattr__(self, 'p0', p0.zero_mean())

  @property
  def forcing(self) -> PeriodicSignal:
    assert self.p0 is not None
    return self.p0

  @cached_property
  def grid(self) -> UniformGrid:
    return UniformGrid(0.0, self.omega, self.n_nodes)

  @cached_property
  def p0_nodes(self) -> Array:
    """p0 on the grid with the rectangle-rule node mean removed."""
    values = self.forcing.on_grid(self.grid)
    return np.asarray(values - values[:-1].mean(axis=0), dtype=float)

  def nonlinearity(self, u: ArrayLike) -> Array:
    values = np.asarray(u, dtype=float)
    image = np.asarray(self.g(values), dtype=float)
    return np.broadcast_to(image, values.shape).copy()

  def _sample_levels(self, component: int) -> Array:
    if self.g_class == 'periodic':
      assert self.periods is not None
      return np.linspace(0.0, self.periods[component], 2001)
    tail = np.logspace(1.0, math.log10(LIMIT_MAGNITUDE), 101)
    return np.concatenate([-tail[::-1], np.linspace(-10, 10, 2001), tail])

  @cached_property
  def sup_g(self) -> float:
    """Declared or sampled sup of |g|."""
    if self.g_sup is not None:
      return float(self.g_sup)
    if self.dim == 1:
      points = self._sample_levels(0)[:, None]
    else:
      first = self._sample_levels(0)[::25]
      second = self._sample_levels(1)[::25]
      mesh = np.meshgrid(first, second, indexing='ij')
      points = np.column_stack([axis.ravel() for axis in mesh])
    return float(np.max(np.abs(self.nonlinearity(points))))

  @cached_property
  def wirtinger(self) -> tuple[bool, float]:
    """check_wirtinger with its default sampling, run once per problem."""
    return check_wirtinger(self)

  @cached_property
  def k(self) -> float:
    """Sup norm of the damped Dirichlet solve of the unit load."""
    unit = GridFn(self.grid, np.ones((self.n_nodes, 1)))
    return solve_two_point_damped(unit, self.a).sup_norm()

  @property
  def radius(self) -> float:
    return self.k * (2.0 * self.sup_g + self.forcing.sup_norm())


@dataclass(frozen=True)
class IntervalEstimate:
  lo: float
  hi: float
  tol: float
  samples: tuple[tuple[float, float], ...]
  window_relative: bool = False

  @property
  def width(self) -> float:
    return self.hi - self.lo

  def contains(self, value: float, slack: float = 0.0) -> bool:
    return self.lo - slack <= value <= self.hi + slack


@dataclass(frozen=True)
class ResonantSolution:
  c: float
  s: float
  u: GridFn
  equation_residual: float
  closure_residual: float
  mean_residual: float

  @property
  def verified(self) -> bool:
    return (
      self.equation_residual <= SOLUTION_TOL
      and self.closure_residual <= SOLUTION_TOL
      and self.mean_residual <= MEAN_IDENTITY_TOL
    )


def resonance_operator(prob: ResonantProblem) -> OperatorFamily:
  """(c, w) -> solve_two_point_damped(p0 - g(c + w) + mean g(c + w), a)."""
  grid = prob.grid
  forcing = prob.p0_nodes

  def evaluate(c: float | Array, w: GridFn) -> GridFn:
    shift = np.reshape(np.asarray(c, dtype=float), (-1,))
    image = prob.nonlinearity(w.values + shift)
    load = forcing - image + image[:-1].mean(axis=0)
    return solve_two_point_damped(GridFn(grid, load), prob.a)

  return OperatorFamily(
    evaluate,
    grid,
    dim=prob.dim,
    param_dim=prob.dim,
    radius=prob.radius,
    name='resonance',
  )


def mean_nonlinearity(
  c: float | Array,
  w: GridFn,
  prob: ResonantProblem,
) -> float | Array:
  """Rectangle-rule mean of g(c + w) over [0, omega)."""
  shift = np.reshape(np.asarray(c, dtype=float), (-1,))
  mean = prob.nonlinearity(w.values[:-1] + shift).mean(axis=0)
  if prob.dim == 1:
    return float(mean[0])
  return np.asarray(mean, dtype=float)


def _scalar_mean(prob: ResonantProblem) -> Callable[[float, GridFn], float]:
  def I(c: float, w: GridFn) -> float:
    return float(mean_nonlinearity(c, w, prob))
  return I


def sample_limits(
  prob: ResonantProblem,
  magnitude: float = LIMIT_MAGNITUDE,
) -> tuple[float, float]:
  """Values of g at -magnitude and +magnitude."""
  values = prob.nonlinearity(np.array([[-magnitude], [magnitude]]))
  return float(values[0, 0]), float(values[1, 0])


def _limit_reach(prob: ResonantProblem) -> float:
  """Smallest M = 2**j with g within LIMIT_TOL of its limits beyond M."""
  assert prob.limits is not None
  g_minus, g_plus = prob.limits
  M = 1.0
  while M <= LIMIT_MAGNITUDE:
    tail = np.logspace(math.log10(M), math.log10(LIMIT_MAGNITUDE), 50)
    plus = prob.nonlinearity(tail[:, None])[:, 0]
    minus = prob.nonlinearity(-tail[:, None])[:, 0]
    if (
      np.max(np.abs(plus - g_plus)) <= LIMIT_TOL
      and np.max(np.abs(minus - g_minus)) <= LIMIT_TOL
    ):
      return M
    M *= 2.0
  message = (
    f"g does not approach its declared limits {prob.limits} within "
    f"{LIMIT_TOL} up to |u| = {LIMIT_MAGNITUDE:g}."
  )
  raise ImproperlyConfigured(message)


def auto_window(prob: ResonantProblem) -> Window:
  """The c-window scanned when the caller gives none."""
  if prob.g_class == 'periodic':
    assert prob.periods is not None
    return 0.0, float(prob.periods[0])
  if prob.g_class == 'landesman-lazer':
    reach = prob.radius + _limit_reach(prob)
    return -reach, reach
  message = (
    "Generic bounded nonlinearities need an explicit c-window; the range "
    "is only known relative to it."
  )
  raise ImproperlyConfigured(message)


def _refine_extremum(
  T: OperatorFamily,
  I: Callable[[float, GridFn], float],
  branch: Branch,
  index: int,
  largest: bool,
  options: SolverOptions,
) -> tuple[BranchPoint, list[BranchPoint], float]:
  """Local bisection around an extremal branch sample.

  Returns the best point, every point evaluated and the last improvement.
  """
  points = branch.points
  best = points[index]
  neighbours = [
    abs(points[j].c - best.c) for j in (index - 1, index + 1)
    if 0 <= j < len(points)
  ]
  spacing = max(neighbours, default=0.0)
  low, high = sorted((branch.c_start, branch.c_end))
  sign = 1.0 if largest else -1.0
  extra: list[BranchPoint] = []
  improvement = 0.0
  for _ in range(REFINEMENT_ROUNDS):
    candidates = [best]
    for c in (best.c - 0.5 * spacing, best.c + 0.5 * spacing):
      if not low <= c <= high:
        continue
      report = solve_fixed_point(T, c, best.state, options)
      if report.converged:
        candidates.append(branch_point(I, c, report))
    extra.extend(candidates[1:])
    chosen = max(candidates, key=lambda point: sign * point.phi)
    improvement = abs(chosen.phi - best.phi)
    best = chosen
    spacing *= 0.5
  return best, extra, improvement


def compute_range(
  prob: ResonantProblem,
  c_window: Sequence[float] | None = None,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
) -> IntervalEstimate:
  """Approximate the solvability range as [min I, max I] over the branch.

  Notes
  -----
  I(c, v) is the mean of g(c + v) along the fixed point branch. The two
  extremal samples are refined by three rounds of local bisection on c.
  """
  if prob.dim != 1:
    raise ImproperlyConfigured("compute_range handles the scalar problem.")
  options = options or SolverOptions()
  window = auto_window(prob) if c_window is None else tuple(c_window)
  T = resonance_operator(prob)
  I = _scalar_mean(prob)
  branch = trace_branch(T, I, window, steps=steps, options=options)

  phis = branch.phis
  high, high_extra, high_change = _refine_extremum(
    T, I, branch, int(np.argmax(phis)), True, options,
  )
  low, low_extra, low_change = _refine_extremum(
    T, I, branch, int(np.argmin(phis)), False, options,
  )
  points = [*branch.points, *high_extra, *low_extra]
  samples = tuple(
    sorted((point.c, point.phi) for point in points)
  )
  estimate = IntervalEstimate(
    lo=min(value for _, value in samples),
    hi=max(value for _, value in samples),
    tol=max(high_change, low_change, options.tol),
    samples=samples,
    window_relative=prob.g_class == 'generic-bounded',
  )
  logger.info(
    "Range over c in [%s, %s]: [%.9g, %.9g]",
    window[0], window[1], estimate.lo, estimate.hi,
  )
  return estimate


def degeneracy_scan(
  prob: ResonantProblem,
  amplitudes: Sequence[float],
  c_window: Sequence[float] | None = None,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  tol: float = 1e-6,
  options: SolverOptions | None = None,
) -> list[tuple[float, IntervalEstimate, bool]]:
  """Ranges for the forcings amplitude * p0 with a width <= tol flag.

  A narrow range is reported, never asserted to be a single point.
  """
  table = []
  for amplitude in amplitudes:
    scaled = replace(prob, p0=prob.forcing * float(amplitude))
    estimate = compute_range(scaled, c_window, steps=steps, options=options)
    narrow = estimate.width <= tol
    if narrow:
      logger.info(
        "Range width %.3g at amplitude %s is below %.3g.",
        estimate.width, amplitude, tol,
      )
    table.append((float(amplitude), estimate, narrow))
  return table


def verify_periodic_solution(
  prob: ResonantProblem,
  u: GridFn,
  s: float,
) -> tuple[float, float, float]:
  """Equation, periodic closure and mean identity residuals of u."""
  interior = u.values[1:-1]
  equation = (
    u.second_difference()
    + prob.a * u.central_difference()
    + prob.nonlinearity(interior)
    - prob.p0_nodes[1:-1]
    - s
  )
  left, right = u.endpoint_derivatives()
  closure = float(
    np.max(np.abs(u.values[0] - u.values[-1])) + np.max(np.abs(left - right))
  )
  mean = prob.nonlinearity(u.values[:-1]).mean(axis=0)
  return (
    float(np.max(np.abs(equation))),
    closure,
    float(np.max(np.abs(mean - s))),
  )


def _landesman_lazer_exterior(prob: ResonantProblem, s: float) -> str | None:
  if prob.g_class != 'landesman-lazer':
    return None
  assert prob.limits is not None
  g_minus, g_plus = prob.limits
  if g_minus < s < g_plus:
    return None
  return (
    f"s={s} lies outside the open interval ({g_minus}, {g_plus}) between "
    "the limits of g; integrating the equation over a period shows no "
    "periodic solution exists."
  )


def _roots_for_s(
  prob: ResonantProblem,
  s: float,
  window: Window,
  steps: int,
  options: SolverOptions,
  tol_c: float,
  first_only: bool,
) -> list[ResonantSolution]:
  T = resonance_operator(prob)
  I = _scalar_mean(prob)

  def Phi(c: float, w: GridFn) -> float:
    return s - I(c, w)

  branch = trace_branch(T, Phi, window, steps=steps, options=options)
  pairs = branch.sign_changes()
  if not pairs:
    message = (
      f"s - mean g(c + v) keeps one sign for c in [{window[0]}, {window[1]}]."
    )
    raise NoSignChange(message, _landesman_lazer_exterior(prob, s))

  solutions: list[ResonantSolution] = []
  for pair in pairs[:1] if first_only else pairs:
    c, state = find_phi_root(
      branch, T, Phi, tol_c=tol_c, options=options, pair=pair,
    )
    if any(abs(c - found.c) <= 10 * tol_c for found in solutions):
      continue
    u = state + c
    equation, closure, mean = verify_periodic_solution(prob, u, s)
    solution = ResonantSolution(c, s, u, equation, closure, mean)
    if not solution.verified:
      logger.warning(
        "Periodic solution at c=%s misses its residual targets: equation "
        "%.3g, closure %.3g, mean %.3g.", c, equation, closure, mean,
      )
    solutions.append(solution)
  return solutions


def solve_for_s(
  prob: ResonantProblem,
  s: float,
  c_window: Sequence[float] | None = None,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
  tol_c: float = DEFAULT_TOL_C,
) -> ResonantSolution:
  """A periodic solution for the forcing p0 + s.

  Raises NoSignChange when the branch over the window never reaches s; for
  Landesman-Lazer problems with s outside (g_minus, g_plus) the exception
  carries the necessary condition that fails.
  """
  if prob.dim != 1:
    raise ImproperlyConfigured("solve_for_s handles the scalar problem.")
  options = options or SolverOptions()
  window = auto_window(prob) if c_window is None else tuple(c_window)
  return _roots_for_s(prob, s, window, steps, options, tol_c, True)[0]


def check_wirtinger(
  prob: ResonantProblem,
  sample_box: float | None = None,
  n_samples: int = 10_000,
  seed: int = 0,
) -> tuple[bool, float]:
  """Sampled sup of <g(u) - g(v), u - v> / |u - v|**2 against (2 pi/omega)**2.

  Notes
  -----
  Pairs are drawn uniformly from the box of half-width `sample_box`, one
  period cell for periodic g and 10 otherwise, with a seeded generator.
  """
  if n_samples < 10_000:
    message = f"Use at least 10000 sample pairs, got {n_samples}."
    raise ImproperlyConfigured(message)
  if sample_box is None:
    sample_box = max(prob.periods) if prob.periods else 10.0
  rng = np.random.default_rng(seed)
  u = rng.uniform(-sample_box, sample_box, (n_samples, prob.dim))
  v = rng.uniform(-sample_box, sample_box, (n_samples, prob.dim))
  difference = u - v
  squared = np.sum(difference ** 2, axis=1)
  keep = squared > 1e-24
  inner = np.sum(
    (prob.nonlinearity(u) - prob.nonlinearity(v)) * difference, axis=1,
  )
  quotient = float(np.max(inner[keep] / squared[keep], initial=0.0))
  bound = (2.0 * math.pi / prob.omega) ** 2
  holds = quotient < bound - 1e-9
  if not holds:
    logger.warning(
      "Wirtinger condition fails: sampled quotient %.6g >= %.6g.",
      quotient, bound,
    )
  return holds, quotient


@dataclass(frozen=True)
class WxSolution:
  x: Array
  w: PeriodicSignal
  C: Array
  residual: float
  mean: float

  def image(self, prob: ResonantProblem) -> Array:
    """Mean of g(x + w_x) over one period."""
    values = prob.nonlinearity(self.w.samples + self.x)
    return np.asarray(values.mean(axis=0), dtype=float)


def _periodic_operator(m: int, step: float, a: float) -> sparse.csr_matrix:
  """Fourth order circulant stencil of w'' + a w'."""
  second = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * step ** 2)
  first = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * step)
  weights = second + a * first
  rows = np.repeat(np.arange(m), 5)
  cols = (np.arange(m)[:, None] + np.arange(-2, 3)[None, :]) % m
  data = np.tile(weights, m)
  matrix = sparse.coo_matrix((data, (rows, cols.ravel())), shape=(m, m))
  return matrix.tocsr()


def _g_jacobian(prob: ResonantProblem, u: Array) -> Array:
  """Central difference Jacobian of g at each row of u, shape (m, dim, dim)."""
  m, dim = u.shape
  jacobian = np.empty((m, dim, dim))
  for column in range(dim):
    delta = 1e-6 * (1.0 + np.abs(u[:, column]))
    shift = np.zeros_like(u)
    shift[:, column] = delta
    forward = prob.nonlinearity(u + shift)
    backward = prob.nonlinearity(u - shift)
    jacobian[:, :, column] = (forward - backward) / (2.0 * delta[:, None])
  return jacobian


def solve_wx(
  prob: ResonantProblem,
  x: ArrayLike,
  w0: PeriodicSignal | None = None,
  max_iter: int = 50,
) -> WxSolution:
  """Periodic w with mean zero and w'' + a w' + g(x + w) - p0 constant.

  Notes
  -----
  Newton on the wraparound discretization over the sample nodes of p0. The
  unknowns are the node values of w, component by component, followed by
  the constant C of each component. The last rows ask for zero mean.
  """
  forcing = prob.forcing
  m, dim = forcing.n_samples, prob.dim
  if m < 5:
    raise ImproperlyConfigured("solve_wx needs at least 5 samples of p0.")
  point = np.reshape(np.asarray(x, dtype=float), (dim,))
  holds, _ = prob.wirtinger
  if not holds:
    logger.warning("w_x may not be unique at x=%s.", point)

  stencil = _periodic_operator(m, forcing.step, prob.a)
  linear = sparse.kron(sparse.identity(dim), stencil, format='csr')
  constant_columns = sparse.kron(
    sparse.identity(dim), -np.ones((m, 1)), format='csr',
  )
  mean_rows = sparse.kron(
    sparse.identity(dim), np.ones((1, m)) / m, format='csr',
  )
  p0 = forcing.samples

  def split(z: Array) -> tuple[Array, Array]:
    return z[:m * dim].reshape(dim, m).T, z[m * dim:]

  def residual(z: Array) -> Array:
    w, C = split(z)
    equation = (
      (linear @ w.T.ravel()).reshape(dim, m).T
      + prob.nonlinearity(point + w) - p0 - C
    )
    return np.concatenate([equation.T.ravel(), w.mean(axis=0)])

  w_start = np.zeros((m, dim)) if w0 is None else w0.samples
  C_start = prob.nonlinearity(point + w_start).mean(axis=0)
  z = np.concatenate([w_start.T.ravel(), C_start])
  F = residual(z)

  def sizes(values: Array) -> tuple[float, float]:
    return (
      float(np.max(np.abs(values[:m * dim]))),
      float(np.max(np.abs(values[m * dim:]))),
    )

  for iteration in range(max_iter + 1):
    equation_size, mean_size = sizes(F)
    if equation_size <= WX_RESIDUAL_TOL and mean_size <= WX_MEAN_TOL:
      break
    if iteration == max_iter:
      message = (
        f"w_x Newton stopped after {max_iter} iterations at residual "
        f"{equation_size:.3g}."
      )
      raise NoConvergence(message, residual=equation_size)

    w, _ = split(z)
    jacobian = _g_jacobian(prob, point + w)
    blocks = [
      [sparse.diags(jacobian[:, row, column]) for column in range(dim)]
      for row in range(dim)
    ]
    system = sparse.bmat([
      [linear + sparse.bmat(blocks), constant_columns],
      [mean_rows, None],
    ], format='csc')
    delta = spsolve(system, -F)
    if not np.all(np.isfinite(delta)):
      raise SingularSystem(f"w_x Newton system is singular at x={point}.")

    size = float(np.max(np.abs(F)))
    scale = 1.0
    for _ in range(MAX_STEP_HALVINGS + 1):
      trial = z + scale * delta
      F_trial = residual(trial)
      if float(np.max(np.abs(F_trial))) < size:
        break
      scale *= 0.5
    else:
      message = f"w_x Newton found no descent at residual {size:.3g}."
      raise NoConvergence(message, residual=size)
    z, F = trial, F_trial
    logger.debug("w_x Newton iteration %d: residual %.3g", iteration, size)

  w, C = split(z)
  equation_size, mean_size = sizes(F)
  return WxSolution(
    point,
    PeriodicSignal(prob.omega, w.copy()),
    np.asarray(C, dtype=float).copy(),
    equation_size,
    mean_size,
  )


@dataclass(frozen=True)
class RangeCloud:
  xs: Array
  points: Array
  max_jump: float
  skipped: tuple[tuple[float, ...], ...]


def sample_range_nd(
  prob: ResonantProblem,
  rect: tuple[tuple[float, float], tuple[float, float]],
  resolution: int,
  jobs: int = 1,
) -> RangeCloud:
  """Images x -> mean g(x + w_x) over a resolution x resolution grid of x.

  Notes
  -----
  Points whose Newton solve fails are skipped and listed. The continuity
  diagnostic is the largest distance between images of grid neighbours.
  """
  if prob.dim != 2:
    raise ImproperlyConfigured("sample_range_nd needs a planar problem.")
  if resolution < 2:
    raise ImproperlyConfigured("Use a resolution of at least 2.")
  (x0, x1), (y0, y1) = rect
  axes = np.linspace(x0, x1, resolution), np.linspace(y0, y1, resolution)
  xs = [np.array([x, y]) for x in axes[0] for y in axes[1]]
  if not prob.wirtinger[0]:
    logger.warning("Range images on %s are not certified unique.", rect)

  def image(x: Array) -> Array | None:
    try:
      return solve_wx(prob, x).image(prob)
    except NumericalFailure as exc:
      logger.info("Skipping x=%s: %s", x, exc)
      return None

  if jobs > 1:
    with ThreadPoolExecutor(max_workers=jobs) as executor:
      images = list(executor.map(image, xs))
  else:
    images = [image(x) for x in xs]

  grid = np.full((resolution, resolution, 2), np.nan)
  for index, value in enumerate(images):
    if value is not None:
      grid[divmod(index, resolution)] = value
  jumps = [
    np.linalg.norm(grid[1:] - grid[:-1], axis=2),
    np.linalg.norm(grid[:, 1:] - grid[:, :-1], axis=2),
  ]
  finite = [jump[np.isfinite(jump)] for jump in jumps]
  max_jump = max((float(np.max(j)) for j in finite if j.size), default=0.0)

  kept = [index for index, value in enumerate(images) if value is not None]
  return RangeCloud(
    xs=np.array([xs[index] for index in kept]).reshape(-1, 2),
    points=np.array([images[index] for index in kept]).reshape(-1, 2),
    max_jump=max_jump,
    skipped=tuple(
      tuple(float(v) for v in xs[index])
      for index, value in enumerate(images) if value is None
    ),
  )


def _as_point_set(points: ArrayLike) -> Array:
  array = np.asarray(points, dtype=float)
  if array.ndim <= 1:
    array = array.reshape(-1, 1)
  if array.shape[0] == 0:
    raise EmptyPointSet("Hausdorff distance needs non-empty point sets.")
  return array


def hausdorff_distance(A: ArrayLike, B: ArrayLike) -> float:
  """max(sup_a d(a, B), sup_b d(b, A)) over all pairwise distances."""
  distances = cdist(_as_point_set(A), _as_point_set(B))
  return float(max(
    np.max(np.min(distances, axis=1)),
    np.max(np.min(distances, axis=0)),
  ))


def interval_distance(
  first: IntervalEstimate,
  second: IntervalEstimate,
) -> float:
  """Hausdorff distance of [lo, hi] intervals, the larger endpoint gap."""
  return max(abs(first.lo - second.lo), abs(first.hi - second.hi))


def continuity_experiment(
  prob: ResonantProblem,
  perturbation: PeriodicSignal,
  amplitudes: Sequence[float],
  c_window: Sequence[float] | None = None,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
  jobs: int = 1,
) -> list[tuple[float, float]]:
  """Distances from the range of p0 + amplitude * perturbation to that of p0.

  No convergence is asserted; for generic bounded g the ranges are only
  window-relative.
  """
  forcing = prob.forcing
  resampled = PeriodicSignal(
    forcing.period, perturbation(forcing.nodes),
  ).zero_mean()
  reference = compute_range(prob, c_window, steps=steps, options=options)

  def distance(amplitude: float) -> float:
    perturbed = replace(prob, p0=forcing + resampled * float(amplitude))
    estimate = compute_range(perturbed, c_window, steps=steps, options=options)
    return interval_distance(estimate, reference)

  if jobs > 1:
    with ThreadPoolExecutor(max_workers=jobs) as executor:
      distances = list(executor.map(distance, amplitudes))
  else:
    distances = [distance(amplitude) for amplitude in amplitudes]
  return [
    (float(amplitude), value)
    for amplitude, value in zip(amplitudes, distances)
  ]


def nonintersection_check(branch: Branch) -> tuple[bool, float]:
  """Smallest gap min(u_j - u_i) over pairs c_i < c_j, with u = c + v."""
  points = sorted(branch.points, key=lambda point: point.c)
  solutions = [point.state.values + point.c for point in points]
  min_gap = math.inf
  for i, lower in enumerate(solutions):
    for upper in solutions[i + 1:]:
      min_gap = min(min_gap, float(np.min(upper - lower)))
  return min_gap > 0, min_gap


def multistart_geometric(
  prob: ResonantProblem,
  s: float,
  steps: int = DEFAULT_CONTINUATION_STEPS,
  options: SolverOptions | None = None,
  tol_c: float = DEFAULT_TOL_C,
) -> list[list[ResonantSolution]]:
  """Solutions from shifted windows grouped modulo the period of g.

  Notes
  -----
  Windows [j sigma/4, j sigma/4 + sigma] for j = 0..7 are scanned. Two
  solutions share a group when |u - v - k sigma| <= 1e-4 for the integer k
  nearest to mean(u - v)/sigma.
  """
  if prob.g_class != 'periodic' or prob.dim != 1:
    message = "Geometric grouping needs a scalar problem with periodic g."
    raise ImproperlyConfigured(message)
  assert prob.periods is not None
  options = options or SolverOptions()
  sigma = float(prob.periods[0])

  found: list[ResonantSolution] = []
  for j in range(8):
    window = (j * sigma / 4, j * sigma / 4 + sigma)
    try:
      found.extend(
        _roots_for_s(prob, s, window, steps, options, tol_c, False),
      )
    except NoSignChange:
      logger.info("No solution in window %s.", window)

  groups: list[list[ResonantSolution]] = []
  for solution in found:
    for group in groups:
      difference = solution.u.values - group[0].u.values
      shift = round(float(np.mean(difference)) / sigma) * sigma
      if np.max(np.abs(difference - shift)) <= GROUPING_TOL:
        group.append(solution)
        break
    else:
      groups.append([solution])
  if not groups:
    raise NoSignChange(f"No solution for s={s} in any shifted window.")
  logger.info(
    "%d solutions in %d geometrically distinct groups.",
    len(found), len(groups),
  )
  return groups
