"""Meshes, quadrature, interpolation and the linear boundary value solvers.

Every compact operator in the package is assembled from the solvers in
this module: a Dirichlet solve for the nonlocal problem, a damped two-point
solve for the resonant problem and a periodic first order solve for the
chemostat.
"""
from functools import cached_property
from dataclasses import dataclass
from typing import TYPE_CHECKING
import logging

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import LinAlgError, solve_banded

from .conf import DEFAULT_PERIODIC_SAMPLES
from .exceptions import (
  DegenerateGrid, ImproperlyConfigured, NonFiniteState, SingularSystem,
)


if TYPE_CHECKING:
  from collections.abc import Callable
  from typing import Self
  from numpy.typing import ArrayLike, NDArray

  Array = NDArray[np.float64]


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UniformGrid:
  """Uniform mesh of `n_nodes` points including both endpoints."""

  t_start: float
  t_end: float
  n_nodes: int

  def __post_init__(self) -> None:
    if self.n_nodes < 3:
      message = f"A grid needs at least 3 nodes, got {self.n_nodes}."
      raise DegenerateGrid(message)
    if not self.t_end > self.t_start:
      message = (
        f"Grid end {self.t_end} must exceed grid start {self.t_start}."
      )
      raise DegenerateGrid(message)

  @classmethod
  def symmetric(cls, half_length: float, n_nodes: int) -> UniformGrid:
    """Grid on (-L, L) whose middle node is t=0."""
    if n_nodes % 2 == 0:
      message = (
        f"A symmetric grid needs an odd node count to contain t=0, "
        f"got {n_nodes}."
      )
      raise DegenerateGrid(message)
    return cls(-half_length, half_length, n_nodes)

  @property
  def step(self) -> float:
    return (self.t_end - self.t_start) / (self.n_nodes - 1)

  @property
  def length(self) -> float:
    return self.t_end - self.t_start

  @cached_property
  def nodes(self) -> Array:
    return self.t_start + self.step * np.arange(self.n_nodes, dtype=float)

  def index_of(self, t: float) -> int:
    """Index of the node at `t`; raises when `t` is not a node."""
    position = (t - self.t_start) / self.step
    index = int(round(position))
    if not 0 <= index < self.n_nodes or abs(position - index) > 1e-9:
      message = f"t={t} is not a node of {self}."
      raise ImproperlyConfigured(message)
    return index

  def refined(self) -> UniformGrid:
    """Same interval with the step halved."""
    return UniformGrid(self.t_start, self.t_end, 2 * self.n_nodes - 1)


def _as_columns(values: ArrayLike, n_rows: int) -> Array:
  array = np.asarray(values, dtype=float)
  if array.ndim == 0:
    array = np.full((n_rows, 1), float(array))
  elif array.ndim == 1 and array.size == n_rows:
    array = array.reshape(n_rows, 1)
  elif array.ndim == 1:
    # one constant row, e.g. a vector field that does not depend on t
    array = np.tile(array, (n_rows, 1))
  if array.shape[0] != n_rows:
    message = (
      f"Expected {n_rows} rows of values, got array of shape {array.shape}."
    )
    raise ImproperlyConfigured(message)
  return array


@dataclass(frozen=True, eq=False)
class GridFn:
  """Values of an N-vector valued function on a uniform grid.

  Notes
  -----
  `values` always has shape (n_nodes, dim). Evaluation between nodes uses a
  local cubic Hermite interpolant whose slopes are second order finite
  differences, so evaluation at a node returns the stored value exactly.
  """

  grid: UniformGrid
  values: Array

  def __post_init__(self) -> None:
    object.__setattr__(
      self, 'values', _as_columns(self.values, self.grid.n_nodes),
    )

  @classmethod
  def zeros(cls, grid: UniformGrid, dim: int = 1) -> GridFn:
    return cls(grid, np.zeros((grid.n_nodes, dim)))

  @classmethod
  def from_function(
    cls,
    grid: UniformGrid,
    func: Callable[[Array], ArrayLike],
  ) -> GridFn:
    return cls(grid, _as_columns(func(grid.nodes), grid.n_nodes))

  @property
  def dim(self) -> int:
    return int(self.values.shape[1])

  @property
  def scalar(self) -> Array:
    """The first component as a flat array."""
    return self.values[:, 0]

  def sup_norm(self) -> float:
    return float(np.max(np.abs(self.values)))

  def with_values(self, values: ArrayLike) -> Self:
    return type(self)(self.grid, np.asarray(values, dtype=float))

  def node_value(self, t: float) -> Array:
    return self.values[self.grid.index_of(t)].copy()

  @cached_property
  def _interpolant(self) -> CubicHermiteSpline:
    slopes = np.gradient(self.values, self.grid.step, axis=0, edge_order=2)
    return CubicHermiteSpline(self.grid.nodes, self.values, slopes, axis=0)

  def __call__(self, t: ArrayLike) -> Array:
    return np.asarray(self._interpolant(t), dtype=float)

  def second_difference(self) -> Array:
    """Central second differences at the interior nodes."""
    v = self.values
    return (v[2:] - 2.0 * v[1:-1] + v[:-2]) / self.grid.step ** 2

  def central_difference(self) -> Array:
    """Central first differences at the interior nodes."""
    v = self.values
    return (v[2:] - v[:-2]) / (2.0 * self.grid.step)

  def endpoint_derivatives(self) -> tuple[Array, Array]:
    """Second order one-sided derivatives at both ends."""
    v, h = self.values, self.grid.step
    left = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    right = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return left, right

  def _check_compatible(self, other: GridFn) -> None:
    if other.grid != self.grid or other.dim != self.dim:
      message = "Grid functions live on different grids or dimensions."
      raise ImproperlyConfigured(message)

  def __add__(self, other: GridFn | float | Array) -> Self:
    if isinstance(other, GridFn):
      self._check_compatible(other)
      return self.with_values(self.values + other.values)
    return self.with_values(self.values + other)

  def __sub__(self, other: GridFn | float | Array) -> Self:
    if isinstance(other, GridFn):
      self._check_compatible(other)
      return self.with_values(self.values - other.values)
    return self.with_values(self.values - other)

  def __mul__(self, other: float) -> Self:
    return self.with_values(self.values * other)

  __rmul__ = __mul__

  def __neg__(self) -> Self:
    return self.with_values(-self.values)


def _periodic_slopes(samples: Array, step: float) -> Array:
  if samples.shape[0] >= 5:
    return (
      -np.roll(samples, -2, axis=0)
      + 8.0 * np.roll(samples, -1, axis=0)
      - 8.0 * np.roll(samples, 1, axis=0)
      + np.roll(samples, 2, axis=0)
    ) / (12.0 * step)
  return (
    np.roll(samples, -1, axis=0) - np.roll(samples, 1, axis=0)
  ) / (2.0 * step)


@dataclass(frozen=True, eq=False)
class PeriodicSignal:
  """An omega-periodic function sampled on [0, omega), endpoint excluded.

  Notes
  -----
  Interpolation is cubic Hermite with periodic wraparound. Slopes are taken
  from `slopes` when the caller knows them (e.g. from an ODE right-hand side)
  and from fourth order periodic differences otherwise.
  """

  period: float
  samples: Array
  slopes: Array | None = None

  def __post_init__(self) -> None:
    if not self.period > 0:
      message = f"Period must be positive, got {self.period}."
      raise ImproperlyConfigured(message)
    samples = np.asarray(self.samples, dtype=float)
    if samples.ndim == 0 or samples.shape[0] == 0:
      raise ImproperlyConfigured("A periodic signal needs samples.")
    object.__setattr__(self, 'samples', _as_columns(samples, len(samples)))
    if self.slopes is not None:
      object.__setattr__(
        self, 'slopes', _as_columns(self.slopes, len(samples)),
      )

  @classmethod
  def from_function(
    cls,
    func: Callable[[Array], ArrayLike],
    period: float,
    n_samples: int = DEFAULT_PERIODIC_SAMPLES,
  ) -> PeriodicSignal:
    nodes = period * np.arange(n_samples, dtype=float) / n_samples
    return cls(period, _as_columns(func(nodes), n_samples))

  @classmethod
  def constant(
    cls,
    value: float | ArrayLike,
    period: float,
    n_samples: int = DEFAULT_PERIODIC_SAMPLES,
  ) -> PeriodicSignal:
    row = np.atleast_1d(np.asarray(value, dtype=float))
    samples = np.tile(row, (n_samples, 1))
    return cls(period, samples, np.zeros_like(samples))

  @property
  def n_samples(self) -> int:
    return int(self.samples.shape[0])

  @property
  def dim(self) -> int:
    return int(self.samples.shape[1])

  @property
  def step(self) -> float:
    return self.period / self.n_samples

  @cached_property
  def nodes(self) -> Array:
    return self.step * np.arange(self.n_samples, dtype=float)

  @property
  def scalar(self) -> Array:
    return self.samples[:, 0]

  def mean(self) -> Array:
    """Rectangle-rule average over one period, per component."""
    return np.asarray(self.samples.mean(axis=0), dtype=float)

  def sup_norm(self) -> float:
    return float(np.max(np.abs(self.samples)))

  def minimum(self) -> float:
    return float(np.min(self.samples))

  @cached_property
  def _interpolant(self) -> CubicHermiteSpline:
    slopes = self.slopes
    if slopes is None:
      slopes = _periodic_slopes(self.samples, self.step)
    knots = np.append(self.nodes, self.period)
    values = np.vstack([self.samples, self.samples[:1]])
    derivatives = np.vstack([slopes, slopes[:1]])
    return CubicHermiteSpline(knots, values, derivatives, axis=0)

  def __call__(self, t: ArrayLike) -> Array:
    return np.asarray(
      self._interpolant(np.mod(t, self.period)), dtype=float,
    )

  def on_grid(self, grid: UniformGrid) -> Array:
    return self(grid.nodes)

  def with_samples(self, samples: ArrayLike) -> PeriodicSignal:
    return PeriodicSignal(self.period, np.asarray(samples, dtype=float))

  def zero_mean(self) -> PeriodicSignal:
    """The same signal with its sample mean removed."""
    return PeriodicSignal(
      self.period, self.samples - self.mean(), self.slopes,
    )

  def _check_compatible(self, other: PeriodicSignal) -> None:
    if (
      abs(other.period - self.period) > 1e-12 * self.period
      or other.n_samples != self.n_samples
    ):
      message = "Periodic signals have different periods or sample counts."
      raise ImproperlyConfigured(message)

  def __add__(self, other: PeriodicSignal | float) -> PeriodicSignal:
    if isinstance(other, PeriodicSignal):
      self._check_compatible(other)
      slopes = None
      if self.slopes is not None and other.slopes is not None:
        slopes = self.slopes + other.slopes
      return PeriodicSignal(self.period, self.samples + other.samples, slopes)
    return PeriodicSignal(self.period, self.samples + other, self.slopes)

  def __mul__(self, other: PeriodicSignal | float) -> PeriodicSignal:
    if isinstance(other, PeriodicSignal):
      self._check_compatible(other)
      slopes = None
      if self.slopes is not None and other.slopes is not None:
        slopes = self.slopes * other.samples + self.samples * other.slopes
      return PeriodicSignal(self.period, self.samples * other.samples, slopes)
    slopes = None if self.slopes is None else self.slopes * other
    return PeriodicSignal(self.period, self.samples * other, slopes)

  __rmul__ = __mul__


def mean_value(f: PeriodicSignal | GridFn) -> Array:
  """Average of `f` per component.

  Periodic signals use the rectangle rule, grid functions the trapezoid rule.
  """
  if isinstance(f, PeriodicSignal):
    return f.mean()
  integral = trapezoid(f.values, dx=f.grid.step, axis=0)
  return np.asarray(integral / f.grid.length, dtype=float)


def _solve_tridiagonal(
  lower: float,
  diagonal: float,
  upper: float,
  rhs: Array,
) -> Array:
  size = rhs.shape[0]
  bands = np.empty((3, size))
  bands[0, :] = upper
  bands[1, :] = diagonal
  bands[2, :] = lower
  try:
    solution = solve_banded((1, 1), bands, rhs)
  except (LinAlgError, ValueError) as exc:
    raise SingularSystem(f"Banded solve failed: {exc}") from exc
  if not np.all(np.isfinite(solution)):
    raise NonFiniteState("Banded solve produced non-finite values.")
  return np.asarray(solution, dtype=float)


def solve_dirichlet(h: GridFn) -> GridFn:
  """Solve v'' = h with v = 0 at both ends of the grid.

  Notes
  -----
  Second order central differences, one tridiagonal solve per component.
  The discrete solution obeys |v| <= (L**2 / 2)|h| on (-L, L) up to O(step**2).
  """
  step = h.grid.step
  interior = _solve_tridiagonal(1.0, -2.0, 1.0, h.values[1:-1] * step ** 2)
  values = np.zeros_like(h.values)
  values[1:-1] = interior
  return h.with_values(values)


def solve_two_point_damped(q: GridFn, a: float) -> GridFn:
  """Solve v'' + a v' = q with v = 0 at both ends of the grid."""
  step = q.grid.step
  if abs(a) * step >= 2.0:
    logger.warning(
      "Damping %s is large for step %s; the banded system loses diagonal "
      "dominance.", a, step,
    )
  interior = _solve_tridiagonal(
    1.0 - 0.5 * a * step,
    -2.0,
    1.0 + 0.5 * a * step,
    q.values[1:-1] * step ** 2,
  )
  values = np.zeros_like(q.values)
  values[1:-1] = interior
  return q.with_values(values)


def solve_periodic_first_order(
  D: PeriodicSignal,
  r: PeriodicSignal,
  rtol: float = 1e-12,
  atol: float = 1e-14,
) -> PeriodicSignal:
  """Unique periodic solution of v' = -D v + r.

  Notes
  -----
  With Lambda(t) the integral of D over [0, t] and P the solution started at
  zero, v(t) = exp(-Lambda(t)) v(0) + P(t) and periodic closure gives
  v(0) = P(omega) / (1 - exp(-Lambda(omega))). Lambda and P are integrated
  together by an adaptive high order scheme on the interpolants of D and r.
  """
  if abs(D.period - r.period) > 1e-12 * D.period:
    raise ImproperlyConfigured("D and r must share the same period.")
  if D.dim != 1:
    raise ImproperlyConfigured("The decay rate D must be scalar.")
  if D.minimum() <= 0:
    message = (
      "The decay rate D must be positive everywhere; the periodic solution "
      "is not unique otherwise."
    )
    raise ImproperlyConfigured(message)

  period, dim = r.period, r.dim

  def rhs(t: float, y: Array) -> Array:
    rate = float(D(t)[0])
    out = np.empty_like(y)
    out[0] = rate
    out[1:] = -rate * y[1:] + r(t)
    return out

  t_eval = np.append(r.nodes, period)
  result = solve_ivp(
    rhs, (0.0, period), np.zeros(dim + 1),
    method='DOP853', t_eval=t_eval, rtol=rtol, atol=atol,
  )
  if not result.success:
    raise NonFiniteState(f"Periodic solve failed: {result.message}")
  decay = result.y[0]
  particular = result.y[1:].T
  start = particular[-1] / (1.0 - np.exp(-decay[-1]))
  values = np.exp(-decay[:-1])[:, None] * start + particular[:-1]
  slopes = -D(r.nodes) * values + r.samples
  logger.debug("Periodic first order solve: v(0)=%s", start)
  return PeriodicSignal(period, values, slopes)
