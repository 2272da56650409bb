"""Periodic orbits of the chemostat with delayed growth response.

  s'(t) = D(t) (s0(t) - s(t)) - mu(s(t)) x(t) / gamma
  x'(t) = x(t) (mu(s(t - tau)) - D(t))

The history of s over [-tau, 0] and the initial biomass x0 are mapped one
period ahead by the Poincare map. For fixed x0 the history part has a fixed
point; the biomass closes exactly when mean(mu(s)) = mean(D) along it.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import TYPE_CHECKING
import logging
import math

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .conf import DEFAULT_DDE_STEPS
from .exceptions import (
  ImproperlyConfigured, NoConvergence, NonFiniteState, PositivityViolation,
  ScanExhausted,
)
from .fixed_point import OperatorFamily, picard_solve
from .numerics import (
  GridFn, PeriodicSignal, UniformGrid, solve_periodic_first_order,
)


if TYPE_CHECKING:
  from collections.abc import Callable
  from numpy.typing import ArrayLike, NDArray

  Array = NDArray[np.float64]


logger = logging.getLogger(__name__)

MU_CLASSES = ('monod', 'tabulated-increasing')
INNER_TOL = 1e-9
INNER_MAX_ITER = 300
ORBIT_TOL = 1e-8
POINCARE_TOL = 1e-7
LOG_IDENTITY_TOL = 1e-8
ADMISSIBLE_SLACK = 1e-10


@dataclass(frozen=True, eq=False)
class HistoryFn(GridFn):
  """Values of s on the uniform grid over [-tau, 0]."""

  def is_admissible(
    self,
    ceiling: HistoryFn,
    slack: float = ADMISSIBLE_SLACK,
  ) -> bool:
    """0 <= phi <= ceiling pointwise within `slack`."""
    values = self.values
    return bool(
      np.all(values >= -slack)
      and np.all(values <= ceiling.values + slack)
    )


@dataclass(frozen=True, eq=False)
class ChemostatModel:
  """Model data; D and s0 share the period omega.

  Notes
  -----
  The RK4 step count per period is the smallest multiple of the denominator
  of tau/omega, read as a fraction with denominator at most 1000, that is
  not below `steps_per_period`. Delayed node values then fall on nodes.
  """

  omega: float
  tau: float
  gamma: float
  D: PeriodicSignal
  s0: PeriodicSignal
  mu: Callable[[ArrayLike], ArrayLike]
  mu_class: str = 'monod'
  steps_per_period: int = DEFAULT_DDE_STEPS

  def __post_init__(self) -> None:
    if not 0 < self.tau < self.omega:
      message = (
        f"Expected 0 < tau < omega, got tau={self.tau}, "
        f"omega={self.omega}."
      )
      raise ImproperlyConfigured(message)
    if not self.gamma > 0:
      raise ImproperlyConfigured(f"gamma must be positive, got {self.gamma}.")
    if self.mu_class not in MU_CLASSES:
      message = (
        f"Unknown growth class {self.mu_class!r}; expected one of "
        f"{', '.join(MU_CLASSES)}."
      )
      raise ImproperlyConfigured(message)
    for name, signal in (('D', self.D), ('s0', self.s0)):
      if abs(signal.period - self.omega) > 1e-12 * self.omega:
        message = f"{name} has period {signal.period}, expected {self.omega}."
        raise ImproperlyConfigured(message)
      if signal.dim != 1 or signal.minimum() <= 0:
        message = f"{name} must be a positive scalar signal."
        raise ImproperlyConfigured(message)
    if abs(float(self.growth_rate(0.0))) > 1e-12:
      raise ImproperlyConfigured("The growth response must satisfy mu(0) = 0.")
    levels = np.linspace(0.0, 2.0 * float(np.max(self.s0.samples)), 201)
    increments = np.diff(self.growth_rate(levels))
    if np.any(increments < 0):
      raise ImproperlyConfigured("The growth response must be increasing.")
    if np.any(increments == 0):
      logger.warning("The growth response is not strictly increasing.")
    if self.tau < 2.0 * self.step:
      raise ImproperlyConfigured("The delay must span at least two RK4 steps.")

  def growth_rate(self, s: ArrayLike) -> Array:
    values = np.asarray(s, dtype=float)
    return np.broadcast_to(
      np.asarray(self.mu(values), dtype=float), values.shape,
    ).copy()

  @cached_property
  def n_steps(self) -> int:
    ratio = Fraction(self.tau / self.omega).limit_denominator(1000)
    if abs(float(ratio) - self.tau / self.omega) > 1e-12:
      return self.steps_per_period
    denominator = ratio.denominator
    return denominator * math.ceil(self.steps_per_period / denominator)

  @property
  def step(self) -> float:
    return self.omega / self.n_steps

  @cached_property
  def history_grid(self) -> UniformGrid:
    intervals = max(2, round(self.tau / self.step))
    return UniformGrid(-self.tau, 0.0, intervals + 1)

  @cached_property
  def vstar(self) -> PeriodicSignal:
    return compute_vstar(self)

  @property
  def commensurate(self) -> bool:
    intervals = self.tau / self.step
    return abs(intervals - round(intervals)) < 1e-9

  def with_steps(self, steps_per_period: int) -> ChemostatModel:
    return ChemostatModel(
      self.omega, self.tau, self.gamma, self.D, self.s0, self.mu,
      self.mu_class, steps_per_period,
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
  """Dense output of (s, x) on the RK4 nodes of [0, t_end]."""

  t: Array
  s: Array
  x: Array
  ds: Array
  history: HistoryFn
  step: float

  @cached_property
  def _interpolant(self) -> CubicHermiteSpline:
    return CubicHermiteSpline(self.t, self.s, self.ds)

  def s_at(self, t: ArrayLike) -> Array:
    """s at times in [-tau, t_end], from the history for negative times."""
    times = np.asarray(t, dtype=float)
    past = times < 0
    values = np.empty_like(times)
    if np.any(past):
      values[past] = self.history(times[past])[..., 0]
    if np.any(~past):
      values[~past] = self._interpolant(times[~past])
    return values


@dataclass(frozen=True)
class NonexistenceCertificate:
  """mean(mu(v*)) <= mean(D): no positive periodic orbit exists."""

  margin: float
  mean_growth: float
  mean_dilution: float


@dataclass(frozen=True)
class PeriodicOrbit:
  history: HistoryFn
  x0: float
  trajectory: Trajectory
  phi: float
  poincare_residual: float
  log_identity_residual: float
  bounds_hold: bool

  @property
  def verified(self) -> bool:
    return (
      self.poincare_residual <= POINCARE_TOL
      and self.log_identity_residual <= LOG_IDENTITY_TOL
      and self.bounds_hold
    )


def compute_vstar(model: ChemostatModel) -> PeriodicSignal:
  """Periodic solution of v' = D (s0 - v), the washout state."""
  s0 = model.s0
  if s0.n_samples != model.D.n_samples:
    s0 = PeriodicSignal(model.omega, s0(model.D.nodes))
  vstar = solve_periodic_first_order(model.D, model.D * s0)
  if vstar.minimum() <= 0:
    raise NonFiniteState("The washout state is not positive.")
  return vstar


def history_from(model: ChemostatModel, signal: PeriodicSignal) -> HistoryFn:
  """The restriction of a periodic signal to [-tau, 0]."""
  grid = model.history_grid
  return HistoryFn(grid, signal(grid.nodes))


def vstar_history(model: ChemostatModel) -> HistoryFn:
  return history_from(model, model.vstar)


def integrate_dde(
  model: ChemostatModel,
  phi: HistoryFn,
  x0: float,
  t_end: float,
) -> Trajectory:
  """Classical RK4 by the method of steps with step omega / n_steps.

  Notes
  -----
  The run is split into chunks of at most tau. Inside a chunk every delayed
  argument t - tau lies before the chunk start, so mu(s(t - tau)) is
  evaluated in advance on the chunk's nodes and midpoints from the history
  or from the cubic Hermite interpolant of the finished part, whose slopes
  are the exact right-hand sides.
  """
  if x0 < 0:
    raise ImproperlyConfigured(f"x0 must be non-negative, got {x0}.")
  if t_end < 0:
    raise ImproperlyConfigured(f"t_end must be non-negative, got {t_end}.")
  if phi.grid.t_start != -model.tau or phi.grid.t_end != 0.0:
    raise ImproperlyConfigured("The history must live on [-tau, 0].")

  h = model.step
  total = int(round(t_end / h))
  chunk = max(1, int(math.floor(model.tau / h + 1e-9)))
  times = h * np.arange(total + 1, dtype=float)
  half = times[:-1] + 0.5 * h
  D_array, D_half_array = model.D(times)[:, 0], model.D(half)[:, 0]
  D_nodes, D_half = D_array.tolist(), D_half_array.tolist()
  r_nodes = (D_array * model.s0(times)[:, 0]).tolist()
  r_half = (D_half_array * model.s0(half)[:, 0]).tolist()

  rate = model.mu
  inverse_yield = 1.0 / model.gamma
  s = [float(phi.values[-1, 0])]
  x = [float(x0)]
  ds = [
    r_nodes[0] - D_nodes[0] * s[0]
    - float(rate(s[0])) * x[0] * inverse_yield
  ]

  def delayed(arguments: Array, done: int) -> list[float]:
    values = np.empty_like(arguments)
    past = arguments < 0
    if np.any(past):
      values[past] = phi(arguments[past])[:, 0]
    if np.any(~past):
      if done > 0:
        known = CubicHermiteSpline(
          times[:done + 1], np.array(s), np.array(ds),
        )
        values[~past] = known(arguments[~past])
      else:
        values[~past] = s[0]
    return model.growth_rate(values).tolist()

  for start in range(0, total, chunk):
    stop = min(start + chunk, total)
    lagged_nodes = delayed(times[start:stop + 1] - model.tau, start)
    lagged_half = delayed(half[start:stop] - model.tau, start)
    for n in range(start, stop):
      j = n - start
      s_n, x_n = s[n], x[n]
      d0, dh, d1 = D_nodes[n], D_half[n], D_nodes[n + 1]
      r0, rh, r1 = r_nodes[n], r_half[n], r_nodes[n + 1]
      m0, mh, m1 = lagged_nodes[j], lagged_half[j], lagged_nodes[j + 1]

      k1s = r0 - d0 * s_n - float(rate(s_n)) * x_n * inverse_yield
      k1x = x_n * (m0 - d0)
      s2, x2 = s_n + 0.5 * h * k1s, x_n + 0.5 * h * k1x
      k2s = rh - dh * s2 - float(rate(s2)) * x2 * inverse_yield
      k2x = x2 * (mh - dh)
      s3, x3 = s_n + 0.5 * h * k2s, x_n + 0.5 * h * k2x
      k3s = rh - dh * s3 - float(rate(s3)) * x3 * inverse_yield
      k3x = x3 * (mh - dh)
      s4, x4 = s_n + h * k3s, x_n + h * k3x
      k4s = r1 - d1 * s4 - float(rate(s4)) * x4 * inverse_yield
      k4x = x4 * (m1 - d1)

      s_next = s_n + h * (k1s + 2.0 * k2s + 2.0 * k3s + k4s) / 6.0
      x_next = x_n + h * (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
      if not (math.isfinite(s_next) and math.isfinite(x_next)):
        raise NonFiniteState(f"Non-finite state at t={times[n + 1]:.6g}.")
      if s_next < 0 or x_next < 0:
        message = (
          f"Negative state at t={times[n + 1]:.6g} "
          f"(s={s_next:.3g}, x={x_next:.3g}); the step is too large "
          "for this model."
        )
        raise PositivityViolation(message)
      s.append(s_next)
      x.append(x_next)
      ds.append(
        r1 - d1 * s_next - float(rate(s_next)) * x_next * inverse_yield
      )

  return Trajectory(times, np.array(s), np.array(x), np.array(ds), phi, h)


def poincare_map(
  model: ChemostatModel,
  phi: HistoryFn,
  x0: float,
) -> tuple[HistoryFn, float]:
  """(s_omega, x(omega)) with s_omega(theta) = s(omega + theta)."""
  trajectory = integrate_dde(model, phi, x0, model.omega)
  grid = model.history_grid
  if model.commensurate:
    shift = int(round(model.tau / model.step))
    values = trajectory.s[-shift - 1:]
  else:
    values = trajectory.s_at(model.omega + grid.nodes)
  return HistoryFn(grid, values), float(trajectory.x[-1])


def inner_operator(model: ChemostatModel) -> OperatorFamily:
  """The family (x0, phi) -> first component of the Poincare map."""

  def evaluate(x0: float, phi: GridFn) -> GridFn:
    history = phi if isinstance(phi, HistoryFn) else HistoryFn(
      phi.grid, phi.values,
    )
    return poincare_map(model, history, float(x0))[0]

  return OperatorFamily(
    evaluate,
    model.history_grid,
    radius=float(np.max(vstar_history(model).values)),
    name='chemostat-inner',
  )


def inner_fixed_point(
  model: ChemostatModel,
  x0: float,
  tol: float = INNER_TOL,
  max_iter: int = INNER_MAX_ITER,
  start: HistoryFn | None = None,
) -> HistoryFn:
  """Damped Picard fixed point of the history map at fixed x0."""
  T = inner_operator(model)
  report = picard_solve(
    T, x0, start if start is not None else vstar_history(model),
    tol=tol, max_iter=max_iter,
  )
  if not report.converged:
    message = (
      f"Inner fixed point at x0={x0} stopped at residual "
      f"{report.residual:.3g} after {report.iterations} iterations."
    )
    raise NoConvergence(message, residual=report.residual)
  solution = report.solution
  return solution if isinstance(solution, HistoryFn) else HistoryFn(
    solution.grid, solution.values,
  )


def _mean_over_period(trajectory: Trajectory, values: Array) -> float:
  return float(simpson(values, x=trajectory.t)) / float(trajectory.t[-1])


def phi_functional(
  model: ChemostatModel,
  x0: float,
  phi: HistoryFn,
) -> float:
  """mean(mu(s)) - mean(D) over one period started from (phi, x0)."""
  trajectory = integrate_dde(model, phi, x0, model.omega)
  growth = _mean_over_period(trajectory, model.growth_rate(trajectory.s))
  dilution = _mean_over_period(trajectory, model.D(trajectory.t)[:, 0])
  return growth - dilution


def decay_constant(model: ChemostatModel, x0: float, phi: HistoryFn) -> float:
  """x0 * mean(mu(s)) over one period, bounded as x0 grows."""
  trajectory = integrate_dde(model, phi, x0, model.omega)
  return x0 * _mean_over_period(trajectory, model.growth_rate(trajectory.s))


def existence_margin(model: ChemostatModel) -> float:
  """mean(mu(v*)) - mean(D); positive exactly when orbits exist."""
  vstar = model.vstar
  growth = float(np.mean(model.growth_rate(vstar.scalar)))
  return growth - float(model.D.mean()[0])


def _verify_orbit(
  model: ChemostatModel,
  history: HistoryFn,
  x0: float,
  value: float,
) -> PeriodicOrbit:
  trajectory = integrate_dde(model, history, x0, model.omega)
  mapped, x_omega = poincare_map(model, history, x0)
  poincare = max((mapped - history).sup_norm(), abs(x_omega - x0))
  log_identity = abs(
    math.log(x_omega) - math.log(x0) - model.omega * value
  )
  vstar = model.vstar(trajectory.t)[:, 0]
  floor = math.exp(-model.omega * float(model.D.mean()[0])) * x0
  bounds = bool(
    np.all(trajectory.s[1:] > 0)
    and np.all(trajectory.s[1:] < vstar[1:])
    and np.all(trajectory.x > floor)
  )
  orbit = PeriodicOrbit(
    history, x0, trajectory, value, poincare, log_identity, bounds,
  )
  if not orbit.verified:
    logger.warning(
      "Orbit at x0=%.9g fails verification: Poincare %.3g, log identity "
      "%.3g, bounds %s.", x0, poincare, log_identity, bounds,
    )
  return orbit


def find_periodic_orbit(
  model: ChemostatModel,
  x0_max: float = 1e6,
  tol: float = ORBIT_TOL,
) -> PeriodicOrbit | NonexistenceCertificate:
  """A positive periodic orbit, or a certificate that none exists.

  Notes
  -----
  x0 is scanned over x_init * 2**k with x_init = gamma mean(D s0) / mean(D)
  until Phi(x0, inner fixed point) < 0. Phi is positive at x0 = 0 whenever
  the margin is, so the last positive probe and the first negative one
  bracket a root, refined by Brent's method with warm-started inner solves.
  """
  if not x0_max > 0:
    raise ImproperlyConfigured(f"x0_max must be positive, got {x0_max}.")
  margin = existence_margin(model)
  mean_D = float(model.D.mean()[0])
  if margin <= 0:
    logger.info("No periodic orbit: existence margin %.6g.", margin)
    return NonexistenceCertificate(margin, margin + mean_D, mean_D)

  start = vstar_history(model)
  known: dict[float, tuple[float, HistoryFn]] = {
    0.0: (phi_functional(model, 0.0, start), start),
  }
  latest = [start]

  def Phi(x0: float) -> float:
    if x0 in known:
      return known[x0][0]
    history = inner_fixed_point(model, x0, start=latest[0])
    value = phi_functional(model, x0, history)
    known[x0] = (value, history)
    latest[0] = history
    return value

  supply = model.D.samples[:, 0] * model.s0(model.D.nodes)[:, 0]
  s0_mean = float(np.mean(supply))
  x_low, x_high = 0.0, model.gamma * s0_mean / mean_D
  while Phi(x_high) >= 0:
    if abs(known[x_high][0]) <= tol:
      break
    x_low, x_high = x_high, 2.0 * x_high
    if x_high > x0_max:
      message = (
        f"Phi stayed positive for every probe up to x0={x0_max:g}; "
        "an orbit exists, so the scan failed numerically."
      )
      raise ScanExhausted(message)

  if abs(known[x_high][0]) <= tol:
    x_star = x_high
  else:
    x_star = float(brentq(Phi, x_low, x_high, xtol=1e-13, rtol=1e-14))
  value = Phi(x_star)
  if abs(value) > tol:
    logger.warning(
      "|Phi| = %.3g at x0=%.12g exceeds %.3g.", abs(value), x_star, tol,
    )
  logger.info("Periodic orbit at x0=%.12g, Phi=%.3g.", x_star, value)
  return _verify_orbit(model, known[x_star][1], x_star, value)
