"""Run configuration read from a TOML file.

A run file has a `kind`, a `[problem]` table with the problem data, an
optional `[numerics]` table and an optional `[run]` table with the inputs of
the individual commands (s, amplitudes, rectangles, ...). Functions are
given by named families, see `families`.
"""
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING
import logging
import math
import tomllib

import numpy as np
from numpy.polynomial import polynomial

from .chemostat import ChemostatModel
from .conf import (
  DEFAULT_BVP_NODES, DEFAULT_CONTINUATION_STEPS, DEFAULT_DAMPING,
  DEFAULT_DDE_STEPS, DEFAULT_NEWTON_MAX_ITER, DEFAULT_PERIODIC_SAMPLES,
  DEFAULT_PICARD_MAX_ITER, DEFAULT_TOL, DEFAULT_TOL_C, SolverOptions,
)
from .exceptions import ImproperlyConfigured
from .families import resolve, resolve_field, resolve_signal
from .nonlocal_bvp import GrowthConstants, NonlocalProblem
from .numerics import PeriodicSignal
from .resonance import ResonantProblem


if TYPE_CHECKING:
  from collections.abc import Callable, Mapping
  from typing import Any
  from numpy.typing import NDArray

  from .families import FunctionSpec

  Array = NDArray[np.float64]
  PlanarMap = Callable[[float, float], tuple[float, float]]


logger = logging.getLogger(__name__)

KINDS = ('nonlocal', 'resonance', 'chemostat', 'demo')
SECTIONS = ('kind', 'problem', 'numerics', 'run', 'output')

# phi(t, x) as coefficient matrices c[i][j] of t**i x**j
DEMO_EXAMPLES: dict[str, tuple[list[list[float]], list[list[float]]]] = {
  'diagonal': ([[-1.0], [2.0]], [[-1.0, 2.0]]),
  'parabola': ([[-0.1, 0.0, -1.0], [1.0, 0.0, 0.0]], [[-0.25, 1.0]]),
  'shear': ([[-0.3], [1.0]], [[0.0, 1.0], [-1.0, 0.0]]),
}


@dataclass(frozen=True)
class NumericOptions:
  """The `[numerics]` table.

  Notes
  -----
  `grid` is the number of mesh nodes for the boundary value problems and
  the number of RK4 steps per period for the chemostat.
  """

  grid: int | None = None
  tol: float = DEFAULT_TOL
  tol_c: float = DEFAULT_TOL_C
  steps: int = DEFAULT_CONTINUATION_STEPS
  samples: int = DEFAULT_PERIODIC_SAMPLES
  picard_max_iter: int = DEFAULT_PICARD_MAX_ITER
  newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER
  damping: float = DEFAULT_DAMPING
  window: tuple[float, float] | None = None
  multistart_grid: int = 5
  jobs: int = 1

  def __post_init__(self) -> None:
    for name in ('tol', 'tol_c'):
      value = getattr(self, name)
      if not (math.isfinite(value) and value > 0):
        message = f"numerics.{name} must be positive, got {value}."
        raise ImproperlyConfigured(message)
    if self.grid is not None and self.grid < 5:
      message = f"numerics.grid must be >= 5, got {self.grid}."
      raise ImproperlyConfigured(message)
    if self.steps < 2 or self.samples < 5 or self.multistart_grid < 1:
      message = (
        "numerics.steps must be >= 2, numerics.samples >= 5 and "
        "numerics.multistart_grid >= 1."
      )
      raise ImproperlyConfigured(message)
    if self.jobs < 1:
      raise ImproperlyConfigured(f"jobs must be >= 1, got {self.jobs}.")
    if self.window is not None and not self.window[0] < self.window[1]:
      message = f"numerics.window must be increasing, got {self.window}."
      raise ImproperlyConfigured(message)

  def grid_size(self, kind: str) -> int:
    if self.grid is not None:
      return self.grid
    return DEFAULT_DDE_STEPS if kind == 'chemostat' else DEFAULT_BVP_NODES

  def solver_options(self) -> SolverOptions:
    return SolverOptions(
      tol=self.tol,
      picard_max_iter=self.picard_max_iter,
      newton_max_iter=self.newton_max_iter,
      damping=self.damping,
    )


@dataclass(frozen=True)
class RunConfig:
  kind: str
  problem: Mapping[str, Any]
  numerics: NumericOptions = field(default_factory=NumericOptions)
  run: Mapping[str, Any] = field(default_factory=dict)
  out: Path = Path('.')
  base_dir: Path = Path('.')

  def __post_init__(self) -> None:
    if self.kind not in KINDS:
      message = (
        f"Unknown problem kind {self.kind!r}; expected one of "
        f"{', '.join(KINDS)}."
      )
      raise ImproperlyConfigured(message)

  def with_overrides(
    self,
    grid: int | None = None,
    tol: float | None = None,
    jobs: int | None = None,
    out: Path | None = None,
  ) -> RunConfig:
    """Apply command line flags on top of the file."""
    changes: dict[str, Any] = {}
    if grid is not None:
      changes['grid'] = grid
    if tol is not None:
      changes['tol'] = tol
    if jobs is not None:
      changes['jobs'] = jobs
    numerics = replace(self.numerics, **changes)
    return replace(
      self, numerics=numerics, out=self.out if out is None else out,
    )

  def require(self, key: str, table: str = 'problem') -> Any:
    source = self.problem if table == 'problem' else self.run
    if key not in source:
      message = f"[{table}] needs a {key!r} entry for {self.kind} runs."
      raise ImproperlyConfigured(message)
    return source[key]

  def _number(self, key: str, default: float | None = None) -> float:
    value = self.problem.get(key, default)
    if value is None:
      value = self.require(key)
    return _as_float(value, f'problem.{key}')

  def function(self, key: str) -> FunctionSpec:
    return self.require(key)

  def nonlocal_problem(self) -> NonlocalProblem:
    problem = self.problem
    growth = None
    if 'growth' in problem:
      constants = problem['growth']
      try:
        growth = GrowthConstants(**{
          name: _as_float(constants[name], f'problem.growth.{name}')
          for name in ('eps', 'A', 'B', 'C')
        })
      except (KeyError, TypeError) as e:
        message = "[problem.growth] needs the numbers eps, A, B and C."
        raise ImproperlyConfigured(message) from e
    return NonlocalProblem(
      L=self._number('L'),
      f=resolve_field(self.function('f'), self.base_dir),
      g=resolve(self.function('g'), self.base_dir),
      dim=int(problem.get('dim', 1)),
      growth_class=str(problem.get('growth_class', 'bounded-sublinear')),
      bracket=_pair(problem.get('bracket'), 'problem.bracket'),
      rectangle=_rectangle(problem.get('rectangle')),
      f_sup=_optional_float(problem.get('f_sup'), 'problem.f_sup'),
      n_nodes=self.numerics.grid_size(self.kind),
      growth=growth,
    )

  def _signal(
    self,
    key: str,
    period: float,
    dim: int = 1,
  ) -> PeriodicSignal | None:
    spec = self.problem.get(key)
    if spec is None:
      return None
    samples = self.numerics.samples
    if isinstance(spec, list):
      if len(spec) != dim:
        message = f"problem.{key} lists {len(spec)} components, not {dim}."
        raise ImproperlyConfigured(message)
      columns = [
        resolve_signal(item, period, samples, self.base_dir).scalar
        for item in spec
      ]
      return PeriodicSignal(period, np.column_stack(columns))
    return resolve_signal(spec, period, samples, self.base_dir)

  def resonant_problem(
    self,
    p0: PeriodicSignal | None = None,
  ) -> ResonantProblem:
    problem = self.problem
    omega = self._number('omega')
    dim = int(problem.get('dim', 1))
    g_class = str(problem.get('g_class', 'generic-bounded'))
    g = resolve(self.function('g'), self.base_dir)

    periods = problem.get('periods')
    if periods is None and g_class == 'periodic' and g.period is not None:
      periods = [g.period] * dim
    limits = problem.get('limits')
    if limits is None and g_class == 'landesman-lazer':
      limits = g.limits
    return ResonantProblem(
      omega=omega,
      g=g,
      a=self._number('a', 0.0),
      dim=dim,
      g_class=g_class,
      periods=None if periods is None else tuple(
        _as_float(value, 'problem.periods') for value in periods
      ),
      limits=_pair(limits, 'problem.limits'),
      p0=p0 if p0 is not None else self._signal('p0', omega, dim),
      n_nodes=self.numerics.grid_size(self.kind),
      g_sup=_optional_float(
        problem.get('g_sup', g.bound), 'problem.g_sup',
      ),
    )

  def perturbation(self) -> PeriodicSignal:
    omega = self._number('omega')
    spec = self.require('perturbation', 'run')
    return resolve_signal(spec, omega, self.numerics.samples, self.base_dir)

  def chemostat_model(self) -> ChemostatModel:
    problem = self.problem
    omega = self._number('omega')
    mu_spec = self.function('mu')
    mu = resolve(mu_spec, self.base_dir)
    default_class = 'monod' if mu.name == 'monod' else 'tabulated-increasing'
    D = self._signal('D', omega)
    s0 = self._signal('s0', omega)
    if D is None or s0 is None:
      raise ImproperlyConfigured("Chemostat runs need both D and s0.")
    return ChemostatModel(
      omega=omega,
      tau=self._number('tau'),
      gamma=self._number('gamma'),
      D=D,
      s0=s0,
      mu=mu,
      mu_class=str(problem.get('mu_class', default_class)),
      steps_per_period=self.numerics.grid_size(self.kind),
    )

  def demo_phi(self) -> tuple[Callable[[float, float], Array], float | None]:
    """phi(t, x) from an example name or two coefficient matrices."""
    problem = self.problem
    if 'example' in problem:
      name = problem['example']
      if name not in DEMO_EXAMPLES:
        message = (
          f"Unknown demo example {name!r}; expected one of "
          f"{', '.join(DEMO_EXAMPLES)}."
        )
        raise ImproperlyConfigured(message)
      first, second = DEMO_EXAMPLES[name]
    else:
      first, second = self.require('phi1'), self.require('phi2')
    try:
      coefficients = [
        np.atleast_2d(np.asarray(matrix, dtype=float))
        for matrix in (first, second)
      ]
    except (TypeError, ValueError) as e:
      message = "phi1 and phi2 must be matrices of numbers."
      raise ImproperlyConfigured(message) from e

    def phi(t: float, x: float) -> Array:
      return np.array([
        polynomial.polyval2d(t, x, matrix) for matrix in coefficients
      ])

    M = _optional_float(problem.get('M'), 'problem.M')
    return phi, M


def _as_float(value: Any, name: str) -> float:
  if isinstance(value, bool) or not isinstance(value, (int, float)):
    raise ImproperlyConfigured(f"{name} must be a number, got {value!r}.")
  return float(value)


def _optional_float(value: Any, name: str) -> float | None:
  return None if value is None else _as_float(value, name)


def _pair(value: Any, name: str) -> tuple[float, float] | None:
  if value is None:
    return None
  if not isinstance(value, (list, tuple)) or len(value) != 2:
    raise ImproperlyConfigured(f"{name} must be a pair, got {value!r}.")
  return _as_float(value[0], name), _as_float(value[1], name)


def _rectangle(
  value: Any,
) -> tuple[tuple[float, float], tuple[float, float]] | None:
  if value is None:
    return None
  if not isinstance(value, (list, tuple)) or len(value) != 2:
    message = f"A rectangle is [[x0, x1], [y0, y1]], got {value!r}."
    raise ImproperlyConfigured(message)
  first = _pair(value[0], 'rectangle')
  second = _pair(value[1], 'rectangle')
  assert first is not None and second is not None
  return first, second


def numeric_options(table: Mapping[str, Any]) -> NumericOptions:
  known = set(NumericOptions.__dataclass_fields__)
  unknown = set(table) - known
  if unknown:
    message = f"Unknown [numerics] entries: {', '.join(sorted(unknown))}."
    raise ImproperlyConfigured(message)
  values = dict(table)
  if 'window' in values:
    values['window'] = _pair(values['window'], 'numerics.window')
  try:
    return NumericOptions(**values)
  except TypeError as e:
    raise ImproperlyConfigured(f"Bad [numerics] table: {e}.") from e


def parse_config(data: Mapping[str, Any], base_dir: Path) -> RunConfig:
  unknown = set(data) - set(SECTIONS)
  if unknown:
    message = f"Unknown top-level entries: {', '.join(sorted(unknown))}."
    raise ImproperlyConfigured(message)
  if 'kind' not in data:
    raise ImproperlyConfigured("The run file needs a `kind` entry.")
  output = data.get('output', {})
  out = Path(output.get('dir', '.'))
  return RunConfig(
    kind=str(data['kind']),
    problem=dict(data.get('problem', {})),
    numerics=numeric_options(data.get('numerics', {})),
    run=dict(data.get('run', {})),
    out=out if out.is_absolute() else base_dir / out,
    base_dir=base_dir,
  )


def load_config(path: Path) -> RunConfig:
  """Read and validate a run file; file errors propagate as OSError."""
  with path.open('rb') as handle:
    try:
      data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
      raise ImproperlyConfigured(f"{path}: {e}") from e
  logger.debug("Loaded run file %s", path)
  return parse_config(data, path.resolve().parent)
