"""Named function families referenced from run configurations.

A configuration names a function either by family alone (`g = "sin"`) or
by a table with the family and its parameters
(`g = {family = "poly", coeffs = [0, 0.5]}`). Families act elementwise, so
the same resolved function serves scalar and planar problems.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING
import csv
import math

import numpy as np
from numpy.polynomial import polynomial

from .exceptions import ImproperlyConfigured
from .numerics import PeriodicSignal


if TYPE_CHECKING:
  from collections.abc import Callable, Mapping
  from typing import Any
  from numpy.typing import ArrayLike, NDArray

  Array = NDArray[np.float64]
  Builder = Callable[..., 'Resolved']
  FunctionSpec = str | Mapping[str, Any]


FAMILIES: dict[str, Builder] = {}
ARGUMENTS = ('u', 't')


@dataclass(frozen=True, eq=False)
class Resolved:
  """A vectorised function with whatever the family knows about it.

  Notes
  -----
  `limits` are the limits at -inf and +inf, `bound` a sup of the absolute
  value and `period` the period in the argument, when the family has them.
  """

  name: str
  function: Callable[[Array], ArrayLike]
  limits: tuple[float, float] | None = None
  bound: float | None = None
  period: float | None = None

  def __call__(self, x: ArrayLike) -> Array:
    values = np.asarray(x, dtype=float)
    return np.asarray(self.function(values), dtype=float)


def family[B: Builder](name: str) -> Callable[[B], B]:
  def decorator(builder: B) -> B:
    FAMILIES[name] = builder
    return builder
  return decorator


@family('sin')
def sin(
  amplitude: float = 1.0,
  frequency: float = 1.0,
  phase: float = 0.0,
) -> Resolved:
  return Resolved(
    'sin',
    lambda x: amplitude * np.sin(frequency * x + phase),
    bound=abs(amplitude),
    period=2.0 * math.pi / abs(frequency) if frequency else None,
  )


@family('cos')
def cos(
  amplitude: float = 1.0,
  frequency: float = 1.0,
  phase: float = 0.0,
) -> Resolved:
  return Resolved(
    'cos',
    lambda x: amplitude * np.cos(frequency * x + phase),
    bound=abs(amplitude),
    period=2.0 * math.pi / abs(frequency) if frequency else None,
  )


@family('const')
def const(value: float | list[float] = 0.0) -> Resolved:
  row = np.asarray(value, dtype=float)
  if row.ndim > 1:
    raise ImproperlyConfigured("const takes a number or a flat list.")
  return Resolved(
    'const',
    lambda x: np.zeros_like(x) + row,
    limits=(float(row), float(row)) if row.ndim == 0 else None,
    bound=float(np.max(np.abs(row))),
  )


@family('poly')
def poly(coeffs: list[float]) -> Resolved:
  """Polynomial with coefficients in increasing degree."""
  coefficients = np.asarray(coeffs, dtype=float)
  if coefficients.ndim != 1 or coefficients.size == 0:
    raise ImproperlyConfigured("poly needs a non-empty list of coeffs.")
  degree = int(np.max(np.nonzero(coefficients)[0], initial=0))
  bound = abs(float(coefficients[0])) if degree == 0 else None
  return Resolved(
    'poly',
    lambda x: polynomial.polyval(x, coefficients),
    bound=bound,
  )


@family('atan_ll')
def atan_ll(scale: float = 1.0, amplitude: float = 1.0) -> Resolved:
  """amplitude * (2/pi) * arctan(scale * u), limits -amplitude, amplitude."""
  if not scale > 0:
    raise ImproperlyConfigured(f"atan_ll needs scale > 0, got {scale}.")
  return Resolved(
    'atan_ll',
    lambda x: amplitude * (2.0 / math.pi) * np.arctan(scale * x),
    limits=(-amplitude, amplitude),
    bound=abs(amplitude),
  )


@family('cubic_root_shift')
def cubic_root_shift(amplitude: float = 1.0) -> Resolved:
  """u + amplitude * sin(cbrt(u))."""
  return Resolved(
    'cubic_root_shift',
    lambda x: x + amplitude * np.sin(np.cbrt(x)),
  )


@family('monod')
def monod(m: float = 1.0, k_s: float = 1.0) -> Resolved:
  """m s / (k_s + s), the Monod uptake rate."""
  if not (m > 0 and k_s > 0):
    message = f"monod needs m > 0 and k_s > 0, got m={m}, k_s={k_s}."
    raise ImproperlyConfigured(message)
  return Resolved(
    'monod',
    lambda x: m * x / (k_s + x),
    limits=(-math.inf, m),
  )


@family('harmonic')
def harmonic(
  mean: float = 0.0,
  amplitude: float = 1.0,
  period: float = 2.0 * math.pi,
  order: int = 1,
  phase: float = 0.0,
) -> Resolved:
  """mean + amplitude * cos(2 pi order t / period + phase)."""
  if not period > 0:
    raise ImproperlyConfigured(f"harmonic needs period > 0, got {period}.")
  frequency = 2.0 * math.pi * order / period
  return Resolved(
    'harmonic',
    lambda x: mean + amplitude * np.cos(frequency * x + phase),
    bound=abs(mean) + abs(amplitude),
    period=period,
  )


def read_table(path: Path) -> tuple[Array, Array]:
  """Two numeric columns with an optional header row."""
  rows: list[tuple[float, float]] = []
  with path.open(newline='') as handle:
    for number, row in enumerate(csv.reader(handle)):
      if not row or row[0].lstrip().startswith('#'):
        continue
      if len(row) != 2:
        message = f"{path}:{number + 1}: expected two columns, got {len(row)}."
        raise ImproperlyConfigured(message)
      try:
        rows.append((float(row[0]), float(row[1])))
      except ValueError:
        if rows or number > 0:
          message = f"{path}:{number + 1}: non-numeric entry {row!r}."
          raise ImproperlyConfigured(message) from None
  if len(rows) < 2:
    raise ImproperlyConfigured(f"{path} needs at least two rows.")
  table = np.asarray(rows, dtype=float)
  if np.any(np.diff(table[:, 0]) <= 0):
    message = f"The first column of {path} must be strictly increasing."
    raise ImproperlyConfigured(message)
  return table[:, 0], table[:, 1]


@family('tabulated')
def tabulated(file: str | Path) -> Resolved:
  """Piecewise linear interpolation of a CSV table, constant outside."""
  xs, ys = read_table(Path(file))
  return Resolved(
    'tabulated',
    lambda x: np.interp(x, xs, ys),
    limits=(float(ys[0]), float(ys[-1])),
    bound=float(np.max(np.abs(ys))),
  )


def resolve(spec: FunctionSpec, base_dir: Path | None = None) -> Resolved:
  """Build the function a configuration entry names."""
  if isinstance(spec, str):
    name, params = spec, {}
  else:
    params = dict(spec)
    name = params.pop('family', None)
    params.pop('argument', None)
  if name not in FAMILIES:
    message = (
      f"Unknown function family {name!r}; expected one of "
      f"{', '.join(sorted(FAMILIES))}."
    )
    raise ImproperlyConfigured(message)
  if name == 'tabulated' and 'file' in params and base_dir is not None:
    params['file'] = base_dir / Path(params['file'])
  try:
    return FAMILIES[name](**params)
  except TypeError as e:
    message = f"Bad parameters for family {name!r}: {e}."
    raise ImproperlyConfigured(message) from e


def resolve_field(
  spec: FunctionSpec,
  base_dir: Path | None = None,
) -> Callable[[Array, Array], Array]:
  """f(t, u) from a family acting on t or on u (`argument`, default u)."""
  argument = 'u' if isinstance(spec, str) else spec.get('argument', 'u')
  if argument not in ARGUMENTS:
    message = f"argument must be 't' or 'u', got {argument!r}."
    raise ImproperlyConfigured(message)
  resolved = resolve(spec, base_dir)
  if argument == 't':
    return lambda t, u: resolved(t)
  return lambda t, u: resolved(u)


def resolve_signal(
  spec: FunctionSpec,
  period: float,
  n_samples: int,
  base_dir: Path | None = None,
) -> PeriodicSignal:
  """An omega-periodic signal sampled from a family in t."""
  resolved = resolve(spec, base_dir)
  if resolved.name == 'const':
    return PeriodicSignal.constant(resolved(0.0), period, n_samples)
  return PeriodicSignal.from_function(resolved, period, n_samples)
