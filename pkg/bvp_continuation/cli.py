"""Command line front end.

  bvp-continuation solve nonlocal --config run.toml --out results/

Every command reads one run file, writes `result.json` and, where it has
one, a plot-ready CSV table. Exit codes: 0 success, 1 numerical failure,
2 certified absence of solutions, 64 bad configuration, 74 file errors.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING
import csv
import json
import logging
import math
import sys

import numpy as np
from django.core.management.base import CommandError, CommandParser

from .chemostat import (
  ORBIT_TOL, NonexistenceCertificate, existence_margin, find_periodic_orbit,
)
from .checks import message_dict, run_checks
from .config import load_config
from .continuation import poincare_miranda_solve
from .exceptions import (
  ContinuationError, HypothesisFailed, ImproperlyConfigured, NoSignChange,
  NumericalFailure,
)
from .nonlocal_bvp import (
  nonlocal_branch, solve_nonlocal, solve_nonlocal_planar,
)
from .resonance import (
  compute_range, continuity_experiment, degeneracy_scan, multistart_geometric,
  sample_range_nd, solve_for_s, solve_wx,
)


if TYPE_CHECKING:
  from collections.abc import Sequence
  from typing import Any

  from .conf import SolverOptions
  from .config import RunConfig
  from .nonlocal_bvp import NonlocalSolution
  from .resonance import ResonantSolution

  Row = Sequence[float]


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NO_SOLUTION = 2
EXIT_CONFIG = 64
EXIT_IO = 74


def to_plain(value: Any) -> Any:
  """JSON-ready copy with plain floats; non-finite numbers become null."""
  if isinstance(value, dict):
    return {str(key): to_plain(item) for key, item in value.items()}
  if isinstance(value, (list, tuple)):
    return [to_plain(item) for item in value]
  if isinstance(value, np.ndarray):
    return to_plain(value.tolist())
  if isinstance(value, (bool, np.bool_)):
    return bool(value)
  if isinstance(value, (int, np.integer)):
    return int(value)
  if isinstance(value, (float, np.floating)):
    number = float(value)
    return number if math.isfinite(number) else None
  if isinstance(value, Path):
    return str(value)
  return value


@dataclass
class Outcome:
  result: dict[str, Any]
  status: int = EXIT_OK


@dataclass
class Table:
  header: tuple[str, ...]
  rows: list[Row] = field(default_factory=list)


class SolverOptionsMixin:
  """Numeric settings of the run as solver arguments."""

  config: RunConfig

  def get_solver_options(self) -> SolverOptions:
    return self.config.numerics.solver_options()

  def get_window(self) -> tuple[float, float] | None:
    return self.config.numerics.window


class CsvTableMixin:
  """Collect CSV tables while a command runs; written even on failure."""

  tables: dict[str, Table]

  def add_table(
    self,
    name: str,
    header: tuple[str, ...],
    rows: list[Row],
  ) -> None:
    self.tables[name] = Table(header, rows)

  def write_tables(self, out: Path) -> list[str]:
    written = []
    for name, table in sorted(self.tables.items()):
      path = out / name
      with path.open('w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(table.header)
        for row in table.rows:
          writer.writerow([repr(float(value)) for value in row])
      written.append(name)
    return written


class JsonResultMixin:
  """Write the result summary with sorted keys."""

  result_name = 'result.json'

  def write_result(self, out: Path, result: dict[str, Any]) -> None:
    text = json.dumps(to_plain(result), sort_keys=True, indent=2)
    (out / self.result_name).write_text(text + '\n')


class Command(SolverOptionsMixin, CsvTableMixin, JsonResultMixin):
  """One subcommand bound to a run configuration.

  Notes
  -----
  Subclasses implement `run()` and return an `Outcome`. Certified absence
  of solutions and numerical failures are turned into outcomes here, so
  every run leaves a `result.json` behind.
  """

  verb = ''
  target = ''
  kind: str | None = None

  def __init__(self, config: RunConfig) -> None:
    if self.kind is not None and config.kind != self.kind:
      message = (
        f"`{self.verb} {self.target}` needs a {self.kind} run file, got "
        f"kind={config.kind!r}."
      )
      raise ImproperlyConfigured(message)
    self.config = config
    self.tables = {}

  @property
  def name(self) -> str:
    return f'{self.verb} {self.target}'

  def run(self) -> Outcome:
    message = f"{type(self).__name__} requires an implementation of `run()`."
    raise ImproperlyConfigured(message)

  def no_solution(self, error: NoSignChange) -> Outcome:
    certified = error.necessary_condition is not None
    return Outcome(
      {
        'certified': certified,
        'error': str(error),
        'necessary_condition': error.necessary_condition,
        'status': 'no-solution' if certified else 'failure',
      },
      EXIT_NO_SOLUTION if certified else EXIT_FAILURE,
    )

  def failure(self, error: ContinuationError) -> Outcome:
    result: dict[str, Any] = {
      'error': str(error),
      'exception': type(error).__name__,
      'status': 'failure',
    }
    for attribute in ('residual', 'c', 'attempts', 'hypothesis'):
      if hasattr(error, attribute):
        result[attribute] = getattr(error, attribute)
    return Outcome(result, EXIT_FAILURE)

  def dispatch(self) -> int:
    try:
      outcome = self.run()
    except NoSignChange as e:
      logger.info("%s: %s", self.name, e)
      outcome = self.no_solution(e)
    except (NumericalFailure, HypothesisFailed) as e:
      logger.error("%s failed: %s", self.name, e)
      outcome = self.failure(e)
    result = {'command': self.name, 'kind': self.config.kind}
    result.update(outcome.result)
    result.setdefault('status', 'ok')

    out = self.config.out
    out.mkdir(parents=True, exist_ok=True)
    result['tables'] = self.write_tables(out)
    self.write_result(out, result)
    return outcome.status


def _grid_solution(
  solution: NonlocalSolution | ResonantSolution,
) -> dict[str, Any]:
  u = solution.u
  return {
    'c': solution.c,
    'equation_residual': solution.equation_residual,
    't': u.grid.nodes,
    'u': u.values if u.dim > 1 else u.scalar,
    'verified': solution.verified,
  }


class SolveNonlocalCommand(Command):
  verb, target, kind = 'solve', 'nonlocal', 'nonlocal'

  def run(self) -> Outcome:
    prob = self.config.nonlocal_problem()
    numerics = self.config.numerics
    options = self.get_solver_options()
    if prob.dim == 2:
      planar = solve_nonlocal_planar(prob, numerics.multistart_grid, options)
      return Outcome({
        'radius': prob.radius,
        'solutions': [
          {**_grid_solution(planar),
           'boundary_residual': planar.boundary_residual},
        ],
      })

    branch = nonlocal_branch(prob, numerics.steps, options)
    self.add_table(
      'branch.csv', ('c', 'phi', 'residual'),
      [(point.c, point.phi, point.residual) for point in branch.points],
    )
    solutions = solve_nonlocal(
      prob, numerics.steps, options, numerics.tol_c, branch=branch,
    )
    return Outcome({
      'bracket': [branch.c_start, branch.c_end],
      'max_state_jump': branch.max_state_jump(),
      'radius': prob.radius,
      'solutions': [
        {**_grid_solution(solution),
         'boundary_residual': solution.boundary_residual}
        for solution in solutions
      ],
    })


class SolveResonanceCommand(Command):
  verb, target, kind = 'solve', 'resonance', 'resonance'

  def _resonant(self, solution: ResonantSolution) -> dict[str, Any]:
    return {
      **_grid_solution(solution),
      'closure_residual': solution.closure_residual,
      'mean_residual': solution.mean_residual,
      's': solution.s,
    }

  def run(self) -> Outcome:
    config = self.config
    prob = config.resonant_problem()
    numerics = config.numerics
    options = self.get_solver_options()
    if prob.dim == 2:
      wx = solve_wx(prob, config.require('x', 'run'))
      return Outcome({
        'C': wx.C,
        'image': wx.image(prob),
        'mean': wx.mean,
        'residual': wx.residual,
        't': wx.w.nodes,
        'w': wx.w.samples,
        'x': wx.x,
      })

    s = float(config.require('s', 'run'))
    solution = solve_for_s(
      prob, s, self.get_window(), numerics.steps, options, numerics.tol_c,
    )
    result: dict[str, Any] = {'solutions': [self._resonant(solution)]}
    if config.run.get('multistart', False):
      groups = multistart_geometric(
        prob, s, numerics.steps, options, numerics.tol_c,
      )
      result['groups'] = [
        [self._resonant(member) for member in group] for group in groups
      ]
    return Outcome(result)


class SolveChemostatCommand(Command):
  verb, target, kind = 'solve', 'chemostat', 'chemostat'

  def run(self) -> Outcome:
    model = self.config.chemostat_model()
    run = self.config.run
    found = find_periodic_orbit(
      model,
      x0_max=float(run.get('x0_max', 1e6)),
      tol=float(run.get('tol', ORBIT_TOL)),
    )
    if isinstance(found, NonexistenceCertificate):
      return Outcome(
        {
          'certificate': {
            'margin': found.margin,
            'mean_dilution': found.mean_dilution,
            'mean_growth': found.mean_growth,
          },
          'status': 'no-solution',
        },
        EXIT_NO_SOLUTION,
      )
    trajectory = found.trajectory
    self.add_table(
      'trajectory.csv', ('t', 's', 'x'),
      list(zip(trajectory.t, trajectory.s, trajectory.x)),
    )
    return Outcome({
      'bounds_hold': found.bounds_hold,
      'history': found.history.scalar,
      'history_t': found.history.grid.nodes,
      'log_identity_residual': found.log_identity_residual,
      'margin': existence_margin(model),
      'phi': found.phi,
      'poincare_residual': found.poincare_residual,
      'verified': found.verified,
      'x0': found.x0,
    })


class RangeResonanceCommand(Command):
  verb, target, kind = 'range', 'resonance', 'resonance'

  def run(self) -> Outcome:
    config = self.config
    prob = config.resonant_problem()
    if prob.dim == 2:
      rect = config.require('rect', 'run')
      cloud = sample_range_nd(
        prob,
        ((rect[0][0], rect[0][1]), (rect[1][0], rect[1][1])),
        int(config.run.get('resolution', 11)),
        jobs=config.numerics.jobs,
      )
      self.add_table(
        'range.csv', ('x1', 'x2', 'I1', 'I2'),
        [(*x, *point) for x, point in zip(cloud.xs, cloud.points)],
      )
      return Outcome({
        'max_jump': cloud.max_jump,
        'points': cloud.points,
        'skipped': cloud.skipped,
      })

    estimate = compute_range(
      prob, self.get_window(), config.numerics.steps,
      self.get_solver_options(),
    )
    self.add_table('range.csv', ('c', 'I_value'), list(estimate.samples))
    return Outcome({
      'hi': estimate.hi,
      'lo': estimate.lo,
      'tol': estimate.tol,
      'width': estimate.width,
      'window_relative': estimate.window_relative,
    })


class ScanDegeneracyCommand(Command):
  verb, target, kind = 'scan', 'degeneracy', 'resonance'

  def run(self) -> Outcome:
    config = self.config
    table = degeneracy_scan(
      config.resonant_problem(),
      [float(a) for a in config.require('amplitudes', 'run')],
      self.get_window(),
      config.numerics.steps,
      tol=float(config.run.get('width_tol', 1e-6)),
      options=self.get_solver_options(),
    )
    return Outcome({
      'scan': [
        {
          'amplitude': amplitude,
          'hi': estimate.hi,
          'lo': estimate.lo,
          'narrow': narrow,
          'width': estimate.width,
        }
        for amplitude, estimate, narrow in table
      ],
    })


class ExperimentContinuityCommand(Command):
  verb, target, kind = 'experiment', 'continuity', 'resonance'

  def run(self) -> Outcome:
    config = self.config
    table = continuity_experiment(
      config.resonant_problem(),
      config.perturbation(),
      [float(a) for a in config.require('amplitudes', 'run')],
      self.get_window(),
      config.numerics.steps,
      self.get_solver_options(),
      jobs=config.numerics.jobs,
    )
    return Outcome({
      'distances': [
        {'amplitude': amplitude, 'hausdorff': distance}
        for amplitude, distance in table
      ],
    })


class DemoPoincareMirandaCommand(Command):
  verb, target, kind = 'demo', 'poincare-miranda', 'demo'

  def run(self) -> Outcome:
    phi, M = self.config.demo_phi()
    t, x = poincare_miranda_solve(phi, M, self.config.numerics.steps)
    return Outcome({
      'residual': float(np.max(np.abs(phi(t, x)))),
      't': t,
      'x': x,
    })


class CheckConditionCommand(Command):
  """Report every registered check for the run's kind.

  Exit status 1 when any check reports an error.
  """

  verb, target = 'check', 'condition'

  def run(self) -> Outcome:
    messages = run_checks(self.config)
    serious = any(message.is_serious() for message in messages)
    return Outcome(
      {
        'checks': [message_dict(message) for message in messages],
        'status': 'failed' if serious else 'ok',
      },
      EXIT_FAILURE if serious else EXIT_OK,
    )


COMMANDS: dict[str, dict[str, type[Command]]] = {}
for command in (
  SolveNonlocalCommand, SolveResonanceCommand, SolveChemostatCommand,
  RangeResonanceCommand, ScanDegeneracyCommand, ExperimentContinuityCommand,
  DemoPoincareMirandaCommand, CheckConditionCommand,
):
  COMMANDS.setdefault(command.verb, {})[command.target] = command


def build_parser() -> CommandParser:
  """The argument parser; usage errors raise CommandError."""
  parser = CommandParser(
    called_from_command_line=False,
    prog='bvp-continuation',
    description="Fixed-point continuation for boundary value problems.",
  )
  verbs = parser.add_subparsers(dest='verb', required=True)
  for verb, targets in COMMANDS.items():
    sub = verbs.add_parser(verb)
    sub.add_argument('target', choices=sorted(targets))
    sub.add_argument('--config', type=Path, required=True)
    sub.add_argument('--out', type=Path)
    sub.add_argument('--grid', type=int)
    sub.add_argument('--tol', type=float)
    sub.add_argument('--jobs', type=int)
    sub.add_argument('-v', '--verbose', action='count', default=0)
  return parser


def main(argv: Sequence[str] | None = None) -> int:
  parser = build_parser()
  try:
    args = parser.parse_args(argv)
  except CommandError as e:
    parser.print_usage(sys.stderr)
    sys.stderr.write(f"{parser.prog}: {e}\n")
    return EXIT_CONFIG
  logging.basicConfig(
    level=max(logging.DEBUG, logging.WARNING - 10 * args.verbose),
    format='%(levelname)s %(name)s: %(message)s',
    stream=sys.stderr,
  )
  try:
    config = load_config(args.config).with_overrides(
      grid=args.grid, tol=args.tol, jobs=args.jobs, out=args.out,
    )
    command = COMMANDS[args.verb][args.target](config)
    return command.dispatch()
  except ImproperlyConfigured as e:
    logger.error("Configuration error: %s", e)
    return EXIT_CONFIG
  except OSError as e:
    logger.error("I/O error: %s", e)
    return EXIT_IO
