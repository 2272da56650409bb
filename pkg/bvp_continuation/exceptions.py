class ContinuationError(Exception):
  """Base class for every error raised by bvp_continuation."""


class ImproperlyConfigured(ContinuationError):
  """Problem data, solver options or a run config are invalid."""


class NumericalFailure(ContinuationError):
  """A computation did not produce a trustworthy answer."""


class DegenerateGrid(NumericalFailure, ValueError):
  pass


class SingularSystem(NumericalFailure):
  pass


class SingularJacobian(NumericalFailure):
  pass


class NoDescent(NumericalFailure):
  pass


class NonFiniteState(NumericalFailure):
  pass


class NoConvergence(NumericalFailure):
  """An iterative solver ran out of iterations.

  The best residual reached is kept on the exception.
  """

  def __init__(self, message: str, residual: float = float('nan')) -> None:
    super().__init__(message)
    self.residual = residual


class UnresolvedBranch(NumericalFailure):
  def __init__(self, message: str, c: float = float('nan')) -> None:
    super().__init__(message)
    self.c = c


class ZeroOnBoundary(NumericalFailure):
  pass


class UnresolvedAngleStep(NumericalFailure):
  pass


class PositivityViolation(NumericalFailure):
  pass


class ScanExhausted(NumericalFailure):
  pass


class NoSolutionFound(NumericalFailure):
  def __init__(self, message: str, attempts: int = 0) -> None:
    super().__init__(message)
    self.attempts = attempts


class NoSolution(ContinuationError):
  """The scanned range certifiably contains no solution."""


class NoSignChange(NoSolution):
  """No bracketing pair of opposite signs exists on the branch.

  Notes
  -----
  `necessary_condition` carries a human readable explanation when the
  nonexistence is backed by a proven necessary condition, e.g. a forcing
  mean outside the Landesman-Lazer interval.
  """

  def __init__(
    self,
    message: str,
    necessary_condition: str | None = None,
  ) -> None:
    super().__init__(message)
    self.necessary_condition = necessary_condition


class HypothesisFailed(ContinuationError):
  def __init__(
    self,
    message: str,
    hypothesis: str = '',
    where: object = None,
  ) -> None:
    super().__init__(message)
    self.hypothesis = hypothesis
    self.where = where


class BracketNotFound(HypothesisFailed):
  pass


class SignConditionViolated(HypothesisFailed):
  pass


class EmptyPointSet(ContinuationError, ValueError):
  pass
