from dataclasses import dataclass, replace

from .exceptions import ImproperlyConfigured


DEFAULT_TOL = 1e-10
DEFAULT_PICARD_MAX_ITER = 500
DEFAULT_NEWTON_MAX_ITER = 50
DEFAULT_DAMPING = 1.0
MIN_DAMPING = 0.25
MAX_STEP_HALVINGS = 20

DEFAULT_BVP_NODES = 401
DEFAULT_PERIODIC_SAMPLES = 256
DEFAULT_DDE_STEPS = 2048

DEFAULT_CONTINUATION_STEPS = 64
MAX_BRANCH_HALVINGS = 6
DEFAULT_TOL_C = 1e-8
PHI_ZERO_TOL = 1e-10


@dataclass(frozen=True)
class SolverOptions:
  """Options shared by the fixed-point solvers and branch tracing."""

  tol: float = DEFAULT_TOL
  picard_max_iter: int = DEFAULT_PICARD_MAX_ITER
  newton_max_iter: int = DEFAULT_NEWTON_MAX_ITER
  damping: float = DEFAULT_DAMPING
  newton_fallback: bool = True

  def __post_init__(self) -> None:
    if not self.tol > 0:
      raise ImproperlyConfigured(
        f"Solver tolerance must be positive, got {self.tol}."
      )
    if not 0 < self.damping <= 1:
      raise ImproperlyConfigured(
        f"Damping must lie in (0, 1], got {self.damping}."
      )
    if self.picard_max_iter < 1 or self.newton_max_iter < 1:
      raise ImproperlyConfigured("Iteration limits must be positive.")

  def with_tol(self, tol: float) -> SolverOptions:
    return replace(self, tol=tol)
