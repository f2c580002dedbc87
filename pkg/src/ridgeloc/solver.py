"""Solver configuration, the solve report, and the shared Gauss-Newton loop."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, DepthDegenerate, Diverged, StationCoincidence
from .numeric import lstsq


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by every iterative solver.

    ``threshold`` is the exit tolerance on the correction norm (meters).

    The last two fields only affect the normalized fusion solvers.
    ``renormalize=False`` computes the min-max constants once at the initial
    point and reuses them. ``augmented`` selects how the augmented unknown
    ``[dX; w]`` is solved: ``"fixed"`` holds ``w = 1``, ``"free"`` solves all
    four entries and discards ``w``.
    """

    threshold: float = 1e-4
    max_iterations: int = 500
    divergence_guard: float = 1e7
    renormalize: bool = True
    augmented: str = "fixed"

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be an integer >= 1")
        if not self.divergence_guard > 0:
            raise ValueError("divergence_guard must be positive")
        if self.augmented not in ("fixed", "free"):
            raise ValueError(f"augmented must be 'fixed' or 'free', got {self.augmented!r}")


@dataclass
class SolveReport:
    """Outcome of one iterative solve plus per-iteration diagnostics.

    ``condition_history`` holds the condition number of the normal matrix of
    each step (``cond(A^T A)``); ridge solves additionally record the
    regularized ``cond(T^T T + kI)`` in ``ridge_condition_history`` and the
    ridge parameter in ``ridge_history``. ``homogeneous_slack`` is
    ``|w - 1|`` for the augmented fusion unknown and None elsewhere.
    """

    estimate: np.ndarray
    converged: bool
    iterations: int
    correction_norms: list = field(default_factory=list)
    final_residual_rms: float = float("nan")
    condition_history: list = field(default_factory=list)
    ridge_history: list = field(default_factory=list)
    ridge_condition_history: list = field(default_factory=list)
    homogeneous_slack: float | None = None
    warnings: list = field(default_factory=list)
    algorithm: str = ""

    @property
    def ridge_k_final(self):
        return self.ridge_history[-1] if self.ridge_history else None


def check_step(dx, config):
    norm = math.sqrt(float(dx @ dx))
    if not math.isfinite(norm):
        raise Diverged("correction is not finite")
    if norm > config.divergence_guard:
        raise Diverged(f"correction norm {norm:.3g} m exceeds the divergence guard")
    return norm


def gauss_newton(linearize, x0, config, algorithm=""):
    """Undamped Gauss-Newton on ``linearize(x) -> (residual, jacobian)``.

    ``residual`` is observed minus predicted, so the step is the least-squares
    solution of ``J dx = residual``.
    """
    x = np.array(x0, dtype=float)
    report = SolveReport(estimate=x, converged=False, iterations=0, algorithm=algorithm)
    for it in range(config.max_iterations):
        try:
            r, J = linearize(x)
        except (DepthDegenerate, StationCoincidence) as exc:
            if it == 0:
                raise
            raise Diverged(f"iterate became degenerate: {exc}") from exc
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
            raise Diverged("residuals or Jacobian became non-finite")
        if J.shape[0] < J.shape[1]:
            raise DegenerateGeometry(f"{J.shape[0]} equations cannot determine {J.shape[1]} unknowns")
        sol = lstsq(J, r)
        if sol.rank_deficient:
            if it == 0:
                raise DegenerateGeometry(f"design matrix has rank {sol.rank} < {J.shape[1]} at the initial point")
            report.warnings.append(f"iteration {it + 1}: rank-deficient design matrix, minimum-norm step")
        norm = check_step(sol.solution, config)
        x = x + sol.solution
        report.correction_norms.append(norm)
        report.condition_history.append(sol.condition ** 2)
        if norm <= config.threshold:
            report.converged = True
            break
    report.iterations = len(report.correction_norms)
    if not report.converged:
        report.warnings.append(f"hit max_iterations={config.max_iterations} without converging")
    report.estimate = x
    try:
        r, _ = linearize(x)
        report.final_residual_rms = float(np.sqrt(np.mean(r ** 2)))
    except (DepthDegenerate, StationCoincidence):
        pass
    return report
