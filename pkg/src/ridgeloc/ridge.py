"""Ridge-regularized fusion solve with the Hoerl-Kennard-Baldwin parameter.

Each iteration builds the normalized augmented system ``(T, dPhi)`` exactly
as the plain fusion solver does, then replaces the least-squares step with::

    [dX; w] = (T^T T + k I)^-1 T^T dPhi,     k = t * s2 / ||T x_ls||^2

where ``x_ls`` is the least-squares 4-vector, ``t`` the numerical rank of
``T`` and ``s2`` the residual variance ``||dPhi - T x_ls||^2 / (m - t)``.
With ``w`` held at 1 (the default) only the first three rows are solved,
with ``T[:, 3]`` moved to the right-hand side.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InsufficientRows, SingularSystem
from .fusion import constrained_step, initial_value, normalized_iterations
from .numeric import RANK_TOL, as_matrix, as_vector, lstsq
from .solver import SolverConfig

MODES = ("per_iteration", "initial_only")
DOF_MODES = ("rows", "literal")


class ZeroSignalWarning(UserWarning):
    """The fitted signal ``||T x_ls||^2`` vanished; the ridge parameter was set to 0."""


@dataclass(frozen=True)
class RidgeConfig:
    """Ridge-parameter controls.

    mode
        ``per_iteration`` recomputes ``k`` at every Gauss-Newton step;
        ``initial_only`` computes it at the first step and keeps it.
    variance_floor
        Lower bound applied to the residual-variance estimate.
    dof
        ``rows`` divides the residual quadratic form by ``m - t`` with ``m``
        the row count of ``T``; ``literal`` divides by ``n - t`` with ``n``
        the number of frames.
    fixed_k
        If set, skip the HKB formula and use this value for every step.
    """

    mode: str = "per_iteration"
    rank_tolerance: float = RANK_TOL
    variance_floor: float = 0.0
    dof: str = "rows"
    fixed_k: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dof not in DOF_MODES:
            raise ValueError(f"dof must be one of {DOF_MODES}, got {self.dof!r}")
        if not self.rank_tolerance > 0:
            raise ValueError("rank_tolerance must be positive")
        if not self.variance_floor >= 0:
            raise ValueError("variance_floor must be non-negative")
        if self.fixed_k is not None and not self.fixed_k >= 0:
            raise ValueError("fixed_k must be non-negative")


def _hkb_from_solution(T, dPhi, sol, rank_tolerance, dof_count=None, variance_floor=0.0):
    m = T.shape[0]
    s = sol.singular_values
    t = int(np.count_nonzero(s > rank_tolerance * s[0])) if s[0] > 0 else 0
    denom = (m if dof_count is None else dof_count) - t
    if denom <= 0:
        raise InsufficientRows(f"{m if dof_count is None else dof_count} observations leave no residual degrees of freedom for rank {t}")
    fitted = T @ sol.solution
    resid = dPhi - fitted
    delta0_sq = max(float(resid @ resid) / denom, variance_floor)
    signal = float(fitted @ fitted)
    if signal <= 1e-300:
        warnings.warn("least-squares fit has zero signal; ridge parameter set to 0", ZeroSignalWarning, stacklevel=3)
        return 0.0, t, delta0_sq
    return t * delta0_sq / signal, t, delta0_sq


def hkb_ridge_parameter(T, dPhi, rank_tolerance=RANK_TOL, dof_count=None):
    """Hoerl-Kennard-Baldwin ridge parameter.

    Returns ``(k, t, delta0_sq)``. ``dof_count`` overrides the row count used
    in the residual-variance divisor.
    """
    T = as_matrix(T, "T")
    dPhi = as_vector(dPhi, "dPhi")
    sol = lstsq(T, dPhi, rcond=rank_tolerance)
    return _hkb_from_solution(T, dPhi, sol, rank_tolerance, dof_count)


def ridge_solve_step(T, dPhi, k):
    """``(T^T T + k I)^-1 T^T dPhi``."""
    T = as_matrix(T, "T")
    dPhi = as_vector(dPhi, "dPhi")
    if not k >= 0:
        raise ValueError(f"ridge parameter must be non-negative, got {k!r}")
    N = T.T @ T + k * np.eye(T.shape[1])
    if k == 0:
        s = np.linalg.svd(T, compute_uv=False)
        if s[-1] <= s[0] * RANK_TOL:
            raise SingularSystem("T is rank deficient and k = 0")
    return np.linalg.solve(N, T.T @ dPhi)


def _ridge_cond(s, k):
    lo = s[-1] ** 2 + k
    return float((s[0] ** 2 + k) / lo) if lo > 0 else np.inf


def solve_fused_ridge(obs, X0=None, config=None, ridge=None):
    """Normalized fusion solve with HKB ridge steps; ``X0=None`` seeds from vision."""
    config = config or SolverConfig()
    ridge = ridge or RidgeConfig()
    notes = []
    if X0 is None:
        X0, notes = initial_value(obs, config)
    dof_count = obs.n if ridge.dof == "literal" else None
    state = {"k": None}

    def step(system, sol, report):
        if system is None:
            report.ridge_history.append(0.0)
            report.ridge_condition_history.append(report.condition_history[-1])
            return None
        if ridge.fixed_k is not None:
            k = float(ridge.fixed_k)
        elif ridge.mode == "initial_only" and state["k"] is not None:
            k = state["k"]
        else:
            k, _, _ = _hkb_from_solution(system.T, system.dPhi, sol, ridge.rank_tolerance,
                                         dof_count, ridge.variance_floor)
        state["k"] = k
        report.ridge_history.append(k)
        report.ridge_condition_history.append(_ridge_cond(sol.singular_values, k))
        if config.augmented == "free":
            return sol.solution[:3] if k == 0.0 else ridge_solve_step(system.T, system.dPhi, k)[:3]
        return constrained_step(system, k)

    if ridge.fixed_k is not None:
        kernel = dict(kind=_kernels.RIDGE_FIXED, fixed_k=ridge.fixed_k)
    else:
        kernel = dict(kind=_kernels.RIDGE_HKB, initial_only=ridge.mode == "initial_only",
                      rank_tol=ridge.rank_tolerance, var_floor=ridge.variance_floor, dof_count=dof_count)
    report = normalized_iterations(obs, X0, config, step, "fused_ridge", kernel=kernel)
    report.warnings[:0] = notes
    return report
