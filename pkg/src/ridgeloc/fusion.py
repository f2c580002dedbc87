"""Joint vision + laser-range least squares with min-max normalization.

Pixel residuals and range residuals live in different units, so each block
is mapped affinely onto ``[0, 1]`` before stacking. The affine offset turns
the correction into an augmented 4-vector ``[dX; w]`` with design matrix::

    T = [ H / (Max - Min)   -Min / (Max - Min) ]
        [ h / (max - min)   -min / (max - min) ]

where ``Max, Min`` bound the pixel residuals and ``max, min`` the range
residuals. By default ``w`` is held at 1, which makes the fixed point of
the iteration the minimizer of the scaled residual sum of squares; the
unconstrained 4-vector is still solved each step and ``|w - 1|`` is kept as
a diagnostic. ``SolverConfig(augmented="free")`` steps with all four entries.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from . import _kernels, ranging, vision
from ._kernels import SPREAD_EPS
from .camera import CheiralityWarning, forward_intersection
from .errors import (DegenerateGeometry, DegenerateSpread, DepthDegenerate, DimensionError, Diverged,
                     LocalizationError, StationCoincidence)
from .numeric import lstsq, svd_lstsq
from .solver import SolveReport, SolverConfig, check_step, gauss_newton

#: ``|w - 1|`` above this adds a report warning.
SLACK_WARN = 0.5


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Pixel observations for ``n`` frames plus laser ranges.

    ``range_frames[j]`` is the frame index at which ``ranges[j]`` was taken;
    it defaults to ``0..n-1`` (one range per frame). Each range station must
    coincide with the camera center of its frame.
    """

    vision: tuple
    ranges: tuple
    range_frames: tuple = None
    check_alignment: bool = field(default=True, repr=False)

    def __post_init__(self):
        vis = tuple(self.vision)
        rng = tuple(self.ranges)
        implicit = self.range_frames is None
        frames = tuple(range(len(rng))) if implicit else tuple(int(i) for i in self.range_frames)
        object.__setattr__(self, "vision", vis)
        object.__setattr__(self, "ranges", rng)
        object.__setattr__(self, "range_frames", frames)
        if len(frames) != len(rng):
            raise DimensionError("range_frames must have one entry per range")
        if len(vis) < 2 or len(rng) < 2:
            raise DimensionError(f"need at least 2 frames and 2 ranges, got {len(vis)} and {len(rng)}")
        if implicit and len(vis) != len(rng):
            raise DimensionError(f"{len(vis)} frames but {len(rng)} ranges")
        if any(not 0 <= i < len(vis) for i in frames) or len(set(frames)) != len(frames):
            raise DimensionError("range_frames must be distinct valid frame indices")
        if self.check_alignment:
            for j, i in enumerate(frames):
                M = vis[i].projection.array
                center = -np.linalg.solve(M[:, :3], M[:, 3])
                gap = np.linalg.norm(center - rng[j].station)
                if gap > 1e-6 * max(1.0, np.linalg.norm(center)):
                    raise DimensionError(f"range {j} station is {gap:.3g} m from the camera center of frame {i}")

    @property
    def n(self):
        return len(self.vision)

    @property
    def projections(self):
        return [o.projection for o in self.vision]

    @property
    def pixels(self):
        return np.array([o.pixel for o in self.vision])


@dataclass(frozen=True, eq=False)
class NormalizedSystem:
    T: np.ndarray
    dPhi: np.ndarray
    vis_min: float
    vis_max: float
    rng_min: float
    rng_max: float

    @property
    def bounds(self):
        return (self.vis_min, self.vis_max, self.rng_min, self.rng_max)


class _Stack:
    """Pre-unpacked arrays of an ObservationSet for fast repeated linearization."""

    def __init__(self, obs):
        self.Ms, self.px = vision._unpack(obs.vision)
        self.S, self.d = ranging._unpack(obs.ranges)

    def linearize(self, X):
        dpsi, H = vision._linearize(self.Ms, self.px, X)
        dphi, h = ranging._linearize(self.S, self.d, X)
        return dpsi, dphi, H, h

    def linearize_raw(self, X):
        dpsi, dphi, H, h = self.linearize(X)
        return np.concatenate([dpsi, dphi]), np.vstack([H, h])


def stack_observations(obs, X0):
    """Return ``(dpsi, dphi, H, h)`` evaluated at ``X0``."""
    return _Stack(obs).linearize(X0)


def normalize_stacked(dpsi, dphi, H, h, bounds=None):
    """Min-max normalize both residual blocks and build the augmented matrix.

    ``bounds=(Min, Max, min, max)`` reuses previously computed constants, in
    which case the normalized residuals are not confined to ``[0, 1]``.
    """
    dpsi = np.asarray(dpsi, dtype=float)
    dphi = np.asarray(dphi, dtype=float)
    if bounds is None:
        if dpsi.size < 2 or dphi.size < 2:
            raise DimensionError("each residual block needs at least two entries")
        bounds = (dpsi.min(), dpsi.max(), dphi.min(), dphi.max())
    vmin, vmax, rmin, rmax = (float(b) for b in bounds)
    vs = vmax - vmin
    rs = rmax - rmin
    if not vs > SPREAD_EPS:
        raise DegenerateSpread(f"pixel residual spread {vs!r} is too small to normalize")
    if not rs > SPREAD_EPS:
        raise DegenerateSpread(f"range residual spread {rs!r} is too small to normalize")
    a = dpsi.size
    dPhi = np.empty(a + dphi.size)
    dPhi[:a] = (dpsi - vmin) / vs
    dPhi[a:] = (dphi - rmin) / rs
    T = np.empty((dPhi.size, 4))
    T[:a, :3] = np.asarray(H) / vs
    T[a:, :3] = np.asarray(h) / rs
    T[:a, 3] = -vmin / vs
    T[a:, 3] = -rmin / rs
    return NormalizedSystem(T, dPhi, vmin, vmax, rmin, rmax)


def seed_point(obs):
    """Forward intersection, or a range-aided point if it lies behind the cameras.

    The fallback averages the single-shot line-of-sight fixes of all ranged
    frames. Returns ``(X0, warnings)``.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("error", CheiralityWarning)
        try:
            return forward_intersection(obs.projections, obs.pixels), []
        except (CheiralityWarning, DegenerateGeometry) as exc:
            note = f"forward intersection unusable ({exc}); seeded from line-of-sight ranging"
    fixes = [ranging.los_single_shot(los_observation(obs, f)) for f in obs.range_frames]
    return np.mean(fixes, axis=0), [note]


def los_observation(obs, frame):
    """Line-of-sight observation for one ranged frame, built from its projection matrix."""
    M = obs.vision[frame].projection.array
    d = np.linalg.solve(M[:, :3], np.array([*obs.vision[frame].pixel, 1.0]))
    d /= np.linalg.norm(d)
    j = obs.range_frames.index(frame)
    return ranging.LosObservation(obs.ranges[j].station, d, obs.ranges[j].range)


def initial_value(obs, config=None):
    """Vision solve result, falling back to :func:`seed_point`.

    Returns ``(X0, warnings)``.
    """
    try:
        rep = vision.solve_vision(obs.vision, None, config)
        if rep.converged:
            return rep.estimate, []
        note = "vision solve did not converge"
    except LocalizationError as exc:
        note = f"vision solve failed ({exc})"
    X0, more = seed_point(obs)
    return X0, [note] + more


def _linearize_or_diverge(stack, X, first):
    try:
        return stack.linearize(X)
    except (DepthDegenerate, StationCoincidence) as exc:
        if first:
            raise
        raise Diverged(f"iterate became degenerate: {exc}") from exc


def constrained_step(system, k=0.0):
    """Correction with the augmented unknown's last entry held at 1.

    These are the first three rows of ``(T^T T + kI) [dX; 1] = T^T dPhi``.
    """
    T = system.T
    Tr = T[:, :3]
    y = system.dPhi - T[:, 3]
    if k == 0.0:
        return svd_lstsq(Tr, y).solution
    N = Tr.T @ Tr
    N.flat[::4] += k
    _, x, info = lapack.dposv(N, Tr.T @ y)
    return x if info == 0 else np.linalg.solve(N, Tr.T @ y)


def _finish(report, config):
    if not report.converged:
        report.warnings.append(f"hit max_iterations={config.max_iterations} without converging")
    if report.homogeneous_slack is not None and report.homogeneous_slack >= SLACK_WARN:
        report.warnings.append(f"homogeneous slack |w - 1| = {report.homogeneous_slack:.3g} is large")
    return report


def _compiled(stack, X0, config, algorithm, kernel):
    out = _kernels.normalized_core(stack, X0, config, **kernel)
    if out is None:
        return None
    X, iters, converged, norms, conds, ks, kconds, slack, rms = out
    report = SolveReport(estimate=X, converged=converged, iterations=iters, algorithm=algorithm,
                         correction_norms=norms.tolist(), condition_history=conds.tolist(),
                         final_residual_rms=float(rms), homogeneous_slack=float(slack))
    if kernel.get("kind", _kernels.PLAIN) != _kernels.PLAIN:
        report.ridge_history = ks.tolist()
        report.ridge_condition_history = kconds.tolist()
    return _finish(report, config)


def normalized_iterations(obs, X0, config, step, algorithm, kernel=None):
    """Shared loop for the normalized fusion solvers.

    ``step(system, sol, report)`` receives the normalized system and its
    unconstrained least-squares 4-vector and returns the 3-vector correction.
    When the residual spread collapses the iteration takes an unnormalized
    Gauss-Newton step instead and ``step(None, None, report)`` is called so
    per-iteration histories stay aligned.

    ``kernel`` holds keyword arguments for the compiled loop in
    :mod:`ridgeloc._kernels` describing the same step. The compiled loop
    is tried first and this loop runs only when it declines.
    """
    stack = _Stack(obs)
    if kernel is not None:
        report = _compiled(stack, X0, config, algorithm, kernel)
        if report is not None:
            return report
    x = np.array(X0, dtype=float)
    report = SolveReport(estimate=x, converged=False, iterations=0, algorithm=algorithm)
    frozen = None
    for it in range(config.max_iterations):
        dpsi, dphi, H, h = _linearize_or_diverge(stack, x, it == 0)
        try:
            system = normalize_stacked(dpsi, dphi, H, h, bounds=frozen)
        except DegenerateSpread as exc:
            sol = lstsq(np.vstack([H, h]), np.concatenate([dpsi, dphi]))
            if it == 0 and sol.rank_deficient:
                raise DegenerateGeometry("stacked design matrix is rank deficient at the initial point") from exc
            report.warnings.append(f"iteration {it + 1}: {exc}; took an unnormalized step")
            report.condition_history.append(sol.condition ** 2)
            step(None, None, report)
            dx = sol.solution
        else:
            if not config.renormalize and frozen is None:
                frozen = system.bounds
            if not (np.isfinite(system.T.sum()) and np.isfinite(system.dPhi.sum())):
                raise Diverged("normalized system became non-finite")
            sol = svd_lstsq(system.T, system.dPhi)
            if it == 0 and sol.rank_deficient:
                raise DegenerateGeometry(f"augmented design matrix has rank {sol.rank} < 4 at the initial point")
            report.homogeneous_slack = float(abs(sol.solution[3] - 1.0))
            report.condition_history.append(sol.condition ** 2)
            dx = step(system, sol, report)
        norm = check_step(dx, config)
        x = x + dx
        report.correction_norms.append(norm)
        if norm <= config.threshold:
            report.converged = True
            break
    report.iterations = len(report.correction_norms)
    report.estimate = x
    _finish(report, config)
    try:
        dpsi, dphi, H, h = stack.linearize(x)
        try:
            system = normalize_stacked(dpsi, dphi, H, h, bounds=frozen)
            r = system.dPhi - system.T @ np.append(np.zeros(3), 1.0)
            report.final_residual_rms = float(np.sqrt(np.mean(r ** 2)))
        except DegenerateSpread:
            report.final_residual_rms = 0.0
    except (DepthDegenerate, StationCoincidence):
        pass
    return report


def _ls_step(config):
    def step(system, sol, report):
        if system is None:
            return None
        if config.augmented == "free":
            return sol.solution[:3]
        return constrained_step(system)
    return step


def solve_fused(obs, X0=None, config=None):
    """Normalized fusion solve; ``X0=None`` seeds from the vision solution."""
    config = config or SolverConfig()
    notes = []
    if X0 is None:
        X0, notes = initial_value(obs, config)
    report = normalized_iterations(obs, X0, config, _ls_step(config), "fused", kernel={})
    report.warnings[:0] = notes
    return report


def solve_fused_unnormalized(obs, X0=None, config=None):
    """Gauss-Newton on the raw stacked system ``[H; h] dX = [dpsi; dphi]``."""
    config = config or SolverConfig()
    notes = []
    if X0 is None:
        X0, notes = initial_value(obs, config)
    report = gauss_newton(_Stack(obs).linearize_raw, X0, config, algorithm="fused_raw")
    report.warnings[:0] = notes
    return report
