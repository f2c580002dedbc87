"""Synthetic flight scenarios, noise injection and Monte Carlo sweeps.

Geometry: the target sits at the world origin; the platform flies a
horizontal arc at constant height and constant slant range, centered above
the target, so every line of sight has the same observation angle. The
azimuth span is chosen so the first and last lines of sight subtend the
requested intersection angle. Cameras are boresight-locked on the target.

Trial seeding: trial ``i`` of a run with master seed ``s`` draws from
``numpy.random.default_rng(SeedSequence(s, spawn_key=(i,)))``, the same
stream ``SeedSequence(s).spawn(...)[i]`` would give. Trials are therefore
independent and can be evaluated in any order.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .camera import CameraIntrinsics, CheiralityWarning, PlatformPose, build_projection, forward_intersection, project
from .errors import EmptyCell, GeometryInfeasible, LocalizationError, UnboundedError
from .fusion import ObservationSet, los_observation, seed_point, solve_fused, solve_fused_unnormalized
from .ranging import RangeObservation, los_single_shot, solve_range
from .batch import noisy_batch, run_batch
from .ridge import RidgeConfig, solve_fused_ridge
from .solver import SolverConfig
from .vision import VisionObservation, solve_vision

ALGORITHMS = ("vision", "range", "fused", "fused_ridge", "fused_raw", "los")
DEFAULT_CAMERA = CameraIntrinsics(fx=8000.0, fy=8000.0, cx=0.0, cy=0.0)


@dataclass(frozen=True)
class ScenarioSpec:
    gamma: float = 30.0
    height: float = 2000.0
    slant_range: float = 5000.0
    n_obs: int = 10
    trajectory: str = "arc"
    camera: CameraIntrinsics = DEFAULT_CAMERA

    def __post_init__(self):
        if not 0 < self.height < self.slant_range:
            raise ValueError("need 0 < height < slant_range")
        if int(self.n_obs) != self.n_obs or self.n_obs < 2:
            raise ValueError("n_obs must be an integer >= 2")
        if not 0 < self.gamma < 180:
            raise ValueError("gamma must lie in (0, 180) degrees")
        if self.trajectory not in ("arc", "line"):
            raise ValueError(f"unknown trajectory {self.trajectory!r}")

    @property
    def observation_angle(self):
        """Angle between each line of sight and the vertical, degrees."""
        return math.degrees(math.acos(self.height / self.slant_range))


@dataclass(frozen=True)
class NoiseSpec:
    pos_sigma: float = 5.0
    range_sigma: float = 2.5
    rot_sigma: float = 0.2
    pixel_sigma: float = 0.1

    def __post_init__(self):
        for name in ("pos_sigma", "range_sigma", "rot_sigma", "pixel_sigma"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True, eq=False)
class Scenario:
    target: np.ndarray
    true_poses: tuple
    camera: CameraIntrinsics


@dataclass(frozen=True)
class TrialRecord:
    gamma: float
    trial: int
    algorithm: str
    error: float
    converged: bool
    iterations: int
    k_history: tuple = ()
    failure: str | None = None


@dataclass(frozen=True)
class TrialStatistics:
    gamma: float
    algorithm: str
    median_error: float
    rms_error: float
    trials: int
    converged_fraction: float


def generate_arc_scenario(spec):
    """Build the ground-truth poses for ``spec`` (arc, or straight line if requested)."""
    h, L, n = spec.height, spec.slant_range, int(spec.n_obs)
    r = math.sqrt(L * L - h * h)
    g = math.radians(spec.gamma)
    if spec.trajectory == "arc":
        c = (L * L * math.cos(g) - h * h) / (r * r)
        if c < -1.0:
            raise GeometryInfeasible(
                f"gamma={spec.gamma} deg exceeds the widest angle reachable at height {h} m and range {L} m")
        span = math.acos(min(c, 1.0))
        az = np.linspace(-span / 2, span / 2, n)
        positions = np.column_stack([r * np.cos(az), r * np.sin(az), np.full(n, h)])
    else:
        # straight pass perpendicular to the mid line of sight; the end rays subtend gamma
        half = L * math.tan(g / 2)
        positions = np.column_stack([np.full(n, r), np.linspace(-half, half, n), np.full(n, h)])
    target = np.zeros(3)
    poses = tuple(PlatformPose.looking_at(p, target) for p in positions)
    return Scenario(target=target, true_poses=poses, camera=spec.camera)


def synthesize_observations(sc):
    """Noise-free pixels and ranges for every pose of ``sc``."""
    vis, rng = [], []
    for pose in sc.true_poses:
        M = build_projection(sc.camera, pose)
        vis.append(VisionObservation(M, project(M, sc.target)))
        rng.append(RangeObservation(pose.position, float(np.linalg.norm(sc.target - pose.position))))
    return ObservationSet(vis, rng)


def trial_rng(seed, trial):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(trial),)))


def inject_noise(sc, obs, noise, seed):
    """Return a perturbed copy of ``obs``; ``seed`` may be an int or a Generator.

    Pixels and ranges get additive Gaussian noise. The poses the solvers see
    are perturbed as well: positions per axis, and attitude by small rotations
    about the camera x, then y, then z axes. Both the projection matrices and
    the range stations are rebuilt from the perturbed poses.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = obs.n
    # fixed draw order keeps streams comparable across noise settings
    dpos = rng.standard_normal((n, 3)) * noise.pos_sigma
    drot = rng.standard_normal((n, 3)) * noise.rot_sigma
    dpix = rng.standard_normal((n, 2)) * noise.pixel_sigma
    drng = rng.standard_normal(n) * noise.range_sigma

    if noise.rot_sigma > 0:
        quats = np.array([p.quaternion for p in sc.true_poses])
        noisy = Rotation.from_euler("xyz", drot, degrees=True) * Rotation.from_quat(quats)
        noisy_q = noisy.as_quat()
        noisy_R = noisy.as_matrix()
    vis, rngs = [], []
    for i, (pose, vo, ro) in enumerate(zip(sc.true_poses, obs.vision, obs.ranges)):
        if noise.rot_sigma > 0:
            npose = PlatformPose(pose.position + dpos[i], noisy_q[i])
            npose.__dict__["rotation"] = noisy_R[i]
        else:
            npose = PlatformPose(pose.position + dpos[i], pose.quaternion)
        M = build_projection(sc.camera, npose)
        vis.append(VisionObservation(M, vo.pixel + dpix[i]))
        rngs.append(RangeObservation(npose.position, max(ro.range + drng[i], 1e-3)))
    return ObservationSet(vis, rngs, check_alignment=False)


def run_algorithms(obs, algorithms, config=None, ridge=None, los_frame=None):
    """Run each requested estimator on one observation set.

    Returns ``{name: (estimate | None, report | None, failure | None)}``.
    Vision starts from forward intersection; range starts from
    :func:`~ridgeloc.fusion.seed_point`; the fusion solvers start from the
    vision estimate when it converged and from ``seed_point`` otherwise.
    ``los`` uses frame ``los_frame`` (default: the middle ranged frame).
    """
    config = config or SolverConfig()
    out = {}
    fi = seed = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CheiralityWarning)
        try:
            fi = forward_intersection(obs.projections, obs.pixels)
        except LocalizationError as exc:
            fi_fail = str(exc)
    if fi is not None:
        seed, _ = seed_point(obs)
    seed_vis = seed
    need_vis = any(a in algorithms for a in ("vision", "fused", "fused_ridge", "fused_raw"))
    if need_vis and fi is not None:
        try:
            rep = solve_vision(obs.vision, fi, config)
            out["vision"] = (rep.estimate, rep, None)
            if rep.converged:
                seed_vis = rep.estimate
        except LocalizationError as exc:
            out["vision"] = (None, None, f"{type(exc).__name__}: {exc}")

    runners = {
        "range": lambda: solve_range(obs.ranges, seed, config),
        "fused": lambda: solve_fused(obs, seed_vis, config),
        "fused_ridge": lambda: solve_fused_ridge(obs, seed_vis, config, ridge),
        "fused_raw": lambda: solve_fused_unnormalized(obs, seed_vis, config),
    }
    for name in algorithms:
        if name == "vision" or name in out:
            continue
        if name == "los":
            frame = obs.range_frames[len(obs.range_frames) // 2] if los_frame is None else los_frame
            out[name] = (los_single_shot(los_observation(obs, frame)), None, None)
            continue
        if name not in runners:
            raise ValueError(f"unknown algorithm {name!r}")
        if fi is None:
            out[name] = (None, None, f"no initial value: {fi_fail}")
            continue
        try:
            rep = runners[name]()
            out[name] = (rep.estimate, rep, None)
        except LocalizationError as exc:
            out[name] = (None, None, f"{type(exc).__name__}: {exc}")
    if "vision" not in algorithms:
        out.pop("vision", None)
    return out


def _record(gamma, t, name, target, est, rep, failure):
    if est is None:
        return TrialRecord(gamma, t, name, float("nan"), False, 0, (), failure)
    err = float(np.linalg.norm(est - target))
    conv = True if rep is None else rep.converged
    iters = 0 if rep is None else rep.iterations
    ks = () if rep is None else tuple(rep.ridge_history)
    return TrialRecord(gamma, t, name, err, conv, iters, ks, None)


def run_monte_carlo(spec, noise, algorithms=ALGORITHMS, trials=1000, seed=0, config=None, ridge=None,
                    engine="batch"):
    """Seeded Monte Carlo over ``trials`` noisy realizations of one scenario.

    Per-trial solver failures are recorded (``converged=False``, ``error=nan``,
    ``failure`` set) rather than raised. Records are ordered by trial, then by
    the order of ``algorithms``.

    ``engine="batch"`` iterates all trials together (see
    :mod:`ridgeloc.batch`) and hands unusual trials to the per-trial solvers;
    ``engine="scalar"`` runs every trial through the per-trial solvers.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if engine not in ("batch", "scalar"):
        raise ValueError(f"engine must be 'batch' or 'scalar', got {engine!r}")
    algorithms = tuple(algorithms)
    for a in algorithms:
        if a not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {a!r}; expected one of {ALGORITHMS}")
    config = config or SolverConfig()
    ridge = ridge or RidgeConfig()
    sc = generate_arc_scenario(spec)
    clean = synthesize_observations(sc)

    def scalar_trial(t):
        noisy = inject_noise(sc, clean, noise, trial_rng(seed, t))
        results = run_algorithms(noisy, algorithms, config, ridge)
        return [_record(spec.gamma, t, name, sc.target, *results[name]) for name in algorithms]

    records = []
    if engine == "scalar":
        for t in range(trials):
            records.extend(scalar_trial(t))
        return records

    nb = noisy_batch(sc, clean, noise, [trial_rng(seed, t) for t in range(trials)])
    res, bad = run_batch(nb, algorithms, config, ridge)
    errors = {name: np.linalg.norm(r.estimate - sc.target, axis=1) for name, r in res.items()}
    for t in range(trials):
        if bad[t]:
            records.extend(scalar_trial(t))
            continue
        for name in algorithms:
            r = res[name]
            it = int(r.iterations[t])
            ks = () if r.k_history is None else tuple(float(k) for k in r.k_history[:it, t])
            records.append(TrialRecord(spec.gamma, t, name, float(errors[name][t]), bool(r.converged[t]), it, ks, None))
    return records


def aggregate_stats(records):
    """Median / RMS error per ``(gamma, algorithm)`` cell over converged trials.

    Cells are returned sorted by gamma, then algorithm name. A cell with no
    converged trials gets NaN statistics and ``converged_fraction = 0``.
    """
    records = list(records)
    if not records:
        raise EmptyCell("no trial records to aggregate")
    cells = {}
    for r in records:
        cells.setdefault((float(r.gamma), r.algorithm), []).append(r)
    stats = []
    for (gamma, algo) in sorted(cells):
        rs = cells[(gamma, algo)]
        errs = np.array([r.error for r in rs if r.converged and np.isfinite(r.error)])
        if errs.size:
            med = float(np.median(errs))
            rms = float(np.sqrt(np.mean(errs ** 2)))
        else:
            med = rms = float("nan")
        stats.append(TrialStatistics(gamma, algo, med, rms, len(rs), errs.size / len(rs)))
    return stats


def intersection_error_bound(gamma, delta, half_baseline):
    """Depth error caused by a line-of-sight angular error at intersection angle ``gamma``.

    With half-baseline ``x``, the true depth is ``x / tan(gamma/2)`` and the
    perturbed ray meets the axis at ``x / tan(gamma/2 - delta)``; the
    difference is returned. Angles in degrees, result in the units of ``x``.
    """
    if not 0 < gamma < 180:
        raise ValueError("gamma must lie in (0, 180) degrees")
    if not delta >= 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return 0.0
    half = math.radians(gamma) / 2
    shifted = half - math.radians(delta)
    if shifted <= 0:
        raise UnboundedError(f"delta={delta} deg leaves no forward intersection at gamma={gamma} deg")
    return half_baseline / math.tan(shifted) - half_baseline / math.tan(half)
