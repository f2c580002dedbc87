"""Run configuration, observation files, result tables and SVG plots.

Config documents are YAML (comments allowed). Every section is optional and
missing fields take the library defaults. Unknown keys are rejected.

    # sweep the default geometry with fewer trials
    scenario: {height: 2000, slant_range: 5000, n_obs: 10}
    noise: {pos_sigma: 5, range_sigma: 2.5, rot_sigma: 0.2, pixel_sigma: 0.1}
    solver: {threshold: 1.0e-4}
    trials: 200
    seed: 42
    gamma_sweep: [10, 20, 30]

Angles in files are degrees. Observation rows carry a world-to-camera
attitude as intrinsic Z-Y-X (yaw, pitch, roll).
"""

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .camera import CameraIntrinsics, PlatformPose, build_projection
from .errors import ConfigError, InsufficientData, InsufficientRangedRows, ParseError, SchemaError, UnknownKey
from .fusion import ObservationSet
from .ranging import RangeObservation
from .ridge import RidgeConfig
from .simulation import ALGORITHMS, NoiseSpec, ScenarioSpec
from .solver import SolverConfig
from .vision import VisionObservation

DEFAULT_SWEEP = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0)
DEFAULT_ALGORITHMS = ("vision", "range", "fused", "fused_ridge")

OBS_COLUMNS = ("obs_id", "px_x", "px_y", "range_m", "pos_x", "pos_y", "pos_z", "yaw_deg", "pitch_deg", "roll_deg")
RESULT_COLUMNS = ("gamma_deg", "algorithm", "median_error_m", "rms_error_m", "trials", "converged_fraction")
ESTIMATE_FIELDS = ("x_m", "y_m", "z_m", "converged", "iterations", "final_residual_rms",
                   "homogeneous_slack", "ridge_k_final")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    ridge: RidgeConfig = field(default_factory=RidgeConfig)
    trials: int = 1000
    seed: int = 0
    gamma_sweep: tuple = DEFAULT_SWEEP
    algorithms: tuple = DEFAULT_ALGORITHMS

    def __post_init__(self):
        if isinstance(self.trials, bool) or int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError(f"trials: must be an integer >= 1, got {self.trials!r}")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError(f"seed: must be a non-negative integer, got {self.seed!r}")
        sweep = tuple(float(g) for g in self.gamma_sweep)
        if not sweep:
            raise ConfigError("gamma_sweep: must not be empty")
        for g in sweep:
            if not 0 < g < 180:
                raise ConfigError(f"gamma_sweep: {g} is outside (0, 180) degrees")
        algos = tuple(self.algorithms)
        if not algos:
            raise ConfigError("algorithms: must not be empty")
        for a in algos:
            if a not in ALGORITHMS:
                raise ConfigError(f"algorithms: unknown identifier {a!r}; expected one of {ALGORITHMS}")
        if len(set(algos)) != len(algos):
            raise ConfigError("algorithms: duplicate identifiers")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "gamma_sweep", sweep)
        object.__setattr__(self, "algorithms", algos)


# -- config --------------------------------------------------------------------------

_FLOAT = object()


def _coerce(value, default, where):
    """Coerce a YAML scalar to the type of ``default``."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or default is _FLOAT:
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        try:
            # PyYAML reads "1e-4" (no dot) as a string
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, doc, where, overrides=None):
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(doc).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in doc.items():
        if key not in fields:
            raise UnknownKey(f"{where}.{key}: unknown key (allowed: {', '.join(fields)})")
        sub = f"{where}.{key}"
        if overrides and key in overrides:
            kwargs[key] = overrides[key](value, sub)
            continue
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        if default is None and value is not None:
            default = _FLOAT
        kwargs[key] = None if value is None else _coerce(value, default, sub)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _camera(value, where):
    return _build(CameraIntrinsics, value, where)


def config_from_dict(doc):
    """Build a :class:`RunConfig` from an already-parsed mapping."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping at the top level")
    allowed = {f.name for f in dataclasses.fields(RunConfig)}
    for key in doc:
        if key not in allowed:
            raise UnknownKey(f"{key}: unknown key (allowed: {', '.join(sorted(allowed))})")
    kwargs = {
        "scenario": _build(ScenarioSpec, doc.get("scenario"), "scenario", {"camera": _camera}),
        "noise": _build(NoiseSpec, doc.get("noise"), "noise"),
        "solver": _build(SolverConfig, doc.get("solver"), "solver"),
        "ridge": _build(RidgeConfig, doc.get("ridge"), "ridge"),
    }
    if "trials" in doc:
        kwargs["trials"] = _coerce(doc["trials"], 0, "trials")
    if "seed" in doc:
        kwargs["seed"] = _coerce(doc["seed"], 0, "seed")
    for key in ("gamma_sweep", "algorithms"):
        if key in doc:
            if not isinstance(doc[key], list):
                raise ConfigError(f"{key}: expected a list")
            kwargs[key] = tuple(doc[key]) if key == "algorithms" else tuple(
                _coerce(g, 0.0, f"{key}[{i}]") for i, g in enumerate(doc[key]))
    return RunConfig(**kwargs)


def parse_config_text(text):
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(f"line {line}, column {col}: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc)) from None
    return config_from_dict(doc)


def parse_config(path):
    """Read a YAML run configuration; an empty document gives every default."""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    return obj


def config_to_dict(cfg):
    return _plain(cfg)


def serialize_config(cfg):
    """YAML text that :func:`parse_config_text` turns back into ``cfg``."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


# -- observation files ---------------------------------------------------------------

def _cell(row, key, line, required=True):
    raw = (row.get(key) or "").strip()
    if raw == "":
        if required:
            raise SchemaError(f"row {line}: missing value for {key}", row=line)
        return None
    try:
        value = float(raw)
    except ValueError:
        raise SchemaError(f"row {line}: {key}={raw!r} is not a number", row=line) from None
    if not math.isfinite(value):
        raise SchemaError(f"row {line}: {key} is not finite", row=line)
    return value


def read_observation_rows(path):
    """Parsed rows as dicts of floats (``range_m`` may be None).

    Row numbers in errors are file line numbers, so the first data row is
    row 2.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in OBS_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"header is missing column(s) {', '.join(missing)}", row=1)
        extra = [c for c in header if c not in OBS_COLUMNS]
        if extra:
            raise SchemaError(f"header has unknown column(s) {', '.join(extra)}", row=1)
        reader.fieldnames = header
        rows = []
        last_id = None
        for line, row in enumerate(reader, start=2):
            if None in row:
                raise SchemaError(f"row {line}: more cells than header columns", row=line)
            rec = {c: _cell(row, c, line, required=(c != "range_m")) for c in OBS_COLUMNS}
            if rec["obs_id"] != int(rec["obs_id"]):
                raise SchemaError(f"row {line}: obs_id must be an integer", row=line)
            rec["obs_id"] = int(rec["obs_id"])
            if last_id is not None and rec["obs_id"] <= last_id:
                raise SchemaError(f"row {line}: obs_id {rec['obs_id']} does not increase", row=line)
            if rec["range_m"] is not None and not rec["range_m"] > 0:
                raise SchemaError(f"row {line}: range_m must be positive", row=line)
            last_id = rec["obs_id"]
            rows.append(rec)
    return rows


def load_observations(path, camera):
    """Build an :class:`ObservationSet` from an observation CSV.

    Rows without ``range_m`` become vision-only frames; at least two ranged
    rows are required.
    """
    rows = read_observation_rows(path)
    if len(rows) < 2:
        raise SchemaError(f"need at least 2 observation rows, found {len(rows)}", row=None)
    vis, rng, frames = [], [], []
    for i, r in enumerate(rows):
        pos = np.array([r["pos_x"], r["pos_y"], r["pos_z"]])
        pose = PlatformPose.from_euler(pos, r["yaw_deg"], r["pitch_deg"], r["roll_deg"])
        vis.append(VisionObservation(build_projection(camera, pose), (r["px_x"], r["px_y"])))
        if r["range_m"] is not None:
            rng.append(RangeObservation(pos, r["range_m"]))
            frames.append(i)
    if len(rng) < 2:
        raise InsufficientRangedRows(f"{len(rng)} row(s) carry range_m; fusion needs at least 2")
    return ObservationSet(vis, rng, range_frames=frames)


def pose_from_projection(M, camera):
    """Recover the platform pose from ``M = K [R | -R c]``."""
    M = np.asarray(M, dtype=float)
    A = np.linalg.solve(camera.K, M)
    R = A[:, :3]
    return PlatformPose.from_matrix(-R.T @ A[:, 3], R)


def write_observations(obs, camera, path):
    """Write ``obs`` in the observation CSV schema (full float precision)."""
    ranged = dict(zip(obs.range_frames, obs.ranges))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for i, vo in enumerate(obs.vision):
            pose = pose_from_projection(vo.projection.array, camera)
            yaw, pitch, roll = pose.euler_deg()
            ro = ranged.get(i)
            w.writerow([i, repr(float(vo.pixel[0])), repr(float(vo.pixel[1])),
                        "" if ro is None else repr(ro.range),
                        *(repr(float(v)) for v in pose.position),
                        repr(float(yaw)), repr(float(pitch)), repr(float(roll))])


# -- results -------------------------------------------------------------------------

def _g6(x):
    return f"{x:.6g}" if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def format_results(stats):
    if not stats:
        raise InsufficientData("no statistics to write")
    lines = [",".join(RESULT_COLUMNS)]
    for s in sorted(stats, key=lambda s: (s.gamma, s.algorithm)):
        lines.append(",".join([_g6(float(s.gamma)), s.algorithm, _g6(s.median_error), _g6(s.rms_error),
                               str(int(s.trials)), _g6(s.converged_fraction)]))
    return "\n".join(lines) + "\n"


def write_results(stats, path):
    """Results CSV, one row per (gamma, algorithm), 6 significant digits."""
    Path(path).write_text(format_results(stats), encoding="utf-8", newline="\n")


def read_results(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- estimate document -------------------------------------------------------------

def estimate_document(report):
    """Ordered mapping of the estimate fields for one solve report."""
    X = report.estimate
    slack = report.homogeneous_slack
    k = report.ridge_k_final
    return {
        "x_m": float(X[0]), "y_m": float(X[1]), "z_m": float(X[2]),
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "final_residual_rms": float(report.final_residual_rms),
        "homogeneous_slack": None if slack is None else float(slack),
        "ridge_k_final": None if k is None else float(k),
    }


def format_estimate(report):
    return yaml.safe_dump(estimate_document(report), sort_keys=False)


# -- plots ---------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
_KINDS = {"median_vs_gamma": ("median_error", "Median error (m)"),
          "rms_vs_gamma": ("rms_error", "RMS error (m)")}


def render_plot(stats, kind="median_vs_gamma", width=640, height=420):
    """SVG text for one statistic against intersection angle, log-scale y axis."""
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {tuple(_KINDS)}, got {kind!r}")
    attr, ylabel = _KINDS[kind]
    stats = list(stats)
    gammas = sorted({float(s.gamma) for s in stats})
    if len(gammas) < 2:
        raise InsufficientData(f"a plot needs at least 2 gamma values, got {len(gammas)}")
    series = {}
    for s in sorted(stats, key=lambda s: (s.algorithm, s.gamma)):
        v = getattr(s, attr)
        if math.isfinite(v) and v > 0:
            series.setdefault(s.algorithm, []).append((float(s.gamma), v))
        else:
            series.setdefault(s.algorithm, [])
    values = [v for pts in series.values() for _, v in pts]
    if not values:
        raise InsufficientData("no finite positive values to plot")
    lo = math.floor(math.log10(min(values)))
    hi = math.ceil(math.log10(max(values)))
    if hi == lo:
        hi = lo + 1
    left, right, top, bottom = 70, width - 150, 30, height - 55
    g0, g1 = gammas[0], gammas[-1]

    def sx(g):
        return left + (g - g0) / (g1 - g0) * (right - left)

    def sy(v):
        return bottom - (math.log10(v) - lo) / (hi - lo) * (bottom - top)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
           f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>']
    for g in gammas:
        x = sx(g)
        out.append(f'<line x1="{x:.2f}" y1="{bottom}" x2="{x:.2f}" y2="{bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{bottom + 18}" text-anchor="middle">{g:g}</text>')
    for e in range(lo, hi + 1):
        y = sy(10.0 ** e)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{right}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{(left + right) / 2:.2f}" y="{height - 15}" text-anchor="middle">'
               'Intersection angle (deg)</text>')
    out.append(f'<text x="18" y="{(top + bottom) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(top + bottom) / 2:.2f})">{ylabel}</text>')
    for i, (name, pts) in enumerate(sorted(series.items())):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{sx(g):.2f},{sy(v):.2f}" for g, v in pts)
        out.append(f'<polyline data-algorithm="{name}" fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{coords}"/>')
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{right + 15}" y1="{ly}" x2="{right + 40}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{right + 46}" y="{ly + 4}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(stats, path, kind="median_vs_gamma"):
    """Write a standalone SVG of median or RMS error against gamma."""
    Path(path).write_text(render_plot(stats, kind), encoding="utf-8", newline="\n")
