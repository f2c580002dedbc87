"""Range-only localization and the single-shot line-of-sight baseline."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, NonFiniteError, StationCoincidence
from .solver import SolverConfig, gauss_newton

COINCIDENCE_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class RangeObservation:
    station: np.ndarray
    range: float

    def __post_init__(self):
        s = np.asarray(self.station, dtype=float).reshape(3)
        if not (np.all(np.isfinite(s)) and np.isfinite(self.range)):
            raise NonFiniteError("range observation must be finite")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range!r}")
        object.__setattr__(self, "station", s)
        object.__setattr__(self, "range", float(self.range))


@dataclass(frozen=True, eq=False)
class LosObservation:
    """Station, unit line-of-sight direction (world frame) and measured range."""

    station: np.ndarray
    ray: np.ndarray
    range: float

    def __post_init__(self):
        s = np.asarray(self.station, dtype=float).reshape(3)
        u = np.asarray(self.ray, dtype=float).reshape(3)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError("ray must be a unit vector")
        if not self.range > 0:
            raise ValueError(f"range must be positive, got {self.range!r}")
        object.__setattr__(self, "station", s)
        object.__setattr__(self, "ray", u)


def _unpack(observations):
    S = np.array([o.station for o in observations], dtype=float).reshape(-1, 3)
    d = np.array([o.range for o in observations], dtype=float)
    return S, d


def _offsets(S, x):
    diff = np.asarray(x, dtype=float) - S
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if dist.min() <= COINCIDENCE_EPS:
        bad = int(np.argmax(dist <= COINCIDENCE_EPS))
        raise StationCoincidence(f"estimate coincides with station {bad}", index=bad)
    return diff, dist


def _linearize(S, d, x):
    diff, dist = _offsets(S, x)
    return d - dist, diff / dist[:, None]


def range_residuals(observations, x0):
    """Measured minus predicted distance for each station."""
    S, d = _unpack(observations)
    _, dist = _offsets(S, x0)
    return d - dist


def range_jacobian(observations, x0):
    """Rows are unit vectors from each station toward ``x0``.

    The denominator is the predicted distance at ``x0`` so the matrix is the
    true derivative of the residual model.
    """
    S, _ = _unpack(observations)
    diff, dist = _offsets(S, x0)
    return diff / dist[:, None]


def solve_range(observations, x0, config=None):
    config = config or SolverConfig()
    if len(observations) < 3:
        raise DegenerateGeometry(f"{len(observations)} ranges cannot determine 3 unknowns")
    S, d = _unpack(observations)
    return gauss_newton(lambda x: _linearize(S, d, x), x0, config, algorithm="range")


def los_single_shot(obs):
    """Target = station + range * ray."""
    return obs.station + obs.range * obs.ray
