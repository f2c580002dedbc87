"""Gauss-Newton target localization from pixel observations."""

from dataclasses import dataclass

import numpy as np

from .camera import DEPTH_EPS, ProjectionMatrix, forward_intersection, stack_projections
from .errors import DegenerateGeometry, DepthDegenerate, NonFiniteError
from .solver import SolverConfig, gauss_newton


@dataclass(frozen=True, eq=False)
class VisionObservation:
    projection: ProjectionMatrix
    pixel: np.ndarray

    def __post_init__(self):
        if not isinstance(self.projection, ProjectionMatrix):
            object.__setattr__(self, "projection", ProjectionMatrix(self.projection))
        px = np.asarray(self.pixel, dtype=float).reshape(2)
        if not np.all(np.isfinite(px)):
            raise NonFiniteError("pixel coordinates must be finite")
        object.__setattr__(self, "pixel", px)


def _unpack(observations):
    Ms = stack_projections([o.projection for o in observations])
    px = np.array([o.pixel for o in observations], dtype=float)
    return Ms, px


def _numerators(Ms, X):
    """Per-frame ``(M1, M2, M3)`` evaluated at ``X``; shape ``(n, 3)``."""
    h = Ms[:, :, :3] @ np.asarray(X, dtype=float) + Ms[:, :, 3]
    if np.abs(h[:, 2]).min() <= DEPTH_EPS:
        bad = int(np.argmax(np.abs(h[:, 2]) <= DEPTH_EPS))
        raise DepthDegenerate(f"point has degenerate depth in frame {bad}", frame=bad)
    return h


def _predict(Ms, X):
    h = _numerators(Ms, X)
    return h[:, :2] / h[:, 2:3]


def _jacobian(Ms, h, uv=None):
    inv = 1.0 / h[:, 2:3]
    if uv is None:
        uv = h[:, :2] * inv
    # d(M_k/M_3)/dX_j = m_{k,j}/M_3 - m_{2,j} M_k / M_3^2
    J = (Ms[:, :2, :3] - uv[:, :, None] * Ms[:, 2:3, :3]) * inv[:, :, None]
    return J.reshape(-1, 3)


def _linearize(Ms, px, X):
    h = _numerators(Ms, X)
    uv = h[:, :2] / h[:, 2:3]
    return (px - uv).reshape(-1), _jacobian(Ms, h, uv)


def vision_residuals(observations, X0):
    """Observed minus predicted pixels, ordered ``(x1, y1, x2, y2, ...)``."""
    Ms, px = _unpack(observations)
    return (px - _predict(Ms, X0)).reshape(-1)


def vision_jacobian(projections, X0):
    """``2n x 3`` Jacobian of the predicted pixels with respect to the target."""
    Ms = stack_projections(projections)
    return _jacobian(Ms, _numerators(Ms, X0))


def initial_guess(observations):
    """Forward intersection of all frames, the default starting point."""
    return forward_intersection([o.projection for o in observations], [o.pixel for o in observations])


def solve_vision(observations, X0=None, config=None):
    """Iterate pixel-residual Gauss-Newton from ``X0`` (forward intersection if None)."""
    config = config or SolverConfig()
    if len(observations) < 2:
        raise DegenerateGeometry(f"{len(observations)} frame(s) give {2 * len(observations)} equations for 3 unknowns")
    Ms, px = _unpack(observations)
    if X0 is None:
        X0 = initial_guess(observations)
    return gauss_newton(lambda X: _linearize(Ms, px, X), X0, config, algorithm="vision")
