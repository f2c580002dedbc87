"""Pinhole camera model, projection matrices and linear triangulation.

Conventions
-----------
* World frame: local East-North-Up Cartesian, meters.
* Camera frame: +z along the optical axis, +x right, +y down (image rows).
* ``PlatformPose.rotation`` maps world vectors into the camera frame, so a
  world point ``X`` has camera coordinates ``R @ (X - position)``.
* Euler angles at the I/O boundary are yaw-pitch-roll in degrees, applied
  as intrinsic Z-Y-X rotations.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateGeometry, DepthDegenerate, DimensionError, InsufficientViews, NonFiniteError

#: Depths with magnitude at or below this are treated as degenerate.
DEPTH_EPS = 1e-9


class CheiralityWarning(UserWarning):
    """The triangulated point lies behind most of the cameras."""


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float = 0.0
    cy: float = 0.0
    skew: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        for name in ("fx", "fy", "cx", "cy", "skew"):
            if not np.isfinite(getattr(self, name)):
                raise NonFiniteError(f"intrinsic {name} is not finite")

    @property
    def K(self):
        return np.array([[self.fx, self.skew, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def scaled(self, factor):
        """Intrinsics of the same lens with every pixel quantity multiplied by ``factor``."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor, self.cx * factor,
                                self.cy * factor, self.skew * factor)


@dataclass(frozen=True, eq=False)
class PlatformPose:
    """Camera position (world, meters) and world-to-camera attitude.

    The attitude is stored as a unit quaternion in scalar-last ``(x, y, z, w)``
    order; :attr:`rotation` is the derived 3x3 matrix.
    """

    position: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.quaternion, dtype=float).reshape(4)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            raise NonFiniteError("pose contains NaN or Inf")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"quaternion must have unit norm, got {np.linalg.norm(q)!r}")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def from_matrix(cls, position, rotation):
        q = Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat()
        return cls(position, q / np.linalg.norm(q))

    @classmethod
    def from_euler(cls, position, yaw_deg, pitch_deg, roll_deg):
        q = Rotation.from_euler("ZYX", [yaw_deg, pitch_deg, roll_deg], degrees=True).as_quat()
        return cls(position, q / np.linalg.norm(q))

    @classmethod
    def looking_at(cls, position, target, up=(0.0, 0.0, 1.0)):
        """Pose whose optical axis passes through ``target`` (image rows point down)."""
        position = np.asarray(position, dtype=float)
        forward = np.asarray(target, dtype=float) - position
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, up)
        if np.linalg.norm(right) < 1e-12:
            right = np.cross(forward, (0.0, 1.0, 0.0))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        return cls.from_matrix(position, np.vstack([right, down, forward]))

    @cached_property
    def rotation(self):
        return Rotation.from_quat(self.quaternion).as_matrix()

    @property
    def translation(self):
        return -self.rotation @ self.position

    @property
    def optical_axis(self):
        """Unit viewing direction in world coordinates."""
        return self.rotation[2].copy()

    def euler_deg(self):
        """``(yaw, pitch, roll)`` in degrees, intrinsic Z-Y-X."""
        return tuple(Rotation.from_quat(self.quaternion).as_euler("ZYX", degrees=True))


class ProjectionMatrix:
    """A 3x4 world-to-pixel matrix with row-major accessors ``m0`` ... ``m11``."""

    __slots__ = ("array",)

    def __init__(self, array):
        array = np.array(array, dtype=float)
        if array.shape != (3, 4):
            raise DimensionError(f"projection matrix must be 3x4, got {array.shape}")
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("projection matrix contains NaN or Inf")
        if np.linalg.norm(array[2, :3]) == 0.0:
            raise DegenerateGeometry("projection matrix has a zero depth row")
        array.setflags(write=False)
        self.array = array

    def __getattr__(self, name):
        if name.startswith("m") and name[1:].isdigit():
            idx = int(name[1:])
            if 0 <= idx < 12:
                return float(self.array.flat[idx])
        raise AttributeError(name)

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)

    def __repr__(self):
        return f"ProjectionMatrix({self.array.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, ProjectionMatrix) and np.array_equal(self.array, other.array)

    __hash__ = None


def build_projection(camera, pose):
    """``M = K [R | T]`` with ``T = -R @ position``."""
    R = pose.rotation
    Rt = np.hstack([R, (-R @ pose.position)[:, None]])
    return ProjectionMatrix(camera.K @ Rt)


def project(M, X):
    """Pixel coordinates of world point ``X`` under projection ``M``."""
    M = np.asarray(M)
    h = M[:, :3] @ np.asarray(X, dtype=float) + M[:, 3]
    if abs(h[2]) <= DEPTH_EPS:
        raise DepthDegenerate(f"point has depth {h[2]!r} in this view")
    return h[:2] / h[2]


def stack_projections(projections):
    """Stack projection matrices into an ``(n, 3, 4)`` array."""
    return np.stack([np.asarray(M, dtype=float) for M in projections])


def forward_intersection(projections, pixels):
    """Linear (DLT) triangulation of one point seen in two or more views.

    Each view contributes the rows ``x*m_3 - m_1`` and ``y*m_3 - m_2``; rows are
    scaled to unit norm before the homogeneous system is solved by SVD.
    """
    Ms = stack_projections(projections)
    px = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if Ms.shape[0] != px.shape[0]:
        raise DimensionError(f"{Ms.shape[0]} projections but {px.shape[0]} pixels")
    if Ms.shape[0] < 2:
        raise InsufficientViews("forward intersection needs at least two views")
    if not np.all(np.isfinite(px)):
        raise NonFiniteError("pixel coordinates contain NaN or Inf")

    rows = np.concatenate([
        px[:, 0:1] * Ms[:, 2] - Ms[:, 0],
        px[:, 1:2] * Ms[:, 2] - Ms[:, 1],
    ])
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    rows = rows / np.where(norms > 0, norms, 1.0)

    _, s, vt = np.linalg.svd(rows)
    # rank of the 4-column homogeneous system must be at least 3
    if s[2] <= s[0] * 1e-12:
        raise DegenerateGeometry("triangulation system has rank below 3")
    Xh = vt[-1]
    if abs(Xh[3]) <= 1e-15 * np.linalg.norm(Xh):
        raise DegenerateGeometry("triangulated point lies at infinity (parallel rays)")
    X = Xh[:3] / Xh[3]

    depths = Ms[:, 2, :3] @ X + Ms[:, 2, 3]
    if np.count_nonzero(depths > 0) * 2 <= len(depths):
        warnings.warn("triangulated point lies behind the majority of cameras", CheiralityWarning, stacklevel=2)
    return X


def pixel_ray(camera, pose, pixel):
    """Unit world-frame direction of the ray through ``pixel``."""
    u = np.linalg.solve(camera.K, np.array([pixel[0], pixel[1], 1.0]))
    d = pose.rotation.T @ u
    return d / np.linalg.norm(d)
