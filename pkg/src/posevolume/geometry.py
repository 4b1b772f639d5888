"""Pinhole camera model, rigid poses, frustum tests and pose-error metrics.

Conventions
-----------
* A pose maps world points into the camera frame: ``q = R @ p + t``.
* Camera frame: x right, y down, z forward. The "up" axis is therefore -y,
  and yaw is a rotation about y.
* Euler angles (degrees) are intrinsic yaw-pitch-roll about y, x, z:
  ``R = Ry(yaw) @ Rx(pitch) @ Rz(roll)``.
* Pixels are half-open unit squares; continuous image coordinates are
  floored to integer indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

ORTHO_TOL = 1e-9
# q_z in (0, MIN_DEPTH] counts as behind the camera.
MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be >= 1, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def _check_rotation(R: np.ndarray, name: str = "rotation") -> None:
    if R.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError(f"{name} has non-finite entries")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ORTHO_TOL:
        raise ValueError(f"{name} is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
        raise ValueError(f"{name} has determinant {np.linalg.det(R)!r}, expected 1")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid world-to-camera transform ``[R | t]``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        _check_rotation(R)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation has non-finite entries")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def transform(self, points: np.ndarray) -> np.ndarray:
        return transform_points(points, self.rotation, self.translation)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
                and np.allclose(self.translation, other.translation, rtol=0, atol=atol))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def to_dict(self) -> dict:
        return {
            "rotation": [float(x) for x in self.rotation.reshape(-1)],
            "translation": [float(x) for x in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
                   np.asarray(d["translation"], dtype=np.float64))


def as_cloud(points) -> np.ndarray:
    """Validate and return an ``(N, 3)`` float64 point array."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"point cloud must be N x 3, got shape {pts.shape}")
    if pts.shape[0] < 1:
        raise ValueError("point cloud is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud has non-finite coordinates")
    return pts


def transform_points(points, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    """``R @ p + t`` for each row, with a fixed summation order.

    The order matches the scalar and compiled projection paths so that all
    of them floor to identical pixels.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    q = np.empty_like(p)
    for r in range(3):
        q[:, r] = R[r, 0] * x + R[r, 1] * y + R[r, 2] * z + t[r]
    return q


class PixelCoord(NamedTuple):
    u: int
    v: int
    depth: float


def project(point, pose: Pose, intrinsics: CameraIntrinsics) -> Optional[PixelCoord]:
    """Project one world point; ``None`` when behind the camera or off-image."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise ValueError("point has non-finite coordinates")
    q = transform_points(p, pose.rotation, pose.translation)[0]
    if q[2] <= MIN_DEPTH:
        return None
    u = math.floor(intrinsics.fx * q[0] / q[2] + intrinsics.cx)
    v = math.floor(intrinsics.fy * q[1] / q[2] + intrinsics.cy)
    if 0 <= u < intrinsics.width and 0 <= v < intrinsics.height:
        return PixelCoord(int(u), int(v), float(q[2]))
    return None


def project_continuous(cam_points: np.ndarray, intrinsics: CameraIntrinsics):
    """Continuous image coordinates of camera-frame points.

    Returns ``(uv, valid)`` where ``uv`` is ``(N, 2)`` (pre-floor) and
    ``valid`` marks points with positive depth landing inside the image.
    """
    q = np.asarray(cam_points, dtype=np.float64)
    z = q[:, 2]
    front = z > MIN_DEPTH
    safe_z = np.where(front, z, 1.0)
    uv = np.empty((q.shape[0], 2))
    uv[:, 0] = intrinsics.fx * q[:, 0] / safe_z + intrinsics.cx
    uv[:, 1] = intrinsics.fy * q[:, 1] / safe_z + intrinsics.cy
    iu = np.floor(uv[:, 0])
    iv = np.floor(uv[:, 1])
    valid = front & (iu >= 0) & (iu < intrinsics.width) & (iv >= 0) & (iv < intrinsics.height)
    return uv, valid


def project_points(points: np.ndarray, pose: Pose, intrinsics: CameraIntrinsics):
    """Vectorized :func:`project`: returns integer ``(u, v)`` and a validity mask."""
    uv, valid = project_continuous(pose.transform(points), intrinsics)
    u = np.where(valid, np.floor(uv[:, 0]), -1).astype(np.int64)
    v = np.where(valid, np.floor(uv[:, 1]), -1).astype(np.int64)
    return u, v, valid


def frustum_mask(cloud: np.ndarray, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    return project_points(cloud, pose, intrinsics)[2]


def compose_pose(base: Pose, delta_rotation, delta_translation) -> Pose:
    """Left-multiply the rotation and add the translation offset."""
    dR = np.asarray(delta_rotation, dtype=np.float64).reshape(3, 3)
    _check_rotation(dR, "delta_rotation")
    dt = np.asarray(delta_translation, dtype=np.float64).reshape(3)
    return Pose(dR @ base.rotation, base.translation + dt)


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    angles = (yaw, pitch, roll)
    if not all(math.isfinite(a) for a in angles):
        raise ValueError(f"non-finite Euler angles {angles}")
    return (_rot_y(math.radians(yaw)) @ _rot_x(math.radians(pitch))
            @ _rot_z(math.radians(roll)))


def rotation_angle_deg(R_a: np.ndarray, R_b: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees.

    Same angle as ``arccos((trace(A^T B) - 1) / 2)``. Below 90 degrees it is
    evaluated through the chord ``|A - B|_F = sqrt(8) sin(angle / 2)``,
    which stays accurate near zero and is exactly 0 for equal matrices.
    """
    # sum(A * B) == trace(A^T B), and is exactly symmetric in its arguments
    c = (float(np.sum(R_a * R_b)) - 1.0) / 2.0
    if c < 0.0:
        return math.degrees(math.acos(max(-1.0, c)))
    chord = float(np.sqrt(np.sum((R_a - R_b) ** 2)))
    return math.degrees(2.0 * math.asin(min(1.0, chord / math.sqrt(8.0))))


def pose_errors(estimate: Pose, truth: Pose) -> tuple[float, float]:
    """Return ``(rre_degrees, rte_meters)``."""
    rre = rotation_angle_deg(estimate.rotation, truth.rotation)
    rte = float(np.linalg.norm(estimate.translation - truth.translation))
    return rre, rte
