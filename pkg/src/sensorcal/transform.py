"""Rigid-transform and quaternion algebra used by every other module.

Conventions:
    * Quaternions are stored (w, x, y, z), unit norm, sign-canonicalized to
      w >= 0 (q and -q encode the same rotation).
    * Euler angles are intrinsic roll-about-x, pitch-about-y, yaw-about-z,
      i.e. the rotation matrix is Rz(yaw) @ Ry(pitch) @ Rx(roll).
    * Angles are radians and translations meters everywhere inside the
      library; degrees/centimeters appear only at reporting boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .data import PointCloud

__all__ = [
    "EulerPose",
    "RigidTransform",
    "apply",
    "compose",
    "from_euler",
    "invert",
    "quat_angular_distance",
    "to_euler",
    "transform_points",
    "translation_distance",
]


@dataclass(frozen=True)
class EulerPose:
    """6-DoF pose as Euler angles (radians) plus translation (meters)."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self) -> None:
        values = (self.roll, self.pitch, self.yaw, self.tx, self.ty, self.tz)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"EulerPose components must be finite, got {values}")

    def as_array(self) -> np.ndarray:
        """Coordinates ordered (roll, pitch, yaw, tx, ty, tz)."""
        return np.array(
            [self.roll, self.pitch, self.yaw, self.tx, self.ty, self.tz], dtype=float
        )

    @classmethod
    def from_array(cls, v) -> "EulerPose":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(roll=v[0], pitch=v[1], yaw=v[2], tx=v[3], ty=v[4], tz=v[5])


def _canonical_sign(q: np.ndarray) -> np.ndarray:
    # w >= 0; for w == 0 the first nonzero vector component is made positive
    # so equal rotations always compare equal component-wise.
    if q[0] < 0.0:
        return -q
    if q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                return -q if c < 0.0 else q
    return q


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) element as unit quaternion (w, x, y, z) plus translation."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=float).reshape(4)
        t = np.array(self.t, dtype=float).reshape(3)
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("RigidTransform components must be finite")
        norm = math.sqrt(float(q @ q))
        if norm < 1e-12:
            raise ValueError("quaternion norm is zero")
        q = _canonical_sign(q / norm)
        q.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(q=np.array([1.0, 0.0, 0.0, 0.0]), t=np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        return cls(q=np.array([1.0, 0.0, 0.0, 0.0]), t=np.array([x, y, z], dtype=float))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        """Build from a 4x4 homogeneous (or 3x4 [R|t]) matrix."""
        m = np.asarray(m, dtype=float)
        if m.shape == (3, 4):
            r, t = m[:, :3], m[:, 3]
        elif m.shape == (4, 4):
            r, t = m[:3, :3], m[:3, 3]
        else:
            raise ValueError(f"expected 3x4 or 4x4 matrix, got shape {m.shape}")
        return cls(q=_quat_from_rotation_matrix(r), t=t)

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.t
        return m


def _quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _quat_from_rotation_matrix(r: np.ndarray) -> np.ndarray:
    # Shepperd's method: pick the largest diagonal pivot for stability.
    trace = r[0, 0] + r[1, 1] + r[2, 2]
    if trace > 0.0:
        s = math.sqrt(trace + 1.0) * 2.0
        return np.array(
            [
                0.25 * s,
                (r[2, 1] - r[1, 2]) / s,
                (r[0, 2] - r[2, 0]) / s,
                (r[1, 0] - r[0, 1]) / s,
            ]
        )
    i = int(np.argmax([r[0, 0], r[1, 1], r[2, 2]]))
    if i == 0:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        return np.array(
            [
                (r[2, 1] - r[1, 2]) / s,
                0.25 * s,
                (r[0, 1] + r[1, 0]) / s,
                (r[0, 2] + r[2, 0]) / s,
            ]
        )
    if i == 1:
        s = math.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
        return np.array(
            [
                (r[0, 2] - r[2, 0]) / s,
                (r[0, 1] + r[1, 0]) / s,
                0.25 * s,
                (r[1, 2] + r[2, 1]) / s,
            ]
        )
    s = math.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
    return np.array(
        [
            (r[1, 0] - r[0, 1]) / s,
            (r[0, 2] + r[2, 0]) / s,
            (r[1, 2] + r[2, 1]) / s,
            0.25 * s,
        ]
    )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition a then-applied-after b: result.matrix() == a.matrix() @ b.matrix()."""
    q = _quat_mul(a.q, b.q)
    t = a.rotation_matrix() @ b.t + a.t
    return RigidTransform(q=q, t=t)


def invert(a: RigidTransform) -> RigidTransform:
    q_inv = np.array([a.q[0], -a.q[1], -a.q[2], -a.q[3]])
    t_inv = -(a.rotation_matrix().T @ a.t)
    return RigidTransform(q=q_inv, t=t_inv)


def transform_points(a: RigidTransform, xyz: np.ndarray) -> np.ndarray:
    """Apply the rigid motion to an (N, 3) array of points."""
    xyz = np.asarray(xyz, dtype=float)
    return xyz @ a.rotation_matrix().T + a.t


def apply(a: RigidTransform, pts: "PointCloud") -> "PointCloud":
    """Transform the spatial coordinates of a cloud; channels pass through."""
    return replace(pts, xyz=transform_points(a, pts.xyz))


def from_euler(e: EulerPose) -> RigidTransform:
    """Rotation Rz(yaw) @ Ry(pitch) @ Rx(roll), translation copied."""
    half_r, half_p, half_y = 0.5 * e.roll, 0.5 * e.pitch, 0.5 * e.yaw
    qx = np.array([math.cos(half_r), math.sin(half_r), 0.0, 0.0])
    qy = np.array([math.cos(half_p), 0.0, math.sin(half_p), 0.0])
    qz = np.array([math.cos(half_y), 0.0, 0.0, math.sin(half_y)])
    q = _quat_mul(qz, _quat_mul(qy, qx))
    return RigidTransform(q=q, t=np.array([e.tx, e.ty, e.tz], dtype=float))


def to_euler(a: RigidTransform) -> EulerPose:
    """Inverse of from_euler; pitch is clamped at the +-pi/2 gimbal points."""
    r = a.rotation_matrix()
    sin_pitch = max(-1.0, min(1.0, -r[2, 0]))
    pitch = math.asin(sin_pitch)
    if abs(sin_pitch) < 1.0 - 1e-12:
        roll = math.atan2(r[2, 1], r[2, 2])
        yaw = math.atan2(r[1, 0], r[0, 0])
    else:
        # Gimbal lock: only roll +- yaw is observable; put it all in roll.
        roll = math.atan2(-r[1, 2], r[1, 1])
        yaw = 0.0
    return EulerPose(
        roll=roll, pitch=pitch, yaw=yaw, tx=a.t[0], ty=a.t[1], tz=a.t[2]
    )


def quat_angular_distance(q1, q2) -> float:
    """Geodesic angle in [0, pi] between two unit quaternions, sign-invariant."""
    q1 = np.asarray(q1, dtype=float).reshape(4)
    q2 = np.asarray(q2, dtype=float).reshape(4)
    dot = min(1.0, abs(float(q1 @ q2)))
    return 2.0 * math.acos(dot)


def translation_distance(t1, t2) -> float:
    t1 = np.asarray(t1, dtype=float).reshape(3)
    t2 = np.asarray(t2, dtype=float).reshape(3)
    return float(np.linalg.norm(t1 - t2))
