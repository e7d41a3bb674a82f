"""Rigid-body helpers: quaternions and world-to-camera poses (COLMAP convention)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion. Accepts (..., 4) arrays."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotmat_to_quat(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 for a single rotation matrix."""
    R = np.asarray(R, dtype=np.float64)
    # Shepperd's method via the symmetric 4x4 K matrix, as used by COLMAP's scripts.
    Rxx, Ryx, Rzx, Rxy, Ryy, Rzy, Rxz, Ryz, Rzz = R.flat
    K = np.array([
        [Rxx - Ryy - Rzz, 0, 0, 0],
        [Ryx + Rxy, Ryy - Rxx - Rzz, 0, 0],
        [Rzx + Rxz, Rzy + Ryz, Rzz - Rxx - Ryy, 0],
        [Ryz - Rzy, Rzx - Rxz, Rxy - Ryx, Rxx + Ryy + Rzz],
    ]) / 3.0
    eigvals, eigvecs = np.linalg.eigh(K)
    q = eigvecs[[3, 0, 1, 2], np.argmax(eigvals)]
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_angle(R) -> float:
    """Rotation angle in radians of a 3x3 rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    s = np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    return float(np.arctan2(s, c))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.standard_normal(4)
    return quat_to_rotmat(q / np.linalg.norm(q))


def axis_angle_to_rotmat(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


@dataclass(frozen=True)
class Pose:
    """World-to-camera transform: p_cam = R(q) @ p_world + t.

    Stored exactly as a COLMAP images.txt record, so ``q`` is (w, x, y, z).
    """

    q: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    t: tuple[float, float, float] = (0.0, 0.0, 0.0)
    image_name: str = ""
    camera_id: int = 1
    image_id: int = 1
    _R: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        t = tuple(float(v) for v in self.t)
        if len(q) != 4 or len(t) != 3:
            raise ValueError("pose needs a 4-element quaternion and 3-element translation")
        if not np.all(np.isfinite(q + t)):
            raise ValueError("pose contains non-finite values")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"quaternion is not unit length (|q| = {np.linalg.norm(q)!r})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "_R", quat_to_rotmat(q))

    @classmethod
    def from_rt(cls, R, t, **kwargs) -> "Pose":
        return cls(q=tuple(rotmat_to_quat(R)), t=tuple(np.asarray(t, dtype=float)), **kwargs)

    @classmethod
    def look_from(cls, center, R_world_to_cam, **kwargs) -> "Pose":
        """Pose whose camera sits at ``center`` with the given orientation."""
        R = np.asarray(R_world_to_cam, dtype=np.float64)
        return cls.from_rt(R, -R @ np.asarray(center, dtype=np.float64), **kwargs)

    @property
    def R(self) -> np.ndarray:
        return self._R.copy()

    @property
    def t_vec(self) -> np.ndarray:
        return np.array(self.t)

    @property
    def center(self) -> np.ndarray:
        return -self._R.T @ np.array(self.t)

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self._R.T + np.array(self.t)

    def to_world(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.array(self.t)) @ self._R


IDENTITY_POSE = Pose()
