"""Rigid-body geometry: quaternions, poses, and point clouds.

Quaternions are stored (w, x, y, z). Rotation matrices are built with the
norm-invariant form R(q) = A(q) / ||q||^2, so every rotation-dependent
quantity is a smooth function of the raw quaternion components and can be
checked against finite differences without renormalization bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIT_NORM_TOL = 1e-9


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError("quaternion norm is zero or non-finite")
    return q / n


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (not necessarily unit) quaternion."""
    w, x, y, z = q
    n = w * w + x * x + y * y + z * z
    if n < 1e-24:
        raise ValueError("quaternion norm is zero")
    s = 2.0 / n
    return np.array(
        [
            [1.0 - s * (y * y + z * z), s * (x * y - w * z), s * (x * z + w * y)],
            [s * (x * y + w * z), 1.0 - s * (x * x + z * z), s * (y * z - w * x)],
            [s * (x * z - w * y), s * (y * z + w * x), 1.0 - s * (x * x + y * y)],
        ]
    )


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        raise ValueError("rotation axis has zero norm")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_geodesic_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle of the relative rotation between two unit quaternions, in [0, pi]."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * np.arccos(min(1.0, d))


def rotation_x(angle: float) -> np.ndarray:
    return quat_to_matrix(quat_from_axis_angle([1.0, 0.0, 0.0], angle))


def rotation_y(angle: float) -> np.ndarray:
    return quat_to_matrix(quat_from_axis_angle([0.0, 1.0, 0.0], angle))


def rotation_z(angle: float) -> np.ndarray:
    return quat_to_matrix(quat_from_axis_angle([0.0, 0.0, 1.0], angle))


@dataclass(frozen=True, eq=False)
class RigidPose:
    """SE(3) transform as translation + unit quaternion (w, x, y, z).

    Applying the pose maps points from the child frame into the parent
    frame: p_parent = R(q) p_child + t. The quaternion is normalized at
    construction; the unit-norm defect afterwards is below 1e-9.
    """

    translation: np.ndarray
    quaternion: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        q = quat_normalize(self.quaternion)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", q)

    @staticmethod
    def identity() -> "RigidPose":
        return RigidPose(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_axis_angle(axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        return RigidPose(np.asarray(translation, dtype=float), quat_from_axis_angle(axis, angle))

    @staticmethod
    def from_matrix(rotation: np.ndarray, translation) -> "RigidPose":
        return RigidPose(np.asarray(translation, dtype=float), matrix_to_quat(rotation))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = pts @ self.rotation_matrix().T + self.translation
        return out if np.asarray(points).ndim == 2 else out[0]

    def rotate_vectors(self, vectors: np.ndarray) -> np.ndarray:
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        out = v @ self.rotation_matrix().T
        return out if np.asarray(vectors).ndim == 2 else out[0]

    def inverse(self) -> "RigidPose":
        r_inv = self.rotation_matrix().T
        return RigidPose(-r_inv @ self.translation, quat_conjugate(self.quaternion))

    def compose(self, other: "RigidPose") -> "RigidPose":
        """self @ other: apply `other` first, then `self`."""
        return RigidPose(
            self.rotation_matrix() @ other.translation + self.translation,
            quat_multiply(self.quaternion, other.quaternion),
        )

    def to_vector(self) -> np.ndarray:
        """7-vector [tx ty tz qw qx qy qz]."""
        return np.concatenate([self.translation, self.quaternion])

    @staticmethod
    def from_vector(theta: np.ndarray) -> "RigidPose":
        theta = np.asarray(theta, dtype=float).reshape(7)
        return RigidPose(theta[:3], theta[3:])

    def __repr__(self):
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.quaternion)
        return f"RigidPose(t=[{t}], q=[{q}])"


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix (Shepperd's method)."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1e-15, 1.0 + r[i, i] - r[j, j] - r[k, k])) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    return quat_normalize(q)


@dataclass(eq=False)
class PointCloud:
    """Ordered 3D points with the frame they are expressed in."""

    points: np.ndarray
    frame: str = "T"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite points")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    def transformed(self, pose: RigidPose, frame: str) -> "PointCloud":
        if len(self) == 0:
            return PointCloud(np.zeros((0, 3)), frame)
        return PointCloud(pose.transform_points(self.points), frame)

    @property
    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise ValueError("centroid of empty cloud")
        return self.points.mean(axis=0)
