"""Rigid and similarity transforms, pinhole projection, and point-set alignment.

Pose convention throughout: camera-from-world, X_cam = R @ X_world + t.
Quaternions are (w, x, y, z) with q and -q denoting the same rotation.
All operations here are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

_UNIT_TOL = 1e-6


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise InvalidInputError("cannot normalize zero or non-finite quaternion")
    return q / n


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.asarray(a, dtype=np.float64)
    bw, bx, by, bz = np.asarray(b, dtype=np.float64)
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Fix the double-cover sign: w > 0, ties broken by the first nonzero component."""
    q = np.asarray(q, dtype=np.float64)
    for c in q:
        if c > 0.0:
            return q.copy()
        if c < 0.0:
            return -q
    raise InvalidInputError("zero quaternion has no canonical form")


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; numerically stable for all rotations."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise InvalidInputError(f"expected 3x3 rotation, got {R.shape}")
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    else:
        i = int(np.argmax(np.diag(R)))
        if i == 0:
            s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
            q = np.array(
                [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
            )
        elif i == 1:
            s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
            q = np.array(
                [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
            )
        else:
            s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
            q = np.array(
                [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
            )
    return quat_normalize(q)


@dataclass
class CameraPose:
    """Camera-from-world rigid transform: X_cam = R @ X_world + t."""

    quat: np.ndarray  # (4,) unit quaternion (w, x, y, z)
    t: np.ndarray  # (3,) world units

    def __post_init__(self):
        self.quat = np.asarray(self.quat, dtype=np.float64).reshape(4)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(self.quat)) and np.all(np.isfinite(self.t))):
            raise InvalidInputError("pose contains non-finite values")
        n = np.linalg.norm(self.quat)
        if abs(n - 1.0) > _UNIT_TOL:
            raise InvalidInputError(f"quaternion norm {n} is not 1 within {_UNIT_TOL}")
        self.quat = self.quat / n

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_rt(cls, R: np.ndarray, t: np.ndarray) -> "CameraPose":
        return cls(matrix_to_quat(R), np.asarray(t, dtype=np.float64))

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.t
        return T

    def inverse(self) -> "CameraPose":
        R = self.rotation
        return CameraPose(quat_conjugate(self.quat), -R.T @ self.t)

    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.t

    def transform(self, points: np.ndarray) -> np.ndarray:
        """World points (N, 3) -> camera frame."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.t

    def approx_equal(self, other: "CameraPose", atol: float = 1e-9) -> bool:
        """Pose equality under the quaternion double cover."""
        qd = min(
            np.max(np.abs(self.quat - other.quat)), np.max(np.abs(self.quat + other.quat))
        )
        return bool(qd <= atol and np.max(np.abs(self.t - other.t)) <= atol)


@dataclass
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def fov(self) -> tuple[float, float]:
        """(horizontal, vertical) field of view in radians."""
        return (
            2.0 * np.arctan(self.width / (2.0 * self.fx)),
            2.0 * np.arctan(self.height / (2.0 * self.fy)),
        )

    @classmethod
    def from_fov(cls, fov_x: float, fov_y: float, width: int, height: int) -> "Intrinsics":
        fx = width / (2.0 * np.tan(fov_x / 2.0))
        fy = height / (2.0 * np.tan(fov_y / 2.0))
        return cls(fx, fy, (width - 1) / 2.0, (height - 1) / 2.0, width, height)


@dataclass
class PointCloud:
    """World-space points with an optional per-point modality tag."""

    points: np.ndarray  # (N, 3)
    modality: np.ndarray | None = None  # (N,) of strings, optional

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("point cloud contains non-finite coordinates")
        if self.modality is not None:
            self.modality = np.asarray(self.modality)
            if self.modality.shape[0] != self.points.shape[0]:
                raise InvalidInputError("modality tags must match point count")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class SimilarityTransform:
    """x -> scale * rotation @ x + translation, with det(rotation) = +1."""

    scale: float
    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not self.scale > 0:
            raise InvalidInputError("similarity scale must be positive")
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))) > 1e-9:
            raise InvalidInputError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(self.rotation) < 0:
            raise InvalidInputError("rotation must have det +1")

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return self.scale * points @ self.rotation.T + self.translation


def relative_pose(a: CameraPose, b: CameraPose) -> CameraPose:
    """Pose of b's camera expressed in a's camera frame: R = R_b R_a^T, t = t_b - R t_a."""
    q = quat_mul(b.quat, quat_conjugate(a.quat))
    R = quat_to_matrix(q)
    return CameraPose(q, b.t - R @ a.t)


def rotation_angle_deg(q: np.ndarray) -> float:
    """Geodesic rotation angle 2*acos(|w|) in degrees, in [0, 180].

    Evaluated as 2*atan2(||xyz||, |w|), which is the same function but stays
    accurate near 0 and 180 degrees.
    """
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > _UNIT_TOL:
        raise InvalidInputError(f"quaternion norm {n} is not 1 within {_UNIT_TOL}")
    return float(np.degrees(2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))))


_TINY_NORM = 1e-9


def translation_angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between directions in degrees.

    Degenerate policy: both norms < 1e-9 -> 0; exactly one < 1e-9 -> 180
    (worst case when one side asserts motion the other lacks).
    Evaluated as atan2(||u x v||, u.v): identical to acos of the clamped
    normalized dot product but accurate near 0 and 180 degrees.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < _TINY_NORM and nv < _TINY_NORM:
        return 0.0
    if nu < _TINY_NORM or nv < _TINY_NORM:
        return 180.0
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v))))


def project(
    points: PointCloud | np.ndarray, pose: CameraPose, K: Intrinsics
) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection. Returns ((N, 3) of (u, v, z), valid mask with z > 0)."""
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    cam = pose.transform(pts)
    z = cam[:, 2]
    valid = z > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * cam[:, 0] / z + K.cx
        v = K.fy * cam[:, 1] / z + K.cy
    uvz = np.stack([u, v, z], axis=1)
    uvz[~valid, :2] = np.nan
    return uvz, valid


def backproject(
    depth: np.ndarray,
    valid: np.ndarray | None,
    pose: CameraPose,
    K: Intrinsics,
) -> PointCloud:
    """One world point per valid pixel: X_world = R^T (z * K^-1 (u, v, 1) - t)."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise InvalidInputError(f"depth must be 2-D, got shape {depth.shape}")
    h, w = depth.shape
    if valid is None:
        valid = np.isfinite(depth) & (depth > 0)
    else:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != depth.shape:
            raise InvalidInputError("valid mask shape must match depth")
        if not np.all(np.isfinite(depth[valid])):
            raise InvalidInputError("depth is non-finite on valid pixels")
    vv, uu = np.nonzero(valid)
    z = depth[vv, uu]
    x = (uu - K.cx) / K.fx * z
    y = (vv - K.cy) / K.fy * z
    cam = np.stack([x, y, z], axis=1)
    world = (cam - pose.t) @ pose.rotation
    return PointCloud(world)


def umeyama_align(src: np.ndarray, dst: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity (7-DoF) minimizing sum ||dst_i - (s R src_i + t)||^2.

    Applies the SVD sign correction so det(R) = +1.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise InvalidInputError("src and dst must have equal shapes")
    n = src.shape[0]
    if n < 3:
        raise DegenerateInputError(f"need at least 3 correspondences, got {n}")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    var_s = float(np.mean(np.sum(sc * sc, axis=1)))
    if var_s < 1e-18:
        raise DegenerateInputError("source points are all coincident")
    cov = dc.T @ sc / n
    U, D, Vt = np.linalg.svd(cov)
    if D[1] <= 1e-12 * max(D[0], 1e-30):
        raise DegenerateInputError("point configuration is rank-deficient (collinear)")
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    scale = float(np.trace(np.diag(D) @ S) / var_s)
    t = mu_d - scale * R @ mu_s
    return SimilarityTransform(scale, R, t)


def apply_similarity_to_pose(pose: CameraPose, sim: SimilarityTransform) -> CameraPose:
    """Re-express a camera-from-world pose after a similarity change of world frame.

    Camera centers map as c' = s R_g c + t_g and orientations as R' = R R_g^T,
    so relative rotations and translation directions between cameras are preserved.
    """
    Rp = pose.rotation @ sim.rotation.T
    cp = sim.apply(pose.camera_center().reshape(1, 3))[0]
    return CameraPose(matrix_to_quat(Rp), -Rp @ cp)


def random_pose(rng: np.random.Generator, t_scale: float = 1.0) -> CameraPose:
    """Uniformly random orientation with Gaussian translation; handy for tests and demos."""
    q = rng.normal(size=4)
    while np.linalg.norm(q) < 1e-6:
        q = rng.normal(size=4)
    return CameraPose(quat_normalize(q), rng.normal(scale=t_scale, size=3))
