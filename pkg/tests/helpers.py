"""Shared test utilities. Oracle code here stays independent of the paths it checks."""

from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from rtmv.geometry import CameraPose


def random_unit_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def random_pose(rng: np.random.Generator, t_scale: float = 2.0) -> CameraPose:
    return CameraPose(random_unit_quat(rng), rng.normal(scale=t_scale, size=3))


def pose_matrix_oracle(pose: CameraPose) -> np.ndarray:
    """4x4 homogeneous matrix via scipy, independent of rtmv's quaternion algebra."""
    w, x, y, z = pose.quat
    R = Rotation.from_quat([x, y, z, w]).as_matrix()
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = pose.t
    return T


def rotation_matrix_oracle(quat_wxyz: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_wxyz
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def random_rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=int(rng.integers(0, 2**31))).as_matrix()
