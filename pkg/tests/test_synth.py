"""Synthetic renderer tests: exactness of depth, poses, and determinism."""

import hashlib
from pathlib import Path

import numpy as np
import pytest

from rtmv.data import load_manifest
from rtmv.geometry import backproject, project
from rtmv.synth import (
    Box,
    GroundQuad,
    Scene,
    Sphere,
    SyntheticSceneConfig,
    build_scene,
    generate_synthetic_scene,
    look_at_pose,
    render_frame,
    trajectory_poses,
)


def oracle_ray_depth(scene, origin, direction):
    """Scalar-path intersection oracle: solves each primitive analytically with
    numpy.roots / explicit face enumeration rather than the renderer's algebra."""
    best = np.inf
    for prim in scene.primitives:
        if isinstance(prim, Sphere):
            oc = origin - prim.center
            coeffs = [direction @ direction, 2 * direction @ oc, oc @ oc - prim.radius**2]
            for root in np.roots(coeffs):
                if abs(root.imag) < 1e-12 and root.real > 1e-9:
                    best = min(best, root.real)
        elif isinstance(prim, Box):
            lo = prim.center - prim.half_extents
            hi = prim.center + prim.half_extents
            for axis in range(3):
                for plane in (lo[axis], hi[axis]):
                    if abs(direction[axis]) < 1e-14:
                        continue
                    t = (plane - origin[axis]) / direction[axis]
                    if t <= 1e-9:
                        continue
                    p = origin + t * direction
                    others = [a for a in range(3) if a != axis]
                    if all(lo[a] - 1e-9 <= p[a] <= hi[a] + 1e-9 for a in others):
                        best = min(best, t)
        elif isinstance(prim, GroundQuad):
            if abs(direction[2]) < 1e-14:
                continue
            t = (prim.z - origin[2]) / direction[2]
            if t > 1e-9:
                p = origin + t * direction
                if abs(p[0]) <= prim.half_size and abs(p[1]) <= prim.half_size:
                    best = min(best, t)
    return best


def surface_distance(scene, points):
    return np.min(
        np.stack([prim.surface_distance(points) for prim in scene.primitives]), axis=0
    )


@pytest.fixture(scope="module")
def small_config():
    return SyntheticSceneConfig(name="unit", image_size=32, frames_per_trajectory=3, seed=5)


@pytest.fixture(scope="module")
def generated(tmp_path_factory, small_config):
    out = tmp_path_factory.mktemp("scene")
    manifest = generate_synthetic_scene(small_config, out)
    return small_config, out, manifest


class TestLookAt:
    def test_camera_looks_at_target(self):
        center = np.array([3.0, -2.0, 1.5])
        target = np.array([0.1, 0.2, 0.5])
        pose = look_at_pose(center, target)
        cam = pose.transform(target[None])[0]
        assert cam[0] == pytest.approx(0.0, abs=1e-12)
        assert cam[1] == pytest.approx(0.0, abs=1e-12)
        assert cam[2] == pytest.approx(np.linalg.norm(target - center), abs=1e-12)

    def test_rotation_proper(self):
        pose = look_at_pose(np.array([4.0, 0.0, 2.0]), np.zeros(3))
        assert np.linalg.det(pose.rotation) == pytest.approx(1.0, abs=1e-12)
        # y axis points downward in world (negative z component)
        assert pose.rotation[1, 2] < 0


class TestRenderExactness:
    def test_depth_matches_scalar_oracle(self, generated):
        config, _, manifest = generated
        scene = build_scene(config)
        frame = next(f for f in manifest.frames if f.modality == "rgb")
        _, _, depth = render_frame(scene, frame.pose, frame.intrinsics)
        rng = np.random.default_rng(0)
        K = frame.intrinsics
        origin = frame.pose.camera_center()
        R = frame.pose.rotation
        for _ in range(60):
            v = int(rng.integers(0, K.height))
            u = int(rng.integers(0, K.width))
            d_cam = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
            t = oracle_ray_depth(scene, origin, R.T @ d_cam)
            if np.isinf(t):
                assert depth[v, u] == 0.0
            else:
                assert depth[v, u] == pytest.approx(t, abs=1e-5)

    def test_backprojected_depth_lies_on_surfaces(self, generated):
        config, _, manifest = generated
        scene = build_scene(config)
        for frame in manifest.frames[:4]:
            depth, valid = manifest.load_depth(frame)
            cloud = backproject(depth.astype(np.float64), valid, frame.pose, frame.intrinsics)
            dist = surface_distance(scene, cloud.points)
            assert dist.max() < 1e-4

    def test_project_backproject_round_trip_on_gt(self, generated):
        _, _, manifest = generated
        frame = manifest.frames[0]
        depth, valid = manifest.load_depth(frame)
        cloud = backproject(depth.astype(np.float64), valid, frame.pose, frame.intrinsics)
        uvz, ok = project(cloud, frame.pose, frame.intrinsics)
        assert ok.all()
        vv, uu = np.nonzero(valid)
        np.testing.assert_allclose(uvz[:, 0], uu, atol=1e-6)
        np.testing.assert_allclose(uvz[:, 1], vv, atol=1e-6)


class TestDeterminism:
    def test_same_seed_byte_identical(self, tmp_path, small_config):
        def checksum(root: Path) -> dict:
            return {
                p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
                for p in sorted(root.rglob("*"))
                if p.is_file()
            }

        a, b = tmp_path / "a", tmp_path / "b"
        generate_synthetic_scene(small_config, a)
        generate_synthetic_scene(small_config, b)
        assert checksum(a) == checksum(b)

    def test_seed_override_changes_content(self, tmp_path, small_config):
        m1 = generate_synthetic_scene(small_config, tmp_path / "s1", seed=5)
        m2 = generate_synthetic_scene(small_config, tmp_path / "s2", seed=6)
        d1, _ = m1.load_depth(m1.frames[0])
        d2, _ = m2.load_depth(m2.frames[0])
        assert not np.array_equal(d1, d2)


class TestSceneStructure:
    def test_manifest_validates_and_is_paired(self, generated):
        _, out, _ = generated
        scene = load_manifest(out / "manifest.json")
        assert scene.is_paired()
        assert scene.trajectories() == [0, 1]
        n = 3  # frames_per_trajectory
        assert len(scene.frames) == 2 * n * 2  # two modalities, two trajectories

    def test_two_trajectories_have_distinct_poses(self, small_config):
        p0 = trajectory_poses(small_config, 0)
        p1 = trajectory_poses(small_config, 1)
        assert len(p0) == len(p1) == 3
        c0 = np.stack([p.camera_center() for p in p0])
        c1 = np.stack([p.camera_center() for p in p1])
        assert np.linalg.norm(c0 - c1, axis=1).min() > 0.15

    def test_thermal_and_rgb_share_pose_groups(self, generated):
        _, _, manifest = generated
        for group, frames in manifest.pose_groups().items():
            assert sorted(f.modality for f in frames) == ["rgb", "thermal"]
            poses = [f.pose for f in frames]
            assert poses[0].approx_equal(poses[1])

    def test_images_carry_texture(self, generated):
        # both modalities must have spatial structure for pose learning
        _, _, manifest = generated
        for frame in manifest.frames[:2]:
            img = manifest.load_image(frame)
            assert img.std() > 0.05
