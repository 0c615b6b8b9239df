"""Procedural two-modality scene generator with exact ground truth.

Scenes are built from analytic primitives (textured ground quad, axis-aligned
boxes, spheres), each carrying an albedo field for RGB shading and a
temperature field for the thermal channel. Cameras follow two orbit
trajectories around the scene. Rendering is per-pixel ray casting, so depth
maps are exact intersection distances (pinhole z, not ray length) and poses
and intrinsics are exact by construction. Everything is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    RGB,
    THERMAL,
    FrameRecord,
    SceneManifest,
    save_manifest,
    write_depth,
    write_rgb,
    write_thermal,
)
from .errors import ConfigError
from .geometry import CameraPose, Intrinsics

_EPS = 1e-9


@dataclass
class SyntheticSceneConfig:
    name: str = "scene"
    image_size: int = 64
    frames_per_trajectory: int = 12
    n_boxes: int = 2
    n_spheres: int = 2
    noise_level: float = 0.0  # pixel noise sigma on images (never on depth)
    temp_range: tuple[float, float] = (0.0, 40.0)  # degrees, scene normalization range
    focal_factor: float = 1.1  # fx = fy = focal_factor * image_size
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_trajectory < 2:
            raise ConfigError("need at least 2 frames per trajectory")
        if self.temp_range[0] >= self.temp_range[1]:
            raise ConfigError("temperature range must be increasing")


# ------------------------------------------------------------------ primitives


@dataclass
class Material:
    """Procedural surface fields shared by all primitive kinds.

    albedo(p) mixes two colors by a checker pattern; temperature(p) is a base
    level plus a sinusoidal spatial variation, so thermal images carry texture
    edges at geometry-determined positions.
    """

    color_a: np.ndarray
    color_b: np.ndarray
    checker_scale: float
    temp_base: float
    temp_amp: float
    temp_freq: np.ndarray  # (3,) spatial frequency of the temperature wave
    temp_phase: float

    def albedo(self, points: np.ndarray) -> np.ndarray:
        cells = np.floor(points / self.checker_scale).sum(axis=-1)
        mix = (cells % 2.0 == 0).astype(np.float64)[..., None]
        return mix * self.color_a + (1 - mix) * self.color_b

    def temperature(self, points: np.ndarray) -> np.ndarray:
        wave = np.sin(points @ self.temp_freq + self.temp_phase)
        square = np.sign(wave) * np.abs(wave) ** 0.5  # sharpen edges
        return self.temp_base + self.temp_amp * square


@dataclass
class Sphere:
    center: np.ndarray
    radius: float
    material: Material

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origin - self.center
        a = np.sum(dirs * dirs, axis=-1)
        b = 2.0 * dirs @ oc
        c = oc @ oc - self.radius**2
        disc = b * b - 4 * a * c
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t0 = (-b - sq) / (2 * a)
        t1 = (-b + sq) / (2 * a)
        t = np.where(t0 > _EPS, t0, t1)
        return np.where(hit & (t > _EPS), t, np.inf)

    def normal(self, points: np.ndarray) -> np.ndarray:
        n = points - self.center
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(points - self.center, axis=-1) - self.radius)


@dataclass
class Box:
    """Axis-aligned box."""

    center: np.ndarray
    half_extents: np.ndarray
    material: Material

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        lo = self.center - self.half_extents
        hi = self.center + self.half_extents
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t_lo = (lo - origin) * inv
            t_hi = (hi - origin) * inv
        t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=-1)
        t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=-1)
        hit = (t_near <= t_far) & (t_far > _EPS)
        t = np.where(t_near > _EPS, t_near, t_far)
        return np.where(hit & (t > _EPS), t, np.inf)

    def normal(self, points: np.ndarray) -> np.ndarray:
        rel = (points - self.center) / self.half_extents
        axis = np.argmax(np.abs(rel), axis=-1)
        n = np.zeros_like(rel)
        idx = np.arange(rel.shape[0])
        n[idx, axis] = np.sign(rel[idx, axis])
        return n

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        q = np.abs(points - self.center) - self.half_extents
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return np.abs(outside + inside)


@dataclass
class GroundQuad:
    """Finite horizontal quad at a fixed z (world up is +z)."""

    z: float
    half_size: float
    material: Material

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.z - origin[2]) / dz
        pts = origin + t[..., None] * dirs
        inside = (np.abs(pts[..., 0]) <= self.half_size) & (np.abs(pts[..., 1]) <= self.half_size)
        ok = (np.abs(dz) > _EPS) & (t > _EPS) & inside
        return np.where(ok, t, np.inf)

    def normal(self, points: np.ndarray) -> np.ndarray:
        n = np.zeros_like(points)
        n[..., 2] = 1.0
        return n

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        # valid for points within the quad footprint (always true for ray hits)
        return np.abs(points[..., 2] - self.z)


@dataclass
class Scene:
    primitives: list
    light_dir: np.ndarray  # unit vector, pointing from surface toward the light
    ambient: float = 0.35
    sky_phase: float = 0.0  # azimuth offset of the distant backdrop
    sky_temp_range: tuple[float, float] = (0.0, 8.0)

    def sky_rgb(self, dirs: np.ndarray) -> np.ndarray:
        """Distant backdrop: hue varies with ray azimuth, brightness with elevation.

        Plays the role of far-field context (skyline, horizon) and makes camera
        orientation observable in every frame.
        """
        az = np.arctan2(dirs[..., 1], dirs[..., 0]) + self.sky_phase
        elev = dirs[..., 2] / np.maximum(np.linalg.norm(dirs, axis=-1), 1e-12)
        base = 0.55 + 0.25 * elev
        return np.clip(
            np.stack(
                [
                    base + 0.3 * np.cos(az),
                    base + 0.3 * np.cos(az + 2 * np.pi / 3),
                    base + 0.3 * np.cos(az + 4 * np.pi / 3),
                ],
                axis=-1,
            ),
            0.0,
            1.0,
        )

    def sky_temperature(self, dirs: np.ndarray) -> np.ndarray:
        lo, hi = self.sky_temp_range
        az = np.arctan2(dirs[..., 1], dirs[..., 0]) + self.sky_phase
        return lo + (hi - lo) * 0.5 * (1.0 + np.sin(2.0 * az))


def _material(rng: np.random.Generator, temp_lo: float, temp_hi: float) -> Material:
    span = temp_hi - temp_lo
    return Material(
        color_a=rng.uniform(0.15, 0.95, size=3),
        color_b=rng.uniform(0.05, 0.85, size=3),
        checker_scale=float(rng.uniform(0.09, 0.25)),
        temp_base=float(rng.uniform(temp_lo + 0.25 * span, temp_hi - 0.25 * span)),
        temp_amp=float(rng.uniform(0.15, 0.3) * span),
        temp_freq=rng.uniform(6.0, 18.0, size=3) * rng.choice([-1.0, 1.0], size=3),
        temp_phase=float(rng.uniform(0, 2 * np.pi)),
    )


def build_scene(config: SyntheticSceneConfig) -> Scene:
    """Deterministic primitive layout for a config (pure function of the seed).

    The world fits in roughly two units so translations, depths, and the
    pose-loss residuals all live at O(1) scale.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = config.temp_range
    prims: list = [GroundQuad(z=0.0, half_size=2.2, material=_material(rng, lo, hi))]
    for _ in range(config.n_boxes):
        prims.append(
            Box(
                center=np.array(
                    [rng.uniform(-0.55, 0.55), rng.uniform(-0.55, 0.55), rng.uniform(0.1, 0.3)]
                ),
                half_extents=rng.uniform(0.09, 0.25, size=3),
                material=_material(rng, lo, hi),
            )
        )
    for _ in range(config.n_spheres):
        prims.append(
            Sphere(
                center=np.array(
                    [rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(0.14, 0.4)]
                ),
                radius=float(rng.uniform(0.1, 0.24)),
                material=_material(rng, lo, hi),
            )
        )
    light = rng.normal(size=3)
    light[2] = abs(light[2]) + 1.0  # from above
    lo, hi = config.temp_range
    return Scene(
        primitives=prims,
        light_dir=light / np.linalg.norm(light),
        sky_phase=float(rng.uniform(0, 2 * np.pi)),
        sky_temp_range=(lo, lo + 0.25 * (hi - lo)),
    )


def look_at_pose(center: np.ndarray, target: np.ndarray) -> CameraPose:
    """Camera-from-world pose: +z toward target, +y down (world up is +z)."""
    fwd = target - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    x = np.cross(fwd, up)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(fwd, x)
    R = np.stack([x, y, fwd])
    return CameraPose.from_rt(R, -R @ center)


def trajectory_poses(config: SyntheticSceneConfig, trajectory: int) -> list[CameraPose]:
    """Orbit arcs around the origin; the two trajectories differ in radius,
    height, and azimuth coverage."""
    n = config.frames_per_trajectory
    rng = np.random.default_rng(config.seed + 1000 * (trajectory + 1))
    radius = 1.5 + 0.3 * trajectory + rng.uniform(-0.07, 0.07)
    height = 0.55 + 0.3 * trajectory + rng.uniform(-0.03, 0.03)
    phase = rng.uniform(0, 2 * np.pi)
    arc = np.pi * 1.5
    target = np.array([0.0, 0.0, 0.2])
    poses = []
    for i in range(n):
        az = phase + arc * i / (n - 1)
        center = np.array([radius * np.cos(az), radius * np.sin(az), height])
        poses.append(look_at_pose(center, target))
    return poses


def render_frame(
    scene: Scene, pose: CameraPose, K: Intrinsics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rgb (H,W,3), temperature (H,W) in degrees, depth (H,W); depth 0 = no hit)."""
    h, w = K.height, K.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs_cam = np.stack(
        [(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us)], axis=-1
    ).reshape(-1, 3)
    R = pose.rotation
    origin = pose.camera_center()
    dirs_world = dirs_cam @ R  # R^T applied row-wise
    t_best = np.full(dirs_world.shape[0], np.inf)
    idx_best = np.full(dirs_world.shape[0], -1)
    for k, prim in enumerate(scene.primitives):
        t = prim.intersect(origin, dirs_world)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        idx_best = np.where(closer, k, idx_best)
    hit = np.isfinite(t_best)
    t_safe = np.where(hit, t_best, 0.0)
    points = origin + t_safe[:, None] * dirs_world
    rgb = scene.sky_rgb(dirs_world)
    temp = scene.sky_temperature(dirs_world)
    for k, prim in enumerate(scene.primitives):
        sel = hit & (idx_best == k)
        if not np.any(sel):
            continue
        pts = points[sel]
        n = prim.normal(pts)
        lambert = np.clip(n @ scene.light_dir, 0.0, 1.0)
        shade = scene.ambient + (1 - scene.ambient) * lambert
        rgb[sel] = np.clip(prim.material.albedo(pts) * shade[:, None], 0.0, 1.0)
        temp[sel] = prim.material.temperature(pts)
    depth = t_safe  # dirs have z_cam = 1, so t is pinhole depth; 0 where no hit
    return rgb.reshape(h, w, 3), temp.reshape(h, w), depth.reshape(h, w).astype(np.float32)


def generate_synthetic_scene(
    config: SyntheticSceneConfig, out_dir: str | Path, seed: int | None = None
) -> SceneManifest:
    """Render both modalities along two trajectories and write a validated scene.

    Every pose is rendered in RGB and thermal (shared pose_group), giving paired
    data; a scene directory holds manifest.json, images/, and depth/.
    """
    if seed is not None:
        config = SyntheticSceneConfig(**{**config.__dict__, "seed": seed})
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    scene = build_scene(config)
    size = config.image_size
    K = Intrinsics(
        fx=config.focal_factor * size,
        fy=config.focal_factor * size,
        cx=(size - 1) / 2.0,
        cy=(size - 1) / 2.0,
        width=size,
        height=size,
    )
    noise_rng = np.random.default_rng(config.seed + 77)
    t_lo, t_hi = config.temp_range
    frames = []
    for traj in (0, 1):
        for i, pose in enumerate(trajectory_poses(config, traj)):
            rgb, temp, depth = render_frame(scene, pose, K)
            if config.noise_level > 0:
                rgb = np.clip(rgb + noise_rng.normal(scale=config.noise_level, size=rgb.shape), 0, 1)
                temp = temp + noise_rng.normal(
                    scale=config.noise_level * (t_hi - t_lo), size=temp.shape
                )
            thermal = np.clip((temp - t_lo) / (t_hi - t_lo), 0.0, 1.0)
            group = f"t{traj}_p{i:03d}"
            depth_rel = f"depth/{group}.dpt"
            write_depth(out / depth_rel, depth)
            rgb_rel = f"images/{group}_rgb.png"
            write_rgb(out / rgb_rel, rgb)
            th_rel = f"images/{group}_thermal.png"
            write_thermal(out / th_rel, thermal)
            common = dict(
                intrinsics=K, pose=pose, depth_path=depth_rel, pose_group=group, trajectory=traj
            )
            frames.append(
                FrameRecord(id=f"{group}_rgb", modality=RGB, image_path=rgb_rel, **common)
            )
            frames.append(
                FrameRecord(
                    id=f"{group}_thermal",
                    modality=THERMAL,
                    image_path=th_rel,
                    thermal_range=(t_lo, t_hi),
                    **common,
                )
            )
    manifest = SceneManifest(scene=config.name, frames=frames, root=out)
    save_manifest(manifest, out / "manifest.json")
    return manifest
