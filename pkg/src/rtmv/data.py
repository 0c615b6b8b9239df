"""Scene manifests, image/depth raster I/O, asymmetric augmentation, and batching.

Manifest: one JSON document per scene. Poses are camera-from-world
(``{"quat": [w,x,y,z], "t": [x,y,z]}``; the manifest must carry
``"convention": "camera_from_world"``), angles in radians. RGB images are 8-bit
PNG, thermal images 16-bit grayscale PNG normalized by the recorded
``thermal_range``, and depth is a little-endian float32 raster with a 16-byte
header (8-byte magic, uint32 width, uint32 height).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import ConfigError, InvalidInputError, ManifestError, SamplingError, SplitError
from .geometry import CameraPose, Intrinsics

RGB = "rgb"
THERMAL = "thermal"

DEPTH_MAGIC = b"RTMVDPT\0"
MANIFEST_CONVENTION = "camera_from_world"


# --------------------------------------------------------------------------- rasters


def write_depth(path: str | Path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype="<f4")
    if depth.ndim != 2:
        raise InvalidInputError("depth raster must be 2-D")
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC)
        f.write(struct.pack("<II", w, h))
        f.write(depth.tobytes())


def read_depth(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != DEPTH_MAGIC:
            raise InvalidInputError(f"bad depth raster magic {magic!r}")
        w, h = struct.unpack("<II", f.read(8))
        data = np.frombuffer(f.read(4 * w * h), dtype="<f4")
    return data.reshape(h, w).astype(np.float32)


def write_rgb(path: str | Path, image: np.ndarray) -> None:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 255.0).round().astype(np.uint8), mode="RGB").save(path)


def read_rgb(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32)
    return arr / 255.0


def write_thermal(path: str | Path, normalized: np.ndarray) -> None:
    """Store a [0, 1] thermal image as 16-bit grayscale PNG."""
    arr = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    Image.fromarray((arr * 65535.0).round().astype(np.uint16)).save(path)


def read_thermal(path: str | Path) -> np.ndarray:
    arr = np.asarray(Image.open(path), dtype=np.float32)
    return arr / 65535.0


# --------------------------------------------------------------------------- manifest


@dataclass
class FrameRecord:
    id: str
    modality: str
    image_path: str
    intrinsics: Intrinsics
    pose: CameraPose | None = None
    depth_path: str | None = None
    pose_group: str = ""
    trajectory: int | None = None
    thermal_range: tuple[float, float] | None = None


@dataclass
class SceneManifest:
    scene: str
    frames: list[FrameRecord]
    units: str = "meters"
    split: str = ""
    root: Path = field(default_factory=Path)

    def pose_groups(self) -> dict[str, list[FrameRecord]]:
        groups: dict[str, list[FrameRecord]] = {}
        for f in self.frames:
            groups.setdefault(f.pose_group, []).append(f)
        return groups

    def frames_by_id(self) -> dict[str, FrameRecord]:
        return {f.id: f for f in self.frames}

    def is_paired(self) -> bool:
        return all(
            {f.modality for f in group} >= {RGB, THERMAL}
            for group in self.pose_groups().values()
        )

    def trajectories(self) -> list[int]:
        return sorted({f.trajectory for f in self.frames if f.trajectory is not None})

    def load_image(self, frame: FrameRecord) -> np.ndarray:
        path = self.root / frame.image_path
        return read_rgb(path) if frame.modality == RGB else read_thermal(path)

    def load_depth(self, frame: FrameRecord) -> tuple[np.ndarray, np.ndarray]:
        """(depth, valid mask); invalid pixels carry depth 0 in the raster."""
        depth = read_depth(self.root / frame.depth_path)
        return depth, depth > 0


def _frame_to_json(frame: FrameRecord) -> dict:
    rec = {
        "id": frame.id,
        "modality": frame.modality,
        "image_path": frame.image_path,
        "intrinsics": {
            "fx": frame.intrinsics.fx,
            "fy": frame.intrinsics.fy,
            "cx": frame.intrinsics.cx,
            "cy": frame.intrinsics.cy,
            "width": frame.intrinsics.width,
            "height": frame.intrinsics.height,
        },
        "pose_group": frame.pose_group,
    }
    if frame.pose is not None:
        rec["pose"] = {"quat": frame.pose.quat.tolist(), "t": frame.pose.t.tolist()}
    if frame.depth_path is not None:
        rec["depth_path"] = frame.depth_path
    if frame.trajectory is not None:
        rec["trajectory"] = frame.trajectory
    if frame.thermal_range is not None:
        rec["thermal_range"] = list(frame.thermal_range)
    return rec


def save_manifest(manifest: SceneManifest, path: str | Path) -> None:
    doc = {
        "scene": manifest.scene,
        "units": manifest.units,
        "split": manifest.split,
        "convention": MANIFEST_CONVENTION,
        "frames": [_frame_to_json(f) for f in manifest.frames],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_manifest(path: str | Path) -> SceneManifest:
    """Parse and validate; raises ManifestError listing every violation found."""
    path = Path(path)
    if not path.exists():
        raise ManifestError([f"manifest file {path} does not exist"])
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError([f"manifest is not valid JSON: {e}"]) from e
    problems: list[str] = []
    if doc.get("convention") != MANIFEST_CONVENTION:
        problems.append(
            f"pose convention must be {MANIFEST_CONVENTION!r}, got {doc.get('convention')!r}"
        )
    root = path.parent
    frames: list[FrameRecord] = []
    seen_ids: set[str] = set()
    for i, rec in enumerate(doc.get("frames", [])):
        fid = rec.get("id", f"<frame {i}>")
        if fid in seen_ids:
            problems.append(f"duplicate frame id {fid!r}")
        seen_ids.add(fid)
        if rec.get("modality") not in (RGB, THERMAL):
            problems.append(f"frame {fid!r}: unknown modality {rec.get('modality')!r}")
        pose = None
        if "pose" in rec:
            try:
                pose = CameraPose(np.array(rec["pose"]["quat"]), np.array(rec["pose"]["t"]))
            except (InvalidInputError, KeyError, TypeError) as e:
                problems.append(f"frame {fid!r}: invalid pose ({e})")
        if rec.get("depth_path") and pose is None:
            problems.append(f"frame {fid!r}: depth_path present without a pose")
        try:
            intr = Intrinsics(**rec["intrinsics"])
        except (InvalidInputError, KeyError, TypeError) as e:
            problems.append(f"frame {fid!r}: invalid intrinsics ({e})")
            continue
        for key in ("image_path", "depth_path"):
            rel = rec.get(key)
            if rel and not (root / rel).exists():
                problems.append(f"frame {fid!r}: {key} {rel!r} does not exist")
        frames.append(
            FrameRecord(
                id=fid,
                modality=rec.get("modality", ""),
                image_path=rec.get("image_path", ""),
                intrinsics=intr,
                pose=pose,
                depth_path=rec.get("depth_path"),
                pose_group=rec.get("pose_group", fid),
                trajectory=rec.get("trajectory"),
                thermal_range=tuple(rec["thermal_range"]) if "thermal_range" in rec else None,
            )
        )
    if problems:
        raise ManifestError(problems)
    return SceneManifest(
        scene=doc.get("scene", path.stem),
        frames=frames,
        units=doc.get("units", "meters"),
        split=doc.get("split", ""),
        root=root,
    )


# --------------------------------------------------------------------------- augmentation


@dataclass
class AugmentConfig:
    """Ranges for the asymmetric RGB/thermal augmentation pipelines."""

    crop_scale: tuple[float, float] = (0.6, 1.0)  # area fraction of the source kept
    aspect: tuple[float, float] = (0.33, 1.0)  # crop aspect; orientation flips at random
    noise_sigma: tuple[float, float] = (0.0, 0.02)
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    sharpness: tuple[float, float] = (0.5, 2.0)
    jitter_brightness: float = 0.2
    jitter_contrast: float = 0.2
    jitter_saturation: float = 0.2
    grayscale_prob: float = 0.1
    thermal_gain: tuple[float, float] = (0.8, 1.2)
    thermal_offset: tuple[float, float] = (-0.1, 0.1)
    thermal_exponent: tuple[float, float] = (1.0 / 1.5, 1.5)
    rot90_prob: float = 0.25
    target_size: int = 64

    def __post_init__(self):
        for name, lo, hi in (
            ("crop_scale", 0.0, 1.0),
            ("aspect", 0.33, 1.0),
            ("thermal_exponent", 1.0 / 1.5, 1.5),
        ):
            a, b = getattr(self, name)
            if not (a <= b and lo - 1e-12 <= a and b <= hi + 1e-12):
                raise ConfigError(f"{name} range ({a}, {b}) outside [{lo}, {hi}]")
        for name in ("noise_sigma", "blur_sigma", "sharpness", "thermal_gain", "thermal_offset"):
            a, b = getattr(self, name)
            if a > b:
                raise ConfigError(f"{name} range is empty")
        for name in ("grayscale_prob", "rot90_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")

    @classmethod
    def identity(cls, target_size: int = 64) -> "AugmentConfig":
        return cls(
            crop_scale=(1.0, 1.0),
            aspect=(1.0, 1.0),
            noise_sigma=(0.0, 0.0),
            blur_sigma=(0.0, 0.0),
            sharpness=(1.0, 1.0),
            jitter_brightness=0.0,
            jitter_contrast=0.0,
            jitter_saturation=0.0,
            grayscale_prob=0.0,
            thermal_gain=(1.0, 1.0),
            thermal_offset=(0.0, 0.0),
            thermal_exponent=(1.0, 1.0),
            rot90_prob=0.0,
            target_size=target_size,
        )


@dataclass
class AugmentParams:
    """One sampled draw of the pipeline, shared between image and geometry updates."""

    crop: tuple[int, int, int, int]  # x0, y0, width, height
    aspect: float
    noise_sigma: float
    blur_sigma: float
    sharpness: float
    brightness: float
    contrast: float
    saturation: float
    to_gray: bool
    gain: float
    offset: float
    exponent: float
    rot_k: int
    target_size: int


def sample_augment_params(
    shape: tuple[int, int],
    config: AugmentConfig,
    rng: np.random.Generator,
    keep_point: tuple[float, float] | None = None,
) -> AugmentParams:
    """Sample one pipeline draw; `keep_point` (x, y) constrains the crop window to
    contain that position (used to keep the principal point in view)."""
    h, w = shape
    scale = rng.uniform(*config.crop_scale)
    aspect = rng.uniform(*config.aspect)
    ratio = aspect if rng.random() < 0.5 else 1.0 / aspect
    area = scale * h * w
    cw = int(np.clip(round(np.sqrt(area * ratio)), 1, w))
    ch = int(np.clip(round(np.sqrt(area / ratio)), 1, h))

    def origin(limit: int, size: int, point: float | None) -> int:
        lo, hi = 0, limit - size
        if point is not None and size >= 3:
            lo = max(lo, int(np.ceil(point - (size - 1.5))))
            hi = min(hi, int(np.floor(point - 0.5)))
            if lo > hi:
                lo = hi = int(np.clip(round(point - size / 2), 0, limit - size))
        return int(rng.integers(lo, hi + 1))

    px, py = keep_point if keep_point is not None else (None, None)
    x0 = origin(w, cw, px)
    y0 = origin(h, ch, py)
    return AugmentParams(
        crop=(x0, y0, cw, ch),
        aspect=aspect,
        noise_sigma=rng.uniform(*config.noise_sigma),
        blur_sigma=rng.uniform(*config.blur_sigma),
        sharpness=rng.uniform(*config.sharpness),
        brightness=rng.uniform(1 - config.jitter_brightness, 1 + config.jitter_brightness),
        contrast=rng.uniform(1 - config.jitter_contrast, 1 + config.jitter_contrast),
        saturation=rng.uniform(1 - config.jitter_saturation, 1 + config.jitter_saturation),
        to_gray=bool(rng.random() < config.grayscale_prob),
        gain=rng.uniform(*config.thermal_gain),
        offset=rng.uniform(*config.thermal_offset),
        exponent=rng.uniform(*config.thermal_exponent),
        rot_k=int(rng.integers(1, 4)) if rng.random() < config.rot90_prob else 0,
        target_size=config.target_size,
    )


def _resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    if img.ndim == 3:
        fy, fx = fy[..., None], fx[..., None]
    g = img[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
    g = g + img[np.ix_(y0, x1)] * (1 - fy) * fx
    g = g + img[np.ix_(y1, x0)] * fy * (1 - fx)
    return g + img[np.ix_(y1, x1)] * fy * fx


def _resize_nearest(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    ys = np.clip(np.round((np.arange(out_h) + 0.5) * (h / out_h) - 0.5).astype(int), 0, h - 1)
    xs = np.clip(np.round((np.arange(out_w) + 0.5) * (w / out_w) - 0.5).astype(int), 0, w - 1)
    return img[np.ix_(ys, xs)]


def _geometric(img: np.ndarray, p: AugmentParams, interp: str = "bilinear") -> np.ndarray:
    x0, y0, cw, ch = p.crop
    crop = img[y0 : y0 + ch, x0 : x0 + cw]
    resize = _resize_bilinear if interp == "bilinear" else _resize_nearest
    return resize(crop, p.target_size, p.target_size)


def _shared_photometric(img: np.ndarray, p: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    if p.noise_sigma > 0:
        img = img + rng.normal(scale=p.noise_sigma, size=img.shape)
    if p.blur_sigma > 0:
        sigmas = (p.blur_sigma, p.blur_sigma) + ((0,) if img.ndim == 3 else ())
        img = ndimage.gaussian_filter(img, sigma=sigmas, mode="nearest")
    if p.sharpness != 1.0:
        sigmas = (1.0, 1.0) + ((0,) if img.ndim == 3 else ())
        base = ndimage.gaussian_filter(img, sigma=sigmas, mode="nearest")
        img = base + p.sharpness * (img - base)
    return img


def _apply_rgb(img: np.ndarray, p: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    img = _geometric(np.asarray(img, dtype=np.float64), p)
    img = _shared_photometric(img, p, rng)
    if p.brightness != 1.0:
        img = img * p.brightness
    if p.contrast != 1.0:
        mean = img.mean()
        img = mean + (img - mean) * p.contrast
    if p.saturation != 1.0:
        gray = img @ np.array([0.299, 0.587, 0.114])
        img = gray[..., None] + (img - gray[..., None]) * p.saturation
    if p.to_gray:
        gray = img @ np.array([0.299, 0.587, 0.114])
        img = np.repeat(gray[..., None], 3, axis=2)
    if p.rot_k:
        img = np.rot90(img, p.rot_k).copy()
    return np.clip(img, 0.0, 1.0)


def _apply_thermal(img: np.ndarray, p: AugmentParams, rng: np.random.Generator) -> np.ndarray:
    img = _geometric(np.asarray(img, dtype=np.float64), p)
    img = _shared_photometric(img, p, rng)
    if p.gain != 1.0 or p.offset != 0.0:
        img = p.gain * img + p.offset
    img = np.clip(img, 0.0, 1.0)
    if p.exponent != 1.0:
        img = img**p.exponent
    if p.rot_k:
        img = np.rot90(img, p.rot_k).copy()
    return np.clip(img, 0.0, 1.0)


def augment_rgb(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Crop -> aspect resize -> noise -> blur -> sharpness -> jitter -> grayscale -> rot90."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInputError("augment_rgb expects an (H, W, 3) image")
    return _apply_rgb(image, sample_augment_params(image.shape[:2], config, rng), rng)


def augment_thermal(
    image: np.ndarray, config: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    """Shared geometric/photometric stages, then clamp(a x + b), x^gamma, rot90."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise InvalidInputError("augment_thermal expects an (H, W) image")
    return _apply_thermal(image, sample_augment_params(image.shape, config, rng), rng)


_ROLL_90 = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def _rotated_geometry(
    K: Intrinsics, pose: CameraPose | None
) -> tuple[Intrinsics, CameraPose | None]:
    """Geometry update matching one application of np.rot90 on a square image."""
    n = K.width
    K2 = Intrinsics(
        fx=K.fy, fy=K.fx, cx=K.cy, cy=(n - 1) - K.cx, width=K.height, height=K.width
    )
    if pose is None:
        return K2, None
    R2 = _ROLL_90 @ pose.rotation
    return K2, CameraPose.from_rt(R2, _ROLL_90 @ pose.t)


@dataclass
class AugmentedFrame:
    image: np.ndarray
    intrinsics: Intrinsics
    pose: CameraPose | None
    depth: np.ndarray | None
    valid: np.ndarray | None


def augment_frame(
    image: np.ndarray,
    modality: str,
    intrinsics: Intrinsics,
    pose: CameraPose | None,
    depth: np.ndarray | None,
    valid: np.ndarray | None,
    config: AugmentConfig,
    rng: np.random.Generator,
) -> AugmentedFrame:
    """Augment one frame keeping intrinsics, pose, and depth supervision consistent.

    Crop shifts the principal point, resize rescales focals (pixel-center
    convention), and each 90-degree rotation rolls the camera about its optical
    axis. Depth and mask are resampled nearest so values stay exact samples.
    """
    image = np.asarray(image)
    p = sample_augment_params(
        image.shape[:2], config, rng, keep_point=(intrinsics.cx, intrinsics.cy)
    )
    out = _apply_rgb(image, p, rng) if modality == RGB else _apply_thermal(image, p, rng)
    x0, y0, cw, ch = p.crop
    t = p.target_size
    sx, sy = t / cw, t / ch
    K = Intrinsics(
        fx=intrinsics.fx * sx,
        fy=intrinsics.fy * sy,
        cx=float(np.clip((intrinsics.cx - x0 + 0.5) * sx - 0.5, 0.0, t - 1.0)),
        cy=float(np.clip((intrinsics.cy - y0 + 0.5) * sy - 0.5, 0.0, t - 1.0)),
        width=t,
        height=t,
    )
    new_pose = pose
    new_depth = None if depth is None else _geometric(depth, p, interp="nearest")
    new_valid = None if valid is None else _geometric(valid.astype(bool), p, interp="nearest")
    for _ in range(p.rot_k):
        K, new_pose = _rotated_geometry(K, new_pose)
        if new_depth is not None:
            new_depth = np.rot90(new_depth).copy()
        if new_valid is not None:
            new_valid = np.rot90(new_valid).copy()
    return AugmentedFrame(out, K, new_pose, new_depth, new_valid)


# --------------------------------------------------------------------------- batching


def partition_counts(batch_size: int) -> tuple[int, ...]:
    """Admissible sequence-partition counts; the 24-frame set follows the protocol."""
    if batch_size == 24:
        return (1, 2, 3, 4, 6, 12)
    return tuple(d for d in range(1, batch_size + 1) if batch_size % d == 0 and batch_size // d >= 2)


@dataclass
class BatchSpec:
    frame_ids: list[str]
    modalities: list[str]
    tau: float  # sampled thermal ratio; realized count = round(tau * len(frame_ids))
    seq_lengths: list[int]

    def __post_init__(self):
        if len(self.frame_ids) != len(self.modalities):
            raise InvalidInputError("one modality per frame required")
        if len(set(self.frame_ids)) != len(self.frame_ids):
            raise InvalidInputError("duplicate frame ids in batch")
        if sum(self.seq_lengths) != len(self.frame_ids):
            raise InvalidInputError("sequence partition must cover the batch")
        if len(set(self.seq_lengths)) > 1:
            raise InvalidInputError("sequence partition sizes must be equal")
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidInputError("tau must lie in [0, 1]")


def check_no_shared_pose(scene: SceneManifest, spec: BatchSpec) -> None:
    by_id = scene.frames_by_id()
    groups = [by_id[i].pose_group for i in spec.frame_ids]
    if len(set(groups)) != len(groups):
        raise SamplingError("batch contains two frames sharing a pose group")


def sample_batch(
    scene: SceneManifest,
    batch_size: int,
    rng: np.random.Generator,
    tau: float | None = None,
    n_partitions: int | None = None,
) -> BatchSpec:
    """tau ~ U(0,1) thermal share, no shared poses, uniform partition count."""
    groups = scene.pose_groups()
    if len(groups) < batch_size:
        raise SamplingError(
            f"scene has {len(groups)} pose groups, need >= {batch_size}"
        )
    tau_value = float(rng.uniform()) if tau is None else float(tau)
    n_thermal = int(np.clip(np.floor(tau_value * batch_size + 0.5), 0, batch_size))
    thermal_groups = sorted(
        g for g, fs in groups.items() if any(f.modality == THERMAL for f in fs)
    )
    rgb_groups = sorted(g for g, fs in groups.items() if any(f.modality == RGB for f in fs))
    if len(thermal_groups) < n_thermal:
        raise SamplingError(
            f"need {n_thermal} thermal-capable pose groups, only {len(thermal_groups)}"
        )
    chosen_thermal = list(rng.choice(thermal_groups, size=n_thermal, replace=False))
    rgb_pool = [g for g in rgb_groups if g not in set(chosen_thermal)]
    n_rgb = batch_size - n_thermal
    if len(rgb_pool) < n_rgb:
        raise SamplingError(f"need {n_rgb} RGB-capable pose groups, only {len(rgb_pool)}")
    chosen_rgb = list(rng.choice(rgb_pool, size=n_rgb, replace=False))

    def pick(group: str, modality: str) -> str:
        candidates = [f.id for f in groups[group] if f.modality == modality]
        return candidates[int(rng.integers(0, len(candidates)))]

    entries = [(pick(g, THERMAL), THERMAL) for g in chosen_thermal]
    entries += [(pick(g, RGB), RGB) for g in chosen_rgb]
    order = rng.permutation(len(entries))
    entries = [entries[i] for i in order]
    counts = partition_counts(batch_size)
    n_part = int(rng.choice(counts)) if n_partitions is None else int(n_partitions)
    if n_part not in counts:
        raise SamplingError(f"partition count {n_part} not in {counts}")
    seq_lengths = [batch_size // n_part] * n_part
    spec = BatchSpec(
        frame_ids=[e[0] for e in entries],
        modalities=[e[1] for e in entries],
        tau=tau_value,
        seq_lengths=seq_lengths,
    )
    check_no_shared_pose(scene, spec)
    return spec


def eval_split(scene: SceneManifest, tau: float = 0.5) -> tuple[BatchSpec, BatchSpec]:
    """Two complementary runs: swap which half provides RGB and which thermal.

    Paired scenes split pose groups into deterministic halves; two-trajectory
    scenes pair RGB from one trajectory with thermal from the other.
    """
    groups = scene.pose_groups()

    def build(rgb_groups: Sequence[str], thermal_groups: Sequence[str]) -> BatchSpec:
        ids, mods = [], []
        for g in rgb_groups:
            frame = next((f for f in groups[g] if f.modality == RGB), None)
            if frame is None:
                raise SplitError(f"pose group {g} lacks an RGB frame")
            ids.append(frame.id)
            mods.append(RGB)
        for g in thermal_groups:
            frame = next((f for f in groups[g] if f.modality == THERMAL), None)
            if frame is None:
                raise SplitError(f"pose group {g} lacks a thermal frame")
            ids.append(frame.id)
            mods.append(THERMAL)
        return BatchSpec(ids, mods, tau, [len(ids)])

    trajectories = scene.trajectories()
    if len(trajectories) == 2:
        by_traj = {
            t: sorted({f.pose_group for f in scene.frames if f.trajectory == t})
            for t in trajectories
        }
        t1, t2 = trajectories
        return build(by_traj[t1], by_traj[t2]), build(by_traj[t2], by_traj[t1])
    if scene.is_paired():
        ordered = sorted(groups)
        half_a, half_b = ordered[0::2], ordered[1::2]
        return build(half_a, half_b), build(half_b, half_a)
    raise SplitError(
        "unpaired scene needs exactly two trajectory tags for the dual-run split"
    )
