"""Multitask loss, learning-rate schedule, and the training loop.

The loss is lambda_camera * L_camera + L_depth: element-wise Huber on 9-vector
pose encodings (mean over frames) plus a Laplace negative log-likelihood
|d - d_hat| / sigma + log sigma on valid depth pixels. Only parameters with
requires_grad=True are updated (adapters, camera tokens, optionally heads for
fine-tuning; everything for pretraining), with decoupled weight decay.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .adapters import trainable_parameters
from .data import (
    AugmentConfig,
    BatchSpec,
    SceneManifest,
    augment_frame,
    sample_batch,
)
from .errors import ConfigError, InvalidInputError, TrainingAbort
from .geometry import CameraPose, Intrinsics, quat_canonical, relative_pose
from .model import GeometryTransformer


@dataclass
class LossWeights:
    lambda_camera: float = 5.0
    huber_delta: float = 1.0

    def __post_init__(self):
        if not self.lambda_camera > 0:
            raise ConfigError("lambda_camera must be positive")


@dataclass
class OptimConfig:
    learning_rate: float = 5e-5
    weight_decay: float = 1e-2
    epochs: int = 100
    batch_size: int = 24
    warmup_fraction: float = 0.10
    seed: int = 0
    steps_per_epoch: int | None = None  # default: total pose groups // batch_size

    def __post_init__(self):
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in (0, 1)")


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    lr: float = 0.0
    loss_avg: float = math.nan
    loss_cam_avg: float = math.nan
    loss_depth_avg: float = math.nan


# ------------------------------------------------------------------ pose encodings


def encode_pose_target(pose: CameraPose, intrinsics: Intrinsics) -> np.ndarray:
    """9-vector target: canonical unit quaternion, translation, (fov_x, fov_y)."""
    fov_x, fov_y = intrinsics.fov()
    return np.concatenate([quat_canonical(pose.quat), pose.t, [fov_x, fov_y]])


def sequence_pose_targets(
    poses: Sequence[CameraPose],
    intrinsics: Sequence[Intrinsics],
    seq_lengths: Sequence[int],
) -> np.ndarray:
    """Per-frame targets relative to the first frame of each sequence (the gauge)."""
    if len(poses) != sum(seq_lengths):
        raise InvalidInputError("pose count must match the sequence partition")
    out = []
    start = 0
    for length in seq_lengths:
        ref = poses[start]
        for i in range(start, start + length):
            out.append(encode_pose_target(relative_pose(ref, poses[i]), intrinsics[i]))
        start += length
    return np.stack(out)


def decode_pose_encoding(enc: np.ndarray) -> tuple[CameraPose, tuple[float, float]]:
    enc = np.asarray(enc, dtype=np.float64)
    return CameraPose(enc[:4], enc[4:7]), (float(enc[7]), float(enc[8]))


# ------------------------------------------------------------------ losses


def _huber(x: torch.Tensor, delta: float) -> torch.Tensor:
    absx = x.abs()
    return torch.where(absx <= delta, 0.5 * x * x, delta * (absx - 0.5 * delta))


def camera_loss(
    pred: torch.Tensor, gt: torch.Tensor, weights: LossWeights
) -> torch.Tensor:
    """Mean over frames of the summed element-wise Huber on the 9-vector difference.

    Ground-truth quaternions must already be canonical (w >= 0); predictions are
    sign-aligned per frame (flip if dot < 0) to remove the double-cover seam.
    """
    if pred.shape != gt.shape or pred.shape[-1] != 9:
        raise InvalidInputError("pred/gt must both be (F, 9)")
    sign = torch.sign((pred[:, :4] * gt[:, :4]).sum(dim=1, keepdim=True)).detach()
    sign = torch.where(sign == 0, torch.ones_like(sign), sign)
    aligned = torch.cat([pred[:, :4] * sign, pred[:, 4:]], dim=1)
    return _huber(aligned - gt, weights.huber_delta).sum(dim=1).mean()


def depth_loss(
    depth: torch.Tensor,
    log_sigma: torch.Tensor,
    gt_depth: torch.Tensor,
    valid: torch.Tensor,
) -> torch.Tensor:
    """Laplace NLL |d - d_hat| / sigma + log sigma, averaged over valid pixels."""
    if depth.shape != gt_depth.shape or depth.shape != log_sigma.shape:
        raise InvalidInputError("depth tensors must share one shape")
    valid = valid.bool()
    if not valid.any():
        warnings.warn("depth loss over an empty mask contributes zero", stacklevel=2)
        return depth.sum() * 0.0
    sigma = torch.exp(log_sigma[valid])
    return ((gt_depth[valid] - depth[valid]).abs() / sigma + log_sigma[valid]).mean()


def total_loss(camera: torch.Tensor, depth: torch.Tensor, weights: LossWeights) -> torch.Tensor:
    out = weights.lambda_camera * camera + depth
    if not torch.isfinite(out):
        raise TrainingAbort(f"non-finite loss: camera={camera}, depth={depth}")
    return out


def lr_schedule(step: int, total_steps: int, config: OptimConfig) -> float:
    """Linear 0 -> lr over the warmup span, constant afterwards."""
    if not 0 <= step <= max(total_steps, 1):
        raise InvalidInputError("step outside [0, total_steps]")
    warmup = config.warmup_fraction * total_steps
    if warmup > 0 and step < warmup:
        return config.learning_rate * step / warmup
    return config.learning_rate


# ------------------------------------------------------------------ batch assembly


@dataclass
class PreparedBatch:
    images: list
    modalities: list[str]
    seq_lengths: list[int]
    pose_targets: np.ndarray  # (F, 9)
    gt_depth: np.ndarray  # (F, H, W)
    gt_valid: np.ndarray  # (F, H, W) bool
    batch_id: str = ""


class _SceneCache:
    """Keeps decoded images and depth rasters in memory across steps."""

    def __init__(self, scene: SceneManifest):
        self.scene = scene
        self._images: dict[str, np.ndarray] = {}
        self._depth: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def image(self, frame_id: str) -> np.ndarray:
        if frame_id not in self._images:
            frame = self.scene.frames_by_id()[frame_id]
            self._images[frame_id] = self.scene.load_image(frame)
        return self._images[frame_id]

    def depth(self, frame_id: str) -> tuple[np.ndarray, np.ndarray]:
        if frame_id not in self._depth:
            frame = self.scene.frames_by_id()[frame_id]
            self._depth[frame_id] = self.scene.load_depth(frame)
        return self._depth[frame_id]


def prepare_batch(
    cache: _SceneCache,
    spec: BatchSpec,
    augment: AugmentConfig | None,
    rng: np.random.Generator,
    batch_id: str = "",
) -> PreparedBatch:
    scene = cache.scene
    by_id = scene.frames_by_id()
    images, poses, intrinsics, depths, valids = [], [], [], [], []
    for frame_id, modality in zip(spec.frame_ids, spec.modalities):
        frame = by_id[frame_id]
        img = cache.image(frame_id)
        depth, valid = cache.depth(frame_id)
        if augment is not None:
            aug = augment_frame(
                img, modality, frame.intrinsics, frame.pose, depth, valid, augment, rng
            )
            images.append(aug.image)
            poses.append(aug.pose)
            intrinsics.append(aug.intrinsics)
            depths.append(aug.depth)
            valids.append(aug.valid.astype(bool))
        else:
            images.append(img)
            poses.append(frame.pose)
            intrinsics.append(frame.intrinsics)
            depths.append(depth)
            valids.append(valid)
    targets = sequence_pose_targets(poses, intrinsics, spec.seq_lengths)
    return PreparedBatch(
        images=images,
        modalities=list(spec.modalities),
        seq_lengths=list(spec.seq_lengths),
        pose_targets=targets,
        gt_depth=np.stack(depths).astype(np.float64),
        gt_valid=np.stack(valids),
        batch_id=batch_id,
    )


def batch_losses(
    model: GeometryTransformer, batch: PreparedBatch, weights: LossWeights
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(total, camera, depth) losses for one prepared batch."""
    out = model(batch.images, batch.modalities, batch.seq_lengths)
    dtype = out.pose_enc.dtype
    gt_enc = torch.as_tensor(batch.pose_targets, dtype=dtype)
    cam = camera_loss(out.pose_enc, gt_enc, weights)
    dep = depth_loss(
        out.depth,
        out.log_sigma,
        torch.as_tensor(batch.gt_depth, dtype=dtype),
        torch.as_tensor(batch.gt_valid),
    )
    try:
        return total_loss(cam, dep, weights), cam, dep
    except TrainingAbort as e:
        raise TrainingAbort(str(e), batch_id=batch.batch_id) from e


# ------------------------------------------------------------------ training loop


@dataclass
class TrainResult:
    state: TrainState
    history: list[dict] = field(default_factory=list)
    log_path: Path | None = None


def train(
    model: GeometryTransformer,
    scenes: Sequence[SceneManifest],
    optim: OptimConfig,
    weights: LossWeights = LossWeights(),
    augment: AugmentConfig | None = None,
    rgb_only: bool = False,
    log_path: str | Path | None = None,
    state: TrainState | None = None,
    max_steps: int | None = None,
) -> TrainResult:
    """Run the optimization loop over sampled batches.

    Deterministic given (optim.seed, scenes order); only requires_grad
    parameters receive updates (AdamW, decoupled weight decay). A JSON-lines
    record {step, lr, loss_total, loss_cam, loss_depth} is appended per step.
    Pass a resumed TrainState to continue the step counter and schedule.
    """
    if not scenes:
        raise ConfigError("need at least one scene")
    params = trainable_parameters(model)
    if not params:
        raise ConfigError("no trainable parameters; inject adapters or unfreeze")
    state = state or TrainState()
    steps_per_epoch = optim.steps_per_epoch or max(
        1, sum(len(s.pose_groups()) for s in scenes) // optim.batch_size
    )
    total_steps = optim.epochs * steps_per_epoch
    opt = torch.optim.AdamW(params, lr=optim.learning_rate, weight_decay=optim.weight_decay)
    rng = np.random.default_rng([optim.seed, state.step])
    caches = [_SceneCache(s) for s in scenes]
    history: list[dict] = []
    log_file = None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_file = open(log_path, "a")
    try:
        while state.step < total_steps:
            if max_steps is not None and len(history) >= max_steps:
                break
            scene_idx = int(rng.integers(0, len(scenes)))
            cache = caches[scene_idx]
            spec = sample_batch(
                cache.scene, optim.batch_size, rng, tau=0.0 if rgb_only else None
            )
            batch = prepare_batch(
                cache, spec, augment, rng,
                batch_id=f"{cache.scene.scene}:step{state.step}",
            )
            lr = lr_schedule(state.step, total_steps, optim)
            for group in opt.param_groups:
                group["lr"] = lr
            loss, cam, dep = batch_losses(model, batch, weights)
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            state.epoch = state.step // steps_per_epoch
            state.lr = lr
            record = {
                "step": state.step,
                "lr": lr,
                "loss_total": float(loss.detach()),
                "loss_cam": float(cam.detach()),
                "loss_depth": float(dep.detach()),
            }
            history.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
        if history:
            state.loss_avg = float(np.mean([h["loss_total"] for h in history[-20:]]))
            state.loss_cam_avg = float(np.mean([h["loss_cam"] for h in history[-20:]]))
            state.loss_depth_avg = float(np.mean([h["loss_depth"] for h in history[-20:]]))
    finally:
        if log_file is not None:
            log_file.close()
    return TrainResult(state=state, history=history, log_path=log_path)
