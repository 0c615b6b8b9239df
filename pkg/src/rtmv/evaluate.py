"""Evaluation protocol: dual-run splits, pooled metrics, point clouds, tau sweeps.

Each scene is evaluated twice at a fixed thermal share, swapping which half of
the poses provides RGB and which thermal; pose-pair errors are pooled across
scenes and runs before thresholding. Point-cloud metrics back-project predicted
depth with predicted poses/intrinsics, align on camera centers, and measure
exact nearest-neighbor distances against the ground-truth surface cloud.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .data import BatchSpec, SceneManifest, eval_split, sample_batch
from .errors import InvalidInputError
from .geometry import CameraPose, Intrinsics, PointCloud, backproject
from .metrics import (
    CloudMetrics,
    MetricsReport,
    PosePairError,
    cloud_metrics,
    pairwise_errors,
    report_from_pairs,
)
from .model import GeometryTransformer
from .training import decode_pose_encoding


@dataclass
class InferenceResult:
    frame_ids: list[str]
    modalities: list[str]
    poses: list[CameraPose]
    fovs: np.ndarray  # (F, 2) radians
    depth: np.ndarray  # (F, H, W)
    seconds: float
    layer_outputs: list = field(default_factory=list)


def run_inference(
    model: GeometryTransformer,
    scene: SceneManifest,
    spec: BatchSpec,
    want_layers: bool = False,
) -> InferenceResult:
    """Forward one batch; only the model call is timed (I/O and decode excluded)."""
    by_id = scene.frames_by_id()
    images = [scene.load_image(by_id[i]) for i in spec.frame_ids]
    model.eval()
    with torch.no_grad():
        pixel = model.prepare_images(images)
        t0 = time.perf_counter()
        out = model(pixel, spec.modalities, spec.seq_lengths, want_layers=want_layers)
        seconds = time.perf_counter() - t0
    enc = out.pose_enc.double().cpu().numpy()
    poses, fovs = [], []
    for row in enc:
        pose, fov = decode_pose_encoding(row)
        poses.append(pose)
        fovs.append(fov)
    return InferenceResult(
        frame_ids=list(spec.frame_ids),
        modalities=list(spec.modalities),
        poses=poses,
        fovs=np.asarray(fovs),
        depth=out.depth.double().cpu().numpy(),
        seconds=seconds,
        layer_outputs=[t.double().cpu().numpy() for t in out.layer_outputs],
    )


def intrinsics_from_fov(fov: np.ndarray, width: int, height: int) -> Intrinsics:
    """Pinhole intrinsics from a predicted field of view, principal point centered."""
    return Intrinsics.from_fov(float(fov[0]), float(fov[1]), width, height)


def _subsample(points: np.ndarray, limit: int) -> np.ndarray:
    if len(points) <= limit:
        return points
    stride = int(np.ceil(len(points) / limit))
    return points[::stride]


def reconstruction_cloud(result: InferenceResult, max_points: int = 60_000) -> PointCloud:
    """Back-project predicted depth through predicted poses and intrinsics."""
    pts = []
    h, w = result.depth.shape[1:]
    per_frame = max(1, max_points // len(result.poses))
    for i, pose in enumerate(result.poses):
        K = intrinsics_from_fov(result.fovs[i], w, h)
        cloud = backproject(result.depth[i], None, pose, K)
        pts.append(_subsample(cloud.points, per_frame))
    return PointCloud(np.concatenate(pts))


def ground_truth_cloud(
    scene: SceneManifest, frame_ids: Sequence[str], max_points: int = 60_000
) -> PointCloud:
    by_id = scene.frames_by_id()
    pts = []
    per_frame = max(1, max_points // len(frame_ids))
    for fid in frame_ids:
        frame = by_id[fid]
        depth, valid = scene.load_depth(frame)
        cloud = backproject(depth.astype(np.float64), valid, frame.pose, frame.intrinsics)
        pts.append(_subsample(cloud.points, per_frame))
    return PointCloud(np.concatenate(pts))


@dataclass
class RunEvaluation:
    scene: str
    run_index: int
    pairs: list[PosePairError]
    n_frames: int
    fps: float
    cloud: CloudMetrics | None = None


def evaluate_run(
    model: GeometryTransformer,
    scene: SceneManifest,
    spec: BatchSpec,
    run_index: int = 0,
    with_clouds: bool = True,
    max_cloud_points: int = 60_000,
) -> RunEvaluation:
    result = run_inference(model, scene, spec)
    by_id = scene.frames_by_id()
    gt_poses = [by_id[i].pose for i in spec.frame_ids]
    if any(p is None for p in gt_poses):
        raise InvalidInputError("evaluation frames need ground-truth poses")
    pairs = pairwise_errors(result.poses, gt_poses)
    cloud = None
    if with_clouds and len(result.poses) >= 3:
        has_depth = [i for i in spec.frame_ids if by_id[i].depth_path is not None]
        if len(has_depth) == len(spec.frame_ids):
            cloud = cloud_metrics(
                reconstruction_cloud(result, max_cloud_points),
                ground_truth_cloud(scene, spec.frame_ids, max_cloud_points),
                result.poses,
                gt_poses,
            )
    return RunEvaluation(
        scene=scene.scene,
        run_index=run_index,
        pairs=pairs,
        n_frames=len(spec.frame_ids),
        fps=len(spec.frame_ids) / result.seconds,
        cloud=cloud,
    )


@dataclass
class EvaluationSummary:
    pooled: MetricsReport
    per_run: list[RunEvaluation]
    per_scene: dict[str, MetricsReport]


def evaluate_scenes(
    model: GeometryTransformer,
    scenes: Sequence[SceneManifest],
    tau: float = 0.5,
    combine: str = "min",
    with_clouds: bool = True,
) -> EvaluationSummary:
    """Dual-run evaluation of every scene; errors pooled before thresholding."""
    per_run: list[RunEvaluation] = []
    for scene in scenes:
        for idx, spec in enumerate(eval_split(scene, tau)):
            per_run.append(
                evaluate_run(model, scene, spec, run_index=idx, with_clouds=with_clouds)
            )
    pooled_pairs = [p for run in per_run for p in run.pairs]
    total_frames = sum(run.n_frames for run in per_run)
    clouds = [run.cloud for run in per_run if run.cloud is not None]
    pooled_cloud = None
    if clouds:
        pca = float(np.mean([c.pca for c in clouds]))
        pcc = float(np.mean([c.pcc for c in clouds]))
        pooled_cloud = CloudMetrics(pca=pca, pcc=pcc, chamfer=(pca + pcc) / 2)
    fps = float(np.mean([run.fps for run in per_run]))
    pooled = report_from_pairs(
        pooled_pairs, total_frames, cloud=pooled_cloud, fps=fps, combine=combine
    )
    per_scene: dict[str, MetricsReport] = {}
    for scene in scenes:
        scene_pairs = [p for run in per_run if run.scene == scene.scene for p in run.pairs]
        frames = sum(run.n_frames for run in per_run if run.scene == scene.scene)
        per_scene[scene.scene] = report_from_pairs(scene_pairs, frames, combine=combine)
    return EvaluationSummary(pooled=pooled, per_run=per_run, per_scene=per_scene)


@dataclass
class TokenCapture:
    """Per-layer patch tokens of one scene, grouped by modality."""

    rgb_by_layer: list[list[np.ndarray]]  # [layer][frame] -> (P, D)
    thermal_by_layer: list[list[np.ndarray]]
    rgb_ids: list[str]
    thermal_ids: list[str]


def capture_layer_tokens(
    model: GeometryTransformer,
    scene: SceneManifest,
    batch_size: int = 12,
    tau_range: tuple[float, float] = (0.25, 0.75),
    n_batches: int = 1,
    seed: int = 0,
) -> TokenCapture:
    """Run mixed batches and collect every layer's patch tokens by modality.

    The thermal share is drawn uniformly from tau_range, clamped so each batch
    carries at least two RGB and one thermal frame. Camera tokens are excluded.
    """
    rng = np.random.default_rng([seed, hash(scene.scene) % (2**31)])
    batch_size = min(batch_size, len(scene.pose_groups()))
    n_layers = model.config.num_blocks
    cap = TokenCapture([[] for _ in range(n_layers)], [[] for _ in range(n_layers)], [], [])
    for _ in range(n_batches):
        tau = float(rng.uniform(*tau_range))
        n_thermal = int(np.clip(round(tau * batch_size), 1, batch_size - 2))
        spec = sample_batch(scene, batch_size, rng, tau=n_thermal / batch_size, n_partitions=1)
        result = run_inference(model, scene, spec, want_layers=True)
        for layer in range(n_layers):
            tokens = result.layer_outputs[layer][:, 1:, :]  # drop camera token
            for i, modality in enumerate(spec.modalities):
                side = cap.rgb_by_layer if modality == "rgb" else cap.thermal_by_layer
                side[layer].append(tokens[i])
        for i, modality in enumerate(spec.modalities):
            (cap.rgb_ids if modality == "rgb" else cap.thermal_ids).append(spec.frame_ids[i])
    return cap


def tau_sweep(
    model: GeometryTransformer,
    scenes: Sequence[SceneManifest],
    grid: Sequence[float],
    repeats: int = 3,
    seed: int = 0,
    combine: str = "min",
) -> list[dict]:
    """Per (tau, scene): `repeats` random frame selections, one row each."""
    rows = []
    for tau in grid:
        for scene in scenes:
            n = len(scene.pose_groups())
            for rep in range(repeats):
                rng = np.random.default_rng([seed, int(round(tau * 1000)), rep, hash(scene.scene) % (2**31)])
                spec = sample_batch(scene, n, rng, tau=tau, n_partitions=1)
                run = evaluate_run(model, scene, spec, run_index=rep, with_clouds=False)
                report = report_from_pairs(run.pairs, run.n_frames, combine=combine)
                rows.append(
                    {
                        "tau": float(tau),
                        "scene": scene.scene,
                        "repetition": rep,
                        "auc": report.auc_30,
                        "rra": report.rra_30,
                        "rta": report.rta_30,
                        "n_pairs": report.n_pairs,
                    }
                )
    return rows
