"""Pose-accuracy, registration, point-cloud, and throughput metrics.

Pose metrics are computed over all unordered frame pairs and are invariant to a
global similarity transform of the predictions (only relative quantities enter).
Point-cloud metrics align predictions to ground truth with a similarity transform
fitted on camera centers before measuring nearest-neighbor distances.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError
from .geometry import (
    CameraPose,
    PointCloud,
    relative_pose,
    rotation_angle_deg,
    translation_angle_deg,
    umeyama_align,
)

DEFAULT_THRESHOLDS_DEG = (5.0, 15.0, 30.0)
TWO_VIEW_THRESHOLDS_DEG = (5.0, 10.0, 20.0)


@dataclass
class PosePairError:
    """Relative rotation/translation angular errors for one frame pair, degrees."""

    i: int
    j: int
    rre_deg: float
    rte_deg: float

    def __post_init__(self):
        if not (0.0 <= self.rre_deg <= 180.0 and 0.0 <= self.rte_deg <= 180.0):
            raise InvalidInputError("pair errors must lie in [0, 180] degrees")


def pairwise_errors(
    pred: Sequence[CameraPose], gt: Sequence[CameraPose]
) -> list[PosePairError]:
    """Relative rotation/translation errors for every unordered pair (i < j)."""
    if len(pred) != len(gt):
        raise InvalidInputError("pred and gt pose lists must have equal length")
    if len(pred) < 2:
        raise InvalidInputError("need at least 2 poses for pairwise errors")
    out = []
    for i in range(len(pred)):
        for j in range(i + 1, len(pred)):
            rp = relative_pose(pred[i], pred[j])
            rg = relative_pose(gt[i], gt[j])
            dq = relative_pose(rg, rp)  # rotation taking gt-relative to pred-relative
            rre = rotation_angle_deg(dq.quat)
            rte = translation_angle_deg(rp.t, rg.t)
            out.append(PosePairError(i, j, rre, rte))
    return out


def accuracy_at(errors: Iterable[float], theta_deg: float) -> float:
    """Percentage of errors strictly below the threshold."""
    errs = np.asarray(list(errors), dtype=np.float64)
    if errs.size == 0:
        raise InvalidInputError("empty error list")
    return float(100.0 * np.mean(errs < theta_deg))


def rotation_accuracy_at(pairs: Sequence[PosePairError], theta_deg: float) -> float:
    return accuracy_at((p.rre_deg for p in pairs), theta_deg)


def translation_accuracy_at(pairs: Sequence[PosePairError], theta_deg: float) -> float:
    return accuracy_at((p.rte_deg for p in pairs), theta_deg)


def combined_errors(pairs: Sequence[PosePairError], combine: str = "min") -> np.ndarray:
    """Per-pair combination of rotation and translation errors.

    combine="min" keeps the smaller error per pair (per-pair maximum accuracy);
    combine="max" keeps the larger (the conventional min-accuracy reading).
    """
    if combine not in ("min", "max"):
        raise InvalidInputError(f"unknown combine mode {combine!r}")
    f = np.minimum if combine == "min" else np.maximum
    rre = np.array([p.rre_deg for p in pairs])
    rte = np.array([p.rte_deg for p in pairs])
    return f(rre, rte)


def auc(
    pairs: Sequence[PosePairError],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS_DEG,
    combine: str = "min",
) -> float:
    """Discrete AUC: mean accuracy of the combined error over the threshold list."""
    if len(pairs) == 0:
        raise InvalidInputError("empty pair list")
    errs = combined_errors(pairs, combine)
    return float(np.mean([accuracy_at(errs, th) for th in thresholds]))


def registration_rate(total_frames: int, registered_frames: int) -> float:
    if total_frames <= 0:
        raise InvalidInputError("total frame count must be positive")
    if registered_frames > total_frames or registered_frames < 0:
        raise InvalidInputError("registered count must be in [0, total]")
    return 100.0 * registered_frames / total_frames


@dataclass
class CloudMetrics:
    pca: float  # mean NN distance, ground truth -> reconstruction
    pcc: float  # mean NN distance, reconstruction -> ground truth
    chamfer: float  # (pca + pcc) / 2


def cloud_metrics(
    recon: PointCloud,
    gt: PointCloud,
    pred_poses: Sequence[CameraPose],
    gt_poses: Sequence[CameraPose],
) -> CloudMetrics:
    """Similarity-align the reconstruction via camera centers, then NN distances.

    Nearest-neighbor queries are exact (k-d tree, brute-force equivalent).
    """
    if len(recon) == 0 or len(gt) == 0:
        raise InvalidInputError("point clouds must be nonempty")
    if len(pred_poses) != len(gt_poses) or len(pred_poses) < 3:
        raise InvalidInputError("need >= 3 registered camera pairs for alignment")
    pred_centers = np.stack([p.camera_center() for p in pred_poses])
    gt_centers = np.stack([p.camera_center() for p in gt_poses])
    sim = umeyama_align(pred_centers, gt_centers)
    aligned = sim.apply(recon.points)
    gt_tree = cKDTree(gt.points)
    rec_tree = cKDTree(aligned)
    pcc = float(gt_tree.query(aligned, k=1)[0].mean())
    pca = float(rec_tree.query(gt.points, k=1)[0].mean())
    return CloudMetrics(pca=pca, pcc=pcc, chamfer=(pca + pcc) / 2.0)


@dataclass
class FpsStats:
    mean: float
    std: float
    samples: list[float] = field(default_factory=list)


def fps_from_counts(frames: int, seconds: float) -> float:
    if frames < 1:
        raise InvalidInputError("need at least one processed frame")
    if seconds <= 0:
        raise InvalidInputError("elapsed time must be positive")
    return frames / seconds


def measure_fps(run: Callable[[], int], repeats: int = 3) -> FpsStats:
    """Time `run` (which returns the number of frames it processed) repeatedly.

    Only the call itself is timed; callers must keep file I/O outside `run`.
    """
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        frames = run()
        dt = time.perf_counter() - t0
        samples.append(fps_from_counts(frames, dt))
    arr = np.asarray(samples)
    return FpsStats(mean=float(arr.mean()), std=float(arr.std()), samples=samples)


def two_view_report(
    pred_pair: Sequence[CameraPose],
    gt_pair: Sequence[CameraPose],
    thresholds: Sequence[float] = TWO_VIEW_THRESHOLDS_DEG,
    combine: str = "min",
) -> dict:
    """Single relative-pose error thresholded at {5, 10, 20} degrees by default."""
    if len(pred_pair) != 2 or len(gt_pair) != 2:
        raise InvalidInputError("two-view report needs exactly two frames per side")
    (pair,) = pairwise_errors(list(pred_pair), list(gt_pair))
    comb = float(combined_errors([pair], combine)[0])
    report = {"rre_deg": pair.rre_deg, "rte_deg": pair.rte_deg}
    for th in thresholds:
        key = int(th) if float(th).is_integer() else th
        report[f"rra@{key}"] = 100.0 * (pair.rre_deg < th)
        report[f"rta@{key}"] = 100.0 * (pair.rte_deg < th)
        report[f"auc@{key}"] = 100.0 * (comb < th)
    return report


CSV_COLUMNS = ("auc", "rra", "rta", "pca", "pcc", "chamfer", "reg", "fps")


@dataclass
class MetricsReport:
    """One evaluation run's metrics; column order mirrors the benchmark table."""

    auc_30: float
    rra_30: float
    rta_30: float
    per_threshold: dict  # {"rra": {5: ..., 15: ..., 30: ...}, "rta": {...}, "auc_thresholds": [...]}
    registration_rate_pct: float
    pca: float | None = None
    pcc: float | None = None
    chamfer: float | None = None
    fps: float | None = None
    combine: str = "min"
    n_pairs: int = 0

    def __post_init__(self):
        for v, name in ((self.auc_30, "auc"), (self.rra_30, "rra"), (self.rta_30, "rta")):
            if not 0.0 <= v <= 100.0:
                raise InvalidInputError(f"{name} out of [0, 100]")
        if not 0.0 <= self.registration_rate_pct <= 100.0:
            raise InvalidInputError("registration rate out of [0, 100]")
        if self.pca is not None and self.pcc is not None and self.chamfer is not None:
            if abs(self.chamfer - (self.pca + self.pcc) / 2.0) > 1e-12:
                raise InvalidInputError("chamfer must equal (pca + pcc) / 2")

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    def csv_row(self) -> str:
        vals = [self.auc_30, self.rra_30, self.rta_30, self.pca, self.pcc, self.chamfer,
                self.registration_rate_pct, self.fps]
        return ",".join("" if v is None else f"{v:.6g}" for v in vals)

    @staticmethod
    def csv_header() -> str:
        return ",".join(CSV_COLUMNS)


def report_from_pairs(
    pairs: Sequence[PosePairError],
    total_frames: int,
    registered_frames: int | None = None,
    cloud: CloudMetrics | None = None,
    fps: float | None = None,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS_DEG,
    combine: str = "min",
) -> MetricsReport:
    """Assemble a MetricsReport from raw pair errors (pooled or per scene)."""
    registered = total_frames if registered_frames is None else registered_frames
    per = {
        "rra": {th: rotation_accuracy_at(pairs, th) for th in thresholds},
        "rta": {th: translation_accuracy_at(pairs, th) for th in thresholds},
        "auc_thresholds": list(thresholds),
    }
    top = max(thresholds)
    return MetricsReport(
        auc_30=auc(pairs, thresholds, combine),
        rra_30=per["rra"][top],
        rta_30=per["rta"][top],
        per_threshold=per,
        registration_rate_pct=registration_rate(total_frames, registered),
        pca=None if cloud is None else cloud.pca,
        pcc=None if cloud is None else cloud.pcc,
        chamfer=None if cloud is None else cloud.chamfer,
        fps=fps,
        combine=combine,
        n_pairs=len(pairs),
    )
