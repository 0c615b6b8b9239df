"""Feature-space diagnostics: cosine alignment profiles, Gaussian-fit Jeffreys
divergence, PCA embedding export, bootstrap bands, and Welch significance tests.

All functions operate on captured token arrays (numpy) and are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateInputError, InvalidInputError


@dataclass
class LayerAlignmentProfile:
    """Per-layer spread of the RGB-to-RGB minus RGB-to-thermal cosine gap."""

    median: np.ndarray  # (L,)
    q25: np.ndarray  # (L,)
    q75: np.ndarray  # (L,)
    sample_count: int

    def __post_init__(self):
        self.median = np.asarray(self.median, dtype=np.float64)
        self.q25 = np.asarray(self.q25, dtype=np.float64)
        self.q75 = np.asarray(self.q75, dtype=np.float64)
        if not (np.all(self.q25 <= self.median + 1e-12) and np.all(self.median <= self.q75 + 1e-12)):
            raise InvalidInputError("quartile bands must satisfy q25 <= median <= q75")

    def to_dict(self) -> dict:
        return {
            str(layer): {
                "median": float(self.median[layer]),
                "q25": float(self.q25[layer]),
                "q75": float(self.q75[layer]),
            }
            for layer in range(len(self.median))
        }


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    n[n == 0] = 1.0
    return x / n


def mean_cross_frame_cosine(
    frames_a: Sequence[np.ndarray],
    frames_b: Sequence[np.ndarray] | None = None,
    ids_a: Sequence | None = None,
    ids_b: Sequence | None = None,
) -> float:
    """Mean cosine similarity over all token pairs drawn from distinct frames.

    With frames_b=None the pair set is tokens of distinct frames within frames_a;
    otherwise it is every (token in frames_a) x (token in frames_b) pair whose
    source frames differ (frame identities compared via ids_a/ids_b when given;
    batches without shared poses never exclude anything).
    Uses sum(unit tokens) identities, so the full pair set is covered exactly.
    """
    sums_a = [np.sum(_unit_rows(f), axis=0) for f in frames_a]
    counts_a = [f.shape[0] for f in frames_a]
    if frames_b is None:
        if len(frames_a) < 2:
            raise InvalidInputError("need at least two frames for cross-frame pairs")
        total = np.sum(sums_a, axis=0)
        dot = float(total @ total) - float(np.sum([s @ s for s in sums_a]))
        n = sum(counts_a) ** 2 - sum(c * c for c in counts_a)
    else:
        sums_b = [np.sum(_unit_rows(f), axis=0) for f in frames_b]
        counts_b = [f.shape[0] for f in frames_b]
        if not frames_a or not frames_b:
            raise InvalidInputError("both frame sets must be nonempty")
        dot = float(np.sum(sums_a, axis=0) @ np.sum(sums_b, axis=0))
        n = sum(counts_a) * sum(counts_b)
        if ids_a is not None and ids_b is not None:
            for i, ia in enumerate(ids_a):
                for j, ib in enumerate(ids_b):
                    if ia == ib:
                        dot -= float(sums_a[i] @ sums_b[j])
                        n -= counts_a[i] * counts_b[j]
    if n == 0:
        raise InvalidInputError("no token pairs available")
    return dot / n


def cosine_gap_by_layer(
    rgb_by_layer: Sequence[Sequence[np.ndarray]],
    thermal_by_layer: Sequence[Sequence[np.ndarray]],
    rgb_ids: Sequence | None = None,
    thermal_ids: Sequence | None = None,
) -> np.ndarray:
    """x_r2r - x_r2t per layer for one scene's captured patch tokens."""
    if len(rgb_by_layer) != len(thermal_by_layer):
        raise InvalidInputError("layer counts differ between modalities")
    gaps = []
    for rgb_frames, th_frames in zip(rgb_by_layer, thermal_by_layer):
        if len(rgb_frames) < 2 or len(th_frames) < 1:
            raise InvalidInputError("need >= 2 RGB frames and >= 1 thermal frame per layer")
        x_r2r = mean_cross_frame_cosine(rgb_frames)
        x_r2t = mean_cross_frame_cosine(rgb_frames, th_frames, rgb_ids, thermal_ids)
        gaps.append(x_r2r - x_r2t)
    return np.asarray(gaps)


def layer_cosine_profile(per_scene_gaps: Sequence[np.ndarray]) -> LayerAlignmentProfile:
    """Aggregate per-scene layer gaps into median and quartile bands across scenes."""
    if len(per_scene_gaps) == 0:
        raise InvalidInputError("need at least one scene")
    mat = np.stack([np.asarray(g, dtype=np.float64) for g in per_scene_gaps])
    return LayerAlignmentProfile(
        median=np.median(mat, axis=0),
        q25=np.quantile(mat, 0.25, axis=0),
        q75=np.quantile(mat, 0.75, axis=0),
        sample_count=mat.shape[0],
    )


@dataclass
class GaussianFit:
    mean: np.ndarray  # (d,)
    covariance: np.ndarray  # (d, d), symmetric positive-definite after ridge

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        if np.max(np.abs(self.covariance - self.covariance.T)) > 1e-12:
            raise InvalidInputError("covariance must be symmetric within 1e-12")


def fit_gaussian(tokens: np.ndarray, epsilon: float = 1e-6) -> GaussianFit:
    """Sample mean and (unbiased) covariance with a scale-aware ridge.

    The ridge added is epsilon * trace(cov)/d * I, keeping the KL finite when
    the token count is below the dimension. epsilon=0 disables it.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[0] < 2:
        raise InvalidInputError("need a (n >= 2, d) token matrix")
    mu = tokens.mean(axis=0)
    cov = np.cov(tokens, rowvar=False, bias=False).reshape(tokens.shape[1], tokens.shape[1])
    cov = (cov + cov.T) / 2.0
    if epsilon > 0:
        d = tokens.shape[1]
        ridge = epsilon * max(np.trace(cov) / d, np.finfo(np.float64).tiny)
        cov = cov + ridge * np.eye(d)
    return GaussianFit(mu, cov)


def gaussian_kl(a: GaussianFit, b: GaussianFit) -> float:
    """Closed-form KL(N_a || N_b)."""
    d = a.mean.shape[0]
    if b.mean.shape[0] != d:
        raise InvalidInputError("dimension mismatch")
    diff = b.mean - a.mean
    solve_b = np.linalg.solve(b.covariance, np.eye(d))
    tr = float(np.trace(solve_b @ a.covariance))
    maha = float(diff @ solve_b @ diff)
    _, logdet_a = np.linalg.slogdet(a.covariance)
    _, logdet_b = np.linalg.slogdet(b.covariance)
    return 0.5 * (tr + maha - d + logdet_b - logdet_a)


def jeffreys_divergence(
    tokens_a: np.ndarray, tokens_b: np.ndarray, epsilon: float = 1e-6
) -> float:
    """Symmetrized KL between Gaussian fits of two token populations."""
    tokens_a = np.asarray(tokens_a, dtype=np.float64)
    tokens_b = np.asarray(tokens_b, dtype=np.float64)
    if tokens_a.shape[-1] != tokens_b.shape[-1]:
        raise InvalidInputError("token dimensions differ")
    fa = fit_gaussian(tokens_a, epsilon)
    fb = fit_gaussian(tokens_b, epsilon)
    return gaussian_kl(fa, fb) + gaussian_kl(fb, fa)


def pca_embed(features: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean-centered projection onto the top-k principal axes.

    Returns (coords (n, k), explained variance ratios (k,)). Sign convention:
    the largest-magnitude loading of each axis is made positive.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("features must be 2-D")
    n = x.shape[0]
    if n < k + 1:
        raise InvalidInputError(f"need at least k+1={k + 1} samples, got {n}")
    xc = x - x.mean(axis=0)
    U, s, Vt = np.linalg.svd(xc, full_matrices=False)
    rank = int(np.sum(s > s[0] * 1e-12)) if s.size and s[0] > 0 else 0
    if k > rank:
        raise DegenerateInputError(f"k={k} exceeds data rank {rank}")
    axes = Vt[:k]
    flips = np.sign(axes[np.arange(k), np.argmax(np.abs(axes), axis=1)])
    axes = axes * flips[:, None]
    coords = xc @ axes.T
    total = float(np.sum(s**2))
    ratios = (s[:k] ** 2) / total
    return coords, ratios


def bootstrap_quantiles(
    per_scene_values: Sequence[float],
    rng: np.random.Generator,
    resamples: int = 2000,
    quantiles: Sequence[float] = (0.25, 0.75),
    statistic=np.median,
) -> dict[float, float]:
    """Quantile band of the resampled statistic (median by default) over scenes."""
    vals = np.asarray(list(per_scene_values), dtype=np.float64)
    if vals.size == 0:
        raise InvalidInputError("empty input")
    n = vals.size
    idx = rng.integers(0, n, size=(resamples, n))
    stats_r = statistic(vals[idx], axis=1)
    return {float(q): float(np.quantile(stats_r, q)) for q in quantiles}


def welch_t_test_one_sided(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """One-sided Welch p-value for the null "A outperforms (>=) B".

    Small p is evidence against A's superiority: p = F_t(t_observed) with
    t = (mean_a - mean_b) / sqrt(var_a/n_a + var_b/n_b) and Satterthwaite
    degrees of freedom, so equal means give p = 0.5 and mean_a >> mean_b
    gives p -> 1.
    """
    a = np.asarray(list(samples_a), dtype=np.float64)
    b = np.asarray(list(samples_b), dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InvalidInputError("need at least two samples per group")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va <= 0 and vb <= 0:
        raise DegenerateInputError("both samples have zero variance")
    sa, sb = va / a.size, vb / b.size
    t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    return float(stats.t.cdf(t, df))


def welch_matrix(samples_by_name: dict[str, Sequence[float]]) -> tuple[list[str], np.ndarray]:
    """Pairwise one-sided Welch p-values; entry (i, j) tests "row i outperforms column j"."""
    names = list(samples_by_name)
    n = len(names)
    mat = np.full((n, n), np.nan)
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i != j:
                mat[i, j] = welch_t_test_one_sided(samples_by_name[a], samples_by_name[b])
    return names, mat
