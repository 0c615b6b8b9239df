"""Analysis tests: closed-form statistics oracles and brute-force cosine pairs."""

import mpmath
import numpy as np
import pytest

from rtmv.analysis import (
    GaussianFit,
    LayerAlignmentProfile,
    bootstrap_quantiles,
    cosine_gap_by_layer,
    fit_gaussian,
    gaussian_kl,
    jeffreys_divergence,
    layer_cosine_profile,
    mean_cross_frame_cosine,
    pca_embed,
    welch_matrix,
    welch_t_test_one_sided,
)
from rtmv.errors import DegenerateInputError, InvalidInputError


def brute_force_cross_frame_cosine(frames_a, frames_b=None):
    """All-pairs loop, the oracle for the closed-form implementation."""

    def unit(v):
        n = np.linalg.norm(v)
        return v / n if n > 0 else v

    sims = []
    if frames_b is None:
        for i, fa in enumerate(frames_a):
            for j, fb in enumerate(frames_a):
                if i == j:
                    continue
                for x in fa:
                    for y in fb:
                        sims.append(float(unit(x) @ unit(y)))
    else:
        for fa in frames_a:
            for fb in frames_b:
                for x in fa:
                    for y in fb:
                        sims.append(float(unit(x) @ unit(y)))
    return float(np.mean(sims))


class TestCosineProfile:
    def test_matches_brute_force_two_frames(self):
        rng = np.random.default_rng(0)
        frames = [rng.normal(size=(5, 8)), rng.normal(size=(7, 8))]
        others = [rng.normal(size=(4, 8))]
        assert mean_cross_frame_cosine(frames) == pytest.approx(
            brute_force_cross_frame_cosine(frames), abs=1e-12
        )
        assert mean_cross_frame_cosine(frames, others) == pytest.approx(
            brute_force_cross_frame_cosine(frames, others), abs=1e-12
        )

    def test_identical_thermal_gives_zero_gap(self):
        rng = np.random.default_rng(1)
        rgb = [rng.normal(size=(6, 16)) for _ in range(3)]
        # thermal tokens are per-frame copies of the RGB tokens; sharing frame ids
        # drops same-frame pairs so x_r2t has exactly the x_r2r pair set
        ids = ["f0", "f1", "f2"]
        gaps = cosine_gap_by_layer([rgb], [rgb], rgb_ids=ids, thermal_ids=ids)
        assert gaps[0] == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_thermal_gap_equals_r2r(self):
        rng = np.random.default_rng(2)
        # RGB tokens live in the first 8 dims, thermal in the last 8: cross dot = 0
        rgb = [np.pad(rng.normal(size=(5, 8)), ((0, 0), (0, 8))) for _ in range(3)]
        thermal = [np.pad(rng.normal(size=(5, 8)), ((0, 0), (8, 0))) for _ in range(2)]
        gaps = cosine_gap_by_layer([rgb], [thermal])
        assert gaps[0] == pytest.approx(mean_cross_frame_cosine(rgb), abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        rgb = [rng.normal(size=(4, 6)) for _ in range(2)]
        th = [rng.normal(size=(4, 6))]
        g1 = cosine_gap_by_layer([rgb], [th])
        g2 = cosine_gap_by_layer([[37.0 * f for f in rgb]], [[37.0 * f for f in th]])
        assert g1[0] == pytest.approx(g2[0], abs=1e-12)

    def test_profile_band_ordering(self):
        rng = np.random.default_rng(4)
        per_scene = [rng.normal(size=6) for _ in range(9)]
        prof = layer_cosine_profile(per_scene)
        assert np.all(prof.q25 <= prof.median)
        assert np.all(prof.median <= prof.q75)
        assert prof.sample_count == 9

    def test_profile_ordering_enforced(self):
        with pytest.raises(InvalidInputError):
            LayerAlignmentProfile(median=[0.0], q25=[1.0], q75=[2.0], sample_count=1)


class TestJeffreys:
    def test_identical_sets_zero(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 4))
        assert jeffreys_divergence(x, x) == pytest.approx(0.0, abs=1e-9)

    def test_one_dimensional_closed_form(self):
        # fitted N(0,1) vs N(1,1): KL each way is 1/2, Jeffreys exactly 1
        a = np.array([[-1.0], [0.0], [1.0]])  # mean 0, unbiased var 1
        b = a + 1.0
        assert jeffreys_divergence(a, b, epsilon=0.0) == pytest.approx(1.0, abs=1e-12)

    def test_one_dimensional_variance_case(self):
        # N(0,1) vs N(0,4): KL(a||b) = 0.5*(1/4 - 1 + ln 4), KL(b||a) = 0.5*(4 - 1 - ln 4)
        a = np.array([[-1.0], [0.0], [1.0]])
        b = 2.0 * a
        expected = 0.5 * (0.25 - 1 + np.log(4.0)) + 0.5 * (4.0 - 1 - np.log(4.0))
        assert jeffreys_divergence(a, b, epsilon=0.0) == pytest.approx(expected, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        x, y = rng.normal(size=(30, 5)), rng.normal(size=(25, 5)) + 0.3
        assert jeffreys_divergence(x, y) == jeffreys_divergence(y, x)

    def test_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.normal(size=(12, 3))
            y = rng.normal(size=(15, 3)) * rng.uniform(0.5, 2.0)
            assert jeffreys_divergence(x, y) >= 0.0

    def test_ridge_keeps_low_count_finite(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(4, 16))  # fewer tokens than dims: singular covariance
        y = rng.normal(size=(5, 16))
        val = jeffreys_divergence(x, y, epsilon=1e-6)
        assert np.isfinite(val) and val >= 0

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            jeffreys_divergence(np.zeros((3, 2)), np.zeros((3, 3)))

    def test_kl_dimension_mismatch(self):
        a = GaussianFit(np.zeros(2), np.eye(2))
        b = GaussianFit(np.zeros(3), np.eye(3))
        with pytest.raises(InvalidInputError):
            gaussian_kl(a, b)

    def test_fit_needs_two_samples(self):
        with pytest.raises(InvalidInputError):
            fit_gaussian(np.zeros((1, 3)))


class TestPca:
    def test_line_has_unit_ratio(self):
        t = np.linspace(-1, 1, 10)
        pts = np.outer(t, [1.0, 2.0, -0.5])
        coords, ratios = pca_embed(pts, 1)
        assert ratios[0] == pytest.approx(1.0, abs=1e-12)
        assert coords.shape == (10, 1)

    def test_isotropic_ratios_near_uniform(self):
        rng = np.random.default_rng(9)
        pts = rng.normal(size=(20000, 4))
        _, ratios = pca_embed(pts, 4)
        np.testing.assert_allclose(ratios, 0.25, rtol=0.10)

    def test_reconstruction_error_identity(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(50, 6)) @ np.diag([3.0, 2.0, 1.0, 0.5, 0.2, 0.1])
        xc = x - x.mean(axis=0)
        _, s, Vt = np.linalg.svd(xc, full_matrices=False)
        k = 3
        coords, _ = pca_embed(x, k)
        recon = coords @ np.sign(
            Vt[:k][np.arange(k), np.argmax(np.abs(Vt[:k]), axis=1)]
        )[:, None] * 0  # reconstruction built below from the returned axes instead
        # reconstruct via least squares on the coords to avoid sign bookkeeping
        axes, *_ = np.linalg.lstsq(coords, xc, rcond=None)
        resid = xc - coords @ axes
        assert np.sum(resid**2) / x.shape[0] == pytest.approx(
            np.sum(s[k:] ** 2) / x.shape[0], abs=1e-9
        )
        del recon

    def test_translation_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(30, 5))
        c1, r1 = pca_embed(x, 2)
        c2, r2 = pca_embed(x + 7.5, 2)
        np.testing.assert_allclose(c1, c2, atol=1e-9)
        np.testing.assert_allclose(r1, r2, atol=1e-12)

    def test_k_exceeding_rank(self):
        pts = np.outer(np.arange(8.0), [1.0, 0.0, 0.0])
        with pytest.raises(DegenerateInputError):
            pca_embed(pts, 2)


class TestBootstrap:
    def test_constant_values_collapse(self):
        rng = np.random.default_rng(12)
        band = bootstrap_quantiles([3.5, 3.5, 3.5], rng)
        assert band[0.25] == 3.5
        assert band[0.75] == 3.5

    def test_fixed_seed_reproducible(self):
        vals = [0.1, 0.9, 0.4, 0.7]
        b1 = bootstrap_quantiles(vals, np.random.default_rng(42))
        b2 = bootstrap_quantiles(vals, np.random.default_rng(42))
        assert b1 == b2

    def test_two_value_exhaustive_enumeration(self):
        # resamples of {0, 1} with n=2: medians 0, 0.5, 1 with probs 1/4, 1/2, 1/4
        rng = np.random.default_rng(13)
        vals = np.array([0.0, 1.0])
        idx = rng.integers(0, 2, size=(20000, 2))
        medians = np.median(vals[idx], axis=1)
        support = np.unique(medians)
        np.testing.assert_array_equal(support, [0.0, 0.5, 1.0])
        freqs = [(medians == v).mean() for v in (0.0, 0.5, 1.0)]
        np.testing.assert_allclose(freqs, [0.25, 0.5, 0.25], atol=0.02)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            bootstrap_quantiles([], np.random.default_rng(0))


def t_cdf_oracle(t, df):
    """Student t CDF via the regularized incomplete beta, in arbitrary precision."""
    x = df / (df + t * t)
    half = mpmath.betainc(df / 2.0, 0.5, 0, x, regularized=True) / 2.0
    return float(half if t <= 0 else 1 - half)


class TestWelch:
    def test_equal_means_give_half(self):
        a = [1.0, 2.0, 3.0, 4.0]
        assert welch_t_test_one_sided(a, list(a)) == 0.5

    def test_limits(self):
        a = [10.0, 10.000001, 9.999999]
        b = [0.0, 0.000001, -0.000001]
        assert welch_t_test_one_sided(a, b) > 1 - 1e-12
        assert welch_t_test_one_sided(b, a) < 1e-12

    def test_matches_incomplete_beta_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            na, nb = int(rng.integers(2, 30)), int(rng.integers(2, 30))
            a = rng.normal(loc=rng.uniform(-1, 1), scale=rng.uniform(0.5, 2), size=na)
            b = rng.normal(loc=rng.uniform(-1, 1), scale=rng.uniform(0.5, 2), size=nb)
            got = welch_t_test_one_sided(a, b)
            sa, sb = a.var(ddof=1) / na, b.var(ddof=1) / nb
            t = (a.mean() - b.mean()) / np.sqrt(sa + sb)
            df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
            assert got == pytest.approx(t_cdf_oracle(t, df), abs=1e-9)

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateInputError):
            welch_t_test_one_sided([1.0, 1.0], [1.0, 1.0])

    def test_matrix_layout(self):
        rng = np.random.default_rng(15)
        groups = {k: rng.normal(size=8) + i for i, k in enumerate("abc")}
        names, mat = welch_matrix(groups)
        assert names == ["a", "b", "c"]
        assert np.isnan(mat[0, 0])
        # row c has the largest mean: evidence FOR superiority, p near 1
        assert mat[2, 0] > 0.5 > mat[0, 2]
