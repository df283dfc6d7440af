"""Unit tests for KL divergence, PSNR, SSIM and the noise samplers."""
import math

import numpy as np
import pytest
import torch

from srgbnoise.models.dataset import CameraCondition, ImagePair
from srgbnoise.services.dataset import load_pairs
from srgbnoise.services.evaluation import (
    HIST_BINS,
    PSNR_CAP,
    AWGNSampler,
    ModelSampler,
    histogram,
    kl_divergence,
    kl_from_probabilities,
    kl_report,
    merge_histograms,
    psnr,
    ssim,
)
from srgbnoise.services.training import build_noise_model
from srgbnoise.utils.errors import ValidationError


@pytest.mark.unit
class TestHistogram:
    """Test fixed-edge noise histograms."""

    def test_edges(self):
        """Test 130 bins of width 4 over [-260, 260)."""
        hist = histogram(np.zeros(1))
        assert len(hist.edges) == HIST_BINS + 1
        assert hist.edges[0] == -260.0 and hist.edges[-1] == 260.0
        assert hist.edges[1] - hist.edges[0] == 4.0

    def test_boundaries_and_overflow(self):
        """Test left-closed bins and out-of-range tallies."""
        hist = histogram(np.array([-260.0, 259.999, 260.0, -260.01, 0.0, -0.001]))
        assert hist.counts[0] == 1
        assert hist.counts[HIST_BINS - 1] == 1
        assert hist.counts[65] == 1 and hist.counts[64] == 1
        assert hist.overflow == 1 and hist.underflow == 1
        assert hist.total == 6

    def test_normal_mass(self):
        """Test N(0, 2²) noise lands almost entirely in the four central bins."""
        values = np.random.default_rng(0).standard_normal(100_000) * 2
        hist = histogram(values)
        assert sum(hist.counts[63:67]) / hist.total > 0.999

    def test_iterable_and_tensor_input(self):
        """Test chunks and tensors pool into one histogram."""
        chunks = [np.full(3, 1.0), torch.full((2,), -5.0)]
        hist = histogram(chunks)
        assert hist.counts[65] == 3 and hist.counts[63] == 2

    def test_non_finite(self):
        """Test NaN noise is rejected."""
        with pytest.raises(ValidationError):
            histogram(np.array([0.0, np.nan]))

    def test_merge(self):
        """Test merged histograms add counts and tallies."""
        merged = merge_histograms([histogram(np.zeros(2)), histogram(np.array([0.0, 300.0]))])
        assert merged.counts[65] == 3 and merged.overflow == 1


@pytest.mark.unit
class TestKLDivergence:
    """Test the discrete KL divergence."""

    def test_closed_form(self):
        """Test KL((0.5, 0.5) ‖ (0.25, 0.75))."""
        assert kl_from_probabilities([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.1438, abs=1e-4)

    def test_identical_histograms(self):
        """Test KL(h ‖ h) = 0."""
        hist = histogram(np.random.default_rng(1).standard_normal(1000) * 10)
        assert kl_divergence(hist, hist) == pytest.approx(0.0, abs=1e-12)

    def test_non_negative_and_finite_with_empty_bins(self):
        """Test smoothing keeps KL finite when the synthesized histogram misses bins."""
        real = histogram(np.array([-10.0, 0.0, 10.0]))
        synth = histogram(np.zeros(3))
        value = kl_divergence(real, synth)
        assert math.isfinite(value) and value > 0

    def test_empty_histogram(self):
        """Test an empty histogram is rejected."""
        with pytest.raises(ValidationError):
            kl_divergence(histogram(np.zeros(0)), histogram(np.zeros(3)))

    def test_all_values_out_of_range(self):
        """Test a histogram with no in-range mass is rejected."""
        with pytest.raises(ValidationError):
            kl_divergence(histogram(np.full(3, 400.0)), histogram(np.zeros(3)))


@pytest.mark.unit
class TestImageMetrics:
    """Test PSNR and SSIM."""

    def test_psnr_unit_mse(self):
        """Test MSE 1 gives 10·log10(255²)."""
        a = np.zeros((8, 8, 3))
        assert psnr(a, a + 1) == pytest.approx(48.1308, abs=1e-4)

    def test_psnr_half(self):
        """Test MSE 255 gives half of the unit-MSE value."""
        a = np.zeros((8, 8, 3))
        assert psnr(a, a + math.sqrt(255.0)) == pytest.approx(24.0654, abs=1e-4)

    def test_psnr_identical(self):
        """Test identical images hit the cap."""
        a = np.random.default_rng(0).random((8, 8, 3)) * 255
        assert psnr(a, a) == PSNR_CAP

    def test_psnr_shape_mismatch(self):
        """Test mismatched shapes are rejected."""
        with pytest.raises(ValidationError):
            psnr(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))

    def test_ssim_identical(self):
        """Test SSIM of an image with itself is 1."""
        a = np.random.default_rng(0).random((32, 32, 3)) * 255
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)

    def test_ssim_independent_noise(self):
        """Test independent noise images are structurally unrelated."""
        rng = np.random.default_rng(1)
        a = rng.random((256, 256, 3)) * 255
        b = rng.random((256, 256, 3)) * 255
        assert abs(ssim(a, b)) < 0.02

    def test_ssim_symmetric(self):
        """Test SSIM(a, b) = SSIM(b, a)."""
        rng = np.random.default_rng(2)
        a = rng.random((24, 24, 3)) * 255
        b = np.clip(a + rng.standard_normal(a.shape) * 20, 0, 255)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert 0 < ssim(a, b) < 1

    def test_ssim_too_small(self):
        """Test images smaller than the window are rejected."""
        with pytest.raises(ValidationError):
            ssim(np.zeros((10, 10, 3)), np.zeros((10, 10, 3)))


@pytest.mark.unit
class TestSamplers:
    """Test baseline and model noise samplers."""

    def test_awgn_fit_and_sample(self):
        """Test AWGN recovers σ and samples reproducible 8-bit images."""
        rng = np.random.default_rng(0)
        clean = np.full((64, 64, 3), 128.0, dtype=np.float32)
        noisy = clean + rng.standard_normal(clean.shape).astype(np.float32) * 3
        pair = ImagePair(clean=clean, noisy=noisy, condition=CameraCondition(0, 0), scene_id="s")
        sampler = AWGNSampler.fit([pair])
        assert sampler.sigma[0] == pytest.approx(3.0, rel=0.05)
        first, second = sampler.sample(pair, 5), sampler.sample(pair, 5)
        np.testing.assert_array_equal(first, second)
        np.testing.assert_array_equal(first, np.round(first))

    def test_model_sampler_identity(self, oracle_manifest, tiny_train_config):
        """Test an untrained model adds quantized standard-normal noise."""
        bundle = build_noise_model(tiny_train_config, oracle_manifest.registry)
        pair = load_pairs(oracle_manifest)[0]
        noisy = ModelSampler(bundle).sample(pair, seed=3)
        noise = noisy - pair.clean
        assert noisy.min() >= 0 and noisy.max() <= 255
        assert np.abs(noise).max() <= 6
        np.testing.assert_array_equal(noisy, ModelSampler(bundle).sample(pair, seed=3))


@pytest.mark.unit
class TestKLReport:
    """Test the per-group KL report."""

    def test_baselines_only(self, oracle_manifest):
        """Test group, camera and overall rows for the AWGN baseline."""
        rows = kl_report(oracle_manifest, bundle=None, seed=0)
        assert [(r.camera, r.iso, r.method) for r in rows] == [
            ("S6", 100, "awgn"),
            ("S6", 200, "awgn"),
            ("S6", None, "awgn"),
            ("overall", None, "awgn"),
        ]
        assert all(r.kl >= 0 for r in rows)
        assert rows[2].kl == pytest.approx((rows[0].kl + rows[1].kl) / 2)
        assert rows[0].n_values == 2 * 32 * 32 * 3

    def test_model_rows(self, oracle_manifest, tiny_train_config):
        """Test a model produces one row per group plus aggregates, reproducibly."""
        bundle = build_noise_model(tiny_train_config, oracle_manifest.registry)
        rows = kl_report(oracle_manifest, bundle, seed=1, baselines=False)
        again = kl_report(oracle_manifest, bundle, seed=1, baselines=False)
        assert {r.method for r in rows} == {"model"}
        assert len(rows) == 4
        assert [r.kl for r in rows] == [r.kl for r in again]
        assert rows[-1].to_dict()["iso"] == ""
