"""Tests for the evaluation metrics."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable

import numpy as np
import pytest
import torch
from numpy.lib.stride_tricks import sliding_window_view

from motion_evolve.exceptions import DegenerateEmbeddingError, InvalidArgumentError
from motion_evolve.metrics import (
    ALL_METRICS,
    DownsampleEmbedder,
    Embedder,
    RandomProjectionEmbedder,
    akd,
    compute_report,
    cosine_similarity,
    csim,
    fid,
    fid_from_embeddings,
    l1_metric,
    max_ms_ssim_levels,
    ms_ssim,
    perceptual_distance,
    psnr,
    ssim,
)


def _constant(value: float, size: int = 16) -> torch.Tensor:
    return torch.full((3, size, size), value, dtype=torch.float64)


def _reference_ssim_terms(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel SSIM and contrast-structure means from explicit 11x11 windows."""
    coords = np.arange(11) - 5.0
    kernel = np.exp(-(coords**2) / (2 * 1.5**2))
    kernel /= kernel.sum()
    window = np.outer(kernel, kernel)
    c1, c2 = 0.01**2, 0.03**2
    ssims, css = [], []
    for xc, yc in zip(x, y, strict=True):
        px = sliding_window_view(xc, (11, 11))
        py = sliding_window_view(yc, (11, 11))
        mu_x = (px * window).sum(axis=(-2, -1))
        mu_y = (py * window).sum(axis=(-2, -1))
        var_x = (px * px * window).sum(axis=(-2, -1)) - mu_x**2
        var_y = (py * py * window).sum(axis=(-2, -1)) - mu_y**2
        cov = (px * py * window).sum(axis=(-2, -1)) - mu_x * mu_y
        cs = (2 * cov + c2) / (var_x + var_y + c2)
        luminance = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
        ssims.append((luminance * cs).mean())
        css.append(cs.mean())
    return np.array(ssims), np.array(css)


def _reference_ms_ssim(x: np.ndarray, y: np.ndarray) -> float:
    """Five-level MS-SSIM for even-sided (C, H, W) arrays."""
    weights = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
    product = np.ones(x.shape[0])
    for level, weight in enumerate(weights):
        full, cs = _reference_ssim_terms(x, y)
        if level == len(weights) - 1:
            product *= np.maximum(full, 0) ** weight
        else:
            product *= np.maximum(cs, 0) ** weight
            channels, height, width = x.shape
            x = x.reshape(channels, height // 2, 2, width // 2, 2).mean(axis=(2, 4))
            y = y.reshape(channels, height // 2, 2, width // 2, 2).mean(axis=(2, 4))
    return float(product.mean())


class TestPixelMetrics:
    """Tests for L1 and PSNR."""

    def test_l1(self) -> None:
        """Test the mean absolute difference of two constant frames."""
        assert l1_metric(_constant(0.2), _constant(0.5)) == pytest.approx(0.3)

    def test_psnr_twenty_db(self) -> None:
        """Test that an MSE of 0.01 gives 20 dB."""
        assert psnr(_constant(0.0), _constant(0.1)) == pytest.approx(20.0)

    def test_psnr_identical_frames(self) -> None:
        """Test the sentinel for identical frames."""
        assert psnr(_constant(0.4), _constant(0.4)) == 99.0

    def test_batched_frames(self) -> None:
        """Test that batched and unbatched inputs agree."""
        gen = torch.rand(4, 3, 16, 16)
        real = torch.rand(4, 3, 16, 16)
        assert l1_metric(gen, real) == pytest.approx(
            sum(l1_metric(g, r) for g, r in zip(gen, real, strict=True)) / 4
        )

    def test_shape_mismatch(self) -> None:
        """Test that paired frames must share a shape."""
        with pytest.raises(InvalidArgumentError):
            l1_metric(_constant(0.0), _constant(0.0, size=8))


class TestSsim:
    """Tests for SSIM and MS-SSIM."""

    def test_identical_frames(self) -> None:
        """Test that SSIM of a frame with itself is one."""
        frame = torch.rand(3, 16, 16, dtype=torch.float64)
        assert ssim(frame, frame) == pytest.approx(1.0, abs=1e-9)

    def test_constant_frames(self) -> None:
        """Test two constant frames at 0.2 and 0.8."""
        c1 = 0.01**2
        expected = (2 * 0.2 * 0.8 + c1) / (0.2**2 + 0.8**2 + c1)
        value = ssim(_constant(0.2), _constant(0.8))
        assert value == pytest.approx(expected, abs=1e-6)
        assert value == pytest.approx(0.4707, abs=1e-4)

    def test_too_small_for_window(self) -> None:
        """Test that frames under 11 pixels raise."""
        with pytest.raises(InvalidArgumentError):
            ssim(_constant(0.0, size=8), _constant(0.0, size=8))

    @pytest.mark.parametrize(("size", "levels"), [(11, 1), (16, 1), (22, 2), (64, 3), (176, 5), (512, 5)])
    def test_max_levels(self, size: int, levels: int) -> None:
        """Test how many MS-SSIM levels each frame size supports."""
        assert max_ms_ssim_levels(size, size) == levels

    def test_single_level_matches_ssim(self) -> None:
        """Test that one MS-SSIM level is plain SSIM, sign included."""
        frame = torch.rand(3, 16, 16, dtype=torch.float64)
        inverted = 1 - frame
        value = ssim(frame, inverted)
        assert value < 0
        assert ms_ssim(frame, inverted, levels=1) == pytest.approx(value, abs=1e-9)

    def test_anticorrelated_frames_score_low(self) -> None:
        """Test that a frame and its negative score under one half."""
        frame = torch.rand(3, 32, 32, dtype=torch.float64)
        assert ssim(frame, 1 - frame) < 0.5

    def test_five_levels_match_reference(self) -> None:
        """Test five-level MS-SSIM against a window-by-window reference."""
        rng = np.random.default_rng(3)
        first = rng.random((3, 176, 176))
        second = np.clip(first + 0.1 * rng.normal(size=first.shape), 0, 1)
        expected = _reference_ms_ssim(first, second)
        value = ms_ssim(torch.from_numpy(first), torch.from_numpy(second))
        assert value == pytest.approx(expected, abs=1e-6)

    def test_multi_level_identical(self) -> None:
        """Test that identical frames score one at every level."""
        frame = torch.rand(3, 64, 64, dtype=torch.float64)
        assert ms_ssim(frame, frame, levels=3) == pytest.approx(1.0, abs=1e-9)

    def test_levels_must_fit(self) -> None:
        """Test that 16x16 frames cannot use two levels."""
        with pytest.raises(InvalidArgumentError):
            ms_ssim(_constant(0.1), _constant(0.1), levels=2)

    @pytest.mark.parametrize("levels", [0, 6])
    def test_levels_out_of_range(self, levels: int) -> None:
        """Test the accepted level range."""
        with pytest.raises(InvalidArgumentError):
            ms_ssim(_constant(0.1, 512), _constant(0.1, 512), levels=levels)


class TestSymmetry:
    """Tests that paired metrics do not depend on argument order."""

    @pytest.mark.parametrize(
        "metric",
        [
            l1_metric,
            ssim,
            lambda a, b: ms_ssim(a, b, levels=3),
            csim,
        ],
        ids=["l1", "ssim", "ms_ssim", "csim"],
    )
    def test_swapped_arguments(self, metric: Callable[[torch.Tensor, torch.Tensor], float]) -> None:
        """Test that swapping generated and real frames keeps the value."""
        first = torch.rand(2, 3, 64, 64, dtype=torch.float64)
        second = (first + 0.2 * torch.randn_like(first)).clamp(0, 1)
        assert metric(first, second) == pytest.approx(metric(second, first), abs=1e-9)


class TestPerceptualDistance:
    """Tests for perceptual_distance."""

    def test_identical_is_zero(self) -> None:
        """Test that identical frames are at distance zero."""
        frame = torch.rand(3, 16, 16)
        assert perceptual_distance(frame, frame) == 0.0

    def test_symmetric_and_positive(self) -> None:
        """Test symmetry and positivity for different frames."""
        first = torch.rand(3, 16, 16)
        second = torch.rand(3, 16, 16)
        forward = perceptual_distance(first, second)
        assert forward > 0
        assert forward == pytest.approx(perceptual_distance(second, first))


class TestFid:
    """Tests for the Frechet distance."""

    def test_shifted_unit_gaussians(self) -> None:
        """Test two unit-variance sets whose means differ by one."""
        half = 1 / math.sqrt(2)
        first = np.array([[-half], [half]])
        second = np.array([[1 - half], [1 + half]])
        assert fid_from_embeddings(first, second) == pytest.approx(1.0, abs=1e-9)

    def test_diagonal_gaussians_closed_form(self) -> None:
        """Test 2-D sets with diagonal covariances against the per-dimension sum."""
        corners = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]) * math.sqrt(0.75)
        mu_1, sigma_1 = np.array([0.0, 1.0]), np.array([1.0, 2.0])
        mu_2, sigma_2 = np.array([0.5, -1.0]), np.array([3.0, 0.5])
        expected = float(((mu_1 - mu_2) ** 2 + (sigma_1 - sigma_2) ** 2).sum())
        value = fid_from_embeddings(mu_1 + sigma_1 * corners, mu_2 + sigma_2 * corners)
        assert expected == pytest.approx(10.5)
        assert value == pytest.approx(expected, abs=1e-6)

    def test_identical_sets(self) -> None:
        """Test that a set is at distance zero from itself."""
        points = np.random.default_rng(0).normal(size=(40, 3))
        assert fid_from_embeddings(points, points) == pytest.approx(0.0, abs=1e-6)

    def test_small_sets_warn(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test that rank-deficient sets fall back to a ridge with a warning."""
        rng = np.random.default_rng(1)
        with caplog.at_level(logging.WARNING):
            value = fid_from_embeddings(rng.normal(size=(3, 5)), rng.normal(size=(3, 5)))
        assert value >= 0
        assert "ridge" in caplog.text

    def test_empty_set(self) -> None:
        """Test that an empty set raises."""
        with pytest.raises(InvalidArgumentError):
            fid_from_embeddings(np.zeros((0, 2)), np.zeros((3, 2)))

    def test_dimension_mismatch(self) -> None:
        """Test that embedding sizes must agree."""
        with pytest.raises(InvalidArgumentError):
            fid_from_embeddings(np.zeros((3, 2)), np.zeros((3, 4)))

    def test_frames_with_downsample_embedder(self) -> None:
        """Test FID on frame sets through a pixel embedder."""
        frames = torch.rand(6, 3, 16, 16)
        embedder = DownsampleEmbedder(size=1)
        assert fid(frames, frames, embedder) == pytest.approx(0.0, abs=1e-6)
        assert fid(frames, (frames + 0.5), embedder) == pytest.approx(0.75, abs=1e-6)


class TestEmbedders:
    """Tests for the built-in embedders."""

    def test_random_projection_is_seeded(self) -> None:
        """Test that one seed gives one projection."""
        frames = torch.rand(2, 3, 16, 16)
        first = RandomProjectionEmbedder(seed=1)(frames)
        assert first.shape == (2, 64)
        assert torch.equal(first, RandomProjectionEmbedder(seed=1)(frames))
        assert isinstance(RandomProjectionEmbedder(), Embedder)

    def test_downsample_shape(self) -> None:
        """Test the flattened pixel grid."""
        assert DownsampleEmbedder(size=4)(torch.rand(3, 16, 16)).shape == (1, 48)


class TestKeypointAndIdentityMetrics:
    """Tests for AKD and CSIM."""

    def test_akd_in_pixels(self) -> None:
        """Test keypoints two pixels apart."""
        gen = torch.tensor([[[0.0, 0.0], [3.0, 4.0]]])
        real = torch.tensor([[[2.0, 0.0], [3.0, 6.0]]])
        assert akd(gen, real) == pytest.approx(2.0)

    def test_akd_normalized(self) -> None:
        """Test that normalized keypoints are scaled by the frame size."""
        gen = torch.tensor([[0.0, 0.0]])
        real = torch.tensor([[0.5, 0.0]])
        assert akd(gen, real, frame_size=(9, 9)) == pytest.approx(2.0)

    def test_akd_shape_mismatch(self) -> None:
        """Test that keypoint series must match."""
        with pytest.raises(InvalidArgumentError):
            akd(torch.zeros(2, 3, 2), torch.zeros(2, 4, 2))

    def test_cosine_similarity(self) -> None:
        """Test vectors at 45 degrees."""
        value = cosine_similarity(torch.tensor([1.0, 0.0]), torch.tensor([1.0, 1.0]))
        assert value == pytest.approx(1 / math.sqrt(2))

    def test_zero_embedding(self) -> None:
        """Test that a zero vector raises."""
        with pytest.raises(DegenerateEmbeddingError):
            cosine_similarity(torch.zeros(3), torch.ones(3))

    def test_csim_identical_frames(self) -> None:
        """Test that a frame is fully similar to itself."""
        frame = torch.rand(3, 16, 16)
        assert csim(frame, frame) == pytest.approx(1.0)

    def test_csim_black_frame(self) -> None:
        """Test that a black frame has no usable embedding under the pixel embedder."""
        with pytest.raises(DegenerateEmbeddingError):
            csim(torch.zeros(3, 16, 16), torch.rand(3, 16, 16), DownsampleEmbedder())


class TestComputeReport:
    """Tests for compute_report."""

    def test_reconstruction_metrics(self, caplog: pytest.LogCaptureFixture) -> None:
        """Test that every requested metric lands in the report."""
        generated = torch.rand(4, 3, 16, 16)
        real = torch.rand(4, 3, 16, 16)
        names = [m for m in ALL_METRICS if m != "akd"]
        with caplog.at_level(logging.WARNING):
            report = compute_report(
                "reconstruction", generated, real, metrics=names, identifiers={"clip": "a"}
            )
        assert list(report.records) == [
            "l1",
            "psnr",
            "ssim",
            "perceptual_distance",
            "ms_ssim",
            "fid",
            "csim",
        ]
        assert report.records["ssim"].frame_count == 4
        assert len(report.records["ssim"].series) == 4
        assert report.metadata["ms_ssim_levels"] == "1"
        assert report.metadata["embedder"] == "RandomProjectionEmbedder"
        assert report.identifiers == {"clip": "a"}
        assert "MS-SSIM" in caplog.text

    def test_akd_with_keypoints(self) -> None:
        """Test AKD from explicit keypoint series."""
        frames = torch.rand(2, 3, 16, 16)
        report = compute_report(
            "animation",
            frames,
            frames,
            metrics=["akd"],
            gen_keypoints=torch.zeros(2, 3, 2),
            real_keypoints=torch.full((2, 3, 2), 0.0).index_fill(-1, torch.tensor([0]), 2.0),
        )
        assert report.value("akd") == pytest.approx(2.0)

    def test_akd_without_keypoints(self) -> None:
        """Test that AKD needs keypoints."""
        frames = torch.rand(2, 3, 16, 16)
        with pytest.raises(InvalidArgumentError):
            compute_report("reconstruction", frames, frames, metrics=["akd"])

    def test_unknown_metric(self) -> None:
        """Test that unknown metric names raise."""
        frames = torch.rand(1, 3, 16, 16)
        with pytest.raises(InvalidArgumentError):
            compute_report("reconstruction", frames, frames, metrics=["lpips"])
