"""Evaluation metrics for generated frames.

Frame metrics accept (3, H, W) or (B, 3, H, W) tensors, compute in float64
and return Python floats; batched inputs are averaged over the batch.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg

from .const import (
    EMBEDDER_DIM,
    EMBEDDER_SEED,
    FID_RIDGE,
    METRIC_AKD,
    METRIC_CSIM,
    METRIC_FID,
    METRIC_L1,
    METRIC_MS_SSIM,
    METRIC_PERCEPTUAL,
    METRIC_PSNR,
    METRIC_SSIM,
    MS_SSIM_WEIGHTS,
    PSNR_SENTINEL_DB,
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
)
from .exceptions import DegenerateEmbeddingError, InvalidArgumentError
from .losses import FeatureExtractor, RandomFeatureExtractor
from .report import MetricReport

_LOGGER = logging.getLogger(__name__)

EMBEDDER_POOL_SIZE = 16
FEATURE_NORM_EPS = 1e-10

ALL_METRICS = (
    METRIC_L1,
    METRIC_PERCEPTUAL,
    METRIC_PSNR,
    METRIC_SSIM,
    METRIC_MS_SSIM,
    METRIC_FID,
    METRIC_AKD,
    METRIC_CSIM,
)


@runtime_checkable
class Embedder(Protocol):
    """Maps frames (B, 3, H, W) to embedding vectors (B, d)."""

    def __call__(self, frames: torch.Tensor) -> torch.Tensor: ...


class RandomProjectionEmbedder:
    """Average-pool frames to 16x16 and project with a fixed Gaussian matrix."""

    def __init__(self, dim: int = EMBEDDER_DIM, seed: int = EMBEDDER_SEED) -> None:
        self.dim = dim
        self.seed = seed
        size = 3 * EMBEDDER_POOL_SIZE * EMBEDDER_POOL_SIZE
        generator = torch.Generator().manual_seed(seed)
        self.projection = torch.randn(size, dim, generator=generator, dtype=torch.float64)
        self.projection /= math.sqrt(size)

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        pooled = F.adaptive_avg_pool2d(_as_batch(frames), EMBEDDER_POOL_SIZE)
        return pooled.flatten(1) @ self.projection


class DownsampleEmbedder:
    """Average-pool frames to a small grid and flatten the pixels."""

    def __init__(self, size: int = 8) -> None:
        self.size = size

    def __call__(self, frames: torch.Tensor) -> torch.Tensor:
        return F.adaptive_avg_pool2d(_as_batch(frames), self.size).flatten(1)


def _as_batch(frames: torch.Tensor) -> torch.Tensor:
    batch = frames.unsqueeze(0) if frames.dim() == 3 else frames
    if batch.dim() != 4:
        raise InvalidArgumentError(f"Expected (3, H, W) or (B, 3, H, W), got {tuple(frames.shape)}")
    return batch.to(torch.float64)


def _pair(gen: torch.Tensor, real: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if gen.shape != real.shape:
        raise InvalidArgumentError(f"Frame shapes differ: {tuple(gen.shape)} vs {tuple(real.shape)}")
    return _as_batch(gen.detach()), _as_batch(real.detach())


def l1_metric(gen: torch.Tensor, real: torch.Tensor) -> float:
    """Mean absolute difference over pixels and channels."""
    a, b = _pair(gen, real)
    return float((a - b).abs().mean())


def psnr(gen: torch.Tensor, real: torch.Tensor, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, 99 dB for identical frames."""
    a, b = _pair(gen, real)
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return PSNR_SENTINEL_DB
    return min(PSNR_SENTINEL_DB, 10 * math.log10(peak**2 / mse))


def _gaussian_window(channels: int) -> torch.Tensor:
    coords = torch.arange(SSIM_WINDOW, dtype=torch.float64) - (SSIM_WINDOW - 1) / 2
    kernel = torch.exp(-(coords**2) / (2 * SSIM_SIGMA**2))
    kernel = kernel / kernel.sum()
    window = torch.outer(kernel, kernel)
    return window.expand(channels, 1, SSIM_WINDOW, SSIM_WINDOW).contiguous()


def _ssim_terms(a: torch.Tensor, b: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Return per-channel SSIM and contrast-structure means, each (B, C)."""
    channels = a.shape[1]
    window = _gaussian_window(channels)

    def filt(x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, window, groups=channels)

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    cs_map = (2 * cov + c2) / (var_a + var_b + c2)
    ssim_map = ((2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)) * cs_map
    return ssim_map.flatten(2).mean(-1), cs_map.flatten(2).mean(-1)


def _check_window(a: torch.Tensor, minimum: int) -> None:
    if min(a.shape[-2:]) < minimum:
        raise InvalidArgumentError(
            f"Frames of {tuple(a.shape[-2:])} are smaller than the required {minimum} pixels"
        )


def ssim(gen: torch.Tensor, real: torch.Tensor) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5)."""
    a, b = _pair(gen, real)
    _check_window(a, SSIM_WINDOW)
    per_channel, _ = _ssim_terms(a, b)
    return float(per_channel.mean())


def max_ms_ssim_levels(height: int, width: int) -> int:
    """Return the most MS-SSIM levels (at most 5) a frame size supports."""
    levels = 0
    while levels < len(MS_SSIM_WEIGHTS) and min(height, width) >= SSIM_WINDOW * 2**levels:
        levels += 1
    return levels


def ms_ssim(gen: torch.Tensor, real: torch.Tensor, levels: int = len(MS_SSIM_WEIGHTS)) -> float:
    """Multi-scale SSIM.

    Contrast-structure terms of the first levels - 1 scales and the full SSIM
    of the last scale are clipped at zero, raised to their weights and
    multiplied. Five levels use the standard weights as they are; fewer
    levels use the leading weights renormalized to sum to one. A single
    level is plain SSIM and keeps its sign.

    Raises:
        InvalidArgumentError: If levels is out of range or the frames are
            smaller than 11 * 2**(levels - 1).
    """
    if not 1 <= levels <= len(MS_SSIM_WEIGHTS):
        raise InvalidArgumentError(f"levels must be in 1..{len(MS_SSIM_WEIGHTS)}, got {levels}")
    a, b = _pair(gen, real)
    _check_window(a, SSIM_WINDOW * 2 ** (levels - 1))
    if levels == 1:
        return ssim(a, b)
    weights = torch.tensor(MS_SSIM_WEIGHTS[:levels], dtype=torch.float64)
    if levels < len(MS_SSIM_WEIGHTS):
        weights = weights / weights.sum()

    factors = []
    for level in range(levels):
        per_channel, cs = _ssim_terms(a, b)
        if level < levels - 1:
            factors.append(torch.relu(cs))
            padding = [side % 2 for side in a.shape[-2:]]
            a = F.avg_pool2d(a, kernel_size=2, padding=padding)
            b = F.avg_pool2d(b, kernel_size=2, padding=padding)
    factors.append(torch.relu(per_channel))
    stacked = torch.stack(factors, dim=0)
    value = torch.prod(stacked ** weights.view(-1, 1, 1), dim=0)
    return float(value.mean())


def perceptual_distance(
    gen: torch.Tensor,
    real: torch.Tensor,
    extractor: FeatureExtractor | None = None,
) -> float:
    """LPIPS-style distance on the built-in random feature pyramid.

    Features are unit-normalized along channels; squared differences are
    summed over channels, averaged spatially and summed over stages.
    """
    if gen.shape != real.shape:
        raise InvalidArgumentError(f"Frame shapes differ: {tuple(gen.shape)} vs {tuple(real.shape)}")
    if extractor is None:
        extractor = _default_extractor()
    a = gen.unsqueeze(0) if gen.dim() == 3 else gen
    b = real.unsqueeze(0) if real.dim() == 3 else real
    total = torch.zeros(a.shape[0], dtype=torch.float64)
    with torch.no_grad():
        for fa, fb in zip(extractor(a.float()), extractor(b.float()), strict=True):
            fa64, fb64 = fa.to(torch.float64), fb.to(torch.float64)
            na = fa64 / (fa64.norm(dim=1, keepdim=True) + FEATURE_NORM_EPS)
            nb = fb64 / (fb64.norm(dim=1, keepdim=True) + FEATURE_NORM_EPS)
            total += ((na - nb) ** 2).sum(dim=1).flatten(1).mean(dim=1)
    return float(total.mean())


_EXTRACTOR_CACHE: dict[str, RandomFeatureExtractor] = {}


def _default_extractor() -> RandomFeatureExtractor:
    if "default" not in _EXTRACTOR_CACHE:
        _EXTRACTOR_CACHE["default"] = RandomFeatureExtractor()
    return _EXTRACTOR_CACHE["default"]


def fid_from_embeddings(first: np.ndarray, second: np.ndarray) -> float:
    """Fréchet distance between Gaussians fitted to two embedding sets.

    Args:
        first: Array (n1, d).
        second: Array (n2, d).

    Returns:
        ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), clipped at zero.

    Raises:
        InvalidArgumentError: If a set is empty or the dimensions differ.
    """
    x = np.atleast_2d(np.asarray(first, dtype=np.float64))
    y = np.atleast_2d(np.asarray(second, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise InvalidArgumentError("FID needs non-empty sets")
    if x.shape[1] != y.shape[1]:
        raise InvalidArgumentError(f"Embedding dims differ: {x.shape[1]} vs {y.shape[1]}")
    dim = x.shape[1]
    mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
    cov_x = _covariance(x)
    cov_y = _covariance(y)
    if min(x.shape[0], y.shape[0]) < dim + 1:
        _LOGGER.warning(
            "FID sets of %d and %d samples cannot give full-rank %dx%d covariances, adding ridge %g",
            x.shape[0],
            y.shape[0],
            dim,
            dim,
            FID_RIDGE,
        )
        cov_x = cov_x + FID_RIDGE * np.eye(dim)
        cov_y = cov_y + FID_RIDGE * np.eye(dim)
    trace_sqrt = _trace_sqrt_product(cov_x, cov_y)
    diff = mu_x - mu_y
    value = float(diff @ diff + np.trace(cov_x) + np.trace(cov_y) - 2 * trace_sqrt)
    return max(value, 0.0)


def _covariance(x: np.ndarray) -> np.ndarray:
    if x.shape[0] < 2:
        return np.zeros((x.shape[1], x.shape[1]))
    return np.atleast_2d(np.cov(x, rowvar=False, ddof=1))


def _symmetric_sqrt(matrix: np.ndarray) -> np.ndarray:
    values, vectors = linalg.eigh((matrix + matrix.T) / 2)
    return (vectors * np.sqrt(np.clip(values, 0, None))) @ vectors.T


def _trace_sqrt_product(cov_x: np.ndarray, cov_y: np.ndarray) -> float:
    """Tr((S1 S2)^(1/2)) through the symmetric form S1^(1/2) S2 S1^(1/2)."""
    root = _symmetric_sqrt(cov_x)
    inner = root @ cov_y @ root
    values = linalg.eigvalsh((inner + inner.T) / 2)
    return float(np.sqrt(np.clip(values, 0, None)).sum())


def fid(
    gen_set: Sequence[torch.Tensor] | torch.Tensor,
    real_set: Sequence[torch.Tensor] | torch.Tensor,
    embedder: Embedder | None = None,
) -> float:
    """Fréchet distance between embedded frame sets."""
    if embedder is None:
        embedder = RandomProjectionEmbedder()
    return fid_from_embeddings(_embed_set(gen_set, embedder), _embed_set(real_set, embedder))


def _embed_set(frames: Sequence[torch.Tensor] | torch.Tensor, embedder: Embedder) -> np.ndarray:
    if isinstance(frames, torch.Tensor):
        batch = _as_batch(frames)
    else:
        if len(frames) == 0:
            raise InvalidArgumentError("FID needs non-empty sets")
        batch = torch.stack([_as_batch(f).squeeze(0) for f in frames])
    with torch.no_grad():
        embedded = embedder(batch)
    return embedded.detach().to(torch.float64).reshape(batch.shape[0], -1).numpy()


def akd(
    gen_keypoints: torch.Tensor,
    real_keypoints: torch.Tensor,
    frame_size: tuple[int, int] | None = None,
) -> float:
    """Average keypoint distance in pixels.

    Args:
        gen_keypoints: Keypoints (T, K, 2) or (K, 2).
        real_keypoints: Matching keypoints.
        frame_size: (H, W) when the keypoints are normalized; None when they
            are already in pixels.

    Returns:
        Mean Euclidean distance over all (frame, keypoint) pairs.
    """
    if gen_keypoints.shape != real_keypoints.shape:
        raise InvalidArgumentError(
            f"Keypoint series differ: {tuple(gen_keypoints.shape)} vs {tuple(real_keypoints.shape)}"
        )
    diff = gen_keypoints.detach().to(torch.float64) - real_keypoints.detach().to(torch.float64)
    if frame_size is not None:
        height, width = frame_size
        scale = torch.tensor([(width - 1) / 2, (height - 1) / 2], dtype=torch.float64)
        diff = diff * scale
    return float(diff.norm(dim=-1).mean())


def cosine_similarity(first: torch.Tensor, second: torch.Tensor) -> float:
    """Cosine similarity of two vectors.

    Raises:
        DegenerateEmbeddingError: If either vector has zero norm.
    """
    a = first.detach().to(torch.float64).flatten()
    b = second.detach().to(torch.float64).flatten()
    norm_a, norm_b = float(a.norm()), float(b.norm())
    if norm_a == 0 or norm_b == 0:
        raise DegenerateEmbeddingError("Cannot compare a zero-norm embedding")
    return float(a @ b) / (norm_a * norm_b)


def csim(gen: torch.Tensor, real: torch.Tensor, embedder: Embedder | None = None) -> float:
    """Cosine similarity of frame embeddings, averaged over the batch."""
    a, b = _pair(gen, real)
    if embedder is None:
        embedder = RandomProjectionEmbedder()
    with torch.no_grad():
        ea, eb = embedder(a), embedder(b)
    values = [cosine_similarity(x, y) for x, y in zip(ea, eb, strict=True)]
    return sum(values) / len(values)


def compute_report(
    task: str,
    generated: torch.Tensor,
    real: torch.Tensor,
    *,
    metrics: Sequence[str] = ALL_METRICS,
    fid_reference: torch.Tensor | None = None,
    csim_reference: torch.Tensor | None = None,
    gen_keypoints: torch.Tensor | None = None,
    real_keypoints: torch.Tensor | None = None,
    frame_size: tuple[int, int] | None = None,
    embedder: Embedder | None = None,
    extractor: FeatureExtractor | None = None,
    identifiers: dict[str, str] | None = None,
    metadata: dict[str, str] | None = None,
) -> MetricReport:
    """Evaluate generated frames and collect the results in a report.

    Args:
        task: "reconstruction" or "animation".
        generated: Generated frames (T, 3, H, W).
        real: Paired real frames (T, 3, H, W) for per-frame metrics.
        metrics: Metric names to compute.
        fid_reference: Frame set for FID; defaults to ``real``.
        csim_reference: Paired frames for CSIM; defaults to ``real``.
        gen_keypoints: Keypoints of generated frames (T, K, 2), needed for AKD.
        real_keypoints: Keypoints of real frames (T, K, 2), needed for AKD.
        frame_size: Frame (H, W) when keypoints are normalized.
        embedder: Embedder for FID and CSIM.
        extractor: Feature extractor for the perceptual distance.
        identifiers: Labels stored with the report.
        metadata: Notes stored with the report.

    Returns:
        The populated report.
    """
    unknown = [name for name in metrics if name not in ALL_METRICS]
    if unknown:
        raise InvalidArgumentError(f"Unknown metrics {unknown}")
    if embedder is None:
        embedder = RandomProjectionEmbedder()
    report = MetricReport(
        task=task,
        identifiers=dict(identifiers or {}),
        metadata=dict(metadata or {}),
    )
    count = generated.shape[0]
    per_frame = {
        METRIC_L1: l1_metric,
        METRIC_PSNR: psnr,
        METRIC_SSIM: ssim,
    }
    for name, metric in per_frame.items():
        if name in metrics:
            series = [metric(g, r) for g, r in zip(generated, real, strict=True)]
            report.add(name, sum(series) / count, count, series)

    if METRIC_PERCEPTUAL in metrics:
        series = [perceptual_distance(g, r, extractor) for g, r in zip(generated, real, strict=True)]
        report.add(METRIC_PERCEPTUAL, sum(series) / count, count, series)

    if METRIC_MS_SSIM in metrics:
        levels = max_ms_ssim_levels(*generated.shape[-2:])
        if levels < len(MS_SSIM_WEIGHTS):
            _LOGGER.warning(
                "Frames of %s support only %d MS-SSIM levels", tuple(generated.shape[-2:]), levels
            )
        report.metadata["ms_ssim_levels"] = str(levels)
        series = [ms_ssim(g, r, levels) for g, r in zip(generated, real, strict=True)]
        report.add(METRIC_MS_SSIM, sum(series) / count, count, series)

    if METRIC_FID in metrics:
        reference = real if fid_reference is None else fid_reference
        report.add(METRIC_FID, fid(generated, reference, embedder), count)

    if METRIC_CSIM in metrics:
        paired = real if csim_reference is None else csim_reference
        series = [csim(g, r, embedder) for g, r in zip(generated, paired, strict=True)]
        report.add(METRIC_CSIM, sum(series) / count, count, series)

    if METRIC_AKD in metrics:
        if gen_keypoints is None or real_keypoints is None:
            raise InvalidArgumentError("AKD requires keypoints for generated and real frames")
        series = [akd(g, r, frame_size) for g, r in zip(gen_keypoints, real_keypoints, strict=True)]
        report.add(METRIC_AKD, sum(series) / len(series), len(series), series)

    report.metadata.setdefault("embedder", type(embedder).__name__)
    return report
