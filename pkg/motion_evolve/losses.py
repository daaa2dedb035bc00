"""Training losses: multi-resolution perceptual, equivariance and their weighted sum."""

from __future__ import annotations

from collections.abc import Callable
from typing import Protocol, runtime_checkable

import torch
import torch.nn.functional as F
from torch import nn

from .const import FEATURE_EXTRACTOR_SEED, PERCEPTUAL_SCALES, PERCEPTUAL_STAGES
from .exceptions import InvalidArgumentError
from .primitives import downsample_pyramid
from .transforms import GeometricTransform

STAGE_CHANNELS = (8, 16, 32, 32, 32)


@runtime_checkable
class FeatureExtractor(Protocol):
    """Maps frames (B, 3, H, W) to a list of feature maps of increasing depth."""

    def __call__(self, frame: torch.Tensor) -> list[torch.Tensor]: ...


class RandomFeatureExtractor(nn.Module):
    """Frozen five-stage convolutional pyramid with seed-fixed random weights.

    Each stage is a 3x3 convolution followed by ReLU and, while the map is
    at least 2x2, a 2x average pooling.
    """

    def __init__(
        self,
        seed: int = FEATURE_EXTRACTOR_SEED,
        channels: tuple[int, ...] = STAGE_CHANNELS,
    ) -> None:
        super().__init__()
        if len(channels) != PERCEPTUAL_STAGES:
            raise InvalidArgumentError(
                f"Expected {PERCEPTUAL_STAGES} stage widths, got {len(channels)}"
            )
        generator = torch.Generator().manual_seed(seed)
        stages = []
        previous = 3
        for width in channels:
            conv = nn.Conv2d(previous, width, kernel_size=3, padding=1)
            bound = (6.0 / (previous * 9)) ** 0.5
            with torch.no_grad():
                conv.weight.copy_((torch.rand(conv.weight.shape, generator=generator) * 2 - 1) * bound)
                conv.bias.zero_()
            stages.append(conv)
            previous = width
        self.stages = nn.ModuleList(stages)
        self.requires_grad_(False)

    def forward(self, frame: torch.Tensor) -> list[torch.Tensor]:
        features = []
        out = frame
        for conv in self.stages:
            out = F.relu(conv(out))
            if min(out.shape[-2:]) >= 2:
                out = F.avg_pool2d(out, kernel_size=2)
            features.append(out)
        return features


def perceptual_loss(
    generated: torch.Tensor,
    driving: torch.Tensor,
    extractor: FeatureExtractor,
    scales: int = PERCEPTUAL_SCALES,
) -> torch.Tensor:
    """Sum of mean absolute feature differences over stages and pyramid levels.

    Args:
        generated: Generated frames (B, 3, H, W).
        driving: Target frames of the same shape.
        extractor: Feature extractor returning one map per stage.
        scales: Pyramid levels; the coarsest must be at least 4x4.

    Returns:
        Scalar tensor, zero when both inputs produce identical features.

    Raises:
        InvalidArgumentError: If the frames differ in shape.
    """
    if generated.shape != driving.shape:
        raise InvalidArgumentError(
            f"Generated {tuple(generated.shape)} and driving {tuple(driving.shape)} differ"
        )
    total = generated.new_zeros(())
    for gen_level, drv_level in zip(
        downsample_pyramid(generated, scales), downsample_pyramid(driving, scales), strict=True
    ):
        for gen_feat, drv_feat in zip(extractor(gen_level), extractor(drv_level), strict=True):
            total = total + (gen_feat - drv_feat).abs().mean()
    return total


def keypoint_consistency(reference: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
    """Mean absolute coordinate difference between two keypoint sets."""
    if reference.shape != candidate.shape:
        raise InvalidArgumentError(
            f"Keypoint sets differ: {tuple(reference.shape)} vs {tuple(candidate.shape)}"
        )
    return (reference - candidate).abs().mean()


def equivariance_loss(
    extractor: Callable[[torch.Tensor], torch.Tensor],
    frame: torch.Tensor,
    transform: GeometricTransform,
) -> torch.Tensor:
    """Penalize keypoints that do not follow a known transform of the image.

    Keypoints of the transformed image are mapped back through the
    transform's closed form and compared with keypoints of the original.

    Args:
        extractor: Keypoint extractor mapping (B, 3, H, W) to (B, K, 2).
        frame: Frames (B, 3, H, W).
        transform: Transforms with batch size B.

    Returns:
        Scalar tensor, exactly zero for the identity transform.
    """
    keypoints = extractor(frame)
    transformed = extractor(transform.warp_image(frame))
    return keypoint_consistency(keypoints, transform.transform_points(transformed))


def total_loss(
    perceptual: torch.Tensor | float,
    equivariance: torch.Tensor | float,
    lambda_equiv: float,
) -> torch.Tensor | float:
    """Combine the two losses as perceptual + lambda * equivariance.

    Raises:
        InvalidArgumentError: If lambda is not positive.
    """
    if lambda_equiv <= 0:
        raise InvalidArgumentError(f"lambda must be > 0, got {lambda_equiv}")
    return perceptual + lambda_equiv * equivariance
