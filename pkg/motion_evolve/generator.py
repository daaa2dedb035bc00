"""Encoder-decoder generator with multi-view confidence fusion."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import TYPE_CHECKING

import torch
from torch import nn

from .appearance import apply_appearance_flow, predict_appearance_flow
from .const import CONFIDENCE_EPS
from .exceptions import InvalidArgumentError
from .models import AblationSpec, SynthesisDiagnostics, ViewDiagnostics
from .motion import dense_motion
from .networks import DownBlock2d, ResBlock2d, SameBlock2d, UpBlock2d
from .primitives import resize_field, warp

if TYPE_CHECKING:
    from .model import MotionTransferNetworks
    from .models import TrainConfig

_LOGGER = logging.getLogger(__name__)


class Generator(nn.Module):
    """Frame encoder and two-input decoder.

    The encoder maps a frame to bottleneck features at 1/2**num_down_blocks
    resolution. The decoder takes the fused motion-warped features and the
    fused appearance features, merges them with a 1x1 convolution, and
    decodes through residual and upsampling blocks to a sigmoid RGB frame.
    """

    def __init__(
        self,
        frame_size: tuple[int, int],
        block_expansion: int,
        max_features: int,
        num_down_blocks: int,
        num_residual_blocks: int,
    ) -> None:
        super().__init__()
        self.frame_size = frame_size

        def width(level: int) -> int:
            return min(max_features, block_expansion * (2**level))

        self.first = SameBlock2d(3, block_expansion, kernel_size=7)
        self.down_blocks = nn.ModuleList(
            DownBlock2d(width(i), width(i + 1)) for i in range(num_down_blocks)
        )
        self.feature_channels = width(num_down_blocks)
        scale = 2**num_down_blocks
        self.feature_size = (frame_size[0] // scale, frame_size[1] // scale)

        self.merge = nn.Conv2d(2 * self.feature_channels, self.feature_channels, kernel_size=1)
        self.bottleneck = nn.Sequential(
            *(ResBlock2d(self.feature_channels) for _ in range(num_residual_blocks))
        )
        self.up_blocks = nn.ModuleList(
            UpBlock2d(width(i + 1), width(i)) for i in reversed(range(num_down_blocks))
        )
        self.final = nn.Conv2d(block_expansion, 3, kernel_size=7, padding=3)

    def encode(self, frame: torch.Tensor) -> torch.Tensor:
        out = self.first(frame)
        for block in self.down_blocks:
            out = block(out)
        return out

    def decode(self, fused_motion: torch.Tensor, fused_appearance: torch.Tensor) -> torch.Tensor:
        out = self.merge(torch.cat([fused_motion, fused_appearance], dim=1))
        out = self.bottleneck(out)
        for block in self.up_blocks:
            out = block(out)
        return torch.sigmoid(self.final(out))


def encode(generator: Generator, frame: torch.Tensor) -> torch.Tensor:
    """Extract bottleneck features from frames.

    Args:
        generator: The generator.
        frame: Frames of shape (B, 3, H, W).

    Returns:
        Features of shape (B, C, H/4, W/4) for the default two downsampling stages.

    Raises:
        InvalidArgumentError: If the frame does not match the generator.
    """
    if frame.dim() != 4 or frame.shape[1] != 3:
        raise InvalidArgumentError(f"Expected (B, 3, H, W) frames, got {tuple(frame.shape)}")
    if tuple(frame.shape[-2:]) != tuple(generator.frame_size):
        raise InvalidArgumentError(
            f"Expected {generator.frame_size} frames, got {tuple(frame.shape[-2:])}"
        )
    return generator.encode(frame)


def decode(
    generator: Generator, fused_motion: torch.Tensor, fused_appearance: torch.Tensor
) -> torch.Tensor:
    """Decode fused features into frames in [0, 1].

    Raises:
        InvalidArgumentError: If the two feature maps differ or do not fit the decoder.
    """
    if fused_motion.shape != fused_appearance.shape:
        raise InvalidArgumentError(
            f"Fused features differ: {tuple(fused_motion.shape)} vs {tuple(fused_appearance.shape)}"
        )
    if fused_motion.dim() != 4 or fused_motion.shape[1] != generator.feature_channels:
        raise InvalidArgumentError(
            f"Expected {generator.feature_channels}-channel features, got {tuple(fused_motion.shape)}"
        )
    return generator.decode(fused_motion, fused_appearance)


def normalize_confidences(masks: Sequence[torch.Tensor] | torch.Tensor) -> torch.Tensor:
    """Turn raw per-view confidences into per-pixel weights.

    Each weight is (c + eps) / sum over views of (c + eps), so pixels where
    every view reports zero fall back to equal weights.

    Args:
        masks: Either a sequence of V tensors (B, h, w) or one tensor (B, V, h, w).

    Returns:
        Weights of shape (B, V, h, w) summing to one over V.

    Raises:
        InvalidArgumentError: If there are no views or a value is negative.
    """
    stacked = masks if isinstance(masks, torch.Tensor) else _stack_views(masks)
    if stacked.dim() != 4 or stacked.shape[1] < 1:
        raise InvalidArgumentError(f"Expected (B, V, h, w) masks, got {tuple(stacked.shape)}")
    if (stacked < 0).any():
        raise InvalidArgumentError("Confidence masks must be nonnegative")
    smoothed = stacked + CONFIDENCE_EPS
    return smoothed / smoothed.sum(dim=1, keepdim=True)


def _stack_views(masks: Sequence[torch.Tensor]) -> torch.Tensor:
    if not masks:
        raise InvalidArgumentError("At least one view is required")
    return torch.stack(list(masks), dim=1)


def fuse_views(
    motion_features: Sequence[torch.Tensor],
    appearance_features: Sequence[torch.Tensor],
    weights: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Blend per-view features by normalized confidence weights.

    All views j = 0..N take part, view 0 being the source.

    Args:
        motion_features: V motion-warped feature maps (B, C, h, w).
        appearance_features: V appearance feature maps (B, C, h, w).
        weights: Normalized weights (B, V, h, w).

    Returns:
        (fused_appearance, fused_motion), each (B, C, h, w).

    Raises:
        InvalidArgumentError: On view count or shape mismatch.
    """
    views = weights.shape[1]
    if len(motion_features) != views or len(appearance_features) != views:
        raise InvalidArgumentError(
            f"{views} weight maps for {len(motion_features)} motion and "
            f"{len(appearance_features)} appearance feature maps"
        )
    motion = torch.stack(list(motion_features), dim=1)
    appearance = torch.stack(list(appearance_features), dim=1)
    if motion.shape != appearance.shape or motion.shape[-2:] != weights.shape[-2:]:
        raise InvalidArgumentError("Per-view features and weights must share dimensions")
    expanded = weights.unsqueeze(2)
    return (appearance * expanded).sum(dim=1), (motion * expanded).sum(dim=1)


def synthesize(
    source: torch.Tensor,
    references: Sequence[torch.Tensor],
    driving: torch.Tensor,
    networks: MotionTransferNetworks,
    config: TrainConfig,
    ablation: AblationSpec | None = None,
) -> tuple[torch.Tensor, SynthesisDiagnostics]:
    """Generate the driving frame from the source and reference views.

    Args:
        source: Source frames (B, 3, H, W).
        references: N reference frame batches of the same identity.
        driving: Driving frames (B, 3, H, W).
        networks: The model's sub-networks.
        config: Training configuration.
        ablation: Component switches; defaults to ``config.ablation``.

    Returns:
        The generated frames (B, 3, H, W) and every intermediate.
    """
    if ablation is not None and ablation != config.ablation:
        config = config.with_ablation(ablation)
    switches = config.ablation
    views = [source, *references] if switches.multi_view else [source]
    for view in views[1:]:
        if view.shape != source.shape:
            raise InvalidArgumentError(
                f"Reference {tuple(view.shape)} differs from source {tuple(source.shape)}"
            )

    generator = networks.generator
    driving_kp = networks.keypoint_detector(driving)
    feature_size = generator.feature_size

    diagnostics: list[ViewDiagnostics] = []
    warped_views: list[torch.Tensor] = []
    appearance_views: list[torch.Tensor] = []
    raw_masks: list[torch.Tensor] = []
    for view in views:
        motion = dense_motion(view, driving, networks, config, driving_keypoints=driving_kp)
        features = encode(generator, view)
        warped = warp(features, resize_field(motion.motion_field, feature_size))
        entry: ViewDiagnostics = {
            "source_keypoints": motion.source_keypoints,
            "displacements": motion.displacements,
            "coarse_field": motion.coarse_field,
            "motion_field": motion.motion_field,
            "field": motion.field,
            "coefficients": motion.coefficients,
            "raw_confidence": motion.confidence,
            "features": features,
            "warped_features": warped,
            "appearance_features": warped,
        }
        if switches.appearance_assist:
            appearance_field = predict_appearance_flow(networks.appearance, warped, view)
            entry["appearance_field"] = appearance_field
            entry["appearance_features"] = apply_appearance_flow(warped, appearance_field)
        diagnostics.append(entry)
        warped_views.append(warped)
        appearance_views.append(entry["appearance_features"])
        raw_masks.append(_to_feature_size(motion.confidence, feature_size))

    weights = normalize_confidences(raw_masks)
    fused_appearance, fused_motion = fuse_views(warped_views, appearance_views, weights)
    generated = decode(generator, fused_motion, fused_appearance)
    _LOGGER.debug(
        "Synthesized %s from %d view(s) (%s)",
        tuple(generated.shape),
        len(views),
        switches.name or "custom",
    )
    return generated, {
        "driving_keypoints": driving_kp,
        "views": diagnostics,
        "confidence": weights,
        "fused_motion": fused_motion,
        "fused_appearance": fused_appearance,
    }


def _to_feature_size(mask: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(mask.shape[-2:]) == tuple(size):
        return mask
    return resize_field(mask.unsqueeze(-1), size).squeeze(-1)
