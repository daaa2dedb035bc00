"""Self-supervised keypoint extractor."""

from __future__ import annotations

import logging

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import InvalidArgumentError
from .models import KeypointExtractorConfig
from .networks import Hourglass, fit_depth
from .primitives import normalize_heatmap, soft_argmax

_LOGGER = logging.getLogger(__name__)


class KeypointDetector(nn.Module):
    """Predict K keypoints per frame as heatmap expectations.

    The frame is resized to the heatmap resolution, passed through an
    hourglass, projected to K channels, spatially softmaxed and reduced
    by soft-argmax.
    """

    def __init__(self, config: KeypointExtractorConfig) -> None:
        super().__init__()
        self.config = config
        height, width = config.heatmap_size
        depth = fit_depth(min(height, width), config.num_blocks)
        if depth < config.num_blocks:
            _LOGGER.debug(
                "Keypoint hourglass depth reduced from %d to %d for %dx%d heatmaps",
                config.num_blocks,
                depth,
                height,
                width,
            )
        self.predictor = Hourglass(
            in_features=3,
            block_expansion=config.block_expansion,
            num_blocks=depth,
            max_features=config.max_features,
        )
        self.head = nn.Conv2d(self.predictor.out_channels, config.num_kp, kernel_size=7, padding=3)

    def heatmaps(self, frame: torch.Tensor) -> torch.Tensor:
        """Return the normalized heatmaps of shape (B, K, H', W')."""
        if frame.dim() != 4 or frame.shape[1] != 3:
            raise InvalidArgumentError(f"Expected (B, 3, H, W) frames, got {tuple(frame.shape)}")
        if tuple(frame.shape[-2:]) != tuple(self.config.frame_size):
            raise InvalidArgumentError(
                f"Expected {self.config.frame_size} frames, got {tuple(frame.shape[-2:])}"
            )
        resized = F.interpolate(
            frame, size=self.config.heatmap_size, mode="bilinear", align_corners=False
        )
        logits = self.head(self.predictor(resized))
        return normalize_heatmap(logits, self.config.temperature)

    def forward(self, frame: torch.Tensor) -> torch.Tensor:
        """Extract keypoints.

        Args:
            frame: Tensor of shape (B, 3, H, W) with values in [0, 1].

        Returns:
            Keypoints of shape (B, K, 2) in normalized (x, y), inside [-1, 1].
        """
        return soft_argmax(self.heatmaps(frame))


def extract_keypoints(extractor: KeypointDetector, frame: torch.Tensor) -> torch.Tensor:
    """Run the extractor on a single frame (3, H, W) or a batch (B, 3, H, W).

    The result keeps the batch dimension only when the input had one.
    """
    if frame.dim() == 3:
        single: torch.Tensor = extractor(frame.unsqueeze(0))
        return single.squeeze(0)
    batched: torch.Tensor = extractor(frame)
    return batched


def sparse_displacements(source: torch.Tensor, driving: torch.Tensor) -> torch.Tensor:
    """Compute keypoint displacements with a static background entry first.

    Args:
        source: Source keypoints, shape (B, K, 2).
        driving: Driving keypoints, shape (B, K, 2).

    Returns:
        Displacements of shape (B, K+1, 2): index 0 is exactly zero and
        index i >= 1 holds source[i-1] - driving[i-1].

    Raises:
        InvalidArgumentError: If the keypoint sets differ in shape.
    """
    if source.shape != driving.shape:
        raise InvalidArgumentError(
            f"Keypoint sets must match, got {tuple(source.shape)} and {tuple(driving.shape)}"
        )
    background = torch.zeros_like(source[..., :1, :])
    return torch.cat([background, source - driving], dim=-2)
