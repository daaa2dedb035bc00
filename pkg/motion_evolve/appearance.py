"""Self-appearance flow over motion-warped features."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import InvalidArgumentError
from .networks import Hourglass, fit_depth
from .primitives import warp


class AppearanceFlowNetwork(nn.Module):
    """Encoder-decoder predicting a field that borrows appearance from elsewhere in the view.

    The last layer starts at zero, so an untrained network predicts the
    identity and the motion-warped features pass through unchanged.
    """

    def __init__(
        self,
        feature_channels: int,
        feature_size: tuple[int, int],
        block_expansion: int,
        num_blocks: int,
        max_features: int,
    ) -> None:
        super().__init__()
        self.feature_channels = feature_channels
        self.feature_size = feature_size
        self.hourglass = Hourglass(
            in_features=feature_channels + 3,
            block_expansion=block_expansion,
            num_blocks=fit_depth(min(feature_size), num_blocks),
            max_features=max_features,
        )
        self.flow = nn.Conv2d(self.hourglass.out_channels, 2, kernel_size=3, padding=1)
        nn.init.zeros_(self.flow.weight)
        nn.init.zeros_(self.flow.bias)

    def forward(self, warped_features: torch.Tensor, source: torch.Tensor) -> torch.Tensor:
        small = F.interpolate(
            source, size=warped_features.shape[-2:], mode="bilinear", align_corners=False
        )
        out = self.flow(self.hourglass(torch.cat([warped_features, small], dim=1)))
        return out.permute(0, 2, 3, 1)


def predict_appearance_flow(
    network: AppearanceFlowNetwork,
    warped_features: torch.Tensor,
    source: torch.Tensor,
) -> torch.Tensor:
    """Predict the appearance field at feature resolution.

    Args:
        network: The appearance flow network.
        warped_features: Motion-warped features (B, C, h, w).
        source: Source frames (B, 3, H, W).

    Returns:
        Field of shape (B, h, w, 2).

    Raises:
        InvalidArgumentError: If the features do not match the network.
    """
    if warped_features.dim() != 4 or warped_features.shape[1] != network.feature_channels:
        raise InvalidArgumentError(
            f"Expected {network.feature_channels}-channel features, "
            f"got {tuple(warped_features.shape)}"
        )
    if tuple(warped_features.shape[-2:]) != tuple(network.feature_size):
        raise InvalidArgumentError(
            f"Expected {network.feature_size} features, got {tuple(warped_features.shape[-2:])}"
        )
    if not torch.isfinite(warped_features).all():
        raise InvalidArgumentError("Warped features contain non-finite values")
    if source.shape[0] != warped_features.shape[0]:
        raise InvalidArgumentError("Source and feature batch sizes differ")
    field: torch.Tensor = network(warped_features, source)
    return field


def apply_appearance_flow(motion_warped: torch.Tensor, appearance_field: torch.Tensor) -> torch.Tensor:
    """Warp already motion-warped features by the appearance field."""
    if tuple(motion_warped.shape[-2:]) != tuple(appearance_field.shape[1:3]):
        raise InvalidArgumentError(
            f"Features {tuple(motion_warped.shape[-2:])} and field "
            f"{tuple(appearance_field.shape[1:3])} differ in size"
        )
    return warp(motion_warped, appearance_field)
