"""Coarse dense motion regression and ODE-based motion evolution."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING

import torch
import torch.nn.functional as F
from torch import nn

from .exceptions import InvalidArgumentError
from .keypoints import sparse_displacements
from .models import MotionOutput
from .networks import Hourglass, fit_depth
from .ode import evolve_field
from .primitives import gaussian_heatmap, resize_field

if TYPE_CHECKING:
    from .model import MotionTransferNetworks
    from .models import TrainConfig

_LOGGER = logging.getLogger(__name__)

DYNAMICS_OUTPUT_SCALE = 0.1


class DenseMotionNetwork(nn.Module):
    """Predict coefficient maps and a confidence mask for one source view.

    The input stacks K+1 unnormalized Gaussian maps at the driving keypoints
    (channel 0 is the empty background map) with the source frame, all at
    motion resolution.
    """

    def __init__(
        self,
        num_kp: int,
        motion_size: tuple[int, int],
        block_expansion: int,
        num_blocks: int,
        max_features: int,
        kp_sigma: float,
    ) -> None:
        super().__init__()
        self.num_kp = num_kp
        self.motion_size = motion_size
        self.kp_sigma = kp_sigma
        depth = fit_depth(min(motion_size), num_blocks)
        self.hourglass = Hourglass(
            in_features=num_kp + 1 + 3,
            block_expansion=block_expansion,
            num_blocks=depth,
            max_features=max_features,
        )
        self.coefficients = nn.Conv2d(self.hourglass.out_channels, num_kp + 1, 7, padding=3)
        self.confidence = nn.Conv2d(self.hourglass.out_channels, 1, 7, padding=3)

    def encode_inputs(self, source: torch.Tensor, driving_keypoints: torch.Tensor) -> torch.Tensor:
        """Build the (B, K+1+3, h, w) network input."""
        height, width = self.motion_size
        heatmaps = gaussian_heatmap(
            driving_keypoints, self.kp_sigma, height, width, normalize=False
        )
        background = torch.zeros_like(heatmaps[:, :1])
        small = F.interpolate(source, size=self.motion_size, mode="bilinear", align_corners=False)
        return torch.cat([background, heatmaps, small], dim=1)

    def forward(
        self, source: torch.Tensor, driving_keypoints: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Return softmaxed coefficients (B, K+1, h, w) and raw confidence (B, h, w)."""
        if driving_keypoints.shape[-2] != self.num_kp:
            raise InvalidArgumentError(
                f"Expected {self.num_kp} keypoints, got {driving_keypoints.shape[-2]}"
            )
        features = self.hourglass(self.encode_inputs(source, driving_keypoints))
        alpha = F.softmax(self.coefficients(features), dim=1)
        confidence = F.softplus(self.confidence(features)).squeeze(1)
        return alpha, confidence


class MotionDynamics(nn.Module):
    """Learned derivative of the deformation field, with time as an extra channel."""

    def __init__(self, hidden: int) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, hidden, 3, padding=1),
            nn.Tanh(),
            nn.Conv2d(hidden, hidden, 3, padding=1),
            nn.Tanh(),
            nn.Conv2d(hidden, 2, 3, padding=1),
        )
        last = self.net[-1]
        with torch.no_grad():
            last.weight.mul_(DYNAMICS_OUTPUT_SCALE)
            last.bias.mul_(DYNAMICS_OUTPUT_SCALE)

    def forward(self, t: float, field: torch.Tensor) -> torch.Tensor:
        batch, height, width, _ = field.shape
        time = field.new_full((batch, 1, height, width), float(t))
        out = self.net(torch.cat([field.permute(0, 3, 1, 2), time], dim=1))
        return out.permute(0, 2, 3, 1)


def regress_coarse_field(coefficients: torch.Tensor, displacements: torch.Tensor) -> torch.Tensor:
    """Blend keypoint displacements by per-pixel coefficients.

    Args:
        coefficients: Coefficient maps (B, K+1, h, w).
        displacements: Displacements (B, K+1, 2), background first.

    Returns:
        Coarse field T(0) of shape (B, h, w, 2).

    Raises:
        InvalidArgumentError: If the channel counts differ.
    """
    if coefficients.shape[1] != displacements.shape[1]:
        raise InvalidArgumentError(
            f"{coefficients.shape[1]} coefficient maps for {displacements.shape[1]} displacements"
        )
    return torch.einsum("bkhw,bkc->bhwc", coefficients, displacements)


def dense_motion(
    source: torch.Tensor,
    driving: torch.Tensor,
    networks: MotionTransferNetworks,
    config: TrainConfig,
    *,
    driving_keypoints: torch.Tensor | None = None,
) -> MotionOutput:
    """Estimate the dense field that maps driving locations into the source.

    Keypoints, displacements, coefficient regression and (unless ablated)
    ODE evolution run at motion resolution; the final field is bilinearly
    upsampled to frame resolution.

    Args:
        source: Source frames (B, 3, H, W).
        driving: Driving frames (B, 3, H, W).
        networks: The model's sub-networks.
        config: Training configuration carrying the ablation and solver settings.
        driving_keypoints: Precomputed driving keypoints shared across views.

    Returns:
        The field together with every intermediate.
    """
    if source.shape != driving.shape:
        raise InvalidArgumentError(
            f"Source {tuple(source.shape)} and driving {tuple(driving.shape)} frames differ"
        )
    source_kp = networks.keypoint_detector(source)
    driving_kp = (
        networks.keypoint_detector(driving) if driving_keypoints is None else driving_keypoints
    )
    displacements = sparse_displacements(source_kp, driving_kp)
    alpha, confidence = networks.motion_network(source, driving_kp)
    coarse = regress_coarse_field(alpha, displacements)
    if config.ablation.motion_evolution:
        motion_field = evolve_field(coarse, networks.dynamics, config.ode)
    else:
        _LOGGER.debug("Motion evolution disabled, using the coarse field directly")
        motion_field = coarse
    return MotionOutput(
        field=resize_field(motion_field, (source.shape[-2], source.shape[-1])),
        motion_field=motion_field,
        coarse_field=coarse,
        coefficients=alpha,
        confidence=confidence,
        source_keypoints=source_kp,
        driving_keypoints=driving_kp,
        displacements=displacements,
    )
