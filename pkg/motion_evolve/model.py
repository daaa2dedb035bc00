"""Container for every trainable sub-network."""

from __future__ import annotations

import logging

import torch
from torch import nn

from .appearance import AppearanceFlowNetwork
from .const import DEFAULT_RESIDUAL_BLOCKS, GENERATOR_DOWN_BLOCKS
from .generator import Generator
from .keypoints import KeypointDetector
from .models import TrainConfig
from .motion import DenseMotionNetwork, MotionDynamics

_LOGGER = logging.getLogger(__name__)


class MotionTransferNetworks(nn.Module):
    """Keypoint detector, dense motion, dynamics, appearance flow and generator.

    Every sub-network is built regardless of the ablation switches, so a
    given seed produces the same initial weights for all presets.
    """

    def __init__(self, config: TrainConfig) -> None:
        super().__init__()
        self.config = config
        side = config.frame_size
        self.keypoint_detector = KeypointDetector(config.keypoint_config())
        self.motion_network = DenseMotionNetwork(
            num_kp=config.num_kp,
            motion_size=config.motion_size,
            block_expansion=config.block_expansion,
            num_blocks=config.motion_blocks,
            max_features=config.max_features,
            kp_sigma=config.kp_sigma,
        )
        self.dynamics = MotionDynamics(config.dynamics_hidden)
        self.generator = Generator(
            frame_size=(side, side),
            block_expansion=config.block_expansion,
            max_features=config.max_features,
            num_down_blocks=GENERATOR_DOWN_BLOCKS,
            num_residual_blocks=DEFAULT_RESIDUAL_BLOCKS,
        )
        self.appearance = AppearanceFlowNetwork(
            feature_channels=self.generator.feature_channels,
            feature_size=self.generator.feature_size,
            block_expansion=config.block_expansion,
            num_blocks=config.appearance_blocks,
            max_features=config.max_features,
        )

    @classmethod
    def from_seed(cls, config: TrainConfig, seed: int | None = None) -> MotionTransferNetworks:
        """Build the networks with weights drawn from a fixed seed.

        Layer initializers draw from the default generator, so it is seeded
        inside a forked random state and the caller's stream is restored
        afterwards.
        """
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed if seed is None else seed)
            networks = cls(config)
        _LOGGER.debug(
            "Built networks with %d parameters",
            sum(p.numel() for p in networks.parameters()),
        )
        return networks

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        """Return trainable parameters keyed by sub-network name."""
        return {name: list(module.parameters()) for name, module in self.named_children()}
