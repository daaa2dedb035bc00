"""Tests for the network container."""

from __future__ import annotations

import torch

from motion_evolve.generator import synthesize
from motion_evolve.keypoints import KeypointDetector
from motion_evolve.losses import RandomFeatureExtractor, equivariance_loss, perceptual_loss
from motion_evolve.model import MotionTransferNetworks
from motion_evolve.models import TrainConfig
from motion_evolve.transforms import GeometricTransform


class TestFromSeed:
    """Tests for MotionTransferNetworks.from_seed."""

    def test_global_random_state_untouched(self, tiny_config: TrainConfig) -> None:
        """Test that building networks leaves the caller's random stream alone."""
        torch.manual_seed(123)
        expected = torch.rand(4)
        torch.manual_seed(123)
        MotionTransferNetworks.from_seed(tiny_config, seed=5)
        assert torch.equal(torch.rand(4), expected)

    def test_seed_fixes_weights_regardless_of_global_state(self, tiny_config: TrainConfig) -> None:
        """Test that one seed gives the same weights after unrelated random draws."""
        first = MotionTransferNetworks.from_seed(tiny_config, seed=5)
        torch.rand(100)
        second = MotionTransferNetworks.from_seed(tiny_config, seed=5)
        for (name, a), (_, b) in zip(
            first.state_dict().items(), second.state_dict().items(), strict=True
        ):
            assert torch.equal(a, b), name

    def test_parameter_groups(self, tiny_networks: MotionTransferNetworks) -> None:
        """Test that every sub-network is a named parameter group."""
        groups = tiny_networks.parameter_groups()
        assert set(groups) == {
            "keypoint_detector",
            "motion_network",
            "dynamics",
            "generator",
            "appearance",
        }
        assert all(groups.values())


class TestEndToEndGradients:
    """Tests that the training objective reaches every sub-network."""

    def test_every_group_receives_gradient(
        self, tiny_networks: MotionTransferNetworks, tiny_config: TrainConfig, frames: torch.Tensor
    ) -> None:
        """Test that perceptual plus equivariance losses give each group a nonzero gradient."""
        references = [frames.roll(1, dims=-1), frames.roll(2, dims=-2)]
        driving = frames.roll(3, dims=-1)
        generated, _ = synthesize(frames, references, driving, tiny_networks, tiny_config)
        detector: KeypointDetector = tiny_networks.keypoint_detector
        transform = GeometricTransform.random(frames.shape[0], 4)
        perceptual = perceptual_loss(generated, driving, RandomFeatureExtractor(), scales=2)
        equivariance = equivariance_loss(detector, driving, transform)
        (perceptual + tiny_config.lambda_equiv * equivariance).backward()

        for name, params in tiny_networks.parameter_groups().items():
            norm = sum(float(p.grad.abs().sum()) for p in params if p.grad is not None)
            assert norm > 0, name
