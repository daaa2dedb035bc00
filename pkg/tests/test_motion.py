"""Tests for dense motion regression and evolution."""

from __future__ import annotations

import pytest
import torch

from motion_evolve.exceptions import InvalidArgumentError
from motion_evolve.model import MotionTransferNetworks
from motion_evolve.models import AblationSpec, TrainConfig
from motion_evolve.motion import DenseMotionNetwork, dense_motion, regress_coarse_field


class TestRegressCoarseField:
    """Tests for regress_coarse_field."""

    def test_single_coefficient_copies_displacement(self) -> None:
        """Test that all mass on keypoint 1 reproduces its displacement everywhere."""
        coefficients = torch.zeros(1, 3, 4, 4)
        coefficients[:, 1] = 1.0
        displacements = torch.tensor([[[0.0, 0.0], [0.1, -0.2], [0.5, 0.5]]])
        field = regress_coarse_field(coefficients, displacements)
        assert field.shape == (1, 4, 4, 2)
        assert torch.allclose(field, torch.tensor([0.1, -0.2]).expand(1, 4, 4, 2))

    def test_background_coefficient_gives_zero(self) -> None:
        """Test that pixels owned by the background do not move."""
        coefficients = torch.zeros(1, 2, 3, 3)
        coefficients[:, 0] = 1.0
        displacements = torch.tensor([[[0.0, 0.0], [0.7, 0.3]]])
        assert bool((regress_coarse_field(coefficients, displacements) == 0).all())

    def test_convex_blend(self) -> None:
        """Test an even split between two keypoints."""
        coefficients = torch.full((1, 3, 2, 2), 0.5)
        coefficients[:, 0] = 0.0
        displacements = torch.tensor([[[0.0, 0.0], [0.2, 0.0], [0.0, 0.4]]])
        field = regress_coarse_field(coefficients, displacements)
        assert torch.allclose(field, torch.tensor([0.1, 0.2]).expand(1, 2, 2, 2))

    def test_count_mismatch_rejected(self) -> None:
        """Test that coefficient and displacement counts must agree."""
        with pytest.raises(InvalidArgumentError):
            regress_coarse_field(torch.zeros(1, 3, 2, 2), torch.zeros(1, 4, 2))


class TestDenseMotionNetwork:
    """Tests for DenseMotionNetwork."""

    def test_outputs(self) -> None:
        """Test coefficient normalization and confidence sign."""
        network = DenseMotionNetwork(
            num_kp=3,
            motion_size=(8, 8),
            block_expansion=8,
            num_blocks=2,
            max_features=32,
            kp_sigma=0.1,
        )
        alpha, confidence = network(torch.rand(2, 3, 32, 32), torch.rand(2, 3, 2) * 2 - 1)
        assert alpha.shape == (2, 4, 8, 8)
        assert confidence.shape == (2, 8, 8)
        assert torch.allclose(alpha.sum(dim=1), torch.ones(2, 8, 8), atol=1e-5)
        assert bool((confidence >= 0).all())

    def test_wrong_keypoint_count(self) -> None:
        """Test that the keypoint count must match the network."""
        network = DenseMotionNetwork(3, (8, 8), 8, 1, 32, 0.1)
        with pytest.raises(InvalidArgumentError):
            network(torch.rand(1, 3, 16, 16), torch.zeros(1, 4, 2))


class TestDenseMotion:
    """Tests for the full dense motion pipeline."""

    def test_shapes(
        self,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
    ) -> None:
        """Test every intermediate's shape."""
        output = dense_motion(frames, frames.flip(0), tiny_networks, tiny_config)
        assert output.field.shape == (2, 16, 16, 2)
        assert output.motion_field.shape == (2, 4, 4, 2)
        assert output.coarse_field.shape == (2, 4, 4, 2)
        assert output.coefficients.shape == (2, 5, 4, 4)
        assert output.confidence.shape == (2, 4, 4)
        assert output.source_keypoints.shape == (2, 4, 2)
        assert output.displacements.shape == (2, 5, 2)
        assert bool((output.displacements[:, 0] == 0).all())

    def test_same_frame_without_evolution_is_static(
        self,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
    ) -> None:
        """Test that identical frames give a zero field when evolution is off."""
        config = tiny_config.with_ablation(AblationSpec.preset("no_motion_evolution"))
        output = dense_motion(frames, frames, tiny_networks, config)
        assert bool((output.field == 0).all())
        assert torch.equal(output.motion_field, output.coarse_field)

    def test_evolution_changes_the_field(
        self,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
    ) -> None:
        """Test that the learned dynamics move the coarse field."""
        output = dense_motion(frames, frames.flip(0), tiny_networks, tiny_config)
        assert not torch.equal(output.motion_field, output.coarse_field)

    def test_precomputed_driving_keypoints(
        self,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
    ) -> None:
        """Test that passing the driving keypoints matches computing them."""
        driving = frames.flip(0)
        keypoints = tiny_networks.keypoint_detector(driving)
        shared = dense_motion(
            frames, driving, tiny_networks, tiny_config, driving_keypoints=keypoints
        )
        computed = dense_motion(frames, driving, tiny_networks, tiny_config)
        assert torch.allclose(shared.field, computed.field)

    def test_frame_mismatch_rejected(
        self, tiny_networks: MotionTransferNetworks, tiny_config: TrainConfig
    ) -> None:
        """Test that source and driving must share a shape."""
        with pytest.raises(InvalidArgumentError):
            dense_motion(
                torch.rand(1, 3, 16, 16), torch.rand(2, 3, 16, 16), tiny_networks, tiny_config
            )

    def test_field_gradient_reaches_keypoint_detector(
        self,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
    ) -> None:
        """Test that a loss on the field trains the keypoint detector head."""
        output = dense_motion(frames, frames.flip(0), tiny_networks, tiny_config)
        output.field.square().sum().backward()
        grad = tiny_networks.keypoint_detector.head.weight.grad
        assert grad is not None
        assert float(grad.abs().sum()) > 0
