"""Tests for the checkpoint format."""

from __future__ import annotations

import struct
from pathlib import Path

import pytest
import torch

from motion_evolve.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from motion_evolve.exceptions import CheckpointError
from motion_evolve.generator import synthesize
from motion_evolve.model import MotionTransferNetworks
from motion_evolve.models import TrainConfig


@pytest.fixture
def checkpoint(tiny_config: TrainConfig, tiny_networks: MotionTransferNetworks) -> Checkpoint:
    """Return a checkpoint of the tiny networks with a fake optimizer slot."""
    return Checkpoint(
        config=tiny_config,
        iteration=3,
        weights={k: v.clone() for k, v in tiny_networks.state_dict().items()},
        optimizer_state={"dynamics.net.0.weight/exp_avg": torch.ones(8, 3, 3, 3)},
        optimizer={"name": "adam", "lr": 2e-4, "betas": [0.9, 0.999]},
    )


class TestCheckpoint:
    """Tests for Checkpoint serialization."""

    def test_round_trip(self, checkpoint: Checkpoint) -> None:
        """Test that every field survives serialization."""
        restored = Checkpoint.from_bytes(checkpoint.to_bytes())
        assert restored.config == checkpoint.config
        assert restored.iteration == 3
        assert restored.optimizer == checkpoint.optimizer
        assert list(restored.weights) == list(checkpoint.weights)
        for name, tensor in checkpoint.weights.items():
            assert restored.weights[name].dtype == tensor.dtype
            assert torch.equal(restored.weights[name], tensor)
        assert torch.equal(
            restored.optimizer_state["dynamics.net.0.weight/exp_avg"], torch.ones(8, 3, 3, 3)
        )

    def test_save_load_save_is_byte_identical(
        self, checkpoint: Checkpoint, tmp_path: Path
    ) -> None:
        """Test that reserializing a loaded checkpoint reproduces the file."""
        first = save_checkpoint(checkpoint, tmp_path / "a.ckpt")
        second = save_checkpoint(load_checkpoint(first), tmp_path / "b.ckpt")
        assert first.read_bytes() == second.read_bytes()

    def test_weights_load_into_fresh_networks(
        self, checkpoint: Checkpoint, tiny_config: TrainConfig
    ) -> None:
        """Test that restored weights fit a newly built model."""
        restored = Checkpoint.from_bytes(checkpoint.to_bytes())
        networks = MotionTransferNetworks(tiny_config)
        networks.load_state_dict(restored.weights)

    def test_reloaded_model_gives_identical_outputs(
        self,
        checkpoint: Checkpoint,
        tiny_networks: MotionTransferNetworks,
        tiny_config: TrainConfig,
        frames: torch.Tensor,
        tmp_path: Path,
    ) -> None:
        """Test that a model rebuilt from a saved file synthesizes the same bits."""
        restored = load_checkpoint(save_checkpoint(checkpoint, tmp_path / "model.ckpt"))
        reloaded = MotionTransferNetworks(restored.config)
        reloaded.load_state_dict(restored.weights)
        args = (frames, [frames.roll(1, dims=-1)], frames.flip(0))
        with torch.no_grad():
            original, _ = synthesize(*args, tiny_networks.eval(), tiny_config)
            rebuilt, _ = synthesize(*args, reloaded.eval(), restored.config)
        assert torch.equal(original, rebuilt)

    def test_bad_magic(self, checkpoint: Checkpoint) -> None:
        """Test that a foreign file is rejected."""
        blob = b"NOTACKPT" + checkpoint.to_bytes()[8:]
        with pytest.raises(CheckpointError, match="magic"):
            Checkpoint.from_bytes(blob)

    def test_unsupported_version(self, checkpoint: Checkpoint) -> None:
        """Test that an unknown version is rejected."""
        blob = bytearray(checkpoint.to_bytes())
        struct.pack_into("<I", blob, 8, 99)
        with pytest.raises(CheckpointError, match="version"):
            Checkpoint.from_bytes(bytes(blob))

    @pytest.mark.parametrize("keep", [4, 30, -10])
    def test_truncated(self, checkpoint: Checkpoint, keep: int) -> None:
        """Test that cutting the file anywhere is detected."""
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(checkpoint.to_bytes()[:keep])

    def test_corrupt_manifest(self, checkpoint: Checkpoint) -> None:
        """Test that an unparseable manifest is rejected."""
        blob = bytearray(checkpoint.to_bytes())
        blob[20] = ord("}")
        with pytest.raises(CheckpointError, match="manifest"):
            Checkpoint.from_bytes(bytes(blob))

    def test_missing_file(self, tmp_path: Path) -> None:
        """Test that the error names the missing file."""
        path = tmp_path / "missing.ckpt"
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(path)
        assert info.value.path == path
