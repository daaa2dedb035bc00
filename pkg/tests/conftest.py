"""Fixtures for motion-evolve tests."""

from __future__ import annotations

from collections.abc import Iterator

import pytest
import torch

from motion_evolve.data import ClipDataset, SpriteSceneConfig, build_dataset
from motion_evolve.model import MotionTransferNetworks
from motion_evolve.models import OdeConfig, TrainConfig

TINY_FRAME = 16


@pytest.fixture(autouse=True)
def deterministic_torch() -> Iterator[None]:
    """Run every test single-threaded with a fixed global seed."""
    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    torch.manual_seed(0)
    yield
    torch.set_num_threads(threads)


@pytest.fixture
def tiny_config() -> TrainConfig:
    """Return a configuration small enough to train in a test."""
    return TrainConfig(
        num_kp=4,
        num_refs=2,
        batch_size=2,
        iterations=3,
        frame_size=TINY_FRAME,
        block_expansion=8,
        max_features=32,
        kp_blocks=2,
        motion_blocks=2,
        appearance_blocks=1,
        dynamics_hidden=8,
        kp_sigma=0.1,
        ode=OdeConfig(solver="rk4", steps=2),
        log_every=1,
    )


@pytest.fixture
def tiny_networks(tiny_config: TrainConfig) -> MotionTransferNetworks:
    """Return seeded networks for the tiny configuration."""
    return MotionTransferNetworks.from_seed(tiny_config)


@pytest.fixture
def scene_config() -> SpriteSceneConfig:
    """Return a sprite scene configuration matching the tiny frames."""
    return SpriteSceneConfig(frame_size=TINY_FRAME, clip_length=6)


@pytest.fixture
def tiny_dataset(scene_config: SpriteSceneConfig) -> ClipDataset:
    """Return a dataset of two train and two test identities."""
    return build_dataset(
        seed=7,
        config=scene_config,
        train_identities=2,
        test_identities=2,
        clips_per_identity=1,
    )


@pytest.fixture
def frames() -> torch.Tensor:
    """Return a random batch of two 16x16 frames."""
    generator = torch.Generator().manual_seed(3)
    return torch.rand(2, 3, TINY_FRAME, TINY_FRAME, generator=generator)
