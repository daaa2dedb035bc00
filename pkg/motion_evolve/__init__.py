"""Keypoint-driven motion transfer with evolved dense motion and multi-view fusion.

The package trains and evaluates an image animation model: sparse keypoint
motion is regressed into a coarse dense field, refined by integrating a
learned ODE, and used to warp encoded features of a source image and of
optional reference images of the same object. A self-appearance flow
repairs the warped features and learned confidence masks fuse the views
before decoding.
"""

from __future__ import annotations

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import load_config
from .coordinator import TrainingCoordinator, train
from .data import ClipDataset, VideoClip, build_dataset, generate_scene
from .exceptions import MotionEvolveError
from .experiments import run_ablations, run_reference_sweep
from .generator import synthesize
from .model import MotionTransferNetworks
from .models import AblationSpec, OdeConfig, TrainConfig

__version__ = "0.1.0"

__all__ = [
    "AblationSpec",
    "Checkpoint",
    "ClipDataset",
    "MotionEvolveError",
    "MotionTransferNetworks",
    "OdeConfig",
    "TrainConfig",
    "TrainingCoordinator",
    "VideoClip",
    "build_dataset",
    "generate_scene",
    "load_checkpoint",
    "load_config",
    "run_ablations",
    "run_reference_sweep",
    "save_checkpoint",
    "synthesize",
    "train",
]
