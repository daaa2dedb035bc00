"""Typed configuration and data models for motion-evolve.

This module defines the structures shared across the package: network and
solver configuration, ablation switches, the training configuration, a
sampled training item, and the intermediates exposed by a synthesis pass.

Annotations here are evaluated eagerly: the diagnostics TypedDicts mark
optional entries with NotRequired, and string annotations would hide that
marker from __optional_keys__.
"""

from dataclasses import dataclass, field, replace
from typing import NotRequired, TypedDict

import torch

from .const import (
    DEFAULT_APPEARANCE_BLOCKS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BLOCK_EXPANSION,
    DEFAULT_DYNAMICS_HIDDEN,
    DEFAULT_FRAME_SIZE,
    DEFAULT_ITERATIONS,
    DEFAULT_KP_BLOCKS,
    DEFAULT_KP_SIGMA,
    DEFAULT_KP_TEMPERATURE,
    DEFAULT_LAMBDA_EQUIV,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LOG_EVERY,
    DEFAULT_MAX_FEATURES,
    DEFAULT_MOTION_BLOCKS,
    DEFAULT_NUM_KP,
    DEFAULT_NUM_REFS,
    DEFAULT_ODE_STEPS,
    DEFAULT_SEED,
    DEFAULT_SOLVER,
    GRADIENT_BACKPROP,
    GRADIENT_MODES,
    KP_SCALE,
    MIN_HEATMAP_SIZE,
    MOTION_SCALE,
    PRESET_FULL,
    PRESET_NO_APPEARANCE,
    PRESET_NO_MOTION_EVOLUTION,
    PRESET_SINGLE_VIEW,
    SOLVERS,
)
from .exceptions import InvalidArgumentError


@dataclass(frozen=True)
class KeypointExtractorConfig:
    """Configuration of the self-supervised keypoint extractor.

    Attributes:
        num_kp: Number of keypoints K.
        frame_size: Expected input frame size (height, width).
        heatmap_size: Heatmap resolution (H', W').
        block_expansion: Base channel count of the hourglass.
        num_blocks: Hourglass depth.
        max_features: Channel cap inside the hourglass.
        temperature: Spatial softmax temperature.
    """

    num_kp: int = DEFAULT_NUM_KP
    frame_size: tuple[int, int] = (DEFAULT_FRAME_SIZE, DEFAULT_FRAME_SIZE)
    heatmap_size: tuple[int, int] = (
        int(DEFAULT_FRAME_SIZE * KP_SCALE),
        int(DEFAULT_FRAME_SIZE * KP_SCALE),
    )
    block_expansion: int = DEFAULT_BLOCK_EXPANSION
    num_blocks: int = DEFAULT_KP_BLOCKS
    max_features: int = DEFAULT_MAX_FEATURES
    temperature: float = DEFAULT_KP_TEMPERATURE

    def __post_init__(self) -> None:
        """Validate the keypoint extractor invariants."""
        if self.num_kp < 1:
            raise InvalidArgumentError(f"num_kp must be >= 1, got {self.num_kp}")
        if min(self.heatmap_size) < MIN_HEATMAP_SIZE:
            raise InvalidArgumentError(
                f"heatmap_size must be at least {MIN_HEATMAP_SIZE}x{MIN_HEATMAP_SIZE}, "
                f"got {self.heatmap_size}"
            )
        if self.temperature <= 0:
            raise InvalidArgumentError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class OdeConfig:
    """Fixed-step solver settings for motion evolution over t in [0, 1].

    Attributes:
        solver: "euler" or "rk4".
        steps: Number of fixed steps.
        gradient_mode: "backprop" (through the solver steps) or "adjoint".
    """

    solver: str = DEFAULT_SOLVER
    steps: int = DEFAULT_ODE_STEPS
    gradient_mode: str = GRADIENT_BACKPROP

    def __post_init__(self) -> None:
        """Validate the solver invariants."""
        if self.solver not in SOLVERS:
            raise InvalidArgumentError(f"Unknown solver {self.solver!r}, expected one of {SOLVERS}")
        if self.steps < 1:
            raise InvalidArgumentError(f"steps must be >= 1, got {self.steps}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise InvalidArgumentError(
                f"Unknown gradient_mode {self.gradient_mode!r}, expected one of {GRADIENT_MODES}"
            )

    @property
    def step_size(self) -> float:
        """Return the fixed step size h = 1 / steps."""
        return 1.0 / self.steps


@dataclass(frozen=True)
class AblationSpec:
    """Component switches matching the ablation study rows.

    Attributes:
        motion_evolution: Refine the coarse field with the ODE.
        appearance_assist: Warp motion-warped features by the self-appearance flow.
        multi_view: Fuse reference views with the source view.
    """

    motion_evolution: bool = True
    appearance_assist: bool = True
    multi_view: bool = True

    @classmethod
    def preset(cls, name: str) -> "AblationSpec":
        """Build a named preset.

        Args:
            name: One of "full", "no_motion_evolution", "no_appearance", "single_view".

        Returns:
            The matching AblationSpec.

        Raises:
            InvalidArgumentError: If the preset name is unknown.
        """
        try:
            return ABLATION_PRESETS[name]
        except KeyError as err:
            raise InvalidArgumentError(
                f"Unknown ablation preset {name!r}, expected one of {sorted(ABLATION_PRESETS)}"
            ) from err

    @property
    def name(self) -> str | None:
        """Return the preset name this spec matches, or None for custom switches."""
        for preset_name, spec in ABLATION_PRESETS.items():
            if spec == self:
                return preset_name
        return None


ABLATION_PRESETS: dict[str, AblationSpec] = {
    PRESET_FULL: AblationSpec(),
    PRESET_NO_MOTION_EVOLUTION: AblationSpec(motion_evolution=False),
    PRESET_NO_APPEARANCE: AblationSpec(appearance_assist=False),
    PRESET_SINGLE_VIEW: AblationSpec(multi_view=False),
}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run.

    Attributes:
        num_kp: Number of keypoints K.
        num_refs: Number of reference views N used during training.
        lambda_equiv: Weight of the equivariance loss (must be > 0).
        learning_rate: Adam learning rate.
        batch_size: Items per optimization step.
        iterations: Number of optimization steps.
        seed: Master seed for weights, sampling and transforms.
        frame_size: Square frame side in pixels.
        block_expansion: Base channel count shared by the networks.
        max_features: Channel cap of the hourglass networks.
        kp_blocks: Hourglass depth of the keypoint extractor.
        motion_blocks: Hourglass depth of the dense motion network.
        appearance_blocks: Hourglass depth of the appearance flow network.
        dynamics_hidden: Hidden channels of the motion dynamics network.
        kp_sigma: Gaussian width used to encode keypoints for the motion network.
        ode: Solver settings.
        ablation: Component switches.
        log_every: Iterations between INFO progress logs.
    """

    num_kp: int = DEFAULT_NUM_KP
    num_refs: int = DEFAULT_NUM_REFS
    lambda_equiv: float = DEFAULT_LAMBDA_EQUIV
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    iterations: int = DEFAULT_ITERATIONS
    seed: int = DEFAULT_SEED
    frame_size: int = DEFAULT_FRAME_SIZE
    block_expansion: int = DEFAULT_BLOCK_EXPANSION
    max_features: int = DEFAULT_MAX_FEATURES
    kp_blocks: int = DEFAULT_KP_BLOCKS
    motion_blocks: int = DEFAULT_MOTION_BLOCKS
    appearance_blocks: int = DEFAULT_APPEARANCE_BLOCKS
    dynamics_hidden: int = DEFAULT_DYNAMICS_HIDDEN
    kp_sigma: float = DEFAULT_KP_SIGMA
    ode: OdeConfig = field(default_factory=OdeConfig)
    ablation: AblationSpec = field(default_factory=AblationSpec)
    log_every: int = DEFAULT_LOG_EVERY

    def __post_init__(self) -> None:
        """Validate the training invariants."""
        if self.lambda_equiv <= 0:
            raise InvalidArgumentError(f"lambda_equiv must be > 0, got {self.lambda_equiv}")
        if self.num_refs < 0:
            raise InvalidArgumentError(f"num_refs must be >= 0, got {self.num_refs}")
        if self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be >= 1, got {self.iterations}")
        if self.num_kp < 1:
            raise InvalidArgumentError(f"num_kp must be >= 1, got {self.num_kp}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.frame_size < 16 or self.frame_size % 4:
            raise InvalidArgumentError(
                f"frame_size must be a multiple of 4 and >= 16, got {self.frame_size}"
            )
        if self.kp_sigma <= 0:
            raise InvalidArgumentError(f"kp_sigma must be > 0, got {self.kp_sigma}")
        if self.seed < 0:
            raise InvalidArgumentError(f"seed must be >= 0, got {self.seed}")

    @property
    def effective_refs(self) -> int:
        """Return the reference count actually fused (0 when multi-view is ablated)."""
        return self.num_refs if self.ablation.multi_view else 0

    @property
    def motion_size(self) -> tuple[int, int]:
        """Return the resolution at which dense motion is computed."""
        side = int(self.frame_size * MOTION_SCALE)
        return (side, side)

    def keypoint_config(self) -> KeypointExtractorConfig:
        """Derive the keypoint extractor configuration."""
        side = int(self.frame_size * KP_SCALE)
        return KeypointExtractorConfig(
            num_kp=self.num_kp,
            frame_size=(self.frame_size, self.frame_size),
            heatmap_size=(side, side),
            block_expansion=self.block_expansion,
            num_blocks=self.kp_blocks,
            max_features=self.max_features,
        )

    def with_ablation(self, ablation: AblationSpec) -> "TrainConfig":
        """Return a copy of this config with different component switches."""
        return replace(self, ablation=ablation)


@dataclass
class TrainingItem:
    """One sampled (source, references, driving) triple from a single clip.

    Attributes:
        source: Source frames, shape (B, 3, H, W).
        references: N reference frame batches, each (B, 3, H, W).
        driving: Driving frames, shape (B, 3, H, W).
        indices: Frame indices per batch element, source first, driving last.
    """

    source: torch.Tensor
    references: list[torch.Tensor]
    driving: torch.Tensor
    indices: list[list[int]] = field(default_factory=list)


@dataclass
class MotionOutput:
    """Result of the dense motion pipeline for one source view.

    Attributes:
        field: Dense field S->D at frame resolution, (B, H, W, 2).
        motion_field: The same field at motion resolution, (B, h, w, 2).
        coarse_field: Coarse field T(0) at motion resolution, (B, h, w, 2).
        coefficients: Softmaxed coefficient maps, (B, K+1, h, w).
        confidence: Raw nonnegative confidence mask, (B, h, w).
        source_keypoints: Keypoints of the source view, (B, K, 2).
        driving_keypoints: Keypoints of the driving frame, (B, K, 2).
        displacements: Keypoint displacements with background first, (B, K+1, 2).
    """

    field: torch.Tensor
    motion_field: torch.Tensor
    coarse_field: torch.Tensor
    coefficients: torch.Tensor
    confidence: torch.Tensor
    source_keypoints: torch.Tensor
    driving_keypoints: torch.Tensor
    displacements: torch.Tensor


class ViewDiagnostics(TypedDict):
    """Per-view intermediates of a synthesis pass.

    View 0 is the source image; views 1..N are the references.
    """

    source_keypoints: torch.Tensor
    displacements: torch.Tensor
    coarse_field: torch.Tensor
    motion_field: torch.Tensor
    field: torch.Tensor
    coefficients: torch.Tensor
    raw_confidence: torch.Tensor
    features: torch.Tensor
    warped_features: torch.Tensor
    appearance_features: torch.Tensor
    appearance_field: NotRequired[torch.Tensor]


class SynthesisDiagnostics(TypedDict):
    """All intermediates of a synthesis pass.

    Attributes are named after the quantities they hold: driving keypoints,
    the per-view entries, the normalized confidence weights at feature
    resolution and the two fused feature maps fed to the decoder.
    """

    driving_keypoints: torch.Tensor
    views: list[ViewDiagnostics]
    confidence: torch.Tensor
    fused_motion: torch.Tensor
    fused_appearance: torch.Tensor


@dataclass(frozen=True)
class LossRecord:
    """Losses of one optimization step.

    Attributes:
        iteration: 1-based iteration index.
        perceptual: Multi-resolution perceptual loss.
        equivariance: Keypoint equivariance loss.
        total: perceptual + lambda * equivariance.
    """

    iteration: int
    perceptual: float
    equivariance: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return {
            "iteration": self.iteration,
            "perceptual": self.perceptual,
            "equivariance": self.equivariance,
            "total": self.total,
        }
