"""Ablation study and reference-count sweep drivers."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import TYPE_CHECKING

from .const import (
    PRESET_FULL,
    PRESET_NO_APPEARANCE,
    PRESET_NO_MOTION_EVOLUTION,
    PRESET_SINGLE_VIEW,
    SPLIT_TEST,
)
from .coordinator import TrainingCoordinator
from .exceptions import InvalidArgumentError
from .models import AblationSpec, TrainConfig
from .report import AblationTable, MetricReport

if TYPE_CHECKING:
    from .checkpoint import Checkpoint
    from .data import ClipDataset

_LOGGER = logging.getLogger(__name__)

ABLATION_ORDER = (
    PRESET_FULL,
    PRESET_NO_MOTION_EVOLUTION,
    PRESET_NO_APPEARANCE,
    PRESET_SINGLE_VIEW,
)


def run_ablations(
    dataset: ClipDataset,
    base_config: TrainConfig,
    presets: Sequence[str] = ABLATION_ORDER,
    *,
    split: str = SPLIT_TEST,
) -> AblationTable:
    """Train and evaluate one model per ablation preset.

    Every variant starts from the same seed and sees the same training
    items; only the flagged component's execution path differs. Rows are
    added in execution order.

    Args:
        dataset: Training and evaluation clips.
        base_config: Configuration shared by all variants.
        presets: Preset names to run.
        split: Split whose clips are reconstructed for the metrics.

    Returns:
        One reconstruction report per preset.
    """
    clips = dataset.split(split)
    if not clips:
        raise InvalidArgumentError(f"Split {split!r} has no clips to evaluate")
    table = AblationTable()
    for preset in presets:
        config = base_config.with_ablation(AblationSpec.preset(preset))
        _LOGGER.info("Running ablation %s", preset)
        coordinator = TrainingCoordinator(config)
        losses = coordinator.fit(dataset)
        report = coordinator.evaluate_reconstruction(clips, base_config.num_refs)
        report.metadata["final_loss"] = f"{losses[-1].total:.6f}"
        report.metadata["iterations"] = str(coordinator.iteration)
        table.add_row(preset, report)
    return table


def run_reference_sweep(
    dataset: ClipDataset,
    checkpoint: Checkpoint,
    n_values: Sequence[int],
    *,
    split: str = SPLIT_TEST,
) -> dict[int, MetricReport]:
    """Evaluate one trained model with varying numbers of reference views.

    Args:
        dataset: Evaluation clips.
        checkpoint: A model trained with multi-view fusion enabled.
        n_values: Reference counts to evaluate; 0 reduces to single view.
        split: Split whose clips are reconstructed.

    Returns:
        A reconstruction report per reference count, in the given order.

    Raises:
        InvalidArgumentError: If the model was trained without multi-view
            fusion or a count exceeds the shortest clip length minus 2.
    """
    if not checkpoint.config.ablation.multi_view:
        raise InvalidArgumentError("Reference sweep needs a model trained with multi-view fusion")
    clips = dataset.split(split)
    if not clips:
        raise InvalidArgumentError(f"Split {split!r} has no clips to evaluate")
    shortest = min(len(clip) for clip in clips)
    for count in n_values:
        if not 0 <= count <= shortest - 2:
            raise InvalidArgumentError(
                f"Reference count {count} is outside [0, {shortest - 2}] for clips of {shortest} frames"
            )
    coordinator = TrainingCoordinator.from_checkpoint(checkpoint)
    reports = {}
    for count in n_values:
        _LOGGER.info("Evaluating with %d reference view(s)", count)
        reports[count] = coordinator.evaluate_reconstruction(clips, count)
    return reports
