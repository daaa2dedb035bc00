"""Training and inference coordinator for motion transfer."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import torch

from .checkpoint import Checkpoint
from .const import (
    METRIC_AKD,
    METRIC_CSIM,
    METRIC_FID,
    PERCEPTUAL_SCALES,
    TASK_ANIMATION,
    TASK_RECONSTRUCTION,
)
from .data import sample_training_item
from .exceptions import InvalidArgumentError, TrainingDivergenceError
from .generator import synthesize
from .losses import RandomFeatureExtractor, equivariance_loss, perceptual_loss, total_loss
from .metrics import ALL_METRICS, compute_report
from .model import MotionTransferNetworks
from .models import LossRecord, SynthesisDiagnostics, TrainConfig, TrainingItem
from .primitives import max_pyramid_levels
from .transforms import GeometricTransform

if TYPE_CHECKING:
    from .data import ClipDataset, VideoClip
    from .losses import FeatureExtractor
    from .metrics import Embedder
    from .report import MetricReport

_LOGGER = logging.getLogger(__name__)

KeypointOracle = Callable[[torch.Tensor], torch.Tensor]

# Independent random streams derived from the master seed
_STREAM_SAMPLING = 1
_STREAM_TRANSFORM = 2
_STREAM_REFERENCES = 3

ANIMATION_METRICS = (METRIC_FID, METRIC_CSIM)


@dataclass
class GenerationResult:
    """Generated clip of a reconstruction or animation run.

    Attributes:
        frames: Generated frames (T - 1, 3, H, W), one per driving frame after the first.
        report: Metrics of the generated frames.
        reference_indices: Source-clip frames used as reference views.
        diagnostics: Intermediates of the synthesis pass.
    """

    frames: torch.Tensor
    report: MetricReport
    reference_indices: list[int]
    diagnostics: SynthesisDiagnostics


def _generator(seed: int, stream: int, iteration: int = 0) -> torch.Generator:
    state = np.random.SeedSequence([seed, stream, iteration]).generate_state(1, dtype=np.uint64)
    return torch.Generator().manual_seed(int(state[0]) & 0x7FFF_FFFF_FFFF_FFFF)


class TrainingCoordinator:
    """Owns the networks, the optimizer and the iteration counter.

    Training steps mutate the weights one at a time; every random draw of
    step i is keyed by (seed, i) so a run resumed from a checkpoint follows
    the same trajectory as an uninterrupted one.
    """

    def __init__(
        self,
        config: TrainConfig,
        networks: MotionTransferNetworks | None = None,
        extractor: FeatureExtractor | None = None,
    ) -> None:
        """Initialize the coordinator.

        Args:
            config: Training configuration.
            networks: Prebuilt networks; seeded fresh ones when omitted.
            extractor: Feature extractor of the perceptual loss.
        """
        self.config = config
        self.networks = (
            MotionTransferNetworks.from_seed(config) if networks is None else networks
        )
        self.extractor: FeatureExtractor = (
            RandomFeatureExtractor() if extractor is None else extractor
        )
        self.optimizer = torch.optim.Adam(self.networks.parameters(), lr=config.learning_rate)
        self.iteration = 0
        self.losses: list[LossRecord] = []

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> TrainingCoordinator:
        """Restore weights, optimizer moments and the iteration counter."""
        coordinator = cls(checkpoint.config)
        coordinator.networks.load_state_dict(checkpoint.weights)
        for name, parameter in coordinator.networks.named_parameters():
            prefix = f"{name}/"
            slots = {
                key.removeprefix(prefix): value.clone()
                for key, value in checkpoint.optimizer_state.items()
                if key.startswith(prefix)
            }
            if slots:
                coordinator.optimizer.state[parameter] = slots
        coordinator.iteration = checkpoint.iteration
        return coordinator

    def checkpoint(self) -> Checkpoint:
        """Snapshot the current training state."""
        names = {id(p): name for name, p in self.networks.named_parameters()}
        optimizer_state: dict[str, torch.Tensor] = {}
        for parameter, slots in self.optimizer.state.items():
            for slot, value in sorted(slots.items()):
                tensor = value if isinstance(value, torch.Tensor) else torch.tensor(float(value))
                optimizer_state[f"{names[id(parameter)]}/{slot}"] = tensor.detach().clone()
        group = self.optimizer.param_groups[0]
        return Checkpoint(
            config=self.config,
            iteration=self.iteration,
            weights={k: v.detach().clone() for k, v in self.networks.state_dict().items()},
            optimizer_state=dict(sorted(optimizer_state.items())),
            optimizer={
                "name": "adam",
                "lr": group["lr"],
                "betas": list(group["betas"]),
                "eps": group["eps"],
            },
        )

    def perceptual_scales(self, height: int, width: int) -> int:
        """Return the pyramid depth used by the perceptual loss for a frame size."""
        return min(PERCEPTUAL_SCALES, max_pyramid_levels(height, width))

    def train_step(self, item: TrainingItem) -> LossRecord:
        """Run one optimization step on a sampled item.

        Raises:
            TrainingDivergenceError: If the loss is not finite; weights are
                left untouched.
        """
        iteration = self.iteration + 1
        self.networks.train()
        generated, _ = synthesize(
            item.source, item.references, item.driving, self.networks, self.config
        )
        perceptual = perceptual_loss(
            generated,
            item.driving,
            self.extractor,
            self.perceptual_scales(*item.driving.shape[-2:]),
        )
        transform = GeometricTransform.random(
            item.driving.shape[0],
            _generator(self.config.seed, _STREAM_TRANSFORM, iteration),
            dtype=item.driving.dtype,
        )
        equivariance = equivariance_loss(self.networks.keypoint_detector, item.driving, transform)
        loss = total_loss(perceptual, equivariance, self.config.lambda_equiv)
        assert isinstance(loss, torch.Tensor)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDivergenceError(
                f"Loss became non-finite ({value}) at iteration {iteration}", iteration
            )
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.optimizer.step()
        self.iteration = iteration
        record = LossRecord(
            iteration=iteration,
            perceptual=float(perceptual.detach()),
            equivariance=float(equivariance.detach()),
            total=value,
        )
        self.losses.append(record)
        _LOGGER.debug(
            "Iteration %d: perceptual=%.5f equivariance=%.5f total=%.5f",
            iteration,
            record.perceptual,
            record.equivariance,
            record.total,
        )
        return record

    def sample(self, dataset: ClipDataset, iteration: int) -> TrainingItem:
        """Draw the training item of one iteration."""
        rng = np.random.default_rng([self.config.seed, _STREAM_SAMPLING, iteration])
        return sample_training_item(
            dataset, rng, self.config.effective_refs, batch_size=self.config.batch_size
        )

    def fit(self, dataset: ClipDataset, iterations: int | None = None) -> list[LossRecord]:
        """Train until ``iterations`` more steps (default: the configured total) are done.

        Returns:
            The loss records of the steps run by this call.
        """
        target = self.config.iterations if iterations is None else self.iteration + iterations
        start = self.iteration
        _LOGGER.info(
            "Training %s from iteration %d to %d",
            self.config.ablation.name or "custom",
            start,
            target,
        )
        records = []
        while self.iteration < target:
            record = self.train_step(self.sample(dataset, self.iteration + 1))
            records.append(record)
            if record.iteration % self.config.log_every == 0 or record.iteration == target:
                _LOGGER.info("Iteration %d/%d: loss %.5f", record.iteration, target, record.total)
        if records:
            _LOGGER.info(
                "Training finished: loss %.5f -> %.5f", records[0].total, records[-1].total
            )
        return records

    def _reference_indices(self, length: int, num_refs: int, seed: int | None) -> list[int]:
        if num_refs < 0:
            raise InvalidArgumentError(f"num_refs must be >= 0, got {num_refs}")
        if length < num_refs + 2:
            raise InvalidArgumentError(
                f"Clip of {length} frames cannot supply {num_refs} references; "
                f"at least {num_refs + 2} frames are needed"
            )
        rng = np.random.default_rng(
            [self.config.seed if seed is None else seed, _STREAM_REFERENCES]
        )
        chosen = rng.choice(np.arange(1, length), size=num_refs, replace=False)
        return sorted(int(i) for i in chosen)

    @torch.no_grad()
    def _generate(
        self, source_clip: torch.Tensor, driving_clip: torch.Tensor, indices: Sequence[int]
    ) -> tuple[torch.Tensor, SynthesisDiagnostics]:
        self.networks.eval()
        driving = driving_clip[1:]
        count = driving.shape[0]
        source = source_clip[0:1].expand(count, -1, -1, -1)
        references = [source_clip[i : i + 1].expand(count, -1, -1, -1) for i in indices]
        return synthesize(source, references, driving, self.networks, self.config)

    def reconstruct(
        self,
        clip: VideoClip,
        num_refs: int,
        *,
        seed: int | None = None,
        keypoint_oracle: KeypointOracle | None = None,
        embedder: Embedder | None = None,
        metrics: Sequence[str] = ALL_METRICS,
    ) -> GenerationResult:
        """Regenerate a clip from its first frame and sampled references.

        Frame 0 is the source; references come from frames 1..T-1 and every
        frame after the first drives one output.

        Args:
            clip: Clip to reconstruct; needs at least num_refs + 2 frames.
            num_refs: Reference views N.
            seed: Seed of the reference draw; the config seed when omitted.
            keypoint_oracle: Keypoint extractor for AKD; the model's own
                extractor when omitted.
            embedder: Embedder for FID and CSIM.
            metrics: Metric names to report.
        """
        indices = self._reference_indices(len(clip), num_refs, seed)
        generated, diagnostics = self._generate(clip.frames, clip.frames, indices)
        real = clip.frames[1:]
        metadata = {"reference_indices": ",".join(map(str, indices))}
        oracle: KeypointOracle = self.networks.keypoint_detector
        if keypoint_oracle is None:
            metadata["keypoint_oracle"] = "model keypoint extractor"
        else:
            oracle = keypoint_oracle
            metadata["keypoint_oracle"] = type(keypoint_oracle).__name__
        with torch.no_grad():
            gen_kp = oracle(generated) if METRIC_AKD in metrics else None
            real_kp = oracle(real) if METRIC_AKD in metrics else None
        report = compute_report(
            TASK_RECONSTRUCTION,
            generated,
            real,
            metrics=metrics,
            gen_keypoints=gen_kp,
            real_keypoints=real_kp,
            frame_size=(int(real.shape[-2]), int(real.shape[-1])),
            embedder=embedder,
            extractor=self.extractor,
            identifiers=self._identifiers(clip, num_refs),
            metadata=metadata,
        )
        return GenerationResult(generated, report, indices, diagnostics)

    def animate(
        self,
        source_clip: VideoClip,
        driving_clip: VideoClip,
        num_refs: int,
        *,
        seed: int | None = None,
        keypoint_oracle: KeypointOracle | None = None,
        embedder: Embedder | None = None,
    ) -> GenerationResult:
        """Transfer the motion of one clip onto the appearance of another.

        Driving keypoints are used directly (absolute transfer). FID and
        CSIM compare with frames of the source clip; AKD is reported only
        when a keypoint oracle is given.
        """
        indices = self._reference_indices(len(source_clip), num_refs, seed)
        generated, diagnostics = self._generate(source_clip.frames, driving_clip.frames, indices)
        metrics = list(ANIMATION_METRICS)
        gen_kp = real_kp = None
        if keypoint_oracle is not None:
            metrics.append(METRIC_AKD)
            with torch.no_grad():
                gen_kp = keypoint_oracle(generated)
                real_kp = keypoint_oracle(driving_clip.frames[1:])
        report = compute_report(
            TASK_ANIMATION,
            generated,
            driving_clip.frames[1:],
            metrics=metrics,
            fid_reference=source_clip.frames,
            csim_reference=_source_pairing(source_clip.frames, generated.shape[0]),
            gen_keypoints=gen_kp,
            real_keypoints=real_kp,
            frame_size=(int(generated.shape[-2]), int(generated.shape[-1])),
            embedder=embedder,
            identifiers={
                **self._identifiers(source_clip, num_refs),
                "driving_identity": driving_clip.identity,
                "driving_clip": driving_clip.name,
            },
            metadata={
                "reference_indices": ",".join(map(str, indices)),
                "keypoint_oracle": (
                    "none" if keypoint_oracle is None else type(keypoint_oracle).__name__
                ),
            },
        )
        return GenerationResult(generated, report, indices, diagnostics)

    def evaluate_reconstruction(
        self,
        clips: Sequence[VideoClip],
        num_refs: int,
        *,
        embedder: Embedder | None = None,
    ) -> MetricReport:
        """Reconstruct every clip and report metrics over the pooled frames."""
        if not clips:
            raise InvalidArgumentError("No clips to evaluate")
        generated, real, gen_kp, real_kp = [], [], [], []
        detector = self.networks.keypoint_detector
        for clip in clips:
            indices = self._reference_indices(len(clip), num_refs, None)
            frames, _ = self._generate(clip.frames, clip.frames, indices)
            generated.append(frames)
            real.append(clip.frames[1:])
            with torch.no_grad():
                gen_kp.append(detector(frames))
                real_kp.append(detector(clip.frames[1:]))
        pooled = torch.cat(real)
        return compute_report(
            TASK_RECONSTRUCTION,
            torch.cat(generated),
            pooled,
            gen_keypoints=torch.cat(gen_kp),
            real_keypoints=torch.cat(real_kp),
            frame_size=(int(pooled.shape[-2]), int(pooled.shape[-1])),
            embedder=embedder,
            extractor=self.extractor,
            identifiers=self._identifiers(None, num_refs),
            metadata={"clips": str(len(clips)), "keypoint_oracle": "model keypoint extractor"},
        )

    def evaluate_animation(
        self,
        pairs: Sequence[tuple[VideoClip, VideoClip]],
        num_refs: int,
        *,
        embedder: Embedder | None = None,
    ) -> MetricReport:
        """Animate every (source, driving) pair and pool the frames before FID."""
        if not pairs:
            raise InvalidArgumentError("No animation pairs to evaluate")
        generated, sources, paired, driving = [], [], [], []
        for source_clip, driving_clip in pairs:
            indices = self._reference_indices(len(source_clip), num_refs, None)
            frames, _ = self._generate(source_clip.frames, driving_clip.frames, indices)
            generated.append(frames)
            sources.append(source_clip.frames)
            paired.append(_source_pairing(source_clip.frames, frames.shape[0]))
            driving.append(driving_clip.frames[1:])
        return compute_report(
            TASK_ANIMATION,
            torch.cat(generated),
            torch.cat(driving),
            metrics=ANIMATION_METRICS,
            fid_reference=torch.cat(sources),
            csim_reference=torch.cat(paired),
            embedder=embedder,
            identifiers=self._identifiers(None, num_refs),
            metadata={"pairs": str(len(pairs)), "keypoint_oracle": "none"},
        )

    def _identifiers(self, clip: VideoClip | None, num_refs: int) -> dict[str, str]:
        identifiers = {
            "ablation": self.config.ablation.name or "custom",
            "num_refs": str(num_refs),
        }
        if clip is not None:
            identifiers["identity"] = clip.identity
            identifiers["clip"] = clip.name
        return identifiers


def _source_pairing(source: torch.Tensor, count: int) -> torch.Tensor:
    """Pair generated frame i (driven by frame i + 1) with source frame (i + 1) mod T."""
    indices = [(i + 1) % source.shape[0] for i in range(count)]
    return source[indices]


def train(dataset: ClipDataset, config: TrainConfig) -> tuple[Checkpoint, list[LossRecord]]:
    """Train a model from scratch.

    Returns:
        The final checkpoint and the per-iteration losses.

    Raises:
        TrainingDivergenceError: If the loss becomes non-finite.
    """
    coordinator = TrainingCoordinator(config)
    losses = coordinator.fit(dataset)
    return coordinator.checkpoint(), losses
