"""Synthetic sprite videos with ground-truth keypoints and flow.

A scene shows one to three soft-edged shapes (disc, square, triangle)
moving over a static textured background. An identity fixes the shapes,
their colors and sizes, and the background texture; clips of one identity
differ only in their trajectories.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch.utils.data import Dataset

from .const import (
    DEFAULT_ANIMATION_PAIRS,
    DEFAULT_CLIP_LENGTH,
    DEFAULT_CLIPS_PER_IDENTITY,
    DEFAULT_FRAME_SIZE,
    DEFAULT_TEST_IDENTITIES,
    DEFAULT_TRAIN_IDENTITIES,
    MANIFEST_NAME,
    SPLIT_TEST,
    SPLIT_TRAIN,
)
from .exceptions import InvalidArgumentError
from .frames import load_frames, save_frames
from .models import TrainingItem

_LOGGER = logging.getLogger(__name__)

SHAPE_DISC = "disc"
SHAPE_SQUARE = "square"
SHAPE_TRIANGLE = "triangle"
SHAPE_KINDS = (SHAPE_DISC, SHAPE_SQUARE, SHAPE_TRIANGLE)

KEYPOINTS_NAME = "keypoints.json"
TRIANGLE_INRADIUS = 0.5
TEXTURE_COMPONENTS = 3
TEXTURE_AMPLITUDE = 0.06


def _rotation(angle: np.ndarray) -> np.ndarray:
    """Return rotation matrices (..., 2, 2) for angles in radians."""
    cos, sin = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([cos, -sin], -1), np.stack([sin, cos], -1)], -2)


def _local_vertices(kind: str) -> np.ndarray:
    """Return vertex positions in shape-local units (circumradius 1)."""
    if kind == SHAPE_SQUARE:
        return np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    if kind == SHAPE_TRIANGLE:
        angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3 + np.pi
        return np.stack([np.cos(angles), np.sin(angles)], -1)
    return np.zeros((0, 2))


def _signed_distance(kind: str, local: np.ndarray) -> np.ndarray:
    """Approximate signed distance to the outline in shape-local units."""
    if kind == SHAPE_DISC:
        return np.linalg.norm(local, axis=-1) - 1.0
    if kind == SHAPE_SQUARE:
        return np.abs(local).max(axis=-1) - 1.0
    angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    normals = np.stack([np.cos(angles), np.sin(angles)], -1)
    return (local @ normals.T).max(axis=-1) - TRIANGLE_INRADIUS


@dataclass(frozen=True)
class SpriteSceneConfig:
    """Scene generation settings; lengths are in normalized units.

    Attributes:
        frame_size: Square frame side in pixels.
        clip_length: Frames per clip.
        min_shapes: Fewest shapes per identity.
        max_shapes: Most shapes per identity.
        radius_range: Range of shape circumradii.
        amplitude: Amplitude of the sinusoidal trajectory.
        max_cycles: Most sinusoid periods per clip.
        walk_step: Standard deviation of each random-walk step.
        walk_bound: Clamp on the accumulated random walk.
        max_spin: Most rotation per frame in radians.
    """

    frame_size: int = DEFAULT_FRAME_SIZE
    clip_length: int = DEFAULT_CLIP_LENGTH
    min_shapes: int = 1
    max_shapes: int = 3
    radius_range: tuple[float, float] = (0.14, 0.22)
    amplitude: float = 0.2
    max_cycles: float = 1.0
    walk_step: float = 0.01
    walk_bound: float = 0.05
    max_spin: float = 0.08

    def __post_init__(self) -> None:
        """Validate that every trajectory stays on the canvas."""
        if self.frame_size < 4:
            raise InvalidArgumentError(f"frame_size must be >= 4, got {self.frame_size}")
        if self.clip_length < 1:
            raise InvalidArgumentError(f"clip_length must be >= 1, got {self.clip_length}")
        if not 1 <= self.min_shapes <= self.max_shapes <= len(SHAPE_KINDS):
            raise InvalidArgumentError(
                f"Shape counts must satisfy 1 <= {self.min_shapes} <= {self.max_shapes} <= 3"
            )
        low, high = self.radius_range
        if not 0 < low <= high:
            raise InvalidArgumentError(f"Invalid radius range {self.radius_range}")
        if min(self.amplitude, self.walk_step, self.walk_bound, self.max_spin, self.max_cycles) < 0:
            raise InvalidArgumentError("Motion parameters must be nonnegative")
        if self.extent >= 1.0:
            raise InvalidArgumentError(
                f"Shapes can reach {self.extent:.3f} from their base, which leaves the canvas"
            )

    @property
    def extent(self) -> float:
        """Return the farthest a shape's outline can get from its base position."""
        return self.amplitude + self.walk_bound + self.radius_range[1] * math.sqrt(2)

    @property
    def is_static(self) -> bool:
        return self.amplitude == 0 and self.walk_step == 0 and self.max_spin == 0


@dataclass(frozen=True)
class SpriteIdentity:
    """Appearance shared by every clip of one identity."""

    kinds: tuple[str, ...]
    colors: np.ndarray
    radii: np.ndarray
    texture: np.ndarray

    @classmethod
    def from_seed(cls, seed: int, config: SpriteSceneConfig) -> SpriteIdentity:
        rng = np.random.default_rng(seed)
        count = int(rng.integers(config.min_shapes, config.max_shapes + 1))
        kinds = tuple(str(k) for k in rng.choice(SHAPE_KINDS, size=count, replace=False))
        colors = rng.uniform(0.55, 1.0, size=(count, 3)) * rng.choice([0.2, 1.0], size=(count, 3))
        radii = rng.uniform(*config.radius_range, size=count)
        # per channel and component: base level, x frequency, y frequency, phase
        texture = np.concatenate(
            [
                rng.uniform(0.25, 0.45, size=(3, 1)),
                rng.uniform(0.5, 2.0, size=(3, TEXTURE_COMPONENTS)),
                rng.uniform(0.5, 2.0, size=(3, TEXTURE_COMPONENTS)),
                rng.uniform(0, 2 * np.pi, size=(3, TEXTURE_COMPONENTS)),
            ],
            axis=1,
        )
        return cls(kinds=kinds, colors=colors, radii=radii, texture=texture)

    def background(self, size: int) -> np.ndarray:
        """Render the static background as (H, W, 3)."""
        coords = np.linspace(-1.0, 1.0, size)
        grid_x, grid_y = np.meshgrid(coords, coords, indexing="xy")
        channels = []
        for row in self.texture:
            base = row[0]
            fx = row[1 : 1 + TEXTURE_COMPONENTS]
            fy = row[1 + TEXTURE_COMPONENTS : 1 + 2 * TEXTURE_COMPONENTS]
            phase = row[1 + 2 * TEXTURE_COMPONENTS :]
            waves = np.sin(
                np.pi * (fx * grid_x[..., None] + fy * grid_y[..., None]) + phase
            ).sum(-1)
            channels.append(base + TEXTURE_AMPLITUDE * waves)
        return np.clip(np.stack(channels, -1), 0.0, 1.0)


@dataclass
class SpriteScene:
    """A rendered clip with its ground truth.

    Attributes:
        identity: Appearance of the clip.
        config: Generation settings.
        centers: Shape centers per frame, (T, S, 2).
        angles: Shape rotations per frame, (T, S).
        frames: Rendered frames (T, 3, H, W) in [0, 1].
        keypoints: Ground-truth keypoints (T, K, 2): each shape's center then its vertices.
    """

    identity: SpriteIdentity
    config: SpriteSceneConfig
    centers: np.ndarray
    angles: np.ndarray
    frames: torch.Tensor
    keypoints: torch.Tensor

    def flow(self, source: int, target: int) -> torch.Tensor:
        """Ground-truth field that warps frame ``source`` into frame ``target``.

        Returns:
            Field (H, W, 2) in normalized units; sampling frame ``source`` at
            grid + field reproduces frame ``target`` up to disocclusions.
        """
        size = self.config.frame_size
        coords = np.linspace(-1.0, 1.0, size)
        grid = np.stack(np.meshgrid(coords, coords, indexing="xy"), -1)
        field = np.zeros((size, size, 2))
        for index in range(len(self.identity.kinds)):
            alpha = _shape_alpha(self, target, index, grid)
            center_s = self.centers[source, index]
            center_t = self.centers[target, index]
            turn = _rotation(np.asarray(self.angles[source, index] - self.angles[target, index]))
            offset = (center_s - center_t) + (grid - center_t) @ (turn - np.eye(2)).T
            field = field * (1 - alpha[..., None]) + offset * alpha[..., None]
        return torch.from_numpy(field).to(torch.float32)


def _shape_alpha(scene: SpriteScene, frame: int, index: int, grid: np.ndarray) -> np.ndarray:
    identity = scene.identity
    radius = identity.radii[index]
    inverse = _rotation(np.asarray(-scene.angles[frame, index]))
    local = (grid - scene.centers[frame, index]) @ inverse.T / radius
    distance = _signed_distance(identity.kinds[index], local)
    pixels = distance * radius * (scene.config.frame_size - 1) / 2
    return np.clip(0.5 - pixels, 0.0, 1.0)


def _trajectories(
    rng: np.random.Generator, config: SpriteSceneConfig, count: int
) -> tuple[np.ndarray, np.ndarray]:
    steps = np.arange(config.clip_length)
    reach = 1.0 - config.extent
    base = rng.uniform(-reach, reach, size=(count, 2))
    cycles = rng.uniform(0, config.max_cycles, size=(count, 2))
    phase = rng.uniform(0, 2 * np.pi, size=(count, 2))
    wave = config.amplitude * np.sin(
        2 * np.pi * cycles[None] * steps[:, None, None] / config.clip_length + phase[None]
    )
    walk = np.zeros((config.clip_length, count, 2))
    for t in range(1, config.clip_length):
        step = rng.normal(0, config.walk_step, size=(count, 2)) if config.walk_step else 0.0
        walk[t] = np.clip(walk[t - 1] + step, -config.walk_bound, config.walk_bound)
    centers = base[None] + wave + walk
    spin = rng.uniform(-config.max_spin, config.max_spin, size=count)
    start = rng.uniform(0, 2 * np.pi, size=count)
    angles = start[None] + spin[None] * steps[:, None]
    return centers, angles


def generate_scene(
    seed: int,
    config: SpriteSceneConfig | None = None,
    identity_seed: int | None = None,
) -> SpriteScene:
    """Render one sprite clip.

    Args:
        seed: Seed of the trajectories (and of the identity when no identity seed is given).
        config: Generation settings.
        identity_seed: Seed of the appearance, shared by clips of one identity.

    Returns:
        The scene; identical seeds give bit-identical scenes.
    """
    config = config or SpriteSceneConfig()
    identity = SpriteIdentity.from_seed(seed if identity_seed is None else identity_seed, config)
    rng = np.random.default_rng([seed, 1])
    centers, angles = _trajectories(rng, config, len(identity.kinds))

    size = config.frame_size
    coords = np.linspace(-1.0, 1.0, size)
    grid = np.stack(np.meshgrid(coords, coords, indexing="xy"), -1)
    background = identity.background(size)

    scene = SpriteScene(
        identity=identity,
        config=config,
        centers=centers,
        angles=angles,
        frames=torch.empty(0),
        keypoints=torch.empty(0),
    )
    frames = []
    keypoints = []
    for t in range(config.clip_length):
        image = background.copy()
        points = []
        for index, kind in enumerate(identity.kinds):
            alpha = _shape_alpha(scene, t, index, grid)[..., None]
            image = image * (1 - alpha) + identity.colors[index] * alpha
            rotation = _rotation(np.asarray(angles[t, index]))
            vertices = centers[t, index] + identity.radii[index] * _local_vertices(kind) @ rotation.T
            points.append(centers[t, index][None])
            points.append(vertices)
        frames.append(image)
        keypoints.append(np.concatenate(points, axis=0))
    scene.frames = torch.from_numpy(np.stack(frames)).permute(0, 3, 1, 2).to(torch.float32)
    scene.keypoints = torch.from_numpy(np.stack(keypoints)).to(torch.float32)
    return scene


@dataclass
class VideoClip:
    """One clip of a dataset.

    Attributes:
        identity: Identity label, e.g. "id_003".
        name: Clip label within the identity, e.g. "clip_01".
        split: "train" or "test".
        frames: Frames (T, 3, H, W).
        keypoints: Ground-truth keypoints (T, K, 2) when known.
    """

    identity: str
    name: str
    split: str
    frames: torch.Tensor
    keypoints: torch.Tensor | None = None

    def __len__(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class ClipDataset(Dataset[VideoClip]):
    """Clips grouped by identity with a disjoint train/test split."""

    clips: list[VideoClip] = field(default_factory=list)
    frame_size: int = DEFAULT_FRAME_SIZE
    clip_length: int = DEFAULT_CLIP_LENGTH
    seed: int = 0

    def __len__(self) -> int:
        return len(self.clips)

    def __getitem__(self, index: int) -> VideoClip:
        return self.clips[index]

    def __iter__(self) -> Iterator[VideoClip]:
        return iter(self.clips)

    def split(self, name: str) -> list[VideoClip]:
        """Return the clips of one split in dataset order."""
        return [clip for clip in self.clips if clip.split == name]

    def identities(self, split: str | None = None) -> set[str]:
        return {clip.identity for clip in self.clips if split is None or clip.split == split}


def build_dataset(
    seed: int = 0,
    config: SpriteSceneConfig | None = None,
    *,
    train_identities: int = DEFAULT_TRAIN_IDENTITIES,
    test_identities: int = DEFAULT_TEST_IDENTITIES,
    clips_per_identity: int = DEFAULT_CLIPS_PER_IDENTITY,
) -> ClipDataset:
    """Generate a sprite dataset whose train and test identities are disjoint."""
    config = config or SpriteSceneConfig()
    if train_identities < 1 or test_identities < 0 or clips_per_identity < 1:
        raise InvalidArgumentError("Identity and clip counts must be positive")
    seeds = np.random.SeedSequence(seed).generate_state(
        (train_identities + test_identities) * (clips_per_identity + 1)
    )
    dataset = ClipDataset(frame_size=config.frame_size, clip_length=config.clip_length, seed=seed)
    cursor = 0
    for number in range(train_identities + test_identities):
        split = SPLIT_TRAIN if number < train_identities else SPLIT_TEST
        identity_seed = int(seeds[cursor])
        cursor += 1
        for clip_number in range(clips_per_identity):
            scene = generate_scene(int(seeds[cursor]), config, identity_seed=identity_seed)
            cursor += 1
            dataset.clips.append(
                VideoClip(
                    identity=f"id_{number:03d}",
                    name=f"clip_{clip_number:02d}",
                    split=split,
                    frames=scene.frames,
                    keypoints=scene.keypoints,
                )
            )
    _LOGGER.info(
        "Built sprite dataset: %d train and %d test identities, %d clips",
        train_identities,
        test_identities,
        len(dataset),
    )
    return dataset


def save_dataset(dataset: ClipDataset, root: Path) -> Path:
    """Write ``<root>/<split>/<identity>/<clip>/frame_%05d.png`` plus a manifest."""
    splits: dict[str, dict[str, list[str]]] = {}
    for clip in dataset.clips:
        directory = root / clip.split / clip.identity / clip.name
        save_frames(clip.frames, directory)
        if clip.keypoints is not None:
            (directory / KEYPOINTS_NAME).write_text(
                json.dumps(clip.keypoints.tolist()), encoding="utf-8"
            )
        splits.setdefault(clip.split, {}).setdefault(clip.identity, []).append(clip.name)
    manifest = {
        "seed": dataset.seed,
        "frame_size": dataset.frame_size,
        "clip_length": dataset.clip_length,
        "splits": splits,
    }
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    _LOGGER.info("Saved %d clips to %s", len(dataset), root)
    return path


def load_dataset(root: Path) -> ClipDataset:
    """Read a dataset written by :func:`save_dataset`."""
    path = root / MANIFEST_NAME
    try:
        manifest: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise InvalidArgumentError(f"Cannot read dataset manifest {path}: {err}") from err
    try:
        dataset = ClipDataset(
            frame_size=int(manifest["frame_size"]),
            clip_length=int(manifest["clip_length"]),
            seed=int(manifest["seed"]),
        )
        listing = [
            (split, str(identity), [str(name) for name in names])
            for split in (SPLIT_TRAIN, SPLIT_TEST)
            for identity, names in sorted(manifest["splits"].get(split, {}).items())
        ]
    except (KeyError, TypeError, ValueError, AttributeError) as err:
        raise InvalidArgumentError(f"Malformed dataset manifest {path}: {err!r}") from err
    for split, identity, names in listing:
        for name in names:
            directory = root / split / identity / name
            keypoints_path = directory / KEYPOINTS_NAME
            keypoints = None
            if keypoints_path.exists():
                keypoints = torch.tensor(
                    json.loads(keypoints_path.read_text(encoding="utf-8")), dtype=torch.float32
                )
            dataset.clips.append(
                VideoClip(
                    identity=identity,
                    name=name,
                    split=split,
                    frames=load_frames(directory),
                    keypoints=keypoints,
                )
            )
    return dataset


def sample_training_item(
    dataset: ClipDataset,
    rng: np.random.Generator,
    num_refs: int,
    *,
    batch_size: int = 1,
    split: str = SPLIT_TRAIN,
) -> TrainingItem:
    """Draw source, reference and driving frames from single clips.

    Every batch element comes from one randomly chosen clip and uses
    num_refs + 2 distinct frame indices: source first, driving last.

    Raises:
        InvalidArgumentError: If the split is empty or a clip is too short.
    """
    if num_refs < 0:
        raise InvalidArgumentError(f"num_refs must be >= 0, got {num_refs}")
    clips = dataset.split(split)
    if not clips:
        raise InvalidArgumentError(f"Split {split!r} has no clips")
    sources, drivings = [], []
    references: list[list[torch.Tensor]] = [[] for _ in range(num_refs)]
    all_indices = []
    for _ in range(batch_size):
        clip = clips[int(rng.integers(len(clips)))]
        if len(clip) < num_refs + 2:
            raise InvalidArgumentError(
                f"Clip {clip.identity}/{clip.name} has {len(clip)} frames, "
                f"{num_refs + 2} are needed"
            )
        indices = [int(i) for i in rng.choice(len(clip), size=num_refs + 2, replace=False)]
        sources.append(clip.frames[indices[0]])
        for slot, index in enumerate(indices[1:-1]):
            references[slot].append(clip.frames[index])
        drivings.append(clip.frames[indices[-1]])
        all_indices.append(indices)
    return TrainingItem(
        source=torch.stack(sources),
        references=[torch.stack(frames) for frames in references],
        driving=torch.stack(drivings),
        indices=all_indices,
    )


def sample_animation_pairs(
    dataset: ClipDataset,
    rng: np.random.Generator,
    count: int = DEFAULT_ANIMATION_PAIRS,
    split: str = SPLIT_TEST,
) -> list[tuple[VideoClip, VideoClip]]:
    """Draw (source clip, driving clip) pairs of different identities."""
    clips = dataset.split(split)
    if len({clip.identity for clip in clips}) < 2:
        raise InvalidArgumentError(f"Split {split!r} needs at least two identities")
    pairs = []
    while len(pairs) < count:
        first, second = (int(i) for i in rng.choice(len(clips), size=2, replace=False))
        if clips[first].identity != clips[second].identity:
            pairs.append((clips[first], clips[second]))
    return pairs
