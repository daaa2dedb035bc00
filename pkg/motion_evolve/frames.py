"""Frame directories: zero-padded 8-bit RGB PNG files."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .const import FRAME_PATTERN
from .exceptions import FrameIOError, InvalidArgumentError

_LOGGER = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def frame_files(directory: Path) -> list[Path]:
    """Return the image files of a directory in lexicographic order."""
    if not directory.is_dir():
        raise FrameIOError(f"Frame directory {directory} does not exist", directory)
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_frames(directory: Path) -> torch.Tensor:
    """Load a clip.

    Args:
        directory: Directory of lexicographically ordered RGB images.

    Returns:
        Float tensor (T, 3, H, W) with values in [0, 1].

    Raises:
        FrameIOError: If the directory is empty, a file is unreadable or
            frame sizes differ; the error names the offending file.
    """
    files = frame_files(directory)
    if not files:
        raise FrameIOError(f"No frames found in {directory}", directory)
    frames = []
    expected: tuple[int, ...] | None = None
    for path in files:
        try:
            with Image.open(path) as image:
                array = np.asarray(image.convert("RGB"), dtype=np.uint8)
        except (OSError, UnidentifiedImageError) as err:
            raise FrameIOError(f"Cannot read frame {path}: {err}", path) from err
        if expected is None:
            expected = array.shape
        elif array.shape != expected:
            raise FrameIOError(
                f"Frame {path} is {array.shape[1]}x{array.shape[0]}, "
                f"expected {expected[1]}x{expected[0]}",
                path,
            )
        frames.append(array)
    stacked = torch.from_numpy(np.stack(frames)).permute(0, 3, 1, 2)
    _LOGGER.debug("Loaded %d frames from %s", len(frames), directory)
    return stacked.to(torch.float32) / 255.0


def save_frames(clip: torch.Tensor, directory: Path) -> list[Path]:
    """Write a clip (T, 3, H, W) in [0, 1] as 8-bit PNG files.

    Existing frame files in the directory are replaced.

    Returns:
        The written paths in frame order.
    """
    if clip.dim() != 4 or clip.shape[1] != 3:
        raise InvalidArgumentError(f"Expected a (T, 3, H, W) clip, got {tuple(clip.shape)}")
    directory.mkdir(parents=True, exist_ok=True)
    for stale in directory.glob("frame_*.png"):
        stale.unlink()
    quantized = (clip.detach().clamp(0, 1) * 255).round().to(torch.uint8)
    arrays = quantized.permute(0, 2, 3, 1).cpu().numpy()
    paths = []
    for index, array in enumerate(arrays):
        path = directory / FRAME_PATTERN.format(index=index)
        try:
            Image.fromarray(array).save(path)
        except OSError as err:
            raise FrameIOError(f"Cannot write frame {path}: {err}", path) from err
        paths.append(path)
    _LOGGER.debug("Saved %d frames to %s", len(paths), directory)
    return paths
