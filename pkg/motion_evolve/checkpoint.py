"""Versioned single-file checkpoints.

Layout, all integers little-endian::

    magic (8 bytes) | version (u32) | manifest length (u64) | manifest | payload

The manifest is UTF-8 JSON with sorted keys. It holds the training config,
the iteration counter, the optimizer hyperparameters and one entry per
stored array (name, shape, dtype, byte offset into the payload, byte
count). The payload is the concatenation of the raw arrays. Serializing
is deterministic, so save, load and save again yields identical bytes.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .config import config_from_dict, config_to_dict
from .const import CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC
from .exceptions import CheckpointError, ConfigError
from .models import TrainConfig

_LOGGER = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sIQ")

WEIGHTS_PREFIX = "weights/"
OPTIMIZER_PREFIX = "optimizer/"


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference.

    Attributes:
        config: The training configuration.
        iteration: Completed optimization steps.
        weights: Network parameters keyed by their module path.
        optimizer_state: Optimizer moments keyed "<parameter>/<slot>".
        optimizer: Optimizer hyperparameters.
        version: Format version tag.
    """

    config: TrainConfig
    iteration: int
    weights: dict[str, torch.Tensor]
    optimizer_state: dict[str, torch.Tensor] = field(default_factory=dict)
    optimizer: dict[str, Any] = field(default_factory=dict)
    version: int = CHECKPOINT_FORMAT_VERSION

    def to_bytes(self) -> bytes:
        """Serialize the checkpoint."""
        arrays = {WEIGHTS_PREFIX + k: v for k, v in self.weights.items()}
        arrays.update({OPTIMIZER_PREFIX + k: v for k, v in self.optimizer_state.items()})
        entries = []
        chunks = []
        offset = 0
        for name, tensor in arrays.items():
            array = tensor.detach().cpu().contiguous().numpy()
            dtype = array.dtype.newbyteorder("<")
            raw = array.astype(dtype, copy=False).tobytes()
            entries.append(
                {
                    "name": name,
                    "shape": list(array.shape),
                    "dtype": array.dtype.name,
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "config": config_to_dict(self.config),
            "iteration": self.iteration,
            "optimizer": self.optimizer,
            "arrays": entries,
        }
        encoded = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
        header = _HEADER.pack(CHECKPOINT_MAGIC, self.version, len(encoded))
        return header + encoded + b"".join(chunks)

    @classmethod
    def from_bytes(cls, blob: bytes, path: Path | None = None) -> Checkpoint:
        """Parse a serialized checkpoint.

        Raises:
            CheckpointError: On bad magic, an unsupported version, a corrupt
                manifest or a truncated payload.
        """
        if len(blob) < _HEADER.size:
            raise CheckpointError("Checkpoint is truncated", path)
        magic, version, length = _HEADER.unpack_from(blob)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError("Not a checkpoint file (bad magic)", path)
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"Unsupported checkpoint version {version}, expected {CHECKPOINT_FORMAT_VERSION}",
                path,
            )
        start = _HEADER.size
        if len(blob) < start + length:
            raise CheckpointError("Checkpoint manifest is truncated", path)
        try:
            manifest = json.loads(blob[start : start + length].decode("utf-8"))
            config = config_from_dict(manifest["config"])
            entries: list[dict[str, Any]] = list(manifest["arrays"])
            iteration = int(manifest["iteration"])
            optimizer = dict(manifest["optimizer"])
        except (
            UnicodeDecodeError,
            json.JSONDecodeError,
            KeyError,
            TypeError,
            ValueError,
            ConfigError,
        ) as err:
            raise CheckpointError(f"Corrupt checkpoint manifest: {err}", path) from err
        payload = memoryview(blob)[start + length :]
        weights: dict[str, torch.Tensor] = {}
        optimizer_state: dict[str, torch.Tensor] = {}
        for entry in entries:
            end = entry["offset"] + entry["nbytes"]
            if end > len(payload):
                raise CheckpointError(f"Array {entry['name']} is truncated", path)
            dtype = np.dtype(entry["dtype"]).newbyteorder("<")
            array = np.frombuffer(payload[entry["offset"] : end], dtype=dtype)
            tensor = torch.from_numpy(array.astype(dtype.newbyteorder("="), copy=True))
            tensor = tensor.reshape(entry["shape"])
            name: str = entry["name"]
            if name.startswith(WEIGHTS_PREFIX):
                weights[name.removeprefix(WEIGHTS_PREFIX)] = tensor
            elif name.startswith(OPTIMIZER_PREFIX):
                optimizer_state[name.removeprefix(OPTIMIZER_PREFIX)] = tensor
            else:
                raise CheckpointError(f"Unknown array {name!r}", path)
        return cls(
            config=config,
            iteration=iteration,
            weights=weights,
            optimizer_state=optimizer_state,
            optimizer=optimizer,
            version=version,
        )


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> Path:
    """Write a checkpoint file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint.to_bytes())
    _LOGGER.info("Saved checkpoint at iteration %d to %s", checkpoint.iteration, path)
    return path


def load_checkpoint(path: Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        CheckpointError: If the file is missing or malformed.
    """
    try:
        blob = path.read_bytes()
    except OSError as err:
        raise CheckpointError(f"Cannot read checkpoint: {err}", path) from err
    checkpoint = Checkpoint.from_bytes(blob, path)
    _LOGGER.debug("Loaded checkpoint at iteration %d from %s", checkpoint.iteration, path)
    return checkpoint
