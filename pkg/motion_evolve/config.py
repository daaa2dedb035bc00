"""Configuration documents for training runs.

A config file is a JSON object mirroring :class:`TrainConfig`. Every key is
optional; missing keys take the package defaults and unknown keys are
rejected. ``ablation`` may be a preset name or an object of the three
component switches.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Mapping
from dataclasses import asdict
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (
    DEFAULT_APPEARANCE_BLOCKS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BLOCK_EXPANSION,
    DEFAULT_DYNAMICS_HIDDEN,
    DEFAULT_FRAME_SIZE,
    DEFAULT_ITERATIONS,
    DEFAULT_KP_BLOCKS,
    DEFAULT_KP_SIGMA,
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
    ENV_SEED,
    GRADIENT_BACKPROP,
    GRADIENT_MODES,
    PRESET_FULL,
    SOLVERS,
)
from .exceptions import ConfigError, InvalidArgumentError
from .models import ABLATION_PRESETS, AblationSpec, OdeConfig, TrainConfig

_LOGGER = logging.getLogger(__name__)

CONF_ODE = "ode"
CONF_ABLATION = "ablation"

_POSITIVE_INT = vol.All(vol.Coerce(int), vol.Range(min=1))
_POSITIVE_FLOAT = vol.All(vol.Coerce(float), vol.Range(min=0, min_included=False))

ODE_SCHEMA = vol.Schema(
    {
        vol.Optional("solver", default=DEFAULT_SOLVER): vol.In(SOLVERS),
        vol.Optional("steps", default=DEFAULT_ODE_STEPS): _POSITIVE_INT,
        vol.Optional("gradient_mode", default=GRADIENT_BACKPROP): vol.In(GRADIENT_MODES),
    }
)

ABLATION_SCHEMA = vol.Any(
    vol.In(sorted(ABLATION_PRESETS)),
    vol.Schema(
        {
            vol.Optional("motion_evolution", default=True): bool,
            vol.Optional("appearance_assist", default=True): bool,
            vol.Optional("multi_view", default=True): bool,
        }
    ),
)

CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional("num_kp", default=DEFAULT_NUM_KP): _POSITIVE_INT,
        vol.Optional("num_refs", default=DEFAULT_NUM_REFS): vol.All(
            vol.Coerce(int), vol.Range(min=0)
        ),
        vol.Optional("lambda_equiv", default=DEFAULT_LAMBDA_EQUIV): _POSITIVE_FLOAT,
        vol.Optional("learning_rate", default=DEFAULT_LEARNING_RATE): _POSITIVE_FLOAT,
        vol.Optional("batch_size", default=DEFAULT_BATCH_SIZE): _POSITIVE_INT,
        vol.Optional("iterations", default=DEFAULT_ITERATIONS): _POSITIVE_INT,
        vol.Optional("seed", default=DEFAULT_SEED): vol.All(vol.Coerce(int), vol.Range(min=0)),
        vol.Optional("frame_size", default=DEFAULT_FRAME_SIZE): _POSITIVE_INT,
        vol.Optional("block_expansion", default=DEFAULT_BLOCK_EXPANSION): _POSITIVE_INT,
        vol.Optional("max_features", default=DEFAULT_MAX_FEATURES): _POSITIVE_INT,
        vol.Optional("kp_blocks", default=DEFAULT_KP_BLOCKS): _POSITIVE_INT,
        vol.Optional("motion_blocks", default=DEFAULT_MOTION_BLOCKS): _POSITIVE_INT,
        vol.Optional("appearance_blocks", default=DEFAULT_APPEARANCE_BLOCKS): _POSITIVE_INT,
        vol.Optional("dynamics_hidden", default=DEFAULT_DYNAMICS_HIDDEN): _POSITIVE_INT,
        vol.Optional("kp_sigma", default=DEFAULT_KP_SIGMA): _POSITIVE_FLOAT,
        vol.Optional("log_every", default=DEFAULT_LOG_EVERY): _POSITIVE_INT,
        vol.Optional(CONF_ODE, default=dict): ODE_SCHEMA,
        vol.Optional(CONF_ABLATION, default=PRESET_FULL): ABLATION_SCHEMA,
    }
)


def config_from_dict(data: Mapping[str, Any]) -> TrainConfig:
    """Validate a config document and build the training configuration.

    Raises:
        ConfigError: If the document fails the schema or a config invariant.
    """
    try:
        validated: dict[str, Any] = CONFIG_SCHEMA(dict(data))
    except vol.Invalid as err:
        raise ConfigError(f"Invalid config: {err}") from err
    ablation = validated.pop(CONF_ABLATION)
    ode = validated.pop(CONF_ODE)
    try:
        return TrainConfig(
            ode=OdeConfig(**ode),
            ablation=(
                AblationSpec.preset(ablation)
                if isinstance(ablation, str)
                else AblationSpec(**ablation)
            ),
            **validated,
        )
    except InvalidArgumentError as err:
        raise ConfigError(f"Invalid config: {err}") from err


def config_to_dict(config: TrainConfig) -> dict[str, Any]:
    """Serialize a training configuration; the result passes the schema."""
    data = asdict(config)
    preset = config.ablation.name
    if preset is not None:
        data[CONF_ABLATION] = preset
    return data


def apply_env_overrides(
    config: TrainConfig, environ: Mapping[str, str] | None = None
) -> TrainConfig:
    """Apply the ``MOTION_EVOLVE_SEED`` override to a validated config."""
    environ = os.environ if environ is None else environ
    raw = environ.get(ENV_SEED)
    if raw is None or raw == "":
        return config
    try:
        seed = int(raw)
    except ValueError as err:
        raise ConfigError(f"{ENV_SEED} must be an integer, got {raw!r}") from err
    _LOGGER.info("Seed overridden by %s: %d", ENV_SEED, seed)
    data = config_to_dict(config)
    data["seed"] = seed
    return config_from_dict(data)


def load_config(path: Path | None = None, environ: Mapping[str, str] | None = None) -> TrainConfig:
    """Read a JSON config file, or the defaults when no path is given.

    Args:
        path: Config file location.
        environ: Environment used for overrides; defaults to ``os.environ``.

    Raises:
        ConfigError: If the file cannot be read or fails validation.
    """
    data: Any = {}
    if path is not None:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"Cannot read config {path}: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object")
    config = config_from_dict(data)
    _LOGGER.debug("Loaded config from %s", path or "defaults")
    return apply_env_overrides(config, environ)
