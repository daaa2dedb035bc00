"""Diagnostics support for synthesis passes.

Summaries reduce every intermediate of a synthesis pass to a few numbers
so they can be written next to generated clips and attached to bug reports.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, cast

import torch

if TYPE_CHECKING:
    from .models import SynthesisDiagnostics

_LOGGER = logging.getLogger(__name__)


def summarize_tensor(tensor: torch.Tensor) -> dict[str, Any]:
    """Return shape, min, max, mean and finiteness of a tensor.

    Statistics cover the finite entries only; they are None when there are none.
    """
    values = tensor.detach().to(torch.float64)
    finite = torch.isfinite(values)
    kept = values[finite]
    stats: dict[str, Any] = {
        "shape": list(values.shape),
        "finite": bool(finite.all()),
        "min": None,
        "max": None,
        "mean": None,
    }
    if kept.numel():
        stats["min"] = float(kept.min())
        stats["max"] = float(kept.max())
        stats["mean"] = float(kept.mean())
    return stats


def summarize_diagnostics(diagnostics: SynthesisDiagnostics) -> dict[str, Any]:
    """Summarize every intermediate of a synthesis pass.

    Args:
        diagnostics: The intermediates returned by ``synthesize``.

    Returns:
        A JSON-serializable mapping mirroring the diagnostics layout, with
        one summary per tensor and one entry per view (source first).
    """
    return {
        "driving_keypoints": summarize_tensor(diagnostics["driving_keypoints"]),
        "confidence": summarize_tensor(diagnostics["confidence"]),
        "fused_motion": summarize_tensor(diagnostics["fused_motion"]),
        "fused_appearance": summarize_tensor(diagnostics["fused_appearance"]),
        "views": [
            {
                key: summarize_tensor(cast(torch.Tensor, value))
                for key, value in sorted(view.items())
            }
            for view in diagnostics["views"]
        ],
    }


def is_finite(summary: dict[str, Any]) -> bool:
    """Return True when every summarized tensor was finite."""
    entries = [v for k, v in summary.items() if k != "views"]
    entries.extend(stats for view in summary["views"] for stats in view.values())
    return all(entry["finite"] for entry in entries)


def write_diagnostics(diagnostics: SynthesisDiagnostics, path: Path) -> dict[str, Any]:
    """Summarize diagnostics and write them as JSON."""
    summary = summarize_diagnostics(diagnostics)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    if not is_finite(summary):
        _LOGGER.warning("Synthesis produced non-finite intermediates, see %s", path)
    return summary
