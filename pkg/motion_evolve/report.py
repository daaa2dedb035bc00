"""Metric reports and ablation tables with JSON serialization."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .const import HIGHER_IS_BETTER, LOWER_IS_BETTER, METRIC_DIRECTIONS
from .exceptions import InvalidArgumentError

_LOGGER = logging.getLogger(__name__)


@dataclass
class MetricRecord:
    """One metric value.

    Attributes:
        name: Metric name, e.g. "ssim".
        direction: "down" when lower is better, "up" when higher is better.
        value: Aggregate value.
        frame_count: Number of frames (or pairs) the value aggregates.
        series: Per-frame values when the metric is computed per frame.
    """

    name: str
    direction: str
    value: float
    frame_count: int
    series: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        """Validate the record."""
        if not math.isfinite(self.value):
            raise InvalidArgumentError(f"Metric {self.name} has non-finite value {self.value}")
        expected = METRIC_DIRECTIONS.get(self.name)
        if expected is not None and expected != self.direction:
            raise InvalidArgumentError(
                f"Metric {self.name} must have direction {expected!r}, got {self.direction!r}"
            )

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricRecord:
        """Create a record from its serialized form."""
        return cls(
            name=str(data["name"]),
            direction=str(data["direction"]),
            value=float(data["value"]),
            frame_count=int(data["frame_count"]),
            series=[float(v) for v in data.get("series", [])],
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "direction": self.direction,
            "value": self.value,
            "frame_count": self.frame_count,
            "series": list(self.series),
        }


@dataclass
class MetricReport:
    """All metrics of one evaluation run.

    Attributes:
        task: "reconstruction" or "animation".
        records: Metric records keyed by name, in insertion order.
        identifiers: Dataset, clip, ablation and reference-count labels.
        metadata: Notes such as which embedder or keypoint oracle was used.
    """

    task: str
    records: dict[str, MetricRecord] = field(default_factory=dict)
    identifiers: dict[str, str] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def add(
        self,
        name: str,
        value: float,
        frame_count: int,
        series: list[float] | None = None,
    ) -> MetricRecord:
        """Add a record using the registered direction of the metric."""
        try:
            direction = METRIC_DIRECTIONS[name]
        except KeyError as err:
            raise InvalidArgumentError(f"Unknown metric {name!r}") from err
        record = MetricRecord(
            name=name,
            direction=direction,
            value=float(value),
            frame_count=frame_count,
            series=list(series or []),
        )
        self.records[name] = record
        return record

    def value(self, name: str) -> float:
        """Return the aggregate value of a metric."""
        return self.records[name].value

    def __contains__(self, name: object) -> bool:
        return name in self.records

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "identifiers": dict(self.identifiers),
            "metadata": dict(self.metadata),
            "records": [record.to_dict() for record in self.records.values()],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricReport:
        """Create a report from its serialized form."""
        records = [MetricRecord.from_dict(item) for item in data.get("records", [])]
        return cls(
            task=str(data["task"]),
            records={record.name: record for record in records},
            identifiers={str(k): str(v) for k, v in data.get("identifiers", {}).items()},
            metadata={str(k): str(v) for k, v in data.get("metadata", {}).items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> MetricReport:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise InvalidArgumentError(f"Invalid report document: {err}") from err
        return cls.from_dict(data)

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        _LOGGER.info("Wrote %s report to %s", self.task, path)


@dataclass
class AblationTable:
    """Comparable reports, one row per variant, in execution order.

    No ordering between rows is implied.
    """

    rows: dict[str, MetricReport] = field(default_factory=dict)

    def add_row(self, label: str, report: MetricReport) -> None:
        if label in self.rows:
            raise InvalidArgumentError(f"Duplicate table row {label!r}")
        self.rows[label] = report

    @property
    def columns(self) -> list[str]:
        """Return the metric names present in every row."""
        names: list[str] | None = None
        for report in self.rows.values():
            present = list(report.records)
            names = present if names is None else [n for n in names if n in present]
        return names or []

    def to_json(self) -> str:
        data = {label: report.to_dict() for label, report in self.rows.items()}
        return json.dumps({"rows": data, "order": list(self.rows)}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> AblationTable:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise InvalidArgumentError(f"Invalid table document: {err}") from err
        table = cls()
        for label in data["order"]:
            table.add_row(label, MetricReport.from_dict(data["rows"][label]))
        return table

    def format_text(self) -> str:
        """Render the table as aligned plain text with direction arrows."""
        columns = self.columns
        arrows = {LOWER_IS_BETTER: "↓", HIGHER_IS_BETTER: "↑"}
        header = ["variant"] + [f"{c} {arrows[METRIC_DIRECTIONS[c]]}" for c in columns]
        lines = ["\t".join(header)]
        for label, report in self.rows.items():
            cells = [label] + [f"{report.value(c):.4f}" for c in columns]
            lines.append("\t".join(cells))
        return "\n".join(lines)

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")
        _LOGGER.info("Wrote table with %d rows to %s", len(self.rows), path)
