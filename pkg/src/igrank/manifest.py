"""Sample manifests: one JSON object per line describing a structure, its
feature inputs, labels/targets, cluster membership and split tag."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

from .errors import ConfigError, DataError

SPLITS = ("train", "validation", "test")


@dataclass
class SampleRecord:
    id: str
    structure_path: str
    role_map: dict[str, str]
    embedding_paths: dict[str, str] | None = None
    cdr_annotation_path: str | None = None
    label: int | None = None
    dockq: float | None = None
    cluster_id: str = ""
    split: str = ""

    def __post_init__(self):
        if self.label is not None and self.label not in (0, 1):
            raise DataError(f"record {self.id!r}: label must be 0 or 1, got {self.label!r}")
        if self.dockq is not None and not 0.0 <= self.dockq <= 1.0:
            raise DataError(f"record {self.id!r}: dockq {self.dockq} outside [0, 1]")
        if self.split and self.split not in SPLITS:
            raise DataError(f"record {self.id!r}: split must be one of {SPLITS}, got {self.split!r}")

    def require_label(self) -> int:
        if self.label is None:
            raise ConfigError(f"record {self.id!r} has no binary label (required for classification)")
        return self.label

    def require_dockq(self) -> float:
        if self.dockq is None:
            raise ConfigError(f"record {self.id!r} has no pose-quality target (required for regression)")
        return self.dockq


def read_manifest(path: str | Path) -> list[SampleRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            try:
                records.append(SampleRecord(**payload))
            except TypeError as exc:
                raise DataError(f"{path}:{lineno}: bad record fields: {exc}") from None
    return records


def write_manifest(path: str | Path, records: list[SampleRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record), sort_keys=True))
            fh.write("\n")
