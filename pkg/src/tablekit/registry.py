"""Model registry: named base parameter sets plus finetuned descendants.

Entries persist one file per version:

    {"version_id": ..., "parent_id": ..., "weights": [...], "bias": ...,
     "detect_threshold": ..., "col_gap_min": ..., "row_gap_min": ...,
     "valley_frac": ..., "training_pages": [...], "metrics": {...}}
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConflictError, NotFoundError, SchemaError
from .extract import ModelParams

DEFAULT_BASE = "base-balanced"

# A few starting points tuned for different document textures. Detection
# weights follow the featurize_region order; gap regularity carries the most
# weight so an isolated text line (no inter-row gaps) stays below threshold.
BASE_PARAM_SETS = {
    "base-balanced": ModelParams(
        weights=(1.5, 1.0, 1.0, 0.5, 0.75, 2.5, 0.25),
        bias=-4.0,
        detect_threshold=0.55,
        col_gap_min=8.0,
        row_gap_min=8.0,
        valley_frac=0.2,
        version_id="base-balanced",
    ),
    "base-ruled": ModelParams(
        weights=(1.0, 0.75, 2.5, 0.5, 0.5, 1.5, 0.25),
        bias=-3.5,
        detect_threshold=0.45,
        col_gap_min=6.0,
        row_gap_min=6.0,
        valley_frac=0.1,
        version_id="base-ruled",
    ),
    "base-dense": ModelParams(
        weights=(1.25, 1.25, 0.5, 0.75, 1.5, 2.0, 0.25),
        bias=-5.0,
        detect_threshold=0.55,
        col_gap_min=4.0,
        row_gap_min=4.0,
        valley_frac=0.1,
        version_id="base-dense",
    ),
}


@dataclass
class ModelRegistryEntry:
    version_id: str
    params: ModelParams
    parent_id: Optional[str] = None
    created_at: float = field(default_factory=time.time)
    training_pages: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def entry_to_dict(entry: ModelRegistryEntry) -> dict:
    p = entry.params
    return {
        "version_id": entry.version_id,
        "parent_id": entry.parent_id,
        "weights": list(p.weights),
        "bias": p.bias,
        "detect_threshold": p.detect_threshold,
        "col_gap_min": p.col_gap_min,
        "row_gap_min": p.row_gap_min,
        "valley_frac": p.valley_frac,
        "training_pages": list(entry.training_pages),
        "metrics": dict(entry.metrics),
    }


def entry_from_dict(doc: dict) -> ModelRegistryEntry:
    try:
        params = ModelParams(
            weights=tuple(doc["weights"]),
            bias=doc["bias"],
            detect_threshold=doc["detect_threshold"],
            col_gap_min=doc["col_gap_min"],
            row_gap_min=doc["row_gap_min"],
            valley_frac=doc["valley_frac"],
            version_id=doc["version_id"],
            parent_id=doc.get("parent_id"),
        )
    except KeyError as exc:
        raise SchemaError(f"model entry missing field {exc}") from None
    return ModelRegistryEntry(
        version_id=doc["version_id"],
        params=params,
        parent_id=doc.get("parent_id"),
        training_pages=list(doc.get("training_pages", [])),
        metrics=dict(doc.get("metrics", {})),
    )


class ModelRegistry:
    """Append-only registry; base models are always present.

    When given a directory, each registered entry is written as
    ``<version_id>.json`` via write-then-atomic-rename.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        self._entries: dict[str, ModelRegistryEntry] = {}
        self._reserved: set[str] = set()
        self._lock = threading.Lock()
        for name, params in BASE_PARAM_SETS.items():
            self._entries[name] = ModelRegistryEntry(version_id=name, params=params)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.root.glob("*.json")):
                entry = entry_from_dict(json.loads(path.read_text(encoding="utf-8")))
                self._entries[entry.version_id] = entry

    def __contains__(self, version_id: str) -> bool:
        return version_id in self._entries

    def get(self, version_id: str) -> ModelRegistryEntry:
        if version_id not in self._entries:
            raise NotFoundError(f"unknown model version {version_id}")
        return self._entries[version_id]

    def params(self, version_id: str) -> ModelParams:
        return self.get(version_id).params

    def list_entries(self) -> list[ModelRegistryEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def next_version_id(self, prefix: str = "ft") -> str:
        """Reserve the next free version id (safe across concurrent finetunes)."""
        with self._lock:
            k = 1
            while f"{prefix}{k:03d}" in self._entries or f"{prefix}{k:03d}" in self._reserved:
                k += 1
            version_id = f"{prefix}{k:03d}"
            self._reserved.add(version_id)
            return version_id

    def register(self, entry: ModelRegistryEntry) -> None:
        with self._lock:
            if entry.version_id in self._entries:
                raise ConflictError(f"model version {entry.version_id} already exists")
            if entry.parent_id is not None and entry.parent_id not in self._entries:
                raise NotFoundError(f"unknown parent version {entry.parent_id}")
            # walk the parent chain to guarantee acyclicity before inserting
            seen = {entry.version_id}
            cursor = entry.parent_id
            while cursor is not None:
                if cursor in seen:
                    raise ConflictError("parent chain would form a cycle")
                seen.add(cursor)
                cursor = self._entries[cursor].parent_id
            self._entries[entry.version_id] = entry
            self._reserved.discard(entry.version_id)
        if self.root is not None:
            path = self.root / f"{entry.version_id}.json"
            tmp = self.root / f".{entry.version_id}.json.tmp"
            tmp.write_text(
                json.dumps(entry_to_dict(entry), ensure_ascii=False, separators=(",", ":")),
                encoding="utf-8",
            )
            os.replace(tmp, path)
