"""Append-only label store backing the annotation service and the CLI queue.

The labels CSV is the source of truth; the in-memory index is a fold over the
file rows (last write wins) and is rebuilt identically on startup. Mutations
funnel through one lock; a post is acknowledged only after the row is flushed
to disk. Readers see an immutable snapshot dict swapped after each write.
"""

from __future__ import annotations

import os
import threading
import time
from typing import Callable

from .pipeline import LABELS_HEADER, LabelRow, read_labels_csv

VALID_LABELS = ("damaged", "undamaged", "skip")


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


class LabelStore:
    def __init__(self, path, clock: Callable[[], int] | None = None):
        self.path = str(path)
        self._clock = clock or _now_ms
        self._lock = threading.Lock()
        if os.path.exists(self.path):
            rows = read_labels_csv(self.path)
        else:
            with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(LABELS_HEADER + "\n")
            rows = []
        index: dict[str, LabelRow] = {}
        for row in rows:
            index[row.crop_id] = row
        self._index = index  # treated as immutable; replaced on write

    def snapshot(self) -> dict[str, LabelRow]:
        return self._index

    def latest(self, crop_id: str) -> LabelRow | None:
        return self._index.get(crop_id)

    def append(self, crop_id: str, label: str, annotator: str) -> LabelRow:
        if label not in VALID_LABELS:
            raise ValueError(f"label must be one of {VALID_LABELS}, got {label!r}")
        if "," in crop_id or "," in annotator:
            raise ValueError("fields must not contain commas")
        row = LabelRow(crop_id, label, annotator, self._clock())
        with self._lock:
            with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(f"{row.crop_id},{row.label},{row.annotator},{row.labeled_at_ms}\n")
                fh.flush()
                os.fsync(fh.fileno())
            new_index = dict(self._index)
            new_index[crop_id] = row
            self._index = new_index  # atomic reference swap
        return row
