"""Axis-aligned box primitives shared by every stage.

Coordinates are page points with origin at the top-left corner and y
increasing downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import SchemaError


@dataclass(frozen=True)
class BBox:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_box(self, other: "BBox") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x0, other.x0),
            min(self.y0, other.y0),
            max(self.x1, other.x1),
            max(self.y1, other.y1),
        )

    def intersect(self, other: "BBox") -> Optional["BBox"]:
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x0 < x1 and y0 < y1:
            return BBox(x0, y0, x1, y1)
        return None

    def scaled(self, s: float) -> "BBox":
        return BBox(self.x0 * s, self.y0 * s, self.x1 * s, self.y1 * s)

    def as_list(self) -> list:
        # int coordinates stay int so serialized files round-trip byte-exactly
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values: Sequence) -> "BBox":
        if len(values) != 4:
            raise SchemaError("bbox must have exactly 4 coordinates")
        return cls(values[0], values[1], values[2], values[3])


def validate_bbox(b: BBox, what: str = "box") -> None:
    """Raise SchemaError unless b is finite, non-negative, and non-degenerate."""
    for v in (b.x0, b.y0, b.x1, b.y1):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(f"non-finite coordinate for {what}")
        if v < 0:
            raise SchemaError(f"negative coordinate for {what}")
    if not b.x0 < b.x1:
        raise SchemaError(f"x0 < x1 violated for {what}")
    if not b.y0 < b.y1:
        raise SchemaError(f"y0 < y1 violated for {what}")


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ai = inter.area
    return ai / (a.area + b.area - ai)


def hull(boxes: Iterable[BBox]) -> Optional[BBox]:
    """Smallest box covering all inputs; None for an empty iterable."""
    out: Optional[BBox] = None
    for b in boxes:
        out = b if out is None else out.union(b)
    return out


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of 1-D intervals as a sorted list of disjoint (lo, hi) pairs."""
    items = sorted((lo, hi) for lo, hi in intervals if hi > lo)
    merged: list[tuple[float, float]] = []
    for lo, hi in items:
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return merged


def interval_overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
