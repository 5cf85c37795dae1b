"""Page-layout ingestion: parse, validate, and normalize input files.

One page per file, UTF-8 JSON:

    {"page_id": str, "width": num, "height": num,
     "tokens":  [{"id": str, "bbox": [x0, y0, x1, y1], "text": str}, ...],
     "rulings": [{"orientation": "h"|"v", "bbox": [x0, y0, x1, y1]}, ...],
     "raster_ref": str | null}

``rulings`` and ``raster_ref`` may be omitted. Unknown fields are rejected,
never ignored: the file format is a bit-exact contract and silent tolerance
would let typos pass as data.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import SchemaError
from .geometry import BBox, validate_bbox

log = logging.getLogger(__name__)

HORIZONTAL = "h"
VERTICAL = "v"

_PAGE_FIELDS = {"page_id", "width", "height", "tokens", "rulings", "raster_ref"}
_TOKEN_FIELDS = {"id", "bbox", "text"}
_RULING_FIELDS = {"orientation", "bbox"}


@dataclass(frozen=True)
class Token:
    id: str
    bbox: BBox
    text: str


@dataclass(frozen=True)
class RulingLine:
    orientation: str  # "h" | "v"
    bbox: BBox


@dataclass(frozen=True)
class PageLayout:
    page_id: str
    width: float
    height: float
    tokens: tuple[Token, ...] = ()
    rulings: tuple[RulingLine, ...] = ()
    raster_ref: Optional[str] = None


def _require_number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(f"field '{name}' must be a finite number")
    return value


def _parse_bbox(raw, what: str) -> BBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise SchemaError(f"bbox of {what} must be a 4-element array")
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(f"non-finite coordinate for {what}")
    box = BBox(raw[0], raw[1], raw[2], raw[3])
    validate_bbox(box, what)
    return box


def parse_page_file(data: bytes | str) -> PageLayout:
    """Parse one page-layout file into a validated PageLayout.

    Token order is preserved exactly as given; use normalize_layout for the
    canonical reading order.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaError(f"file is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object")

    unknown = set(doc) - _PAGE_FIELDS
    if unknown:
        raise SchemaError(f"unknown field '{sorted(unknown)[0]}'")
    for name in ("page_id", "width", "height", "tokens"):
        if name not in doc:
            raise SchemaError(f"missing field '{name}'")

    page_id = doc["page_id"]
    if not isinstance(page_id, str) or not page_id:
        raise SchemaError("field 'page_id' must be a non-empty string")
    width = _require_number(doc["width"], "width")
    height = _require_number(doc["height"], "height")
    if width <= 0 or height <= 0:
        raise SchemaError("page width and height must be > 0")

    raster_ref = doc.get("raster_ref")
    if raster_ref is not None and not isinstance(raster_ref, str):
        raise SchemaError("field 'raster_ref' must be a string or null")

    raw_tokens = doc["tokens"]
    if not isinstance(raw_tokens, list):
        raise SchemaError("field 'tokens' must be an array")
    page_box = BBox(0, 0, width, height)
    tokens: list[Token] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(raw_tokens):
        if not isinstance(raw, dict):
            raise SchemaError(f"token {i} must be an object")
        unknown = set(raw) - _TOKEN_FIELDS
        if unknown:
            raise SchemaError(f"unknown field '{sorted(unknown)[0]}' on token {i}")
        for name in _TOKEN_FIELDS:
            if name not in raw:
                raise SchemaError(f"missing field '{name}' on token {i}")
        tid = raw["id"]
        if not isinstance(tid, str) or not tid:
            raise SchemaError(f"token {i} id must be a non-empty string")
        if tid in seen_ids:
            raise SchemaError(f"duplicate token id {tid}")
        seen_ids.add(tid)
        box = _parse_bbox(raw["bbox"], f"token {tid}")
        if not page_box.contains_box(box):
            raise SchemaError(f"token {tid} outside page bounds")
        text = raw["text"]
        if not isinstance(text, str):
            raise SchemaError(f"field 'text' must be a string on token {tid}")
        if not text.strip():
            raise SchemaError(f"empty text for token {tid}")
        tokens.append(Token(id=tid, bbox=box, text=text))

    raw_rulings = doc.get("rulings", [])
    if not isinstance(raw_rulings, list):
        raise SchemaError("field 'rulings' must be an array")
    rulings: list[RulingLine] = []
    for i, raw in enumerate(raw_rulings):
        if not isinstance(raw, dict):
            raise SchemaError(f"ruling {i} must be an object")
        unknown = set(raw) - _RULING_FIELDS
        if unknown:
            raise SchemaError(f"unknown field '{sorted(unknown)[0]}' on ruling {i}")
        for name in _RULING_FIELDS:
            if name not in raw:
                raise SchemaError(f"missing field '{name}' on ruling {i}")
        orientation = raw["orientation"]
        if orientation not in (HORIZONTAL, VERTICAL):
            raise SchemaError(f"ruling {i} orientation must be 'h' or 'v'")
        box = _parse_bbox(raw["bbox"], f"ruling {i}")
        if not page_box.contains_box(box):
            raise SchemaError(f"ruling {i} outside page bounds")
        if orientation == HORIZONTAL and box.height > box.width:
            raise SchemaError(f"ruling {i} is not a thin horizontal line")
        if orientation == VERTICAL and box.width > box.height:
            raise SchemaError(f"ruling {i} is not a thin vertical line")
        rulings.append(RulingLine(orientation=orientation, bbox=box))

    return PageLayout(
        page_id=page_id,
        width=width,
        height=height,
        tokens=tuple(tokens),
        rulings=tuple(rulings),
        raster_ref=raster_ref,
    )


def serialize_page(p: PageLayout) -> str:
    """Canonical file form of a page; parse(serialize(parse(x))) == parse(x)."""
    doc = {
        "page_id": p.page_id,
        "width": p.width,
        "height": p.height,
        "tokens": [
            {"id": t.id, "bbox": t.bbox.as_list(), "text": t.text} for t in p.tokens
        ],
        "rulings": [
            {"orientation": r.orientation, "bbox": r.bbox.as_list()} for r in p.rulings
        ],
        "raster_ref": p.raster_ref,
    }
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


def normalize_layout(p: PageLayout) -> PageLayout:
    """Canonical reading order: tokens sorted by (y0, x0); degenerate tokens dropped.

    Zero-area and whitespace-only tokens destabilize projection profiles, so
    they are removed here (with a logged count) rather than propagated.
    Idempotent and invariant to the input order of tokens.
    """
    kept = [
        t
        for t in p.tokens
        if t.bbox.width > 0 and t.bbox.height > 0 and t.text.strip()
    ]
    dropped = len(p.tokens) - len(kept)
    if dropped:
        log.info("normalize_layout(%s): dropped %d degenerate token(s)", p.page_id, dropped)
    kept.sort(key=lambda t: (t.bbox.y0, t.bbox.x0, t.bbox.x1, t.bbox.y1, t.id))
    return replace(p, tokens=tuple(kept))
