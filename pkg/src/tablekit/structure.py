"""Row/column structure: band clustering, grid assembly, HTML and annotation forms.

The central invariant is TILING: every (row, col) position of a grid is
covered by exactly one cell's span rectangle. Everything downstream (the
editor, exports, finetuning targets) assumes it, so this module both
guarantees it on construction and provides the validator used to reject
foreign records that break it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional, Sequence

from .errors import SchemaError, TilingError
from .geometry import BBox, interval_overlap
from .layout import PageLayout, Token

if TYPE_CHECKING:  # pragma: no cover - import only for annotations
    from .extract import CellBox, TableRegion

AXIS_OVERLAP_MIN = 0.5  # fixed for both axes; robust to OCR jitter


@dataclass
class Cell:
    cell_id: str
    row: int
    col: int
    row_span: int
    col_span: int
    bbox: BBox
    token_ids: list[str] = field(default_factory=list)
    text: str = ""


@dataclass
class TableGrid:
    table_id: str
    bbox: BBox
    n_rows: int
    n_cols: int
    cells: list[Cell]


def cluster_axis(
    intervals: Sequence[tuple[float, float]], overlap_min: float
) -> tuple[list[tuple[float, float]], list[list[int]]]:
    """Group 1-D intervals into bands and assign each interval its band indices.

    Sweep intervals sorted by lo. An interval joins the open band when its
    overlap with the band's running intersection is at least
    ``overlap_min * its own length``; otherwise it opens a new band. Band
    extents are the final running intersections, sorted by lo.

    A second pass detects spanning intervals: an interval covering k
    consecutive bands (overlap at least ``overlap_min`` of each band's
    extent) is assigned all k indices. The consecutive run always includes
    the band the interval joined during the sweep.

    Returns (bands, assignments) where assignments[i] is the sorted band
    index list for intervals[i] in the original input order.
    """
    if not 0 < overlap_min <= 1:
        raise ValueError("overlap_min must be in (0, 1]")
    n = len(intervals)
    if n == 0:
        return [], []
    for lo, hi in intervals:
        if not lo < hi:
            raise ValueError(f"invalid interval ({lo}, {hi})")

    order = sorted(range(n), key=lambda i: (intervals[i][0], intervals[i][1], i))
    bands: list[tuple[float, float]] = []  # running intersections
    joined: list[int] = [0] * n  # interval -> band slot it joined
    for i in order:
        lo, hi = intervals[i]
        if bands:
            blo, bhi = bands[-1]
            if interval_overlap((lo, hi), (blo, bhi)) >= overlap_min * (hi - lo):
                bands[-1] = (max(blo, lo), min(bhi, hi))
                joined[i] = len(bands) - 1
                continue
        bands.append((lo, hi))
        joined[i] = len(bands) - 1

    # sort bands by position and remap the slots assigned during the sweep
    band_order = sorted(range(len(bands)), key=lambda k: bands[k])
    rank = {old: new for new, old in enumerate(band_order)}
    bands = [bands[k] for k in band_order]
    joined = [rank[j] for j in joined]

    assignments: list[list[int]] = []
    for i in range(n):
        lo, hi = intervals[i]
        covered = [
            k
            for k, (blo, bhi) in enumerate(bands)
            if interval_overlap((lo, hi), (blo, bhi)) >= overlap_min * (bhi - blo)
        ]
        home = joined[i]
        run = [home]
        if home in covered:
            k = home - 1
            while k in covered:
                run.insert(0, k)
                k -= 1
            k = home + 1
            while k in covered:
                run.append(k)
                k += 1
        assignments.append(run)
    return bands, assignments


def validate_tiling(grid: TableGrid) -> list[tuple[int, int, str]]:
    """Return (row, col, problem) violations; empty list means the grid tiles."""
    problems: list[tuple[int, int, str]] = []
    cover = [[0] * grid.n_cols for _ in range(grid.n_rows)]
    for c in grid.cells:
        if c.row < 0 or c.col < 0 or c.row_span < 1 or c.col_span < 1:
            problems.append((c.row, c.col, "bad_span"))
            continue
        if c.row + c.row_span > grid.n_rows or c.col + c.col_span > grid.n_cols:
            problems.append((c.row, c.col, "outside_grid"))
            continue
        for r in range(c.row, c.row + c.row_span):
            for k in range(c.col, c.col + c.col_span):
                cover[r][k] += 1
    for r in range(grid.n_rows):
        for k in range(grid.n_cols):
            if cover[r][k] == 0:
                problems.append((r, k, "uncovered"))
            elif cover[r][k] > 1:
                problems.append((r, k, "overlap"))
    return problems


def require_tiling(grid: TableGrid) -> None:
    problems = validate_tiling(grid)
    if problems:
        shown = ", ".join(f"({r},{c}) {what}" for r, c, what in problems[:8])
        raise TilingError(f"grid {grid.table_id} violates tiling: {shown}", problems)


def fresh_cell_ids(existing: set[str], count: int, prefix: str = "c") -> list[str]:
    """Deterministic unused ids: prefix + smallest free integers."""
    out: list[str] = []
    k = 0
    while len(out) < count:
        cid = f"{prefix}{k}"
        if cid not in existing:
            out.append(cid)
            existing.add(cid)
        k += 1
    return out


def assign_tokens_to_cells(
    cells: Sequence[Cell], tokens: Sequence[Token], region: BBox
) -> dict[str, list[Token]]:
    """Token-to-cell assignment by bbox-center containment.

    Ties (a center inside several cell boxes) go to the smaller cell area,
    then to the earlier cell in the given order. Tokens whose center falls in
    no cell box are left unassigned.
    """
    out: dict[str, list[Token]] = {c.cell_id: [] for c in cells}
    for t in tokens:
        cx, cy = t.bbox.center
        if not region.contains_point(cx, cy):
            continue
        best: Optional[tuple[float, int]] = None
        for idx, c in enumerate(cells):
            if c.bbox.contains_point(cx, cy):
                key = (c.bbox.area, idx)
                if best is None or key < best:
                    best = key
        if best is not None:
            out[cells[best[1]].cell_id].append(t)
    for c in cells:
        out[c.cell_id].sort(key=lambda t: (t.bbox.y0, t.bbox.x0, t.id))
    return out


def cell_text(tokens: Sequence[Token]) -> str:
    return " ".join(t.text for t in tokens)


def build_grid(
    region: "TableRegion", cells: Sequence["CellBox"], page: PageLayout
) -> TableGrid:
    """Assemble a TableGrid from detected cell boxes and page tokens.

    Rows come from clustering the boxes' (y0, y1) intervals, columns from
    (x0, x1), both with AXIS_OVERLAP_MIN. A cell's start position is the
    minimum assigned band index per axis and its span the band count. Tiling
    holes are filled with synthetic empty cells so the editor always receives
    a legal grid. Invariant to the input order of cells and tokens.
    """
    boxes = sorted(cells, key=lambda c: (c.bbox.y0, c.bbox.x0, c.cell_id))
    if not boxes:
        grid = TableGrid(
            table_id=region.table_id,
            bbox=region.bbox,
            n_rows=1,
            n_cols=1,
            cells=[Cell("c0", 0, 0, 1, 1, region.bbox)],
        )
        return grid

    row_bands, row_assign = cluster_axis(
        [(c.bbox.y0, c.bbox.y1) for c in boxes], AXIS_OVERLAP_MIN
    )
    col_bands, col_assign = cluster_axis(
        [(c.bbox.x0, c.bbox.x1) for c in boxes], AXIS_OVERLAP_MIN
    )
    n_rows, n_cols = len(row_bands), len(col_bands)

    placed: list[Cell] = []
    for i, c in enumerate(boxes):
        placed.append(
            Cell(
                cell_id=c.cell_id,
                row=row_assign[i][0],
                col=col_assign[i][0],
                row_span=len(row_assign[i]),
                col_span=len(col_assign[i]),
                bbox=c.bbox,
            )
        )

    cover: dict[tuple[int, int], Cell] = {}
    for cell in placed:
        for r in range(cell.row, cell.row + cell.row_span):
            for k in range(cell.col, cell.col + cell.col_span):
                if (r, k) in cover:
                    raise TilingError(
                        f"cells {cover[(r, k)].cell_id} and {cell.cell_id} "
                        f"both cover ({r},{k})",
                        [(r, k, "overlap")],
                    )
                cover[(r, k)] = cell

    holes = [
        (r, k)
        for r in range(n_rows)
        for k in range(n_cols)
        if (r, k) not in cover
    ]
    if holes:
        ids = {c.cell_id for c in placed}
        for (r, k), cid in zip(holes, fresh_cell_ids(ids, len(holes), "x")):
            placed.append(
                Cell(
                    cell_id=cid,
                    row=r,
                    col=k,
                    row_span=1,
                    col_span=1,
                    bbox=BBox(col_bands[k][0], row_bands[r][0], col_bands[k][1], row_bands[r][1]),
                )
            )

    placed.sort(key=lambda c: (c.row, c.col))
    grid = TableGrid(
        table_id=region.table_id,
        bbox=region.bbox,
        n_rows=n_rows,
        n_cols=n_cols,
        cells=placed,
    )

    by_cell = assign_tokens_to_cells(grid.cells, page.tokens, region.bbox)
    for c in grid.cells:
        toks = by_cell.get(c.cell_id, [])
        c.token_ids = [t.id for t in toks]
        c.text = cell_text(toks)

    require_tiling(grid)
    return grid


# --- HTML ------------------------------------------------------------------

_ESCAPES = (("&", "&amp;"), ("<", "&lt;"), (">", "&gt;"))


def escape_text(text: str) -> str:
    for raw, repl in _ESCAPES:
        text = text.replace(raw, repl)
    return text


def to_html(grid: TableGrid) -> str:
    """Deterministic <table> markup, cells in row-major order of start position."""
    starts: dict[int, list[Cell]] = {}
    for c in sorted(grid.cells, key=lambda c: (c.row, c.col)):
        starts.setdefault(c.row, []).append(c)
    parts = ["<table>"]
    for r in range(grid.n_rows):
        parts.append("<tr>")
        for c in starts.get(r, []):
            attrs = ""
            if c.row_span > 1:
                attrs += f' rowspan="{c.row_span}"'
            if c.col_span > 1:
                attrs += f' colspan="{c.col_span}"'
            parts.append(f"<td{attrs}>{escape_text(c.text)}</td>")
        parts.append("</tr>")
    parts.append("</table>")
    return "".join(parts)


# --- Annotation records ------------------------------------------------------

_RECORD_FIELDS = {"table_id", "bbox", "n_rows", "n_cols", "cells"}
_CELL_FIELDS = {"cell_id", "row", "col", "row_span", "col_span", "bbox", "tokens", "text"}


def grid_to_annotation(grid: TableGrid) -> dict:
    """Export schema for one table; cells sorted row-major."""
    return {
        "table_id": grid.table_id,
        "bbox": grid.bbox.as_list(),
        "n_rows": grid.n_rows,
        "n_cols": grid.n_cols,
        "cells": [
            {
                "cell_id": c.cell_id,
                "row": c.row,
                "col": c.col,
                "row_span": c.row_span,
                "col_span": c.col_span,
                "bbox": c.bbox.as_list(),
                "tokens": list(c.token_ids),
                "text": c.text,
            }
            for c in sorted(grid.cells, key=lambda c: (c.row, c.col))
        ],
    }


def annotation_json(grid: TableGrid) -> str:
    return json.dumps(grid_to_annotation(grid), ensure_ascii=False, separators=(",", ":"))


def _require_int(value, name: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"field '{name}' must be an integer")
    if value < minimum:
        raise SchemaError(f"field '{name}' must be >= {minimum}")
    return value


def from_annotation(record: dict) -> TableGrid:
    """Inverse of grid_to_annotation; rejects tiling violations with positions."""
    if not isinstance(record, dict):
        raise SchemaError("annotation record must be an object")
    unknown = set(record) - _RECORD_FIELDS
    if unknown:
        raise SchemaError(f"unknown field '{sorted(unknown)[0]}'")
    for name in _RECORD_FIELDS:
        if name not in record:
            raise SchemaError(f"missing field '{name}'")
    if not isinstance(record["table_id"], str) or not record["table_id"]:
        raise SchemaError("field 'table_id' must be a non-empty string")
    bbox = BBox.from_list(record["bbox"])
    n_rows = _require_int(record["n_rows"], "n_rows", 1)
    n_cols = _require_int(record["n_cols"], "n_cols", 1)
    raw_cells = record["cells"]
    if not isinstance(raw_cells, list):
        raise SchemaError("field 'cells' must be an array")

    cells: list[Cell] = []
    seen: set[str] = set()
    for i, raw in enumerate(raw_cells):
        if not isinstance(raw, dict):
            raise SchemaError(f"cell {i} must be an object")
        unknown = set(raw) - _CELL_FIELDS
        if unknown:
            raise SchemaError(f"unknown field '{sorted(unknown)[0]}' on cell {i}")
        for name in _CELL_FIELDS:
            if name not in raw:
                raise SchemaError(f"missing field '{name}' on cell {i}")
        cid = raw["cell_id"]
        if not isinstance(cid, str) or not cid:
            raise SchemaError(f"cell {i} cell_id must be a non-empty string")
        if cid in seen:
            raise SchemaError(f"duplicate cell_id {cid}")
        seen.add(cid)
        tokens = raw["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise SchemaError(f"field 'tokens' must be an array of strings on cell {cid}")
        if len(set(tokens)) != len(tokens):
            raise SchemaError(f"duplicate token ids on cell {cid}")
        if not isinstance(raw["text"], str):
            raise SchemaError(f"field 'text' must be a string on cell {cid}")
        cells.append(
            Cell(
                cell_id=cid,
                row=_require_int(raw["row"], "row", 0),
                col=_require_int(raw["col"], "col", 0),
                row_span=_require_int(raw["row_span"], "row_span", 1),
                col_span=_require_int(raw["col_span"], "col_span", 1),
                bbox=BBox.from_list(raw["bbox"]),
                token_ids=list(tokens),
                text=raw["text"],
            )
        )

    all_ids = [tid for c in cells for tid in c.token_ids]
    if len(set(all_ids)) != len(all_ids):
        raise SchemaError("a token id is assigned to more than one cell")

    grid = TableGrid(
        table_id=record["table_id"], bbox=bbox, n_rows=n_rows, n_cols=n_cols, cells=cells
    )
    require_tiling(grid)
    return grid


def copy_grid(grid: TableGrid) -> TableGrid:
    return TableGrid(
        table_id=grid.table_id,
        bbox=grid.bbox,
        n_rows=grid.n_rows,
        n_cols=grid.n_cols,
        cells=[replace(c, token_ids=list(c.token_ids)) for c in grid.cells],
    )
