"""Spreadsheet-style corrections over extracted tables.

Every operation takes a draft LabelRecord and returns a new one; the input is
never mutated. Each applied operation is appended to the record's edit log
with its exact parameters, and replaying the log over the record's initial
extraction snapshot reproduces the final record. All operations preserve the
TILING invariant.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from .errors import EditError
from .extract import ModelParams, TableRegion, detect_cells
from .geometry import BBox, hull, iou, validate_bbox
from .layout import PageLayout, Token
from .structure import (
    Cell,
    TableGrid,
    build_grid,
    cell_text,
    copy_grid,
    fresh_cell_ids,
    require_tiling,
)

log = logging.getLogger(__name__)

STATUS_DRAFT = "draft"
STATUS_SUBMITTED = "submitted"

# operations that edit a table's grid; a border change discards their effect
GRID_OPS = frozenset(
    {
        "merge_cells",
        "split_cell",
        "merge_rows",
        "merge_cols",
        "split_row",
        "split_col",
        "move_text_chunk",
    }
)

ADD_OVERLAP_MAX = 0.2  # a new table may overlap existing ones at most this much


@dataclass(frozen=True)
class TokenOverride:
    text: str
    bbox: BBox


@dataclass
class LabeledTable:
    region: TableRegion
    grid: TableGrid


@dataclass
class LabelRecord:
    page_id: str
    model_version: str
    tables: list[LabeledTable]
    initial_tables: list[LabeledTable]
    status: str = STATUS_DRAFT
    token_overrides: dict[str, TokenOverride] = field(default_factory=dict)
    edit_log: list[dict] = field(default_factory=list)


def _copy_tables(tables: Sequence[LabeledTable]) -> list[LabeledTable]:
    return [LabeledTable(region=t.region, grid=copy_grid(t.grid)) for t in tables]


def new_record(
    page_id: str,
    extraction: Sequence[tuple[TableRegion, TableGrid]],
    model_version: str,
) -> LabelRecord:
    """Start a draft from an extraction snapshot; confidences are pinned to 1."""
    tables = [
        LabeledTable(region=replace(r, confidence=1.0), grid=copy_grid(g))
        for r, g in extraction
    ]
    return LabelRecord(
        page_id=page_id,
        model_version=model_version,
        tables=tables,
        initial_tables=_copy_tables(tables),
    )


def apply_overrides(
    page: PageLayout, overrides: Mapping[str, TokenOverride]
) -> PageLayout:
    """Page with user token corrections substituted in."""
    if not overrides:
        return page
    tokens = tuple(
        Token(id=t.id, bbox=overrides[t.id].bbox, text=overrides[t.id].text)
        if t.id in overrides
        else t
        for t in page.tokens
    )
    return replace(page, tokens=tokens)


class Editor:
    """Applies correction operations for one page.

    ``params`` is the project's active model (used when a border change
    triggers re-extraction); ``resolve_params`` maps a version id back to its
    parameters so a log recorded under an older model replays identically.
    """

    def __init__(
        self,
        page: PageLayout,
        params: ModelParams,
        resolve_params: Optional[Callable[[str], ModelParams]] = None,
    ):
        self.page = page
        self.params = params
        self._resolve = resolve_params or (
            lambda version: params
            if version == params.version_id
            else self._unknown(version)
        )

    @staticmethod
    def _unknown(version: str) -> ModelParams:
        raise EditError(f"unknown model version {version} in edit log")

    # -- helpers ---------------------------------------------------------

    def _effective_page(self, rec: LabelRecord) -> PageLayout:
        return apply_overrides(self.page, rec.token_overrides)

    def _tokens_by_id(self, rec: LabelRecord) -> dict[str, Token]:
        return {t.id: t for t in self._effective_page(rec).tokens}

    @staticmethod
    def _require_draft(rec: LabelRecord) -> None:
        if rec.status != STATUS_DRAFT:
            raise EditError("record is submitted and immutable")

    @staticmethod
    def _find_table(rec: LabelRecord, table_id: str) -> LabeledTable:
        for t in rec.tables:
            if t.region.table_id == table_id:
                return t
        raise EditError(f"unknown table_id {table_id}")

    def _check_bbox(self, box: BBox, what: str) -> None:
        validate_bbox(box, what)
        page_box = BBox(0, 0, self.page.width, self.page.height)
        if not page_box.contains_box(box):
            raise EditError(f"{what} outside page bounds")

    @staticmethod
    def _clone(rec: LabelRecord) -> LabelRecord:
        return LabelRecord(
            page_id=rec.page_id,
            model_version=rec.model_version,
            tables=_copy_tables(rec.tables),
            initial_tables=_copy_tables(rec.initial_tables),
            status=rec.status,
            token_overrides=dict(rec.token_overrides),
            edit_log=copy.deepcopy(rec.edit_log),
        )

    def _refresh_texts(self, rec: LabelRecord, grid: TableGrid) -> None:
        tokens = self._tokens_by_id(rec)
        for c in grid.cells:
            toks = sorted(
                (tokens[tid] for tid in c.token_ids if tid in tokens),
                key=lambda t: (t.bbox.y0, t.bbox.x0, t.id),
            )
            c.token_ids = [t.id for t in toks]
            c.text = cell_text(toks)

    def _extract_table(
        self, rec: LabelRecord, table_id: str, box: BBox, params: ModelParams
    ) -> LabeledTable:
        region = TableRegion(table_id=table_id, bbox=box, confidence=1.0)
        page = self._effective_page(rec)
        cells = detect_cells(params, page, region)
        grid = build_grid(region, cells, page)
        return LabeledTable(region=region, grid=grid)

    # -- operations --------------------------------------------------------

    def set_table_bbox(self, rec: LabelRecord, table_id: str, new_bbox: BBox) -> LabelRecord:
        """Replace a table border and re-extract its structure inside it.

        Prior grid edits for that table are discarded (logged): re-extraction
        invalidates cell identity.
        """
        self._require_draft(rec)
        self._find_table(rec, table_id)
        self._check_bbox(new_bbox, "bbox")
        out = self._clone(rec)
        discarded = any(
            e.get("table_id") == table_id and e.get("op") in GRID_OPS
            for e in rec.edit_log
        )
        if discarded:
            log.warning(
                "set_table_bbox(%s/%s): discarding prior grid edits", rec.page_id, table_id
            )
        for i, t in enumerate(out.tables):
            if t.region.table_id == table_id:
                out.tables[i] = self._extract_table(out, table_id, new_bbox, self.params)
        out.edit_log.append(
            {
                "op": "set_table_bbox",
                "table_id": table_id,
                "bbox": new_bbox.as_list(),
                "model_version": self.params.version_id,
                "discarded_prior_edits": discarded,
            }
        )
        return out

    def add_table(self, rec: LabelRecord, bbox: BBox) -> LabelRecord:
        self._require_draft(rec)
        self._check_bbox(bbox, "bbox")
        for t in rec.tables:
            if iou(bbox, t.region.bbox) > ADD_OVERLAP_MAX:
                raise EditError(
                    f"new table overlaps {t.region.table_id} "
                    f"(IoU > {ADD_OVERLAP_MAX})"
                )
        existing = {t.region.table_id for t in rec.tables}
        k = 0
        while f"t{k}" in existing:
            k += 1
        table_id = f"t{k}"
        out = self._clone(rec)
        out.tables.append(self._extract_table(out, table_id, bbox, self.params))
        out.tables.sort(key=lambda t: (t.region.bbox.y0, t.region.bbox.x0, t.region.table_id))
        out.edit_log.append(
            {
                "op": "add_table",
                "table_id": table_id,
                "bbox": bbox.as_list(),
                "model_version": self.params.version_id,
            }
        )
        return out

    def delete_table(self, rec: LabelRecord, table_id: str) -> LabelRecord:
        self._require_draft(rec)
        self._find_table(rec, table_id)
        out = self._clone(rec)
        out.tables = [t for t in out.tables if t.region.table_id != table_id]
        out.edit_log.append({"op": "delete_table", "table_id": table_id})
        return out

    def merge_cells(self, rec: LabelRecord, table_id: str, cell_ids: Sequence[str]) -> LabelRecord:
        """Merge cells whose spans tile one contiguous rectangle of the grid."""
        self._require_draft(rec)
        if len(cell_ids) < 2:
            raise EditError("merge_cells needs at least two cells")
        if len(set(cell_ids)) != len(cell_ids):
            raise EditError("duplicate cell ids in selection")
        out = self._clone(rec)
        grid = self._find_table(out, table_id).grid
        by_id = {c.cell_id: c for c in grid.cells}
        selected = []
        for cid in cell_ids:
            if cid not in by_id:
                raise EditError(f"unknown cell {cid}")
            selected.append(by_id[cid])

        r0 = min(c.row for c in selected)
        c0 = min(c.col for c in selected)
        r1 = max(c.row + c.row_span for c in selected)
        c1 = max(c.col + c.col_span for c in selected)
        chosen = set(cell_ids)
        owner: dict[tuple[int, int], str] = {}
        for c in grid.cells:
            for r in range(c.row, c.row + c.row_span):
                for k in range(c.col, c.col + c.col_span):
                    owner[(r, k)] = c.cell_id
        for r in range(r0, r1):
            for k in range(c0, c1):
                if owner.get((r, k)) not in chosen:
                    raise EditError(f"selection does not cover position ({r},{k})")

        anchor = owner[(r0, c0)]
        token_ids = [tid for c in selected for tid in c.token_ids]
        merged = Cell(
            cell_id=anchor,
            row=r0,
            col=c0,
            row_span=r1 - r0,
            col_span=c1 - c0,
            bbox=hull(c.bbox for c in selected),
            token_ids=token_ids,
        )
        grid.cells = [c for c in grid.cells if c.cell_id not in chosen]
        grid.cells.append(merged)
        grid.cells.sort(key=lambda c: (c.row, c.col))
        self._refresh_texts(out, grid)
        require_tiling(grid)
        out.edit_log.append(
            {"op": "merge_cells", "table_id": table_id, "cell_ids": list(cell_ids)}
        )
        return out

    def split_cell(
        self, rec: LabelRecord, table_id: str, cell_id: str, axis: str, count: int
    ) -> LabelRecord:
        """Split one cell into ``count`` cells along ``axis`` ("row" | "col").

        If the cell already spans at least ``count`` bands, its span is
        partitioned; otherwise the grid gains (count - span) new bands across
        the cell's extent and other cells crossing them grow their spans.
        Tokens are distributed among the fragments by equal geometric slices
        of the original box, using token centers.
        """
        self._require_draft(rec)
        if axis not in ("row", "col"):
            raise EditError("axis must be 'row' or 'col'")
        if not isinstance(count, int) or count < 2:
            raise EditError("count must be an integer >= 2")
        out = self._clone(rec)
        grid = self._find_table(out, table_id).grid
        target = next((c for c in grid.cells if c.cell_id == cell_id), None)
        if target is None:
            raise EditError(f"unknown cell {cell_id}")

        vertical = axis == "row"  # split stacks fragments top-to-bottom
        start = target.row if vertical else target.col
        span = target.row_span if vertical else target.col_span

        if span >= count:
            base, rem = divmod(span, count)
            sizes = [base + (1 if i < rem else 0) for i in range(count)]
        else:
            extra = count - span
            grid_n = grid.n_rows if vertical else grid.n_cols
            base, rem = divmod(count, span)
            parts = [base + (1 if i < rem else 0) for i in range(span)]
            # widen the grid: band j of the cell becomes parts[j] bands
            offset_at = {}
            acc = 0
            for j in range(grid_n):
                offset_at[j] = acc
                if start <= j < start + span:
                    acc += parts[j - start] - 1
            for c in grid.cells:
                if c.cell_id == cell_id:
                    continue
                s = c.row if vertical else c.col
                sp = c.row_span if vertical else c.col_span
                grow = sum(
                    parts[j - start] - 1
                    for j in range(max(s, start), min(s + sp, start + span))
                )
                if vertical:
                    c.row = s + offset_at[s]
                    c.row_span = sp + grow
                else:
                    c.col = s + offset_at[s]
                    c.col_span = sp + grow
            if vertical:
                grid.n_rows += extra
                target.row = start + offset_at[start]
            else:
                grid.n_cols += extra
                target.col = start + offset_at[start]
            start = target.row if vertical else target.col
            sizes = [1] * count

        ids = {c.cell_id for c in grid.cells}
        new_ids = [cell_id] + fresh_cell_ids(ids, count - 1, "s")
        tokens = self._tokens_by_id(out)
        box = target.bbox
        lo = box.y0 if vertical else box.x0
        step = (box.height if vertical else box.width) / count

        fragments: list[Cell] = []
        pos = start
        for i in range(count):
            f_lo = lo + i * step
            f_hi = lo + (i + 1) * step
            fbox = (
                BBox(box.x0, f_lo, box.x1, f_hi)
                if vertical
                else BBox(f_lo, box.y0, f_hi, box.y1)
            )
            fragments.append(
                Cell(
                    cell_id=new_ids[i],
                    row=pos if vertical else target.row,
                    col=target.col if vertical else pos,
                    row_span=sizes[i] if vertical else target.row_span,
                    col_span=target.col_span if vertical else sizes[i],
                    bbox=fbox,
                )
            )
            pos += sizes[i]

        for tid in target.token_ids:
            t = tokens.get(tid)
            if t is None:
                continue
            coord = t.bbox.center[1] if vertical else t.bbox.center[0]
            i = min(count - 1, max(0, int((coord - lo) // step))) if step > 0 else 0
            fragments[i].token_ids.append(tid)

        grid.cells = [c for c in grid.cells if c.cell_id != cell_id] + fragments
        grid.cells.sort(key=lambda c: (c.row, c.col))
        self._refresh_texts(out, grid)
        require_tiling(grid)
        out.edit_log.append(
            {
                "op": "split_cell",
                "table_id": table_id,
                "cell_id": cell_id,
                "axis": axis,
                "count": count,
            }
        )
        return out

    # -- whole row/column operations ----------------------------------------

    def _collapse_bands(
        self, rec: LabelRecord, table_id: str, indices: Sequence[int], vertical: bool
    ) -> LabelRecord:
        if len(indices) < 2:
            raise EditError("need at least two consecutive indices")
        ordered = sorted(indices)
        if ordered != list(range(ordered[0], ordered[-1] + 1)):
            raise EditError(f"indices {sorted(indices)} are not consecutive")
        lo, hi = ordered[0], ordered[-1]
        out = self._clone(rec)
        grid = self._find_table(out, table_id).grid
        n = grid.n_rows if vertical else grid.n_cols
        if lo < 0 or hi >= n:
            raise EditError("index outside grid")

        def remap(idx: int) -> int:
            if idx <= lo:
                return idx
            if idx <= hi:
                return lo
            return idx - (hi - lo)

        for c in grid.cells:
            s = c.row if vertical else c.col
            sp = c.row_span if vertical else c.col_span
            new_s = remap(s)
            new_sp = remap(s + sp - 1) - new_s + 1
            if vertical:
                c.row, c.row_span = new_s, new_sp
            else:
                c.col, c.col_span = new_s, new_sp
        if vertical:
            grid.n_rows -= hi - lo
        else:
            grid.n_cols -= hi - lo

        # cells may now overlap inside the collapsed band: merge overlap
        # groups, growing each group to a full rectangle
        def positions(c: Cell) -> set[tuple[int, int]]:
            return {
                (r, k)
                for r in range(c.row, c.row + c.row_span)
                for k in range(c.col, c.col + c.col_span)
            }

        changed = True
        while changed:
            changed = False
            cover: dict[tuple[int, int], Cell] = {}
            clash: Optional[tuple[Cell, Cell]] = None
            for c in sorted(grid.cells, key=lambda c: (c.row, c.col, c.cell_id)):
                for pos in positions(c):
                    if pos in cover:
                        clash = (cover[pos], c)
                        break
                    cover[pos] = c
                if clash:
                    break
            if not clash:
                break
            group: dict[int, Cell] = {id(c): c for c in clash}
            grew = True
            while grew:
                grew = False
                r0 = min(c.row for c in group.values())
                c0 = min(c.col for c in group.values())
                r1 = max(c.row + c.row_span for c in group.values())
                c1 = max(c.col + c.col_span for c in group.values())
                rect = {(r, k) for r in range(r0, r1) for k in range(c0, c1)}
                for c in grid.cells:
                    if id(c) in group:
                        continue
                    if positions(c) & rect:
                        group[id(c)] = c
                        grew = True
            members = sorted(group.values(), key=lambda c: (c.row, c.col, c.cell_id))
            merged = Cell(
                cell_id=members[0].cell_id,
                row=r0,
                col=c0,
                row_span=r1 - r0,
                col_span=c1 - c0,
                bbox=hull(c.bbox for c in members),
                token_ids=[tid for c in members for tid in c.token_ids],
            )
            grid.cells = [c for c in grid.cells if id(c) not in group]
            grid.cells.append(merged)
            changed = True

        grid.cells.sort(key=lambda c: (c.row, c.col))
        self._refresh_texts(out, grid)
        require_tiling(grid)
        return out

    def merge_rows(self, rec: LabelRecord, table_id: str, row_indices: Sequence[int]) -> LabelRecord:
        self._require_draft(rec)
        out = self._collapse_bands(rec, table_id, row_indices, vertical=True)
        out.edit_log.append(
            {"op": "merge_rows", "table_id": table_id, "row_indices": sorted(row_indices)}
        )
        return out

    def merge_cols(self, rec: LabelRecord, table_id: str, col_indices: Sequence[int]) -> LabelRecord:
        self._require_draft(rec)
        out = self._collapse_bands(rec, table_id, col_indices, vertical=False)
        out.edit_log.append(
            {"op": "merge_cols", "table_id": table_id, "col_indices": sorted(col_indices)}
        )
        return out

    def _band_boundaries(self, grid: TableGrid, vertical: bool) -> list[float]:
        """Band edge coordinates, interpolated where no cell witnesses an edge."""
        n = grid.n_rows if vertical else grid.n_cols
        if vertical:
            first, last = grid.bbox.y0, grid.bbox.y1
        else:
            first, last = grid.bbox.x0, grid.bbox.x1
        bounds: list[Optional[float]] = [None] * (n + 1)
        bounds[0], bounds[n] = first, last
        for b in range(1, n):
            starts = []
            ends = []
            for c in grid.cells:
                s = c.row if vertical else c.col
                sp = c.row_span if vertical else c.col_span
                lo = c.bbox.y0 if vertical else c.bbox.x0
                hi = c.bbox.y1 if vertical else c.bbox.x1
                if s == b:
                    starts.append(lo)
                if s + sp == b:
                    ends.append(hi)
            if starts and ends:
                bounds[b] = (max(ends) + min(starts)) / 2
            elif starts:
                bounds[b] = min(starts)
            elif ends:
                bounds[b] = max(ends)
        # interpolate any unwitnessed boundaries
        known = [i for i, v in enumerate(bounds) if v is not None]
        for a, b in zip(known, known[1:]):
            for i in range(a + 1, b):
                frac = (i - a) / (b - a)
                bounds[i] = bounds[a] + frac * (bounds[b] - bounds[a])
        return [float(v) for v in bounds]

    def _split_band(
        self, rec: LabelRecord, table_id: str, index: int, boundary: float, vertical: bool
    ) -> LabelRecord:
        out = self._clone(rec)
        grid = self._find_table(out, table_id).grid
        n = grid.n_rows if vertical else grid.n_cols
        if not 0 <= index < n:
            raise EditError("index outside grid")
        bounds = self._band_boundaries(grid, vertical)
        if not bounds[index] < boundary < bounds[index + 1]:
            raise EditError(
                f"boundary {boundary} outside band {index} "
                f"({bounds[index]}, {bounds[index + 1]})"
            )
        tokens = self._tokens_by_id(out)
        ids = {c.cell_id for c in grid.cells}
        new_cells: list[Cell] = []
        for c in list(grid.cells):
            s = c.row if vertical else c.col
            sp = c.row_span if vertical else c.col_span
            if s + sp <= index:
                continue
            if s > index:
                if vertical:
                    c.row += 1
                else:
                    c.col += 1
                continue
            if sp > 1:
                if vertical:
                    c.row_span += 1
                else:
                    c.col_span += 1
                continue
            # span-1 cell on the split band: cut it in two at the boundary
            box = c.bbox
            lo, hi = (box.y0, box.y1) if vertical else (box.x0, box.x1)
            cut = boundary if lo < boundary < hi else (lo + hi) / 2
            if vertical:
                first_box = BBox(box.x0, box.y0, box.x1, cut)
                second_box = BBox(box.x0, cut, box.x1, box.y1)
            else:
                first_box = BBox(box.x0, box.y0, cut, box.y1)
                second_box = BBox(cut, box.y0, box.x1, box.y1)
            second_id = fresh_cell_ids(ids, 1, "s")[0]
            second = Cell(
                cell_id=second_id,
                row=c.row + 1 if vertical else c.row,
                col=c.col if vertical else c.col + 1,
                row_span=1 if vertical else c.row_span,
                col_span=c.col_span if vertical else 1,
                bbox=second_box,
            )
            keep_ids, move_ids = [], []
            for tid in c.token_ids:
                t = tokens.get(tid)
                if t is None:
                    keep_ids.append(tid)
                    continue
                coord = t.bbox.center[1] if vertical else t.bbox.center[0]
                (move_ids if coord >= boundary else keep_ids).append(tid)
            c.bbox = first_box
            c.token_ids = keep_ids
            second.token_ids = move_ids
            new_cells.append(second)
        grid.cells.extend(new_cells)
        if vertical:
            grid.n_rows += 1
        else:
            grid.n_cols += 1
        grid.cells.sort(key=lambda c: (c.row, c.col))
        self._refresh_texts(out, grid)
        require_tiling(grid)
        return out

    def split_row(self, rec: LabelRecord, table_id: str, row_index: int, boundary_y: float) -> LabelRecord:
        self._require_draft(rec)
        out = self._split_band(rec, table_id, row_index, boundary_y, vertical=True)
        out.edit_log.append(
            {
                "op": "split_row",
                "table_id": table_id,
                "row_index": row_index,
                "boundary_y": boundary_y,
            }
        )
        return out

    def split_col(self, rec: LabelRecord, table_id: str, col_index: int, boundary_x: float) -> LabelRecord:
        self._require_draft(rec)
        out = self._split_band(rec, table_id, col_index, boundary_x, vertical=False)
        out.edit_log.append(
            {
                "op": "split_col",
                "table_id": table_id,
                "col_index": col_index,
                "boundary_x": boundary_x,
            }
        )
        return out

    def move_text_chunk(
        self, rec: LabelRecord, table_id: str, token_ids: Sequence[str], target_cell_id: str
    ) -> LabelRecord:
        """Reassign a chunk of tokens to another cell of the same table."""
        self._require_draft(rec)
        if not token_ids:
            raise EditError("no tokens to move")
        out = self._clone(rec)
        grid = self._find_table(out, table_id).grid
        target = next((c for c in grid.cells if c.cell_id == target_cell_id), None)
        if target is None:
            raise EditError(f"unknown cell {target_cell_id}")
        assigned = {tid for c in grid.cells for tid in c.token_ids}
        missing = [tid for tid in token_ids if tid not in assigned]
        if missing:
            raise EditError(f"token {missing[0]} is not assigned in table {table_id}")
        moving = set(token_ids)
        for c in grid.cells:
            if c.cell_id != target_cell_id:
                c.token_ids = [tid for tid in c.token_ids if tid not in moving]
        target.token_ids = list(dict.fromkeys(target.token_ids + list(token_ids)))
        self._refresh_texts(out, grid)
        out.edit_log.append(
            {
                "op": "move_text_chunk",
                "table_id": table_id,
                "token_ids": list(token_ids),
                "target_cell_id": target_cell_id,
            }
        )
        return out

    def edit_token(
        self, rec: LabelRecord, token_id: str, new_text: str, new_bbox: BBox
    ) -> LabelRecord:
        """Correct a token's text and box; cell assignment stays as it is.

        Geometry edits must not silently move content between cells, so if
        the new box center leaves the containing cell we only flag it in the
        edit log.
        """
        self._require_draft(rec)
        if not any(t.id == token_id for t in self.page.tokens):
            raise EditError(f"unknown token {token_id}")
        if not new_text.strip():
            raise EditError("token text must be non-empty")
        self._check_bbox(new_bbox, f"token {token_id}")
        out = self._clone(rec)
        out.token_overrides[token_id] = TokenOverride(text=new_text, bbox=new_bbox)
        outside = False
        for t in out.tables:
            for c in t.grid.cells:
                if token_id in c.token_ids:
                    cx, cy = new_bbox.center
                    if not c.bbox.contains_point(cx, cy):
                        outside = True
            self._refresh_texts(out, t.grid)
        out.edit_log.append(
            {
                "op": "edit_token",
                "token_id": token_id,
                "text": new_text,
                "bbox": new_bbox.as_list(),
                "bbox_outside_cell": outside,
            }
        )
        return out

    def submit(self, rec: LabelRecord) -> LabelRecord:
        """Freeze the record for training; every grid must tile."""
        self._require_draft(rec)
        for t in rec.tables:
            require_tiling(t.grid)
        out = self._clone(rec)
        out.status = STATUS_SUBMITTED
        out.edit_log.append({"op": "submit"})
        return out

    # -- replay --------------------------------------------------------------

    def replay(self, rec: LabelRecord) -> LabelRecord:
        """Re-apply rec's edit log over its initial extraction snapshot."""
        current = LabelRecord(
            page_id=rec.page_id,
            model_version=rec.model_version,
            tables=_copy_tables(rec.initial_tables),
            initial_tables=_copy_tables(rec.initial_tables),
        )
        for entry in rec.edit_log:
            current = self.apply_entry(current, entry)
        return current

    def apply_entry(self, rec: LabelRecord, entry: dict) -> LabelRecord:
        op = entry["op"]
        if op == "set_table_bbox":
            editor = self._for_version(entry["model_version"])
            return editor.set_table_bbox(
                rec, entry["table_id"], BBox.from_list(entry["bbox"])
            )
        if op == "add_table":
            editor = self._for_version(entry["model_version"])
            return editor.add_table(rec, BBox.from_list(entry["bbox"]))
        if op == "delete_table":
            return self.delete_table(rec, entry["table_id"])
        if op == "merge_cells":
            return self.merge_cells(rec, entry["table_id"], entry["cell_ids"])
        if op == "split_cell":
            return self.split_cell(
                rec, entry["table_id"], entry["cell_id"], entry["axis"], entry["count"]
            )
        if op == "merge_rows":
            return self.merge_rows(rec, entry["table_id"], entry["row_indices"])
        if op == "merge_cols":
            return self.merge_cols(rec, entry["table_id"], entry["col_indices"])
        if op == "split_row":
            return self.split_row(
                rec, entry["table_id"], entry["row_index"], entry["boundary_y"]
            )
        if op == "split_col":
            return self.split_col(
                rec, entry["table_id"], entry["col_index"], entry["boundary_x"]
            )
        if op == "move_text_chunk":
            return self.move_text_chunk(
                rec, entry["table_id"], entry["token_ids"], entry["target_cell_id"]
            )
        if op == "edit_token":
            return self.edit_token(
                rec, entry["token_id"], entry["text"], BBox.from_list(entry["bbox"])
            )
        if op == "submit":
            return self.submit(rec)
        raise EditError(f"unknown operation {op}")

    def _for_version(self, version: str) -> "Editor":
        if version == self.params.version_id:
            return self
        return Editor(self.page, self._resolve(version), self._resolve)
