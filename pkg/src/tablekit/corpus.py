"""Deterministic synthetic page generator with known ground truth.

Used by the test suite and the acceptance runs: every page is produced from a
TemplateSpec on an integer point grid (so output is identical across
platforms), together with the true table region and grid.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import SchemaError
from .extract import TableRegion
from .geometry import BBox
from .layout import (
    HORIZONTAL,
    VERTICAL,
    PageLayout,
    RulingLine,
    Token,
    normalize_layout,
    serialize_page,
)
from .structure import Cell, TableGrid, grid_to_annotation

_WORDS = (
    "alpha", "beta", "gamma", "delta", "total", "net", "gross", "item",
    "unit", "rate", "count", "name", "code", "group", "region", "period",
)

TOKEN_PAD_X = 4
TOKEN_PAD_Y = 3
FRAME_PAD = 2  # ruling frame sits this far outside the cell hull


@dataclass(frozen=True)
class TemplateSpec:
    seed: int
    n_rows: int
    n_cols: int
    col_gap: int
    row_gap: int
    ruled: bool = False
    header_span: bool = False
    numeric_frac: float = 0.5
    page_width: int = 612
    page_height: int = 792
    cell_width: int = 60
    cell_height: int = 16
    x_margin: int = 72
    y_margin: int = 72
    jitter: int = 1

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise SchemaError("table dimensions must be >= 1")
        if self.col_gap <= 0 or self.row_gap <= 0:
            raise SchemaError("gaps must be > 0")
        if not 0 <= self.numeric_frac <= 1:
            raise SchemaError("numeric_frac must be in [0, 1]")


@dataclass(frozen=True)
class GeneratedPage:
    page: PageLayout
    region: TableRegion
    grid: TableGrid
    template_index: int = 0


def _cell_rect(spec: TemplateSpec, row: int, col: int) -> BBox:
    x0 = spec.x_margin + col * (spec.cell_width + spec.col_gap)
    y0 = spec.y_margin + row * (spec.cell_height + spec.row_gap)
    return BBox(x0, y0, x0 + spec.cell_width, y0 + spec.cell_height)


def _token_text(spec: TemplateSpec, rng: random.Random) -> str:
    if rng.random() < spec.numeric_frac:
        if rng.random() < 0.5:
            return str(rng.randint(0, 9999))
        return f"{rng.randint(0, 999)}.{rng.randint(0, 99):02d}"
    return rng.choice(_WORDS) + (str(rng.randint(1, 9)) if rng.random() < 0.3 else "")


def generate_page(spec: TemplateSpec, page_id: str = "page-0") -> GeneratedPage:
    """One synthetic page plus its ground truth; identical output per seed."""
    hull = _cell_rect(spec, 0, 0).union(_cell_rect(spec, spec.n_rows - 1, spec.n_cols - 1))
    limit = FRAME_PAD + 1 if spec.ruled else 0
    if (
        hull.x1 + limit > spec.page_width
        or hull.y1 + limit > spec.page_height
        or spec.x_margin - limit < 0
        or spec.y_margin - limit < 0
    ):
        raise SchemaError("table does not fit on the page")

    rng = random.Random(spec.seed)
    tokens: list[Token] = []
    cells: list[Cell] = []
    tid = 0

    def add_token(rect: BBox) -> Token:
        nonlocal tid
        jx = rng.randint(-spec.jitter, spec.jitter) if spec.jitter else 0
        jy = rng.randint(-spec.jitter, spec.jitter) if spec.jitter else 0
        box = BBox(
            int(rect.x0) + TOKEN_PAD_X + jx,
            int(rect.y0) + TOKEN_PAD_Y + jy,
            int(rect.x1) - TOKEN_PAD_X + jx,
            int(rect.y1) - TOKEN_PAD_Y + jy,
        )
        token = Token(id=f"w{tid}", bbox=box, text=_token_text(spec, rng))
        tid += 1
        tokens.append(token)
        return token

    cid = 0
    for row in range(spec.n_rows):
        col = 0
        while col < spec.n_cols:
            if spec.header_span and row == 0 and col == 0:
                rect = _cell_rect(spec, 0, 0).union(_cell_rect(spec, 0, spec.n_cols - 1))
                span = spec.n_cols
            else:
                rect = _cell_rect(spec, row, col)
                span = 1
            token = add_token(rect)
            cells.append(
                Cell(
                    cell_id=f"g{cid}",
                    row=row,
                    col=col,
                    row_span=1,
                    col_span=span,
                    bbox=rect,
                    token_ids=[token.id],
                    text=token.text,
                )
            )
            cid += 1
            col += span

    rulings: list[RulingLine] = []
    region_box = hull
    if spec.ruled:
        fx0, fy0 = hull.x0 - FRAME_PAD, hull.y0 - FRAME_PAD
        fx1, fy1 = hull.x1 + FRAME_PAD, hull.y1 + FRAME_PAD
        ys = [fy0] + [
            int(_cell_rect(spec, r, 0).y0) - spec.row_gap // 2 for r in range(1, spec.n_rows)
        ] + [fy1]
        xs = [fx0] + [
            int(_cell_rect(spec, 0, c).x0) - spec.col_gap // 2 for c in range(1, spec.n_cols)
        ] + [fx1]
        for y in ys:
            rulings.append(RulingLine(HORIZONTAL, BBox(fx0, y, fx1, y + 1)))
        for x in xs:
            rulings.append(RulingLine(VERTICAL, BBox(x, fy0, x + 1, fy1)))
        region_box = BBox(fx0, fy0, fx1 + 1, fy1 + 1)

    page = normalize_layout(
        PageLayout(
            page_id=page_id,
            width=spec.page_width,
            height=spec.page_height,
            tokens=tuple(tokens),
            rulings=tuple(rulings),
        )
    )
    region = TableRegion(table_id="t0", bbox=region_box, confidence=1.0)
    grid = TableGrid(
        table_id="t0",
        bbox=region_box,
        n_rows=spec.n_rows,
        n_cols=spec.n_cols,
        cells=cells,
    )
    return GeneratedPage(page=page, region=region, grid=grid)


def generate_collection(
    specs: Sequence[tuple[TemplateSpec, int]]
) -> tuple[list[GeneratedPage], dict[str, int]]:
    """Pages for each (spec, count) pair plus the page->template manifest."""
    pages: list[GeneratedPage] = []
    manifest: dict[str, int] = {}
    for t_index, (spec, count) in enumerate(specs):
        for i in range(count):
            page_id = f"t{t_index}-p{i:03d}"
            page_spec = TemplateSpec(
                **{**spec.__dict__, "seed": spec.seed * 100003 + i}
            )
            g = generate_page(page_spec, page_id=page_id)
            pages.append(
                GeneratedPage(
                    page=g.page, region=g.region, grid=g.grid, template_index=t_index
                )
            )
            manifest[page_id] = t_index
    return pages, manifest


def write_collection(
    pages: Sequence[GeneratedPage], manifest: dict[str, int], out_dir: str | Path
) -> None:
    """Materialize a corpus: pages/, truth/ (annotation schema), manifest.json."""
    out = Path(out_dir)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    for g in pages:
        (out / "pages" / f"{g.page.page_id}.json").write_text(
            serialize_page(g.page), encoding="utf-8"
        )
        (out / "truth" / f"{g.page.page_id}.json").write_text(
            json.dumps([grid_to_annotation(g.grid)], ensure_ascii=False, separators=(",", ":")),
            encoding="utf-8",
        )
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, sort_keys=True, separators=(",", ":")),
        encoding="utf-8",
    )
