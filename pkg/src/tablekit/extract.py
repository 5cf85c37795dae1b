"""Finetunable table detector: candidate regions, layout features, scoring, cells.

The model is a linear scorer over seven layout features of a candidate
rectangle, squashed through a sigmoid. Detection enumerates candidate
rectangles from whitespace structure and ruling frames, scores them, and
keeps a non-overlapping high-confidence subset. Cell detection cuts a region
at ruling positions and projection-profile valleys.

Feature vector, in order (all components in [0, 1]):

  0 col_align   fraction of tokens whose x0 lies within SNAP_PT of one of
                the MAX_MODES strongest x0 modes
  1 row_align   same for y0
  2 ruling_cov  fraction of the region perimeter within SNAP_PT of a ruling
  3 numeric     fraction of tokens whose text parses as a number
  4 density     tokens per 1000 pt^2, clamped to 1
  5 gap_reg     1 - coefficient of variation of inter-row gaps
  6 aspect      width/height clamped to [0, 4], divided by 4
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import SchemaError
from .geometry import BBox, hull, interval_overlap, iou, merge_intervals
from .layout import HORIZONTAL, VERTICAL, PageLayout, Token

N_FEATURES = 7
FEATURE_NAMES = (
    "col_align",
    "row_align",
    "ruling_cov",
    "numeric",
    "density",
    "gap_reg",
    "aspect",
)

SNAP_PT = 2.0          # alignment / ruling snap tolerance
MAX_MODES = 8          # strongest coordinate modes considered for alignment
DUPLICATE_IOU = 0.95   # candidate de-duplication threshold, fixed
SUPPRESS_IOU = 0.2     # detection overlap suppression threshold, fixed
FRAME_TOL = 3.0        # ruling endpoints may miss a frame corner by this much

_NUMERIC_RE = re.compile(r"^[+-]?[$€£]?\(?\d[\d,]*(\.\d+)?\)?%?$")


@dataclass(frozen=True)
class ModelParams:
    """The finetunable parameter set of the extraction model."""

    weights: tuple[float, ...]
    bias: float
    detect_threshold: float = 0.5
    col_gap_min: float = 8.0
    row_gap_min: float = 8.0
    valley_frac: float = 0.2
    version_id: str = "unversioned"
    parent_id: Optional[str] = None

    def __post_init__(self):
        if len(self.weights) != N_FEATURES:
            raise SchemaError(
                f"expected {N_FEATURES} weights, got {len(self.weights)}"
            )
        if not all(math.isfinite(w) for w in self.weights):
            raise SchemaError("weights must be finite")
        if not 0 < self.detect_threshold < 1:
            raise SchemaError("detect_threshold must be in (0, 1)")
        if self.col_gap_min <= 0 or self.row_gap_min <= 0:
            raise SchemaError("gap minimums must be > 0")
        if not 0 < self.valley_frac < 1:
            raise SchemaError("valley_frac must be in (0, 1)")


@dataclass(frozen=True)
class TableRegion:
    table_id: str
    bbox: BBox
    confidence: float


@dataclass(frozen=True)
class CellBox:
    cell_id: str
    bbox: BBox
    confidence: float


# --- candidate generation -----------------------------------------------------


def _token_blocks(p: PageLayout, row_gap_min: float) -> list[list[Token]]:
    """Maximal token groups separated by horizontal whitespace taller than row_gap_min."""
    if not p.tokens:
        return []
    occupied = merge_intervals((t.bbox.y0, t.bbox.y1) for t in p.tokens)
    boundaries: list[float] = []
    for (_, hi), (lo, _) in zip(occupied, occupied[1:]):
        if lo - hi > row_gap_min:
            boundaries.append((hi + lo) / 2)
    blocks: list[list[Token]] = [[] for _ in range(len(boundaries) + 1)]
    for t in p.tokens:
        cy = (t.bbox.y0 + t.bbox.y1) / 2
        idx = sum(1 for b in boundaries if cy > b)
        blocks[idx].append(t)
    return [b for b in blocks if b]


def _ruling_frames(p: PageLayout) -> list[BBox]:
    """Maximal rectangles whose four sides are covered by ruling lines.

    Interior separator lines close many nested sub-rectangles; only frames
    not contained in a larger frame are emitted, so one ruled table yields
    one candidate.
    """
    hs = [r.bbox for r in p.rulings if r.orientation == HORIZONTAL]
    vs = [r.bbox for r in p.rulings if r.orientation == VERTICAL]
    frames: list[BBox] = []
    for i, top in enumerate(hs):
        for bottom in hs[i + 1 :]:
            ty = (top.y0 + top.y1) / 2
            by = (bottom.y0 + bottom.y1) / 2
            if by - ty < 2 * FRAME_TOL:
                continue
            x0 = max(top.x0, bottom.x0)
            x1 = min(top.x1, bottom.x1)
            if x1 - x0 < 2 * FRAME_TOL:
                continue
            left = right = False
            for v in vs:
                vx = (v.x0 + v.x1) / 2
                if v.y0 <= ty + FRAME_TOL and v.y1 >= by - FRAME_TOL:
                    if abs(vx - x0) <= FRAME_TOL:
                        left = True
                    if abs(vx - x1) <= FRAME_TOL:
                        right = True
            if left and right:
                frames.append(BBox(x0, ty, x1, by))
    maximal = [
        f
        for f in frames
        if not any(
            other is not f
            and other.x0 <= f.x0 + 1e-6
            and other.y0 <= f.y0 + 1e-6
            and other.x1 >= f.x1 - 1e-6
            and other.y1 >= f.y1 - 1e-6
            and other.area > f.area
            for other in frames
        )
    ]
    maximal.sort(key=lambda b: (b.y0, b.x0, b.y1, b.x1))
    return maximal


def propose_regions(p: PageLayout, params: ModelParams) -> list[BBox]:
    """Deterministic candidate rectangles for a normalized page.

    In order: whitespace-separated token-block hulls, ruling frames, then
    unions of vertically adjacent blocks. Near-duplicates (IoU >
    DUPLICATE_IOU) are dropped, keeping the earlier candidate.
    """
    blocks = _token_blocks(p, params.row_gap_min)
    block_hulls = [hull(t.bbox for t in b) for b in blocks]
    candidates: list[BBox] = list(block_hulls)
    candidates.extend(_ruling_frames(p))
    for span in range(2, len(block_hulls) + 1):
        for start in range(len(block_hulls) - span + 1):
            merged = block_hulls[start]
            for other in block_hulls[start + 1 : start + span]:
                merged = merged.union(other)
            candidates.append(merged)

    kept: list[BBox] = []
    for c in candidates:
        if all(iou(c, k) <= DUPLICATE_IOU for k in kept):
            kept.append(c)
    return kept


# --- features -----------------------------------------------------------------


def _coordinate_modes(values: Sequence[float]) -> list[float]:
    """Centers of the MAX_MODES strongest clusters of 1-D values (SNAP_PT wide)."""
    if not values:
        return []
    ordered = sorted(values)
    clusters: list[list[float]] = [[ordered[0]]]
    for v in ordered[1:]:
        if v - clusters[-1][0] <= SNAP_PT:
            clusters[-1].append(v)
        else:
            clusters.append([v])
    clusters.sort(key=lambda c: (-len(c), c[0]))
    return [sum(c) / len(c) for c in clusters[:MAX_MODES]]


def _alignment(values: Sequence[float]) -> float:
    modes = _coordinate_modes(values)
    if not modes:
        return 0.0
    snapped = sum(1 for v in values if any(abs(v - m) <= SNAP_PT for m in modes))
    return snapped / len(values)


def _is_numeric(text: str) -> bool:
    return bool(_NUMERIC_RE.match(text.strip()))


def _ruling_coverage(p: PageLayout, r: BBox) -> float:
    perimeter = 2 * (r.width + r.height)
    if perimeter <= 0:
        return 0.0
    covered = 0.0
    for edge_y in (r.y0, r.y1):
        spans = []
        for line in p.rulings:
            if line.orientation != HORIZONTAL:
                continue
            ly = (line.bbox.y0 + line.bbox.y1) / 2
            if abs(ly - edge_y) <= SNAP_PT:
                ov = interval_overlap((line.bbox.x0, line.bbox.x1), (r.x0, r.x1))
                if ov > 0:
                    spans.append((max(line.bbox.x0, r.x0), min(line.bbox.x1, r.x1)))
        covered += sum(hi - lo for lo, hi in merge_intervals(spans))
    for edge_x in (r.x0, r.x1):
        spans = []
        for line in p.rulings:
            if line.orientation != VERTICAL:
                continue
            lx = (line.bbox.x0 + line.bbox.x1) / 2
            if abs(lx - edge_x) <= SNAP_PT:
                ov = interval_overlap((line.bbox.y0, line.bbox.y1), (r.y0, r.y1))
                if ov > 0:
                    spans.append((max(line.bbox.y0, r.y0), min(line.bbox.y1, r.y1)))
        covered += sum(hi - lo for lo, hi in merge_intervals(spans))
    return min(1.0, covered / perimeter)


def _row_groups(tokens: Sequence[Token]) -> list[tuple[float, float]]:
    """Greedy y0-mode line grouping; returns (min y0, max y1) per line."""
    ordered = sorted(tokens, key=lambda t: (t.bbox.y0, t.bbox.x0, t.id))
    groups: list[tuple[float, float]] = []
    anchor = None
    for t in ordered:
        if anchor is not None and t.bbox.y0 - anchor <= SNAP_PT:
            lo, hi = groups[-1]
            groups[-1] = (min(lo, t.bbox.y0), max(hi, t.bbox.y1))
        else:
            groups.append((t.bbox.y0, t.bbox.y1))
            anchor = t.bbox.y0
    return groups


def _gap_regularity(tokens: Sequence[Token]) -> float:
    rows = _row_groups(tokens)
    gaps = [max(0.0, nxt[0] - cur[1]) for cur, nxt in zip(rows, rows[1:])]
    if not gaps:
        return 0.0
    mean = sum(gaps) / len(gaps)
    if mean <= 0:
        return 0.0
    var = sum((g - mean) ** 2 for g in gaps) / len(gaps)
    cv = math.sqrt(var) / mean
    return max(0.0, min(1.0, 1.0 - cv))


def featurize_region(p: PageLayout, r: BBox) -> tuple[float, ...]:
    """Layout feature vector of region r; all-zero when r holds no tokens."""
    tokens = [t for t in p.tokens if r.contains_point(*t.bbox.center)]
    if not tokens:
        return (0.0,) * N_FEATURES
    col_align = _alignment([t.bbox.x0 for t in tokens])
    row_align = _alignment([t.bbox.y0 for t in tokens])
    ruling_cov = _ruling_coverage(p, r)
    numeric = sum(1 for t in tokens if _is_numeric(t.text)) / len(tokens)
    density = min(1.0, len(tokens) * 1000.0 / r.area) if r.area > 0 else 0.0
    gap_reg = _gap_regularity(tokens)
    aspect = min(4.0, r.width / r.height) / 4.0 if r.height > 0 else 0.0
    return (col_align, row_align, ruling_cov, numeric, density, gap_reg, aspect)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def score_region(params: ModelParams, features: Sequence[float]) -> float:
    """sigmoid(w . f + b); monotone in every positively weighted feature."""
    if len(features) != len(params.weights):
        raise SchemaError(
            f"feature length mismatch: expected {len(params.weights)}, "
            f"got {len(features)}"
        )
    z = sum(w * f for w, f in zip(params.weights, features)) + params.bias
    return sigmoid(z)


# --- detection ------------------------------------------------------------------


def detect_tables(params: ModelParams, p: PageLayout) -> list[TableRegion]:
    """Scored, threshold-filtered, greedily non-overlapping table regions.

    Candidates at or above detect_threshold are processed in descending
    confidence (ties keep the earlier candidate); any candidate with IoU >
    SUPPRESS_IOU against an accepted one is dropped. Ids are assigned in
    reading order (y0, x0) of the surviving boxes.
    """
    scored = []
    for idx, box in enumerate(propose_regions(p, params)):
        conf = score_region(params, featurize_region(p, box))
        if conf >= params.detect_threshold:
            scored.append((-conf, idx, box))
    scored.sort(key=lambda item: (item[0], item[1]))

    accepted: list[tuple[BBox, float]] = []
    for neg_conf, _, box in scored:
        if all(iou(box, a) <= SUPPRESS_IOU for a, _ in accepted):
            accepted.append((box, -neg_conf))

    accepted.sort(key=lambda item: (item[0].y0, item[0].x0))
    return [
        TableRegion(table_id=f"t{i}", bbox=box, confidence=conf)
        for i, (box, conf) in enumerate(accepted)
    ]


def page_confidence(regions: Sequence[TableRegion]) -> Optional[float]:
    """Minimum region confidence; the weakest table dominates labelling value."""
    if not regions:
        return None
    return min(r.confidence for r in regions)


# --- cell detection -------------------------------------------------------------


def _projection_valleys(
    spans: list[tuple[float, float, float]],
    lo: float,
    hi: float,
    extent: float,
    gap_min: float,
    frac: float,
) -> list[float]:
    """Centers of interior low-coverage runs wider than gap_min.

    ``spans`` holds (a0, a1, cross_length) per token: the token's interval on
    the cut axis plus its extent on the other axis. Coverage at a position is
    the summed cross length of tokens over it, divided by ``extent``. Runs
    touching the region border are not valleys; cutting there would only
    fabricate empty edge bands.
    """
    points = {lo, hi}
    for a0, a1, _ in spans:
        points.add(max(lo, a0))
        points.add(min(hi, a1))
    cuts = sorted(points)
    out: list[float] = []
    run_start: Optional[float] = None
    for left, right in zip(cuts, cuts[1:]):
        if right <= left:
            continue
        mid = (left + right) / 2
        cover = sum(c for a0, a1, c in spans if a0 <= mid <= a1)
        if cover / extent < frac:
            if run_start is None:
                run_start = left
            run_end = right
        else:
            if run_start is not None and run_start > lo and run_end < hi:
                if run_end - run_start > gap_min:
                    out.append((run_start + run_end) / 2)
            run_start = None
    # a trailing run touches the border; never a valley
    return out


def _cut_positions(
    ruling_pos: list[float],
    valley_pos: list[float],
    lo: float,
    hi: float,
    gap_min: float,
) -> list[float]:
    eps = 0.25 * gap_min  # scales with the gap so structure is scale invariant
    merged: list[float] = []
    for pos in sorted(ruling_pos + valley_pos):
        if pos <= lo + eps or pos >= hi - eps:
            continue
        if merged and pos - merged[-1] < eps:
            continue
        merged.append(pos)
    return merged


def detect_cells(params: ModelParams, p: PageLayout, region: TableRegion) -> list[CellBox]:
    """Cut the region into a grid and shrink each piece to its token hull.

    Cut positions per axis are interior ruling centers plus projection-profile
    valleys wider than the axis gap minimum with coverage below valley_frac.
    Tokens belong to the piece containing their center. Non-empty pieces are
    shrunk to the hull of their tokens (clipped to the piece, confidence from
    the fraction of tokens fully inside); empty pieces keep the full rectangle
    with confidence 0.5.
    """
    r = region.bbox
    tokens = [t for t in p.tokens if r.contains_point(*t.bbox.center)]

    v_rulings = [
        (line.bbox.x0 + line.bbox.x1) / 2
        for line in p.rulings
        if line.orientation == VERTICAL
        and r.x0 <= (line.bbox.x0 + line.bbox.x1) / 2 <= r.x1
        and interval_overlap((line.bbox.y0, line.bbox.y1), (r.y0, r.y1))
        >= 0.5 * (r.y1 - r.y0)
    ]
    h_rulings = [
        (line.bbox.y0 + line.bbox.y1) / 2
        for line in p.rulings
        if line.orientation == HORIZONTAL
        and r.y0 <= (line.bbox.y0 + line.bbox.y1) / 2 <= r.y1
        and interval_overlap((line.bbox.x0, line.bbox.x1), (r.x0, r.x1))
        >= 0.5 * (r.x1 - r.x0)
    ]

    x_spans = [(t.bbox.x0, t.bbox.x1, t.bbox.height) for t in tokens]
    y_spans = [(t.bbox.y0, t.bbox.y1, t.bbox.width) for t in tokens]
    x_valleys = _projection_valleys(
        x_spans, r.x0, r.x1, r.height, params.col_gap_min, params.valley_frac
    )
    y_valleys = _projection_valleys(
        y_spans, r.y0, r.y1, r.width, params.row_gap_min, params.valley_frac
    )

    xs = [r.x0] + _cut_positions(v_rulings, x_valleys, r.x0, r.x1, params.col_gap_min) + [r.x1]
    ys = [r.y0] + _cut_positions(h_rulings, y_valleys, r.y0, r.y1, params.row_gap_min) + [r.y1]

    cells: list[CellBox] = []
    idx = 0
    for yi in range(len(ys) - 1):
        for xi in range(len(xs) - 1):
            rect = BBox(xs[xi], ys[yi], xs[xi + 1], ys[yi + 1])
            # half-open membership so a center on a cut belongs to one piece
            members = [
                t
                for t in tokens
                if (rect.x0 <= t.bbox.center[0] < rect.x1 or (xi == len(xs) - 2 and t.bbox.center[0] == rect.x1))
                and (rect.y0 <= t.bbox.center[1] < rect.y1 or (yi == len(ys) - 2 and t.bbox.center[1] == rect.y1))
            ]
            if members:
                box = hull(t.bbox for t in members)
                clipped = box.intersect(rect) or rect
                inside = sum(1 for t in members if clipped.contains_box(t.bbox))
                conf = inside / len(members)
                cells.append(CellBox(cell_id=f"c{idx}", bbox=clipped, confidence=conf))
            else:
                cells.append(CellBox(cell_id=f"c{idx}", bbox=rect, confidence=0.5))
            idx += 1
    return cells
