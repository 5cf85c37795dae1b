"""Fit a new model from submitted label records.

The detector weights are refit with deterministic full-batch gradient descent
on logistic loss over candidate-region features; the cell-cut parameters are
grid-searched against a grid-agreement objective; the detection threshold is
re-chosen from a fixed ladder. Everything is a pure function of (records,
pages, base params), so two finetunes over the same labels produce identical
parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .editor import LabelRecord, apply_overrides
from .errors import TrainingError
from .extract import (
    ModelParams,
    detect_cells,
    detect_tables,
    featurize_region,
    propose_regions,
)
from .geometry import BBox, iou
from .layout import PageLayout
from .structure import TableGrid, build_grid

log = logging.getLogger(__name__)

MATCH_IOU = 0.5
GAP_GRID = (2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0)
VALLEY_GRID = (0.05, 0.1, 0.2, 0.3)
THRESHOLD_GRID = (0.3, 0.4, 0.5, 0.6, 0.7)
GD_STEP = 0.5
GD_ITERS = 500
GD_L2 = 1e-3
# A truth box is only injected when no candidate already overlaps it this
# much; an overlapping candidate wins the greedy match and serves as the
# positive, and injecting a near-duplicate would hand descent two identical
# feature vectors with opposite labels.
INJECT_DEDUP_IOU = 0.8


@dataclass(frozen=True)
class MatchOutcome:
    bbox: BBox
    positive: bool


def match_candidates(
    candidates: Sequence[BBox], truths: Sequence[BBox], iou_min: float = MATCH_IOU
) -> list[MatchOutcome]:
    """Label candidates against ground truth, greedy by descending IoU.

    Each truth box is consumed by at most one candidate; a candidate is
    positive iff it won a match with IoU >= iou_min.
    """
    pairs = []
    for ci, c in enumerate(candidates):
        for ti, t in enumerate(truths):
            v = iou(c, t)
            if v >= iou_min:
                pairs.append((-v, ci, ti))
    pairs.sort()
    used_c: set[int] = set()
    used_t: set[int] = set()
    positive: set[int] = set()
    for _, ci, ti in pairs:
        if ci in used_c or ti in used_t:
            continue
        used_c.add(ci)
        used_t.add(ti)
        positive.add(ci)
    return [MatchOutcome(bbox=c, positive=i in positive) for i, c in enumerate(candidates)]


def _effective_pages(
    records: Sequence[LabelRecord], pages: Mapping[str, PageLayout]
) -> list[tuple[LabelRecord, PageLayout]]:
    out = []
    for rec in sorted(records, key=lambda r: r.page_id):
        page = pages[rec.page_id]
        out.append((rec, apply_overrides(page, rec.token_overrides)))
    return out


def build_training_set(
    records: Sequence[LabelRecord],
    pages: Mapping[str, PageLayout],
    base: ModelParams,
) -> list[tuple[tuple[float, ...], int]]:
    """(feature vector, label) pairs from every submitted record.

    Candidates are the base model's proposals plus the ground-truth boxes
    themselves (unless an existing candidate already duplicates one), so the
    detector can always be taught regions its generator missed. Zero-table
    pages contribute only negatives.
    """
    submitted = [r for r in records if r.status == "submitted"]
    if not submitted:
        raise TrainingError("nothing to train on")
    out: list[tuple[tuple[float, ...], int]] = []
    for rec, page in _effective_pages(submitted, pages):
        truths = [t.region.bbox for t in rec.tables]
        candidates = propose_regions(page, base)
        for t in truths:
            if all(iou(t, c) < INJECT_DEDUP_IOU for c in candidates):
                candidates.append(t)
        outcomes = match_candidates(candidates, truths)
        for o in outcomes:
            out.append((featurize_region(page, o.bbox), 1 if o.positive else 0))
    return out


def fit_detector(
    train: Sequence[tuple[Sequence[float], int]], init: ModelParams
) -> tuple[tuple[float, ...], float]:
    """Logistic fit by full-batch gradient descent from the base parameters.

    Fixed step 0.5 for exactly 500 iterations; L2 penalty 1e-3 on the weights
    (gradient contribution GD_L2 * w), none on the bias. The loss is averaged
    over examples, so duplicating the training set leaves the result
    unchanged. Without a single positive example there is nothing to pull
    scores up against, and the base weights are returned as-is.
    """
    if not train:
        raise TrainingError("nothing to train on")
    y = np.array([label for _, label in train], dtype=np.float64)
    if not y.any():
        log.warning("fit_detector: no positive examples, keeping base weights")
        return tuple(init.weights), init.bias
    X = np.array([list(f) for f, _ in train], dtype=np.float64)
    w = np.array(init.weights, dtype=np.float64)
    b = float(init.bias)
    n = len(y)
    for _ in range(GD_ITERS):
        z = X @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        resid = p - y
        grad_w = X.T @ resid / n + GD_L2 * w
        grad_b = float(resid.sum()) / n
        w = w - GD_STEP * grad_w
        b = b - GD_STEP * grad_b
        if not np.isfinite(w).all() or not np.isfinite(b):
            raise TrainingError("non-finite loss during detector fit")
    return tuple(float(v) for v in w), float(b)


# --- evaluation helpers --------------------------------------------------------


def detection_prf(
    detections: Mapping[str, Sequence[BBox]],
    truths: Mapping[str, Sequence[BBox]],
    iou_min: float = MATCH_IOU,
) -> tuple[float, float, float]:
    """Micro precision/recall/F1 over pages; empty-vs-empty counts as perfect."""
    tp = fp = fn = 0
    for pid in sorted(set(detections) | set(truths)):
        dets = list(detections.get(pid, ()))
        gts = list(truths.get(pid, ()))
        outcomes = match_candidates(dets, gts, iou_min)
        matched = sum(1 for o in outcomes if o.positive)
        tp += matched
        fp += len(dets) - matched
        fn += len(gts) - matched
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def grid_agreement(pred: Optional[TableGrid], truth: TableGrid) -> float:
    """1.0 for an exact structural match, else the fraction of truth cells
    whose (row, col, row_span, col_span) the prediction reproduces."""
    if pred is None:
        return 0.0
    truth_rects = sorted((c.row, c.col, c.row_span, c.col_span) for c in truth.cells)
    pred_rects = sorted((c.row, c.col, c.row_span, c.col_span) for c in pred.cells)
    if (
        pred.n_rows == truth.n_rows
        and pred.n_cols == truth.n_cols
        and pred_rects == truth_rects
    ):
        return 1.0
    remaining = list(pred_rects)
    hit = 0
    for rect in truth_rects:
        if rect in remaining:
            remaining.remove(rect)
            hit += 1
    return hit / len(truth_rects) if truth_rects else 1.0


def mean_grid_agreement(
    predictions: Mapping[str, Sequence[tuple[BBox, TableGrid]]],
    truths: Mapping[str, Sequence[tuple[BBox, TableGrid]]],
) -> float:
    """Average agreement over all truth tables; an unmatched truth scores 0.

    Truth tables are matched to predicted tables greedily by IoU (>= MATCH_IOU)
    before comparing structures.
    """
    scores: list[float] = []
    for pid in sorted(truths):
        gt = list(truths[pid])
        preds = list(predictions.get(pid, ()))
        pairs = []
        for ti, (tbox, _) in enumerate(gt):
            for ci, (pbox, _) in enumerate(preds):
                v = iou(tbox, pbox)
                if v >= MATCH_IOU:
                    pairs.append((-v, ti, ci))
        pairs.sort()
        used_t: set[int] = set()
        used_c: set[int] = set()
        match: dict[int, int] = {}
        for _, ti, ci in pairs:
            if ti in used_t or ci in used_c:
                continue
            used_t.add(ti)
            used_c.add(ci)
            match[ti] = ci
        for ti, (_, tgrid) in enumerate(gt):
            pred_grid = preds[match[ti]][1] if ti in match else None
            scores.append(grid_agreement(pred_grid, tgrid))
    return sum(scores) / len(scores) if scores else 1.0


# --- parameter search -----------------------------------------------------------


def fit_cell_params(
    records: Sequence[LabelRecord],
    pages: Mapping[str, PageLayout],
    init: ModelParams,
) -> tuple[float, float, float]:
    """Grid-search (col_gap_min, row_gap_min, valley_frac) against the labels.

    Objective: mean grid agreement of re-detected cells inside each labelled
    table region. Ties keep the lexicographically smallest triple, so the
    search is deterministic and returns the base setting whenever it is
    already optimal among equals.
    """
    labelled = [
        (rec, page)
        for rec, page in _effective_pages(
            [r for r in records if r.status == "submitted"], pages
        )
        if rec.tables
    ]
    if not labelled:
        raise TrainingError("no submitted grids to fit cell parameters against")

    best: Optional[tuple[float, float, float]] = None
    best_score = -1.0
    for col_gap in GAP_GRID:
        for row_gap in GAP_GRID:
            for valley in VALLEY_GRID:
                trial = replace(
                    init,
                    col_gap_min=col_gap,
                    row_gap_min=row_gap,
                    valley_frac=valley,
                )
                scores = []
                for rec, page in labelled:
                    for t in rec.tables:
                        cells = detect_cells(trial, page, t.region)
                        pred = build_grid(t.region, cells, page)
                        scores.append(grid_agreement(pred, t.grid))
                score = sum(scores) / len(scores)
                if score > best_score:
                    best_score = score
                    best = (col_gap, row_gap, valley)
    return best


def choose_threshold(
    params: ModelParams,
    pages: Mapping[str, PageLayout],
    truths: Mapping[str, Sequence[BBox]],
) -> float:
    """Best detection threshold from the fixed ladder; ties prefer 0.5, then
    the value nearest 0.5 (and the smaller of two equidistant ones)."""
    best_t = None
    best_key = None
    for t in THRESHOLD_GRID:
        trial = replace(params, detect_threshold=t)
        dets = {
            pid: [r.bbox for r in detect_tables(trial, page)]
            for pid, page in pages.items()
        }
        _, _, f1 = detection_prf(dets, truths)
        key = (-f1, abs(t - 0.5), t)
        if best_key is None or key < best_key:
            best_key = key
            best_t = t
    return best_t


def finetune_model(
    records: Sequence[LabelRecord],
    pages: Mapping[str, PageLayout],
    base: ModelParams,
    version_id: str,
) -> tuple[ModelParams, dict]:
    """New parameters fit from submitted records, plus training-fit metrics.

    The detector never regresses on its own training pages: if the refit
    weights score a worse detection F1 there than the base did, the base
    detector (weights, bias, threshold) is kept and only the cell parameters
    change.
    """
    submitted = [r for r in records if r.status == "submitted"]
    if not submitted:
        raise TrainingError("nothing to train on")

    # cell parameters first: candidate generation depends on the gap minimums,
    # so the detector must be trained on the candidates the new model will see
    with_grids = [r for r in submitted if r.tables]
    if with_grids:
        col_gap, row_gap, valley = fit_cell_params(submitted, pages, base)
    else:
        col_gap, row_gap, valley = base.col_gap_min, base.row_gap_min, base.valley_frac
    regapped = replace(
        base, col_gap_min=col_gap, row_gap_min=row_gap, valley_frac=valley
    )

    train = build_training_set(submitted, pages, regapped)
    weights, bias = fit_detector(train, base)

    eff_pages = {rec.page_id: page for rec, page in _effective_pages(submitted, pages)}
    truths = {
        rec.page_id: [t.region.bbox for t in rec.tables] for rec in submitted
    }

    candidate = ModelParams(
        weights=weights,
        bias=bias,
        detect_threshold=base.detect_threshold,
        col_gap_min=col_gap,
        row_gap_min=row_gap,
        valley_frac=valley,
        version_id=version_id,
        parent_id=base.version_id,
    )
    threshold = choose_threshold(candidate, eff_pages, truths)
    candidate = replace(candidate, detect_threshold=threshold)

    def train_f1(p: ModelParams) -> float:
        dets = {
            pid: [r.bbox for r in detect_tables(p, page)]
            for pid, page in eff_pages.items()
        }
        return detection_prf(dets, truths)[2]

    new_f1 = train_f1(candidate)
    base_f1 = train_f1(base)
    if new_f1 < base_f1:
        log.warning(
            "finetune: refit detector underperforms base on training pages "
            "(%.3f < %.3f); keeping base detector",
            new_f1,
            base_f1,
        )
        candidate = replace(
            candidate,
            weights=tuple(base.weights),
            bias=base.bias,
            detect_threshold=base.detect_threshold,
        )
        new_f1 = base_f1

    truth_grids = {
        rec.page_id: [(t.region.bbox, t.grid) for t in rec.tables] for rec in submitted
    }
    predictions = {}
    for pid, page in eff_pages.items():
        regions = detect_tables(candidate, page)
        predictions[pid] = [
            (r.bbox, build_grid(r, detect_cells(candidate, page, r), page))
            for r in regions
        ]
    metrics = {
        "detection_f1": new_f1,
        "mean_grid_agreement": mean_grid_agreement(predictions, truth_grids),
    }
    return candidate, metrics
