from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tablekit.geometry import BBox
from tablekit.layout import PageLayout, Token, normalize_layout, serialize_page


def make_token(tid: str, x0, y0, x1, y1, text="x") -> Token:
    return Token(id=tid, bbox=BBox(x0, y0, x1, y1), text=text)


def make_page(tokens=(), rulings=(), page_id="p1", width=612, height=792, normalized=True):
    page = PageLayout(
        page_id=page_id,
        width=width,
        height=height,
        tokens=tuple(tokens),
        rulings=tuple(rulings),
    )
    return normalize_layout(page) if normalized else page


def grid_tokens(n_rows, n_cols, x0=100, y0=100, cell_w=40, cell_h=12, gap_x=20, gap_y=6, text="7"):
    """Token lattice: one token per cell, top-left at (x0, y0).

    The default row gap (6) stays below the base models' row_gap_min so a
    grid reads as one whitespace block; pass a larger gap_y to exercise the
    shattered-block regime.
    """
    out = []
    for r in range(n_rows):
        for c in range(n_cols):
            tx = x0 + c * (cell_w + gap_x)
            ty = y0 + r * (cell_h + gap_y)
            out.append(make_token(f"t{r}_{c}", tx, ty, tx + cell_w, ty + cell_h, text))
    return out


@pytest.fixture
def grid_page():
    def build(n_rows, n_cols, **kwargs):
        return make_page(grid_tokens(n_rows, n_cols, **kwargs))

    return build


def state_fingerprint(state) -> str:
    """Canonical digestible form of a whole ProjectState."""
    from tablekit.project import record_to_dict
    from tablekit.structure import grid_to_annotation

    doc = {
        "meta": [state.project_id, state.name, state.active_model, state.page_order, state.stale],
        "pages": {pid: serialize_page(p) for pid, p in state.pages.items()},
        "extractions": {
            pid: [e.model_version, [grid_to_annotation(g) for g in e.grids]]
            for pid, e in state.extractions.items()
        },
        "labels": {
            pid: [record_to_dict(r) for r in revs] for pid, revs in state.labels.items()
        },
        "assignments": [[a.page_id, a.template_id] for a in state.assignments],
        "recommendations": [[r.page_id, r.template_id, r.kind] for r in state.recommendations],
    }
    return json.dumps(doc, sort_keys=True)


def pytest_runtest_logreport(report):
    """One visible PASS/FAIL line per acceptance criterion."""
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"[ACCEPTANCE] {name}: {outcome} ({report.duration:.1f}s)", file=sys.__stdout__)
