"""Acceptance gate: one test per criterion, at its stated scale and tolerance.

Each test prints a [ACCEPTANCE] PASS/FAIL line via the hook in conftest.py.
"""

import json
import random
import time

import pytest
import requests

from tablekit.corpus import TemplateSpec, generate_collection, generate_page
from tablekit.editor import Editor, new_record
from tablekit.extract import CellBox, ModelParams, detect_tables
from tablekit.finetune import detection_prf, finetune_model, mean_grid_agreement
from tablekit.layout import serialize_page
from tablekit.project import CrashInjected, ProjectService, ProjectStore, import_annotation_archive
from tablekit.registry import BASE_PARAM_SETS, ModelRegistryEntry
from tablekit.server import BackgroundServer
from tablekit.structure import build_grid, grid_to_annotation, validate_tiling
from tablekit.templates import KIND_EASY, KIND_IMPACT

from conftest import state_fingerprint
from oracles import grid_structure_oracle
from test_editor import make_manual_record, random_edit_sequence

# the two well-separated page templates used by the corpus-level criteria:
# disjoint projection-histogram supports, identical full-table aspect so one
# detection threshold calibrates both
SPEC_A = TemplateSpec(seed=9001, n_rows=4, n_cols=3, col_gap=10, row_gap=10)
SPEC_B = TemplateSpec(
    seed=9002, n_rows=4, n_cols=4, col_gap=10, row_gap=10,
    cell_width=38, cell_height=14, x_margin=300, y_margin=400,
)

# deliberately mis-set base for the one-round finetune criterion: column gaps
# far above the corpus' 10pt gaps, high threshold, weak weights
MISSET = ModelParams(
    weights=(0.75, 0.5, 0.5, 0.25, 0.375, 1.25, 0.125),
    bias=-0.5,
    detect_threshold=0.7,
    col_gap_min=24.0,
    row_gap_min=8.0,
    valley_frac=0.2,
    version_id="misset-demo",
)


# --- criterion: structure-oracle equivalence ------------------------------------


def acceptance_specs(count=200):
    out = []
    for s in range(count):
        n_rows = 1 + s % 6
        n_cols = 1 + (s // 6) % 6
        out.append(
            TemplateSpec(
                seed=5000 + s,
                n_rows=n_rows,
                n_cols=n_cols,
                col_gap=8 + (s % 4) * 4,
                row_gap=8 + ((s // 4) % 4) * 4,
                ruled=s % 5 == 0,
                header_span=s % 3 == 0 and n_cols >= 2 and n_rows >= 2,
            )
        )
    return out


def test_structure_oracle_equivalence():
    started = time.monotonic()
    mismatches = 0
    for spec in acceptance_specs(200):
        g = generate_page(spec)
        boxes = [
            CellBox(cell_id=c.cell_id, bbox=c.bbox, confidence=1.0) for c in g.grid.cells
        ]
        built = build_grid(g.region, boxes, g.page)
        exp_rows, exp_cols, exp_place = grid_structure_oracle(
            [(c.cell_id, c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1) for c in g.grid.cells]
        )
        got = {
            c.cell_id: (c.row, c.col, c.row_span, c.col_span)
            for c in built.cells
            if not c.cell_id.startswith("x")
        }
        truth = {c.cell_id: (c.row, c.col, c.row_span, c.col_span) for c in g.grid.cells}
        if (built.n_rows, built.n_cols) != (exp_rows, exp_cols):
            mismatches += 1
        elif got != exp_place or got != truth:
            mismatches += 1
    elapsed = time.monotonic() - started
    assert mismatches == 0
    assert elapsed < 10.0, f"structure oracle run took {elapsed:.1f}s"


# --- criterion: tiling fuzz -------------------------------------------------------


def test_tiling_fuzz_1000_sequences():
    total_applied = 0
    for seed in range(1000):
        rng = random.Random(70_000 + seed)
        _, editor, rec = make_manual_record(
            n_rows=rng.randint(1, 5), n_cols=rng.randint(1, 5)
        )
        # random_edit_sequence asserts the tiling invariant after every step
        rec, applied = random_edit_sequence(editor, rec, rng, steps=rng.randint(1, 20))
        total_applied += applied
        for t in rec.tables:
            assert validate_tiling(t.grid) == []
    assert total_applied > 3000  # the fuzz actually exercised operations


# --- criterion: template recovery ---------------------------------------------------


def build_corpus_service(tmp_path, base_version=None):
    pages, manifest = generate_collection([(SPEC_A, 20), (SPEC_B, 20)])
    svc = ProjectService(tmp_path / "store")
    project_id = svc.create_project("acceptance")
    svc.add_documents(
        project_id, [serialize_page(g.page) for g in pages], autostart=False
    )
    if base_version:
        svc.select_model(project_id, base_version)
    svc.run_extraction_sync(project_id)
    return svc, project_id, pages, manifest


def test_template_recovery_40_pages(tmp_path):
    svc, project_id, pages, manifest = build_corpus_service(tmp_path)
    state = svc._state(project_id)

    groups = {}
    for a in state.assignments:
        groups.setdefault(a.template_id, set()).add(a.page_id)
    assert len(groups) == 2
    for members in groups.values():
        assert len({manifest[p] for p in members}) == 1, "template mixes generators"

    recs = state.recommendations
    per_template = {}
    for r in recs:
        per_template.setdefault(r.template_id, []).append(r)
    assert set(per_template) == set(groups)
    from tablekit.extract import page_confidence

    confidences = {
        pid: page_confidence(state.extractions[pid].regions) for pid in state.page_order
    }
    for tid, rlist in per_template.items():
        assert len(rlist) == 2
        kinds = {r.kind: r.page_id for r in rlist}
        assert set(kinds) == {KIND_IMPACT, KIND_EASY}
        members = sorted(groups[tid])
        eligible = [p for p in members if confidences[p] is not None]
        assert kinds[KIND_IMPACT] == min(eligible, key=lambda p: (confidences[p], p))
        rest = [p for p in eligible if p != kinds[KIND_IMPACT]]
        assert kinds[KIND_EASY] == min(rest, key=lambda p: (-confidences[p], p))
        assert kinds[KIND_IMPACT] != kinds[KIND_EASY]


# --- criterion: one-round finetune ----------------------------------------------------


def scripted_corrections(svc, project_id, page_id, spec, truth):
    """Replace the wrong extraction with the true table, spreadsheet-style."""
    payload = svc.get_page(project_id, page_id)
    for t in payload["tables"]:
        svc.apply_op(project_id, page_id, "delete_table", {"table_id": t["region"]["table_id"]})
    out = svc.apply_op(project_id, page_id, "add_table", {"bbox": truth.region.bbox.as_list()})
    table_id = out["tables"][0]["region"]["table_id"]
    grid = out["tables"][0]["grid"]
    col_bounds = [
        spec.x_margin + (c + 1) * (spec.cell_width + spec.col_gap) - spec.col_gap / 2
        for c in range(spec.n_cols - 1)
    ]
    row_bounds = [
        spec.y_margin + (r + 1) * (spec.cell_height + spec.row_gap) - spec.row_gap / 2
        for r in range(spec.n_rows - 1)
    ]
    while grid["n_cols"] < spec.n_cols:
        idx = grid["n_cols"] - 1
        out = svc.apply_op(
            project_id, page_id, "split_col",
            {"table_id": table_id, "col_index": idx, "boundary_x": col_bounds[idx]},
        )
        grid = out["tables"][0]["grid"]
    while grid["n_rows"] < spec.n_rows:
        idx = grid["n_rows"] - 1
        out = svc.apply_op(
            project_id, page_id, "split_row",
            {"table_id": table_id, "row_index": idx, "boundary_y": row_bounds[idx]},
        )
        grid = out["tables"][0]["grid"]
    got = sorted((c["row"], c["col"], c["row_span"], c["col_span"]) for c in grid["cells"])
    want = sorted((c.row, c.col, c.row_span, c.col_span) for c in truth.grid.cells)
    assert got == want, "scripted corrections must reproduce the true structure"
    svc.apply_op(project_id, page_id, "submit", {})


def held_out_metrics(svc, project_id, pages, held_out_ids):
    state = svc._state(project_id)
    truth_boxes = {}
    truth_grids = {}
    detections = {}
    predictions = {}
    by_id = {g.page.page_id: g for g in pages}
    for pid in held_out_ids:
        g = by_id[pid]
        truth_boxes[pid] = [g.region.bbox]
        truth_grids[pid] = [(g.region.bbox, g.grid)]
        ext = state.extractions[pid]
        detections[pid] = [r.bbox for r in ext.regions]
        predictions[pid] = list(zip([r.bbox for r in ext.regions], ext.grids))
    f1 = detection_prf(detections, truth_boxes)[2]
    agreement = mean_grid_agreement(predictions, truth_grids)
    return f1, agreement


def test_one_round_finetune(tmp_path):
    started = time.monotonic()
    pages, manifest = generate_collection([(SPEC_A, 20), (SPEC_B, 20)])
    svc = ProjectService(tmp_path / "store")
    svc.registry.register(ModelRegistryEntry(version_id="misset-demo", params=MISSET))
    project_id = svc.create_project("one-round")
    svc.add_documents(project_id, [serialize_page(g.page) for g in pages], autostart=False)
    svc.select_model(project_id, "misset-demo")
    svc.run_extraction_sync(project_id)

    state = svc._state(project_id)
    recommended = [r.page_id for r in state.recommendations]
    assert 1 <= len(recommended) <= 4
    held_out = [g.page.page_id for g in pages if g.page.page_id not in recommended]
    assert len(held_out) == 40 - len(recommended)

    f1_before, agreement_before = held_out_metrics(svc, project_id, pages, held_out)
    assert f1_before <= 0.5, f"mis-set base should extract badly, F1={f1_before}"
    assert agreement_before <= 0.5

    by_id = {g.page.page_id: g for g in pages}
    for pid in recommended:
        spec = SPEC_A if manifest[pid] == 0 else SPEC_B
        scripted_corrections(svc, project_id, pid, spec, by_id[pid])

    svc.run_finetune_sync(project_id)

    f1_after, agreement_after = held_out_metrics(svc, project_id, pages, held_out)
    elapsed = time.monotonic() - started
    assert f1_after >= 0.95, f"held-out detection F1 {f1_after}"
    assert agreement_after >= 0.95, f"held-out grid agreement {agreement_after}"
    assert elapsed < 60.0, f"one-round finetune took {elapsed:.1f}s"


# --- criterion: non-degradation --------------------------------------------------------


def test_non_degradation_20_configs():
    bases = [
        BASE_PARAM_SETS["base-balanced"],
        BASE_PARAM_SETS["base-dense"],
        MISSET,
    ]
    rng = random.Random(424242)
    for trial in range(20):
        spec = TemplateSpec(
            seed=rng.randint(1, 10**6),
            n_rows=rng.randint(2, 4),
            n_cols=rng.randint(2, 4),
            col_gap=rng.choice([8, 10, 12]),
            row_gap=rng.choice([8, 10, 12]),
            ruled=rng.random() < 0.5,
            numeric_frac=rng.choice([0.2, 0.5, 0.8]),
        )
        count = rng.randint(2, 4)
        pages, _ = generate_collection([(spec, count)])
        base = rng.choice(bases)
        labelled = rng.sample(pages, rng.randint(1, count))
        records = []
        layouts = {g.page.page_id: g.page for g in pages}
        for g in labelled:
            editor = Editor(g.page, base)
            records.append(
                editor.submit(new_record(g.page.page_id, [(g.region, g.grid)], base.version_id))
            )
        train_pages = {r.page_id: layouts[r.page_id] for r in records}
        truths = {r.page_id: [t.region.bbox for t in r.tables] for r in records}

        def train_f1(params):
            dets = {
                pid: [r.bbox for r in detect_tables(params, page)]
                for pid, page in train_pages.items()
            }
            return detection_prf(dets, truths)[2]

        before = train_f1(base)
        fitted, _ = finetune_model(records, layouts, base, f"nd-{trial}")
        after = train_f1(fitted)
        assert after >= before - 1e-12, (
            f"trial {trial}: training F1 degraded {before} -> {after}"
        )


# --- criterion: round-trip export --------------------------------------------------------


def test_round_trip_export(tmp_path):
    svc, project_id, pages, _ = build_corpus_service(tmp_path)
    # label three pages, one with real edits
    targets = [g.page.page_id for g in pages[:3]]
    for i, pid in enumerate(targets):
        payload = svc.get_page(project_id, pid)
        grid = payload["tables"][0]["grid"] if payload["tables"] else None
        if i == 0 and grid and len(grid["cells"]) >= 2:
            cells = [c["cell_id"] for c in grid["cells"][:2]]
            rows = sorted({c["row"] for c in grid["cells"][:2]})
            if len(rows) == 1:
                svc.apply_op(
                    project_id, pid, "merge_cells",
                    {"table_id": grid["table_id"], "cell_ids": cells},
                )
        svc.apply_op(project_id, pid, "submit", {})

    one = svc.export_annotations(project_id)
    two = svc.export_annotations(project_id)
    assert one == two, "export must be byte-deterministic"

    imported = import_annotation_archive(one)
    state = svc._state(project_id)
    assert set(imported) == set(targets)
    for pid, grids in imported.items():
        rec = state.latest_label(pid)
        assert [grid_to_annotation(g) for g in grids] == [
            grid_to_annotation(t.grid) for t in rec.tables
        ]


# --- criterion: crash consistency ----------------------------------------------------------


CRASH_STEPS = [
    "begin", "pages_written", "extractions_written", "state_written",
    "pointer_staged", "pointer_swapped",
]


def test_crash_consistency_100_trials(tmp_path):
    root = tmp_path / "store"
    pages, _ = generate_collection([(TemplateSpec(seed=777, n_rows=3, n_cols=3, col_gap=10, row_gap=10, ruled=True), 2)])
    svc = ProjectService(root)
    project_id = svc.create_project("crashy")
    svc.add_documents(project_id, [serialize_page(g.page) for g in pages], autostart=False)
    svc.run_extraction_sync(project_id)
    token_ids = [t.id for t in pages[0].page.tokens]

    rng = random.Random(99)
    for trial in range(100):
        svc = ProjectService(root)
        pre = state_fingerprint(svc._state(project_id))
        step = rng.choice(CRASH_STEPS)

        def hook(at_step, _pid, step=step):
            if at_step == step:
                raise CrashInjected(at_step)

        svc.store.fault_hook = hook
        tid = rng.choice(token_ids)
        with pytest.raises(CrashInjected):
            svc.apply_op(
                project_id,
                pages[0].page.page_id,
                "edit_token",
                {
                    "token_id": tid,
                    "text": f"edit-{trial}",
                    "bbox": [5 + trial, 5, 45 + trial, 15],
                },
            )
        post = state_fingerprint(svc._state(project_id))  # fully mutated in memory
        svc.store.fault_hook = None

        recovered = ProjectStore(root).load(project_id)
        fp = state_fingerprint(recovered)
        assert fp in (pre, post), f"trial {trial} crashed at {step}: unexpected state"
        if step == "pointer_swapped":
            assert fp == post
        else:
            assert fp == pre


# --- criterion: full workflow over the API only -----------------------------------------------


def wait_job(base, project_id, job_id, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = requests.get(f"{base}/projects/{project_id}/jobs/{job_id}").json()
        if job["state"] != "running":
            return job
        time.sleep(0.05)
    raise TimeoutError(job_id)


def test_full_workflow_api_only(tmp_path):
    started = time.monotonic()
    ruled_a = TemplateSpec(seed=8101, n_rows=3, n_cols=3, col_gap=10, row_gap=10, ruled=True)
    ruled_b = TemplateSpec(
        seed=8202, n_rows=5, n_cols=2, col_gap=12, row_gap=8, ruled=True,
        cell_width=80, cell_height=18, x_margin=320, y_margin=360,
    )
    pages, _ = generate_collection([(ruled_a, 20), (ruled_b, 20)])
    docs = [json.loads(serialize_page(g.page)) for g in pages]

    service = ProjectService(tmp_path / "store")
    with BackgroundServer(service) as server:
        base = server.url
        project_id = requests.post(f"{base}/projects", json={"name": "workflow"}).json()["project_id"]

        body = requests.post(f"{base}/projects/{project_id}/documents", json={"files": docs}).json()
        assert body["added"] == 40
        assert wait_job(base, project_id, body["job_id"])["state"] == "done"

        listed = requests.get(f"{base}/projects/{project_id}/pages").json()["pages"]
        assert len(listed) == 40
        recommended = [p for p in listed if p["recommendation"]]
        assert 2 <= len(recommended) <= 4

        for page in recommended:
            pid = page["page_id"]
            payload = requests.get(f"{base}/projects/{project_id}/pages/{pid}").json()
            grid = payload["tables"][0]["grid"]
            row0 = [c for c in grid["cells"] if c["row"] == 0 and c["row_span"] == 1]
            if len(row0) >= 2:
                pair = [c["cell_id"] for c in row0[:2]]
                merged = requests.post(
                    f"{base}/projects/{project_id}/pages/{pid}/ops/merge_cells",
                    json={"table_id": grid["table_id"], "cell_ids": pair},
                )
                assert merged.status_code == 200
                kept = merged.json()["tables"][0]["grid"]["cells"]
                target = next(c for c in kept if c["cell_id"] == pair[0])
                split = requests.post(
                    f"{base}/projects/{project_id}/pages/{pid}/ops/split_cell",
                    json={
                        "table_id": grid["table_id"], "cell_id": pair[0],
                        "axis": "col", "count": target["col_span"],
                    },
                )
                assert split.status_code == 200
            done = requests.post(
                f"{base}/projects/{project_id}/pages/{pid}/ops/submit", json={}
            )
            assert done.status_code == 200

        job_id = requests.post(f"{base}/projects/{project_id}/finetune", json={}).json()["job_id"]
        assert wait_job(base, project_id, job_id, timeout=90)["state"] == "done"

        models = requests.get(f"{base}/models").json()["models"]
        assert any(m["version_id"].startswith("ft") for m in models)

        job_id = requests.post(f"{base}/projects/{project_id}/extract").json()["job_id"]
        assert wait_job(base, project_id, job_id)["state"] == "done"

        export_one = requests.get(f"{base}/projects/{project_id}/export").content
        export_two = requests.get(f"{base}/projects/{project_id}/export").content
        assert export_one == export_two

        imported = import_annotation_archive(export_one)
        assert set(imported) == {p["page_id"] for p in recommended}
        for pid, grids in imported.items():
            payload = requests.get(f"{base}/projects/{project_id}/pages/{pid}").json()
            assert [grid_to_annotation(g) for g in grids] == [t["grid"] for t in payload["tables"]]

        progress = requests.get(f"{base}/projects/{project_id}/progress").json()
        assert progress["pages"] == 40
        assert progress["submitted"] == len(recommended)
        assert progress["job_state"] == "idle"

    elapsed = time.monotonic() - started
    assert elapsed < 120.0, f"workflow took {elapsed:.1f}s"
