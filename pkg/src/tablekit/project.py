"""Project persistence and orchestration.

A project lives in one directory of versioned state snapshots:

    <store>/models/<version>.json        shared model registry
    <store>/projects/<pid>/CURRENT       name of the live snapshot directory
    <store>/projects/<pid>/v<N>/         one complete state:
        project.json                     id, name, active model, page order
        pages/<page_id>.json             page-layout schema
        extractions/<page_id>.json       regions + grids for one model version
        labels/<page_id>.json            label record revisions
        templates.json                   assignments + recommendations

Every mutation builds the next v<N> in full and then atomically swaps
CURRENT, so a crash at any point leaves the previous or the new complete
state. Mutations on one project are serialized by a per-project lock; jobs
(extraction, finetuning) run on a worker thread and are polled.
"""

from __future__ import annotations

import copy
import io
import json
import logging
import os
import shutil
import threading
import uuid
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .editor import (
    Editor,
    LabeledTable,
    LabelRecord,
    TokenOverride,
    apply_overrides,
    new_record,
)
from .errors import (
    BusyError,
    ConflictError,
    NotFoundError,
    SchemaError,
    TableKitError,
    TrainingError,
)
from .extract import TableRegion, detect_cells, detect_tables, page_confidence
from .finetune import finetune_model
from .geometry import BBox
from .layout import PageLayout, parse_page_file, serialize_page
from .registry import ModelRegistry, ModelRegistryEntry
from .structure import TableGrid, build_grid, from_annotation, grid_to_annotation, to_html
from .templates import (
    DEFAULT_CUT,
    Recommendation,
    TemplateAssignment,
    cluster_templates,
    embed_page,
    recommend_labels,
)

log = logging.getLogger(__name__)

JOB_IDLE = "idle"
JOB_EXTRACTING = "extracting"
JOB_FINETUNING = "finetuning"


# --- state ------------------------------------------------------------------------


@dataclass
class Extraction:
    model_version: str
    regions: list[TableRegion]
    grids: list[TableGrid]


@dataclass
class ProjectState:
    project_id: str
    name: str
    active_model: str
    page_order: list[str] = field(default_factory=list)
    pages: dict[str, PageLayout] = field(default_factory=dict)
    extractions: dict[str, Extraction] = field(default_factory=dict)
    labels: dict[str, list[LabelRecord]] = field(default_factory=dict)
    assignments: list[TemplateAssignment] = field(default_factory=list)
    recommendations: list[Recommendation] = field(default_factory=list)
    template_cut: float = DEFAULT_CUT
    stale: bool = False

    def latest_label(self, page_id: str) -> Optional[LabelRecord]:
        revisions = self.labels.get(page_id)
        return revisions[-1] if revisions else None

    def labelled_pages(self) -> set[str]:
        return {pid for pid, revs in self.labels.items() if revs}

    def submitted_records(self) -> list[LabelRecord]:
        out = []
        for pid in sorted(self.labels):
            for rec in self.labels[pid]:
                if rec.status == "submitted":
                    out.append(rec)
        # train on the latest submitted revision per page
        latest: dict[str, LabelRecord] = {}
        for rec in out:
            latest[rec.page_id] = rec
        return [latest[pid] for pid in sorted(latest)]


# --- (de)serialization ---------------------------------------------------------------


def _region_to_dict(r: TableRegion) -> dict:
    return {"table_id": r.table_id, "bbox": r.bbox.as_list(), "confidence": r.confidence}


def _region_from_dict(doc: dict) -> TableRegion:
    return TableRegion(
        table_id=doc["table_id"],
        bbox=BBox.from_list(doc["bbox"]),
        confidence=doc["confidence"],
    )


def record_to_dict(rec: LabelRecord) -> dict:
    return {
        "page_id": rec.page_id,
        "model_version": rec.model_version,
        "status": rec.status,
        "tables": [
            {"region": _region_to_dict(t.region), "grid": grid_to_annotation(t.grid)}
            for t in rec.tables
        ],
        "initial_tables": [
            {"region": _region_to_dict(t.region), "grid": grid_to_annotation(t.grid)}
            for t in rec.initial_tables
        ],
        "token_overrides": {
            tid: {"text": o.text, "bbox": o.bbox.as_list()}
            for tid, o in sorted(rec.token_overrides.items())
        },
        "edit_log": list(rec.edit_log),
    }


def record_from_dict(doc: dict) -> LabelRecord:
    def tables(key: str) -> list[LabeledTable]:
        return [
            LabeledTable(
                region=_region_from_dict(item["region"]),
                grid=from_annotation(item["grid"]),
            )
            for item in doc[key]
        ]

    return LabelRecord(
        page_id=doc["page_id"],
        model_version=doc["model_version"],
        tables=tables("tables"),
        initial_tables=tables("initial_tables"),
        status=doc["status"],
        token_overrides={
            tid: TokenOverride(text=o["text"], bbox=BBox.from_list(o["bbox"]))
            for tid, o in doc["token_overrides"].items()
        },
        edit_log=list(doc["edit_log"]),
    )


def _dump(doc) -> str:
    return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


class CrashInjected(RuntimeError):
    """Raised by the test fault hook to simulate dying mid-commit."""


class ProjectStore:
    """Versioned on-disk store with atomic whole-project swaps."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "projects").mkdir(parents=True, exist_ok=True)
        self.registry = ModelRegistry(self.root / "models")
        # test hook: called with (step_name, project_id) at every commit step
        self.fault_hook: Optional[Callable[[str, str], None]] = None

    # -- layout helpers ----------------------------------------------------

    def _project_dir(self, project_id: str) -> Path:
        return self.root / "projects" / project_id

    def list_projects(self) -> list[str]:
        return sorted(
            p.name for p in (self.root / "projects").iterdir() if (p / "CURRENT").exists()
        )

    # -- load ----------------------------------------------------------------

    def load(self, project_id: str) -> ProjectState:
        pdir = self._project_dir(project_id)
        current = pdir / "CURRENT"
        if not current.exists():
            raise NotFoundError(f"unknown project {project_id}")
        vdir = pdir / current.read_text(encoding="utf-8").strip()
        meta = json.loads((vdir / "project.json").read_text(encoding="utf-8"))
        state = ProjectState(
            project_id=meta["project_id"],
            name=meta["name"],
            active_model=meta["active_model"],
            page_order=list(meta["page_order"]),
            template_cut=meta.get("template_cut", DEFAULT_CUT),
            stale=meta.get("stale", False),
        )
        for pid in state.page_order:
            raw = (vdir / "pages" / f"{pid}.json").read_bytes()
            state.pages[pid] = parse_page_file(raw)
            epath = vdir / "extractions" / f"{pid}.json"
            if epath.exists():
                doc = json.loads(epath.read_text(encoding="utf-8"))
                state.extractions[pid] = Extraction(
                    model_version=doc["model_version"],
                    regions=[_region_from_dict(r) for r in doc["regions"]],
                    grids=[from_annotation(g) for g in doc["grids"]],
                )
            lpath = vdir / "labels" / f"{pid}.json"
            if lpath.exists():
                doc = json.loads(lpath.read_text(encoding="utf-8"))
                state.labels[pid] = [record_from_dict(r) for r in doc["revisions"]]
        tpath = vdir / "templates.json"
        if tpath.exists():
            doc = json.loads(tpath.read_text(encoding="utf-8"))
            state.assignments = [
                TemplateAssignment(a["page_id"], a["template_id"], a["distance_to_medoid"])
                for a in doc["assignments"]
            ]
            state.recommendations = [
                Recommendation(r["page_id"], r["template_id"], r["kind"])
                for r in doc["recommendations"]
            ]
        return state

    # -- commit ----------------------------------------------------------------

    def _fault(self, step: str, project_id: str) -> None:
        if self.fault_hook is not None:
            self.fault_hook(step, project_id)

    def commit(self, state: ProjectState) -> None:
        """Write the full state as the next version and swap CURRENT atomically."""
        pdir = self._project_dir(state.project_id)
        pdir.mkdir(parents=True, exist_ok=True)
        current = pdir / "CURRENT"
        old = current.read_text(encoding="utf-8").strip() if current.exists() else None
        seq = int(old[1:]) + 1 if old else 1
        vname = f"v{seq}"
        vdir = pdir / vname
        if vdir.exists():  # leftover from an earlier crash
            shutil.rmtree(vdir)
        (vdir / "pages").mkdir(parents=True)
        (vdir / "extractions").mkdir()
        (vdir / "labels").mkdir()

        self._fault("begin", state.project_id)
        meta = {
            "project_id": state.project_id,
            "name": state.name,
            "active_model": state.active_model,
            "page_order": list(state.page_order),
            "template_cut": state.template_cut,
            "stale": state.stale,
        }
        (vdir / "project.json").write_text(_dump(meta), encoding="utf-8")
        for pid in state.page_order:
            (vdir / "pages" / f"{pid}.json").write_text(
                serialize_page(state.pages[pid]), encoding="utf-8"
            )
        self._fault("pages_written", state.project_id)
        for pid, ext in sorted(state.extractions.items()):
            doc = {
                "page_id": pid,
                "model_version": ext.model_version,
                "regions": [_region_to_dict(r) for r in ext.regions],
                "grids": [grid_to_annotation(g) for g in ext.grids],
            }
            (vdir / "extractions" / f"{pid}.json").write_text(_dump(doc), encoding="utf-8")
        for pid, revisions in sorted(state.labels.items()):
            doc = {"revisions": [record_to_dict(r) for r in revisions]}
            (vdir / "labels" / f"{pid}.json").write_text(_dump(doc), encoding="utf-8")
        self._fault("extractions_written", state.project_id)
        tdoc = {
            "cut": state.template_cut,
            "assignments": [
                {
                    "page_id": a.page_id,
                    "template_id": a.template_id,
                    "distance_to_medoid": a.distance_to_medoid,
                }
                for a in state.assignments
            ],
            "recommendations": [
                {"page_id": r.page_id, "template_id": r.template_id, "kind": r.kind}
                for r in state.recommendations
            ],
        }
        (vdir / "templates.json").write_text(_dump(tdoc), encoding="utf-8")
        self._fault("state_written", state.project_id)

        tmp = pdir / "CURRENT.tmp"
        tmp.write_text(vname, encoding="utf-8")
        self._fault("pointer_staged", state.project_id)
        os.replace(tmp, current)
        self._fault("pointer_swapped", state.project_id)
        if old:
            shutil.rmtree(pdir / old, ignore_errors=True)


# --- jobs ------------------------------------------------------------------------


@dataclass
class Job:
    job_id: str
    project_id: str
    kind: str
    state: str = "running"  # running | done | error
    progress: float = 0.0
    error: Optional[str] = None
    error_code: Optional[str] = None


class JobTable:
    def __init__(self):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._seq = 0

    def create(self, project_id: str, kind: str) -> Job:
        with self._lock:
            self._seq += 1
            job = Job(job_id=f"job-{self._seq}", project_id=project_id, kind=kind)
            self._jobs[job.job_id] = job
            return job

    def update(self, job_id: str, **changes) -> None:
        with self._lock:
            job = self._jobs[job_id]
            for key, value in changes.items():
                setattr(job, key, value)

    def get(self, job_id: str) -> Job:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise NotFoundError(f"unknown job {job_id}")
            return replace(job)


# --- service ----------------------------------------------------------------------


class ProjectService:
    """The workbench backend: projects, jobs, extraction, labels, finetuning."""

    def __init__(self, root: str | Path, default_model: str | None = None):
        self.store = ProjectStore(root)
        self.registry = self.store.registry
        self.default_model = default_model or "base-balanced"
        self.jobs = JobTable()
        self._states: dict[str, ProjectState] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._job_state: dict[str, tuple[str, float]] = {}
        self._meta_lock = threading.RLock()
        for pid in self.store.list_projects():
            self._states[pid] = self.store.load(pid)

    # -- internals ---------------------------------------------------------

    def _lock_for(self, project_id: str) -> threading.RLock:
        with self._meta_lock:
            return self._locks.setdefault(project_id, threading.RLock())

    def _state(self, project_id: str) -> ProjectState:
        state = self._states.get(project_id)
        if state is None:
            raise NotFoundError(f"unknown project {project_id}")
        return state

    def job_state(self, project_id: str) -> tuple[str, float]:
        self._state(project_id)
        return self._job_state.get(project_id, (JOB_IDLE, 0.0))

    def _require_idle(self, project_id: str) -> None:
        current, _ = self.job_state(project_id)
        if current != JOB_IDLE:
            raise BusyError(f"project is busy: {current}")

    def _set_job_state(self, project_id: str, state: str, progress: float = 0.0) -> None:
        if state == JOB_IDLE:
            self._job_state.pop(project_id, None)
        else:
            self._job_state[project_id] = (state, progress)

    # -- project lifecycle ----------------------------------------------------

    def create_project(self, name: str) -> str:
        if not name or not isinstance(name, str):
            raise SchemaError("project name must be a non-empty string")
        project_id = f"p-{uuid.uuid4().hex[:10]}"
        state = ProjectState(
            project_id=project_id, name=name, active_model=self.default_model
        )
        with self._lock_for(project_id):
            self.store.commit(state)
            self._states[project_id] = state
        return project_id

    def get_project(self, project_id: str) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            job, progress = self.job_state(project_id)
            return {
                "project_id": state.project_id,
                "name": state.name,
                "active_model": state.active_model,
                "page_count": len(state.page_order),
                "stale": state.stale,
                "job_state": job,
                "job_progress": progress,
            }

    # -- documents ---------------------------------------------------------------

    def add_documents(
        self, project_id: str, files: Sequence[bytes | str], autostart: bool = True
    ) -> dict:
        """Atomic batch add: any invalid file rejects the whole batch."""
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_idle(project_id)
            parsed: list[PageLayout] = []
            diagnostics: list[dict] = []
            seen = set(state.page_order)
            for i, data in enumerate(files):
                try:
                    page = parse_page_file(data)
                    if page.page_id in seen:
                        raise ConflictError(f"duplicate page_id {page.page_id}")
                    seen.add(page.page_id)
                    parsed.append(page)
                except TableKitError as exc:
                    diagnostics.append(
                        {"file_index": i, "code": exc.code, "message": str(exc)}
                    )
            if diagnostics:
                exc = SchemaError(
                    "batch rejected: "
                    + "; ".join(f"file {d['file_index']}: {d['message']}" for d in diagnostics)
                )
                exc.diagnostics = diagnostics
                raise exc
            from .layout import normalize_layout

            for page in parsed:
                state.pages[page.page_id] = normalize_layout(page)
                state.page_order.append(page.page_id)
            self.store.commit(state)
        job_id = None
        if autostart and parsed:
            job_id = self.run_extraction(project_id)
        return {"added": len(parsed), "job_id": job_id}

    # -- extraction -----------------------------------------------------------------

    def _extract_state(self, state: ProjectState, progress=None) -> None:
        """Extract pending pages with the active model, then recluster and
        re-recommend. Mutates state in place."""
        params = self.registry.params(state.active_model)
        pending = [
            pid
            for pid in state.page_order
            if pid not in state.extractions
            or state.extractions[pid].model_version != state.active_model
        ]
        for i, pid in enumerate(pending):
            page = state.pages[pid]
            regions = detect_tables(params, page)
            grids = [build_grid(r, detect_cells(params, page, r), page) for r in regions]
            state.extractions[pid] = Extraction(
                model_version=state.active_model, regions=regions, grids=grids
            )
            if progress:
                progress(0.8 * (i + 1) / max(1, len(pending)))
        embeddings = {
            pid: embed_page(state.pages[pid], state.extractions[pid].regions)
            for pid in state.page_order
        }
        state.assignments = cluster_templates(embeddings, state.template_cut)
        confidences = {
            pid: page_confidence(state.extractions[pid].regions)
            for pid in state.page_order
        }
        state.recommendations = recommend_labels(
            state.assignments, confidences, state.labelled_pages()
        )
        state.stale = False

    def run_extraction(self, project_id: str) -> str:
        """Queue the extract job; returns a job id to poll."""
        with self._lock_for(project_id):
            self._state(project_id)
            self._require_idle(project_id)
            job = self.jobs.create(project_id, "extract")
            self._set_job_state(project_id, JOB_EXTRACTING, 0.0)
        thread = threading.Thread(
            target=self._run_extraction_job, args=(job.job_id, project_id), daemon=True
        )
        thread.start()
        return job.job_id

    def _run_extraction_job(self, job_id: str, project_id: str) -> None:
        # work happens on a snapshot so readers never block on the job; the
        # busy flag keeps other mutators out until the swap below
        try:
            with self._lock_for(project_id):
                state = copy.deepcopy(self._state(project_id))

            def progress(frac: float) -> None:
                self._set_job_state(project_id, JOB_EXTRACTING, frac)
                self.jobs.update(job_id, progress=frac)

            self._extract_state(state, progress)
            with self._lock_for(project_id):
                self.store.commit(state)
                self._states[project_id] = state
            self.jobs.update(job_id, state="done", progress=1.0)
        except Exception as exc:  # report through the job, never swallow silently
            log.exception("extraction job failed")
            code = exc.code if isinstance(exc, TableKitError) else "internal"
            self.jobs.update(job_id, state="error", error=str(exc), error_code=code)
        finally:
            self._set_job_state(project_id, JOB_IDLE)

    def run_extraction_sync(self, project_id: str) -> None:
        """CLI path: same work as the job, on the caller's thread."""
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_idle(project_id)
            self._extract_state(state)
            self.store.commit(state)

    # -- page reads --------------------------------------------------------------

    def _page_summary(self, state: ProjectState, pid: str) -> dict:
        ext = state.extractions.get(pid)
        conf = page_confidence(ext.regions) if ext else None
        assignment = next((a for a in state.assignments if a.page_id == pid), None)
        rec = next((r for r in state.recommendations if r.page_id == pid), None)
        label = state.latest_label(pid)
        return {
            "page_id": pid,
            "table_count": len(ext.regions) if ext else 0,
            "confidence": conf,
            "template_id": assignment.template_id if assignment else None,
            "recommendation": rec.kind if rec else None,
            "labelled": label is not None,
            "label_status": label.status if label else None,
        }

    def list_pages(self, project_id: str) -> list[dict]:
        """Summaries ordered impact first, then easy, then ascending confidence."""
        with self._lock_for(project_id):
            state = self._state(project_id)
            if not state.extractions and state.page_order:
                raise ConflictError("extraction has not run yet")
            summaries = [self._page_summary(state, pid) for pid in state.page_order]

        def sort_key(s):
            kind_rank = {"impact": 0, "easy": 1}.get(s["recommendation"], 2)
            conf = s["confidence"]
            return (kind_rank, conf is None, conf if conf is not None else 0.0, s["page_id"])

        return sorted(summaries, key=sort_key)

    def get_page(self, project_id: str, page_id: str) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            if page_id not in state.pages:
                raise NotFoundError(f"unknown page {page_id}")
            page = state.pages[page_id]
            label = state.latest_label(page_id)
            ext = state.extractions.get(page_id)
            if label is not None:
                shown = [
                    {"region": _region_to_dict(t.region), "grid": grid_to_annotation(t.grid),
                     "html": to_html(t.grid)}
                    for t in label.tables
                ]
            elif ext is not None:
                shown = [
                    {"region": _region_to_dict(r), "grid": grid_to_annotation(g),
                     "html": to_html(g)}
                    for r, g in zip(ext.regions, ext.grids)
                ]
            else:
                shown = []
            display_page = page
            if label is not None:
                display_page = apply_overrides(page, label.token_overrides)
            return {
                "summary": self._page_summary(state, page_id),
                "layout": json.loads(serialize_page(display_page)),
                "tables": shown,
                "label_status": label.status if label else None,
                "edit_log": list(label.edit_log) if label else [],
            }

    # -- label operations -----------------------------------------------------------

    def _editor_for(self, state: ProjectState, page_id: str) -> Editor:
        params = self.registry.params(state.active_model)
        return Editor(
            state.pages[page_id], params, lambda version: self.registry.params(version)
        )

    def _working_record(self, state: ProjectState, page_id: str) -> tuple[LabelRecord, bool]:
        latest = state.latest_label(page_id)
        if latest is not None and latest.status == "draft":
            return latest, False
        # first edit (or an edit after submit) starts a fresh draft revision
        # seeded from the current extraction
        ext = state.extractions.get(page_id)
        if ext is None:
            raise ConflictError("extraction has not run for this page yet")
        return new_record(page_id, list(zip(ext.regions, ext.grids)), ext.model_version), True

    def apply_op(self, project_id: str, page_id: str, op: str, args: dict) -> dict:
        """Run one editor operation against the page's working draft.

        State is only touched once the operation succeeds, so a rejected op
        leaves no trace in memory or on disk.
        """
        with self._lock_for(project_id):
            state = self._state(project_id)
            if page_id not in state.pages:
                raise NotFoundError(f"unknown page {page_id}")
            self._require_idle(project_id)
            editor = self._editor_for(state, page_id)
            rec, is_new = self._working_record(state, page_id)
            updated = self._dispatch_op(editor, rec, op, args)
            revisions = state.labels.setdefault(page_id, [])
            if is_new:
                revisions.append(updated)
            else:
                revisions[-1] = updated
            # recommendations treat a page as labelled once any revision exists
            confidences = {
                pid: page_confidence(state.extractions[pid].regions)
                if pid in state.extractions
                else None
                for pid in state.page_order
            }
            if state.assignments:
                state.recommendations = recommend_labels(
                    state.assignments, confidences, state.labelled_pages()
                )
            self.store.commit(state)
            return {
                "page_id": page_id,
                "status": updated.status,
                "tables": [
                    {"region": _region_to_dict(t.region), "grid": grid_to_annotation(t.grid),
                     "html": to_html(t.grid)}
                    for t in updated.tables
                ],
                "edit_log": list(updated.edit_log),
            }

    @staticmethod
    def _dispatch_op(editor: Editor, rec: LabelRecord, op: str, args: dict) -> LabelRecord:
        def want(*names):
            missing = [n for n in names if n not in args]
            if missing:
                raise SchemaError(f"missing field '{missing[0]}' for op {op}")
            return [args[n] for n in names]

        if op == "set_table_bbox":
            table_id, bbox = want("table_id", "bbox")
            return editor.set_table_bbox(rec, table_id, BBox.from_list(bbox))
        if op == "add_table":
            (bbox,) = want("bbox")
            return editor.add_table(rec, BBox.from_list(bbox))
        if op == "delete_table":
            (table_id,) = want("table_id")
            return editor.delete_table(rec, table_id)
        if op == "merge_cells":
            table_id, cell_ids = want("table_id", "cell_ids")
            return editor.merge_cells(rec, table_id, cell_ids)
        if op == "split_cell":
            table_id, cell_id, axis, count = want("table_id", "cell_id", "axis", "count")
            return editor.split_cell(rec, table_id, cell_id, axis, count)
        if op == "merge_rows":
            table_id, rows = want("table_id", "row_indices")
            return editor.merge_rows(rec, table_id, rows)
        if op == "merge_cols":
            table_id, cols = want("table_id", "col_indices")
            return editor.merge_cols(rec, table_id, cols)
        if op == "split_row":
            table_id, row_index, boundary = want("table_id", "row_index", "boundary_y")
            return editor.split_row(rec, table_id, row_index, boundary)
        if op == "split_col":
            table_id, col_index, boundary = want("table_id", "col_index", "boundary_x")
            return editor.split_col(rec, table_id, col_index, boundary)
        if op == "move_text_chunk":
            table_id, token_ids, target = want("table_id", "token_ids", "target_cell_id")
            return editor.move_text_chunk(rec, table_id, token_ids, target)
        if op == "edit_token":
            token_id, text, bbox = want("token_id", "text", "bbox")
            return editor.edit_token(rec, token_id, text, BBox.from_list(bbox))
        if op == "submit":
            return editor.submit(rec)
        raise NotFoundError(f"unknown operation {op}")

    # -- models ------------------------------------------------------------------------

    def list_models(self) -> list[dict]:
        out = []
        for entry in self.registry.list_entries():
            out.append(
                {
                    "version_id": entry.version_id,
                    "parent_id": entry.parent_id,
                    "training_pages": list(entry.training_pages),
                    "metrics": dict(entry.metrics),
                }
            )
        return out

    def select_model(self, project_id: str, version_id: str) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_idle(project_id)
            if version_id not in self.registry:
                raise NotFoundError(f"unknown model version {version_id}")
            if version_id == state.active_model:
                return {"active_model": version_id, "stale": state.stale}
            state.active_model = version_id
            state.stale = True
            self.store.commit(state)
            return {"active_model": version_id, "stale": True}

    # -- finetune -----------------------------------------------------------------------

    def _finetune_state(self, state: ProjectState, base_version: str, progress=None) -> ModelRegistryEntry:
        records = state.submitted_records()
        if not records:
            raise TrainingError("nothing to train on")
        base = self.registry.params(base_version)
        version_id = self.registry.next_version_id()
        if progress:
            progress(0.1)
        params, metrics = finetune_model(records, state.pages, base, version_id)
        entry = ModelRegistryEntry(
            version_id=version_id,
            params=params,
            parent_id=base_version,
            training_pages=[r.page_id for r in records],
            metrics=metrics,
        )
        self.registry.register(entry)
        if progress:
            progress(0.6)
        state.active_model = version_id
        state.stale = True
        self._extract_state(state)  # apply the customized model to the collection
        return entry

    def run_finetune(self, project_id: str, base_version: str | None = None) -> str:
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_idle(project_id)
            if not state.submitted_records():
                raise TrainingError("nothing to train on")
            base = base_version or state.active_model
            if base not in self.registry:
                raise NotFoundError(f"unknown model version {base}")
            job = self.jobs.create(project_id, "finetune")
            self._set_job_state(project_id, JOB_FINETUNING, 0.0)
        thread = threading.Thread(
            target=self._run_finetune_job, args=(job.job_id, project_id, base), daemon=True
        )
        thread.start()
        return job.job_id

    def _run_finetune_job(self, job_id: str, project_id: str, base: str) -> None:
        try:
            with self._lock_for(project_id):
                state = copy.deepcopy(self._state(project_id))

            def progress(frac: float) -> None:
                self._set_job_state(project_id, JOB_FINETUNING, frac)
                self.jobs.update(job_id, progress=frac)

            self._finetune_state(state, base, progress)
            with self._lock_for(project_id):
                self.store.commit(state)
                self._states[project_id] = state
            self.jobs.update(job_id, state="done", progress=1.0)
        except Exception as exc:
            log.exception("finetune job failed")
            code = exc.code if isinstance(exc, TableKitError) else "internal"
            self.jobs.update(job_id, state="error", error=str(exc), error_code=code)
        finally:
            self._set_job_state(project_id, JOB_IDLE)

    def run_finetune_sync(self, project_id: str, base_version: str | None = None) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            self._require_idle(project_id)
            base = base_version or state.active_model
            entry = self._finetune_state(state, base)
            self.store.commit(state)
            return {"version_id": entry.version_id, "metrics": dict(entry.metrics)}

    # -- export / progress ------------------------------------------------------------

    def export_annotations(self, project_id: str) -> bytes:
        """Deterministic zip: annotations/<page>.json per labelled page + manifest."""
        with self._lock_for(project_id):
            state = self._state(project_id)
            files: list[tuple[str, str]] = []
            statuses = {}
            for pid in sorted(state.labelled_pages()):
                rec = state.latest_label(pid)
                statuses[pid] = rec.status
                doc = [grid_to_annotation(t.grid) for t in rec.tables]
                files.append((f"annotations/{pid}.json", _dump(doc)))
            manifest = {
                "project_id": state.project_id,
                "model_version": state.active_model,
                "pages": statuses,
            }
            files.append(("manifest.json", _dump(manifest)))
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
            for name, payload in sorted(files):
                info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
                zf.writestr(info, payload)
        return buf.getvalue()

    def get_progress(self, project_id: str) -> dict:
        with self._lock_for(project_id):
            state = self._state(project_id)
            labelled = state.labelled_pages()
            submitted = {
                pid
                for pid in labelled
                if any(r.status == "submitted" for r in state.labels[pid])
            }
            remaining = [
                r for r in state.recommendations if r.page_id not in labelled
            ]
            job, progress = self.job_state(project_id)
            return {
                "pages": len(state.page_order),
                "labelled": len(labelled),
                "submitted": len(submitted),
                "recommended_remaining": len(remaining),
                "job_state": job,
                "job_progress": progress,
            }


def import_annotation_archive(data: bytes) -> dict[str, list[TableGrid]]:
    """Parse an exported archive back into grids keyed by page id."""
    out: dict[str, list[TableGrid]] = {}
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        for name in zf.namelist():
            if not name.startswith("annotations/"):
                continue
            pid = Path(name).stem
            records = json.loads(zf.read(name).decode("utf-8"))
            out[pid] = [from_annotation(r) for r in records]
    return out
