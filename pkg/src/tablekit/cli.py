"""Batch command-line interface.

Mirrors the HTTP API for scripted use: ingest pages, run extraction, print
recommendations, export annotations, finetune, and evaluate against a
ground-truth directory. `serve` starts the HTTP API; `gen-corpus` writes a
synthetic collection for experiments.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus import TemplateSpec, generate_collection, write_collection
from .errors import TableKitError
from .finetune import detection_prf, mean_grid_agreement
from .project import ProjectService
from .server import serve
from .structure import from_annotation


def _service(args) -> ProjectService:
    return ProjectService(args.store)


def _resolve_project(svc: ProjectService, name_or_id: str, create: bool = False) -> str:
    projects = {pid: svc.get_project(pid) for pid in svc.store.list_projects()}
    if name_or_id in projects:
        return name_or_id
    by_name = [pid for pid, meta in projects.items() if meta["name"] == name_or_id]
    if len(by_name) == 1:
        return by_name[0]
    if len(by_name) > 1:
        raise TableKitError(f"project name '{name_or_id}' is ambiguous: {by_name}")
    if create:
        return svc.create_project(name_or_id)
    raise TableKitError(f"unknown project '{name_or_id}'")


def cmd_ingest(args) -> int:
    svc = _service(args)
    project_id = _resolve_project(svc, args.project, create=True)
    files = [Path(f).read_bytes() for f in args.files]
    result = svc.add_documents(project_id, files, autostart=False)
    print(json.dumps({"project_id": project_id, "added": result["added"]}))
    return 0


def cmd_extract(args) -> int:
    svc = _service(args)
    project_id = _resolve_project(svc, args.project)
    svc.run_extraction_sync(project_id)
    progress = svc.get_progress(project_id)
    print(json.dumps({"project_id": project_id, "pages": progress["pages"]}))
    return 0


def cmd_recommend(args) -> int:
    svc = _service(args)
    project_id = _resolve_project(svc, args.project)
    pages = svc.list_pages(project_id)
    for page in pages:
        if page["recommendation"]:
            conf = page["confidence"]
            shown = f"{conf:.3f}" if conf is not None else "-"
            print(f"{page['recommendation']:7s} {page['page_id']} "
                  f"template={page['template_id']} confidence={shown}")
    return 0


def cmd_export(args) -> int:
    svc = _service(args)
    project_id = _resolve_project(svc, args.project)
    data = svc.export_annotations(project_id)
    Path(args.out).write_bytes(data)
    print(json.dumps({"project_id": project_id, "archive": args.out, "bytes": len(data)}))
    return 0


def cmd_finetune(args) -> int:
    svc = _service(args)
    project_id = _resolve_project(svc, args.project)
    result = svc.run_finetune_sync(project_id, args.base)
    print(json.dumps(result))
    return 0


def cmd_eval(args) -> int:
    """Detection F1 and grid agreement of the current extraction vs a truth dir."""
    svc = _service(args)
    project_id = _resolve_project(svc, args.project)
    state = svc._state(project_id)
    truth_dir = Path(args.truth)
    detections, truth_boxes, truth_grids, predictions = {}, {}, {}, {}
    for pid in state.page_order:
        tpath = truth_dir / "truth" / f"{pid}.json"
        if not tpath.exists():
            continue
        records = json.loads(tpath.read_text(encoding="utf-8"))
        grids = [from_annotation(r) for r in records]
        truth_boxes[pid] = [g.bbox for g in grids]
        truth_grids[pid] = [(g.bbox, g) for g in grids]
        ext = state.extractions.get(pid)
        regions = ext.regions if ext else []
        grids_pred = ext.grids if ext else []
        detections[pid] = [r.bbox for r in regions]
        predictions[pid] = [(r.bbox, g) for r, g in zip(regions, grids_pred)]
    precision, recall, f1 = detection_prf(detections, truth_boxes)
    agreement = mean_grid_agreement(predictions, truth_grids)
    print(json.dumps({
        "pages_evaluated": len(truth_boxes),
        "detection_precision": round(precision, 4),
        "detection_recall": round(recall, 4),
        "detection_f1": round(f1, 4),
        "mean_grid_agreement": round(agreement, 4),
    }))
    return 0


def cmd_serve(args) -> int:
    serve(_service(args), args.host, args.port)
    return 0


def cmd_gen_corpus(args) -> int:
    spec_docs = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    specs = [(TemplateSpec(**doc["template"]), doc["count"]) for doc in spec_docs]
    pages, manifest = generate_collection(specs)
    write_collection(pages, manifest, args.out)
    print(json.dumps({"pages": len(pages), "out": args.out}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tablekit", description="table-extraction workbench batch interface"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--store", required=True, help="store directory")
        p.add_argument("--project", required=True, help="project id or name")

    p = sub.add_parser("ingest", help="create/extend a project from page files")
    common(p)
    p.add_argument("files", nargs="+", help="page-layout JSON files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="run extraction + clustering + recommendations")
    common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("recommend", help="print label recommendations")
    common(p)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("export", help="write the annotation archive")
    common(p)
    p.add_argument("--out", required=True, help="output zip path")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("finetune", help="fit a new model from submitted labels")
    common(p)
    p.add_argument("--base", default=None, help="base model version (default: active)")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="score extraction against a ground-truth directory")
    common(p)
    p.add_argument("--truth", required=True, help="corpus directory with truth/")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP API")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gen-corpus", help="write a synthetic corpus with ground truth")
    p.add_argument("--spec", required=True, help="JSON list of {template, count}")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_corpus)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TableKitError as exc:
        print(f"error ({exc.code}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
