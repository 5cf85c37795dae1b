"""HTTP API over the project service.

Built on the standard library's threading HTTP server; request and response
bodies are JSON mirroring the project-service schemas. Errors always carry
``{"error": {"code": ..., "message": ...}}``.

Routes:
    POST /projects                          {"name": ...}
    GET  /projects/{id}
    POST /projects/{id}/documents           {"files": [page-layout objects]}
    POST /projects/{id}/extract
    GET  /projects/{id}/pages
    GET  /projects/{id}/pages/{pid}
    POST /projects/{id}/pages/{pid}/ops/{op}
    POST /projects/{id}/finetune            {"base_version": optional}
    GET  /projects/{id}/jobs/{job}
    GET  /models
    POST /projects/{id}/model               {"version_id": ...}
    GET  /projects/{id}/export              (application/zip)
    GET  /projects/{id}/progress
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .errors import (
    BusyError,
    ConflictError,
    EditError,
    NotFoundError,
    SchemaError,
    TableKitError,
    TilingError,
    TrainingError,
)
from .project import ProjectService

log = logging.getLogger(__name__)

_STATUS = {
    SchemaError: 400,
    EditError: 400,
    TilingError: 409,
    ConflictError: 409,
    BusyError: 409,
    TrainingError: 409,
    NotFoundError: 404,
}

EDIT_OPS = {
    "set_table_bbox",
    "add_table",
    "delete_table",
    "merge_cells",
    "split_cell",
    "merge_rows",
    "merge_cols",
    "split_row",
    "split_col",
    "move_text_chunk",
    "edit_token",
    "submit",
}


def _error_status(exc: TableKitError) -> int:
    for cls, status in _STATUS.items():
        if isinstance(exc, cls):
            return status
    return 500


class ApiHandler(BaseHTTPRequestHandler):
    service: ProjectService  # set on the server class by make_server

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s - %s", self.address_string(), fmt % args)

    # -- plumbing -----------------------------------------------------------

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SchemaError(f"request body is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise SchemaError("request body must be a JSON object")
        return doc

    def _send_json(self, payload, status: int = 200) -> None:
        data = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_bytes(self, data: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(data)

    def _send_error(self, exc: Exception) -> None:
        if isinstance(exc, TableKitError):
            status = _error_status(exc)
            body = {"error": {"code": exc.code, "message": str(exc)}}
            diagnostics = getattr(exc, "diagnostics", None)
            if diagnostics:
                body["error"]["diagnostics"] = diagnostics
        else:
            log.exception("unhandled error")
            status = 500
            body = {"error": {"code": "internal", "message": str(exc)}}
        self._send_json(body, status)

    # -- routing ------------------------------------------------------------

    def do_OPTIONS(self):  # CORS preflight for the browser frontend
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        try:
            self._route("GET", self.path)
        except Exception as exc:
            self._send_error(exc)

    def do_POST(self):
        try:
            self._route("POST", self.path)
        except Exception as exc:
            self._send_error(exc)

    def _route(self, method: str, path: str) -> None:
        svc = self.service
        path = path.rstrip("/") or "/"

        if method == "POST" and path == "/projects":
            body = self._body()
            if "name" not in body:
                raise SchemaError("missing field 'name'")
            project_id = svc.create_project(body["name"])
            self._send_json(svc.get_project(project_id), 201)
            return
        if method == "GET" and path == "/models":
            self._send_json({"models": svc.list_models()})
            return

        m = re.fullmatch(r"/projects/([^/]+)", path)
        if m and method == "GET":
            self._send_json(svc.get_project(m.group(1)))
            return

        m = re.fullmatch(r"/projects/([^/]+)/documents", path)
        if m and method == "POST":
            body = self._body()
            files = body.get("files")
            if not isinstance(files, list):
                raise SchemaError("missing field 'files' (array of page objects)")
            payloads = [
                f if isinstance(f, str) else json.dumps(f, ensure_ascii=False)
                for f in files
            ]
            self._send_json(svc.add_documents(m.group(1), payloads))
            return

        m = re.fullmatch(r"/projects/([^/]+)/extract", path)
        if m and method == "POST":
            job_id = svc.run_extraction(m.group(1))
            self._send_json({"job_id": job_id}, 202)
            return

        m = re.fullmatch(r"/projects/([^/]+)/pages", path)
        if m and method == "GET":
            self._send_json({"pages": svc.list_pages(m.group(1))})
            return

        m = re.fullmatch(r"/projects/([^/]+)/pages/([^/]+)", path)
        if m and method == "GET":
            self._send_json(svc.get_page(m.group(1), m.group(2)))
            return

        m = re.fullmatch(r"/projects/([^/]+)/pages/([^/]+)/ops/([^/]+)", path)
        if m and method == "POST":
            op = m.group(3)
            if op not in EDIT_OPS:
                raise NotFoundError(f"unknown operation {op}")
            self._send_json(svc.apply_op(m.group(1), m.group(2), op, self._body()))
            return

        m = re.fullmatch(r"/projects/([^/]+)/finetune", path)
        if m and method == "POST":
            body = self._body()
            job_id = svc.run_finetune(m.group(1), body.get("base_version"))
            self._send_json({"job_id": job_id}, 202)
            return

        m = re.fullmatch(r"/projects/([^/]+)/jobs/([^/]+)", path)
        if m and method == "GET":
            job = svc.jobs.get(m.group(2))
            self._send_json(asdict(job))
            return

        m = re.fullmatch(r"/projects/([^/]+)/model", path)
        if m and method == "POST":
            body = self._body()
            if "version_id" not in body:
                raise SchemaError("missing field 'version_id'")
            self._send_json(svc.select_model(m.group(1), body["version_id"]))
            return

        m = re.fullmatch(r"/projects/([^/]+)/export", path)
        if m and method == "GET":
            self._send_bytes(svc.export_annotations(m.group(1)), "application/zip")
            return

        m = re.fullmatch(r"/projects/([^/]+)/progress", path)
        if m and method == "GET":
            self._send_json(svc.get_progress(m.group(1)))
            return

        raise NotFoundError(f"no route for {method} {path}")


def make_server(service: ProjectService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundApiHandler", (ApiHandler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(service: ProjectService, host: str, port: int) -> None:
    server = make_server(service, host, port)
    log.info("serving on http://%s:%d", *server.server_address)
    print(f"listening on http://{server.server_address[0]}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


class BackgroundServer:
    """Run the API on a daemon thread; used by tests and the UI dev loop."""

    def __init__(self, service: ProjectService, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(service, host, port)
        self.thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"

    def __enter__(self) -> "BackgroundServer":
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self.thread:
            self.thread.join(timeout=5)
