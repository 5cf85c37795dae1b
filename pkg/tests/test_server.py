import json
import time

import pytest
import requests

from tablekit.corpus import TemplateSpec, generate_collection
from tablekit.layout import serialize_page
from tablekit.project import ProjectService
from tablekit.server import BackgroundServer

SPEC = TemplateSpec(seed=400, n_rows=3, n_cols=3, col_gap=10, row_gap=10, ruled=True)


@pytest.fixture
def api(tmp_path):
    service = ProjectService(tmp_path / "store")
    with BackgroundServer(service) as server:
        yield server.url


def corpus_docs(count=4):
    pages, _ = generate_collection([(SPEC, count)])
    return [json.loads(serialize_page(g.page)) for g in pages], pages


def wait_job(base, pid, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        job = requests.get(f"{base}/projects/{pid}/jobs/{job_id}").json()
        if job["state"] != "running":
            return job
        time.sleep(0.02)
    raise TimeoutError(job_id)


def test_create_project(api):
    r = requests.post(f"{api}/projects", json={"name": "docs"})
    assert r.status_code == 201
    assert r.json()["name"] == "docs"
    assert r.json()["project_id"].startswith("p-")


def test_error_envelope_has_code_and_message(api):
    r = requests.get(f"{api}/projects/p-missing")
    assert r.status_code == 404
    err = r.json()["error"]
    assert err["code"] == "not_found"
    assert "p-missing" in err["message"]

    r = requests.post(f"{api}/projects", json={})
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "schema_violation"


def test_unknown_route_404(api):
    r = requests.get(f"{api}/nope")
    assert r.status_code == 404


def test_document_and_extraction_flow(api):
    docs, pages = corpus_docs()
    pid = requests.post(f"{api}/projects", json={"name": "flow"}).json()["project_id"]

    r = requests.post(f"{api}/projects/{pid}/documents", json={"files": docs})
    assert r.status_code == 200
    body = r.json()
    assert body["added"] == 4
    job = wait_job(api, pid, body["job_id"])
    assert job["state"] == "done"

    listed = requests.get(f"{api}/projects/{pid}/pages").json()["pages"]
    assert len(listed) == 4
    assert all(p["table_count"] == 1 for p in listed)

    page_id = pages[0].page.page_id
    payload = requests.get(f"{api}/projects/{pid}/pages/{page_id}").json()
    assert payload["summary"]["page_id"] == page_id
    assert payload["tables"][0]["html"].startswith("<table>")

    progress = requests.get(f"{api}/projects/{pid}/progress").json()
    assert progress["pages"] == 4
    assert progress["job_state"] == "idle"


def test_invalid_batch_returns_diagnostics(api):
    docs, _ = corpus_docs(1)
    pid = requests.post(f"{api}/projects", json={"name": "bad"}).json()["project_id"]
    bad = docs + [{"page_id": "x", "width": -1}]
    r = requests.post(f"{api}/projects/{pid}/documents", json={"files": bad})
    assert r.status_code == 400
    err = r.json()["error"]
    assert err["code"] == "schema_violation"
    assert err["diagnostics"][0]["file_index"] == 1


def test_edit_ops_and_errors_over_http(api):
    docs, pages = corpus_docs(2)
    pid = requests.post(f"{api}/projects", json={"name": "edit"}).json()["project_id"]
    body = requests.post(f"{api}/projects/{pid}/documents", json={"files": docs}).json()
    wait_job(api, pid, body["job_id"])
    page_id = pages[0].page.page_id

    payload = requests.get(f"{api}/projects/{pid}/pages/{page_id}").json()
    grid = payload["tables"][0]["grid"]
    cells = grid["cells"]
    pair = [c["cell_id"] for c in cells if c["row"] == 0][:2]
    r = requests.post(
        f"{api}/projects/{pid}/pages/{page_id}/ops/merge_cells",
        json={"table_id": grid["table_id"], "cell_ids": pair},
    )
    assert r.status_code == 200
    merged = r.json()["tables"][0]["grid"]["cells"]
    assert any(c["col_span"] == 2 for c in merged)

    # illegal L-shaped merge surfaces a structured error
    ids = [c["cell_id"] for c in cells if (c["row"], c["col"]) in ((0, 0), (0, 1), (1, 0))]
    r = requests.post(
        f"{api}/projects/{pid}/pages/{page_id}/ops/merge_cells",
        json={"table_id": grid["table_id"], "cell_ids": ids},
    )
    assert r.status_code == 400
    assert r.json()["error"]["code"] == "edit_rejected"

    r = requests.post(
        f"{api}/projects/{pid}/pages/{page_id}/ops/submit", json={}
    )
    assert r.status_code == 200
    assert r.json()["status"] == "submitted"


def test_models_select_finetune_export_loop(api):
    docs, pages = corpus_docs(3)
    pid = requests.post(f"{api}/projects", json={"name": "loop"}).json()["project_id"]
    body = requests.post(f"{api}/projects/{pid}/documents", json={"files": docs}).json()
    wait_job(api, pid, body["job_id"])

    models = requests.get(f"{api}/models").json()["models"]
    assert {m["version_id"] for m in models} >= {"base-balanced", "base-ruled", "base-dense"}

    r = requests.post(f"{api}/projects/{pid}/model", json={"version_id": "base-dense"})
    assert r.json() == {"active_model": "base-dense", "stale": True}
    job_id = requests.post(f"{api}/projects/{pid}/extract").json()["job_id"]
    wait_job(api, pid, job_id)

    # finetune without labels is a structured 409
    r = requests.post(f"{api}/projects/{pid}/finetune", json={})
    assert r.status_code == 409
    assert r.json()["error"]["code"] == "nothing_to_train_on"

    page_id = pages[0].page.page_id
    requests.post(f"{api}/projects/{pid}/pages/{page_id}/ops/submit", json={})
    job_id = requests.post(f"{api}/projects/{pid}/finetune", json={}).json()["job_id"]
    job = wait_job(api, pid, job_id)
    assert job["state"] == "done"

    models = requests.get(f"{api}/models").json()["models"]
    fitted = [m for m in models if m["version_id"].startswith("ft")]
    assert fitted and fitted[0]["parent_id"] == "base-dense"

    r = requests.get(f"{api}/projects/{pid}/export")
    assert r.status_code == 200
    assert r.headers["Content-Type"] == "application/zip"
    assert r.content[:2] == b"PK"


def test_busy_project_rejects_mutations(api, tmp_path):
    docs, _ = corpus_docs(2)
    pid = requests.post(f"{api}/projects", json={"name": "busy"}).json()["project_id"]
    requests.post(f"{api}/projects/{pid}/documents", json={"files": docs[:1]})
    # the autostarted extraction may still be running; poll for a busy rejection
    r = requests.post(f"{api}/projects/{pid}/extract")
    assert r.status_code in (202, 409)
    if r.status_code == 409:
        assert r.json()["error"]["code"] == "busy"
