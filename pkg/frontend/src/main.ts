// Application wiring: one ViewState, one Client, render-on-change. Every
// grid mutation round-trips through the API; responses replace local state.

import { ApiError, Client, type BBoxArr } from "./api.js";
import { renderControlPanel } from "./controlPanel.js";
import { renderEditorPanel, type GridEditorHandlers } from "./gridEditor.js";
import { Overlay } from "./overlay.js";
import { renderPageList } from "./pageList.js";
import { applyOpResponse, initialState, loadPagePayload, toggleCellSelection, type ViewState } from "./state.js";

const POLL_MS = 1000;

export class App {
  readonly state: ViewState = initialState();
  private readonly client: Client;
  private overlay: Overlay | null = null;
  private models: import("./api.js").ModelPayload[] = [];
  private progress: import("./api.js").ProgressPayload | null = null;
  private activeModel: string | null = null;

  constructor(
    private readonly root: Document,
    apiBase: string,
  ) {
    this.client = new Client(apiBase);
  }

  async start(projectId: string): Promise<void> {
    this.state.projectId = projectId;
    const canvas = this.root.getElementById("overlay-canvas") as HTMLCanvasElement;
    this.overlay = new Overlay(canvas, {
      commitTableBox: (tableId, bbox) => this.commitTableBox(tableId, bbox),
    });
    await this.refresh();
    setInterval(() => void this.poll(), POLL_MS);
  }

  private async poll(): Promise<void> {
    if (!this.state.projectId) {
      return;
    }
    try {
      const before = this.progress?.job_state;
      this.progress = await this.client.getProgress(this.state.projectId);
      if (before && before !== "idle" && this.progress.job_state === "idle") {
        await this.refresh(); // a job just finished: page list and grids changed
      } else {
        this.renderControls();
      }
    } catch (err) {
      this.showError(err);
    }
  }

  async refresh(): Promise<void> {
    if (!this.state.projectId) {
      return;
    }
    const projectId = this.state.projectId;
    const [pages, models, project, progress] = await Promise.all([
      this.client.listPages(projectId),
      this.client.listModels(),
      this.client.getProject(projectId),
      this.client.getProgress(projectId),
    ]);
    this.state.pages = pages.pages;
    this.models = models.models;
    this.activeModel = project.active_model;
    this.progress = progress;
    if (!this.state.selectedPage && this.state.pages.length) {
      await this.openPage(this.state.pages[0].page_id);
    } else if (this.state.selectedPage) {
      await this.openPage(this.state.selectedPage);
    } else {
      this.render();
    }
  }

  async openPage(pageId: string): Promise<void> {
    if (!this.state.projectId) {
      return;
    }
    const payload = await this.client.getPage(this.state.projectId, pageId);
    loadPagePayload(this.state, payload);
    this.render();
  }

  // -- operations ----------------------------------------------------------

  private async runOp(op: import("./api.js").EditOp, args: Record<string, unknown>): Promise<void> {
    const { projectId, selectedPage } = this.state;
    if (!projectId || !selectedPage || this.state.opInFlight) {
      return; // single in-flight mutation per page
    }
    this.state.opInFlight = true;
    this.state.banner = null;
    this.render();
    try {
      const response = await this.client.applyOp(projectId, selectedPage, op, args);
      applyOpResponse(this.state, response);
      if (op === "set_table_bbox" || op === "add_table" || op === "submit") {
        // reload so summary/labelled flags stay consistent
        const payload = await this.client.getPage(projectId, selectedPage);
        const keep = this.state.selectedTable;
        loadPagePayload(this.state, payload);
        this.state.selectedTable = keep ?? this.state.selectedTable;
        const pages = await this.client.listPages(projectId);
        this.state.pages = pages.pages;
      }
    } catch (err) {
      this.showError(err);
    } finally {
      this.state.opInFlight = false;
      this.render();
    }
  }

  commitTableBox(tableId: string, bbox: BBoxArr): void {
    void this.runOp("set_table_bbox", { table_id: tableId, bbox });
  }

  private editorHandlers(): GridEditorHandlers {
    return {
      selectCell: (cellId, additive) => {
        toggleCellSelection(this.state, cellId, additive);
        this.render();
      },
      mergeCells: (tableId, cellIds) => void this.runOp("merge_cells", { table_id: tableId, cell_ids: cellIds }),
      splitCell: (tableId, cellId, axis, count) =>
        void this.runOp("split_cell", { table_id: tableId, cell_id: cellId, axis, count }),
      mergeRows: (tableId, rows) => void this.runOp("merge_rows", { table_id: tableId, row_indices: rows }),
      mergeCols: (tableId, cols) => void this.runOp("merge_cols", { table_id: tableId, col_indices: cols }),
      splitRow: (tableId, rowIndex, boundaryY) =>
        void this.runOp("split_row", { table_id: tableId, row_index: rowIndex, boundary_y: boundaryY }),
      splitCol: (tableId, colIndex, boundaryX) =>
        void this.runOp("split_col", { table_id: tableId, col_index: colIndex, boundary_x: boundaryX }),
      moveTokens: (tableId, tokenIds, targetCellId) =>
        void this.runOp("move_text_chunk", {
          table_id: tableId,
          token_ids: tokenIds,
          target_cell_id: targetCellId,
        }),
      editToken: (tokenId, currentText) => {
        const text = this.root.defaultView?.prompt?.("Token text", currentText);
        if (text === null || text === undefined) {
          return;
        }
        const token = this.state.page?.layout.tokens.find((t) => t.id === tokenId);
        if (token) {
          void this.runOp("edit_token", { token_id: tokenId, text, bbox: token.bbox });
        }
      },
      deleteTable: (tableId) => void this.runOp("delete_table", { table_id: tableId }),
      submit: () => void this.runOp("submit", {}),
    };
  }

  private async finetune(): Promise<void> {
    const projectId = this.state.projectId;
    if (!projectId) {
      return;
    }
    try {
      const { job_id } = await this.client.finetune(projectId);
      this.progress = await this.client.getProgress(projectId);
      this.renderControls();
      await this.client.pollJob(projectId, job_id, { intervalMs: POLL_MS });
      await this.refresh(); // new confidences, tags, and model list
    } catch (err) {
      this.showError(err);
    }
  }

  private async selectModel(versionId: string): Promise<void> {
    const projectId = this.state.projectId;
    if (!projectId) {
      return;
    }
    try {
      await this.client.selectModel(projectId, versionId);
      if (this.root.defaultView?.confirm?.("Model changed. Re-run extraction now?") ?? true) {
        const { job_id } = await this.client.extract(projectId);
        await this.client.pollJob(projectId, job_id, { intervalMs: POLL_MS });
      }
      await this.refresh();
    } catch (err) {
      this.showError(err);
    }
  }

  private async uploadFiles(files: FileList): Promise<void> {
    const projectId = this.state.projectId;
    if (!projectId) {
      return;
    }
    try {
      const docs: unknown[] = [];
      for (const file of Array.from(files)) {
        docs.push(JSON.parse(await file.text()));
      }
      const result = await this.client.addDocuments(projectId, docs);
      if (result.job_id) {
        await this.client.pollJob(projectId, result.job_id, { intervalMs: POLL_MS });
      }
      await this.refresh();
    } catch (err) {
      this.showError(err);
    }
  }

  // -- rendering -------------------------------------------------------------

  showError(err: unknown): void {
    const text =
      err instanceof ApiError
        ? `${err.code}: ${err.message}`
        : err instanceof Error
          ? err.message
          : String(err);
    this.state.banner = { kind: "error", text };
    this.render();
  }

  render(): void {
    const listHost = this.root.getElementById("page-list");
    if (listHost) {
      renderPageList(listHost, this.state.pages, this.state.selectedPage, (pid) => void this.openPage(pid));
    }
    const editorHost = this.root.getElementById("editor");
    if (editorHost) {
      const view = renderEditorPanel(
        editorHost,
        this.state.tables,
        this.state.selectedTable,
        this.state.selectedCells,
        this.state.opInFlight,
        this.state.page?.label_status ?? null,
        this.editorHandlers(),
      );
      if (this.state.banner) {
        view.errorBox.hidden = false;
        view.errorBox.textContent = this.state.banner.text;
      }
    }
    const modeHost = this.root.getElementById("mode-switch");
    if (modeHost) {
      this.renderModeSwitch(modeHost);
    }
    if (this.overlay && this.state.page) {
      this.overlay.render(
        this.state.page.layout,
        this.state.tables,
        this.state.mode,
        this.state.zoom,
        this.state.selectedTable,
      );
    }
    this.renderControls();
  }

  private renderModeSwitch(host: HTMLElement): void {
    host.textContent = "";
    for (const mode of ["overlay", "magnify"] as const) {
      const btn = this.root.createElement("button");
      btn.textContent = mode;
      btn.disabled = this.state.mode === mode;
      btn.addEventListener("click", () => {
        this.state.mode = mode;
        this.render();
      });
      host.appendChild(btn);
    }
  }

  private renderControls(): void {
    const host = this.root.getElementById("control-panel");
    if (!host || !this.state.projectId) {
      return;
    }
    renderControlPanel(
      host,
      this.progress,
      this.models,
      this.activeModel,
      this.client.exportUrl(this.state.projectId),
      {
        finetune: () => void this.finetune(),
        selectModel: (versionId) => void this.selectModel(versionId),
        uploadFiles: (files) => void this.uploadFiles(files),
        refresh: () => void this.refresh(),
      },
    );
  }
}

declare global {
  interface Window {
    tablekitApp?: App;
  }
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const apiBase = params.get("api") ?? "http://127.0.0.1:8571";
  const client = new Client(apiBase);
  let projectId = params.get("project");
  if (!projectId) {
    const created = await client.createProject("workbench");
    projectId = created.project_id;
  }
  const app = new App(document, apiBase);
  window.tablekitApp = app;
  await app.start(projectId);
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("page-list")) {
  void boot();
}
