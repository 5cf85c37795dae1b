// Spreadsheet-style grid editor. The table is rendered purely from the last
// server payload; every structural change round-trips through an API op and
// the response replaces the rendered grid wholesale.

import type { CellPayload, GridPayload, TablePayload } from "./api.js";
import { payloadHash } from "./hash.js";

export interface GridEditorHandlers {
  selectCell(cellId: string, additive: boolean): void;
  mergeCells(tableId: string, cellIds: string[]): void;
  splitCell(tableId: string, cellId: string, axis: "row" | "col", count: number): void;
  mergeRows(tableId: string, rows: number[]): void;
  mergeCols(tableId: string, cols: number[]): void;
  splitRow(tableId: string, rowIndex: number, boundaryY: number): void;
  splitCol(tableId: string, colIndex: number, boundaryX: number): void;
  moveTokens(tableId: string, tokenIds: string[], targetCellId: string): void;
  editToken(tokenId: string, currentText: string): void;
  deleteTable(tableId: string): void;
  submit(): void;
}

export function cellAt(grid: GridPayload, row: number, col: number): CellPayload | undefined {
  return grid.cells.find(
    (c) => c.row <= row && row < c.row + c.row_span && c.col <= col && col < c.col + c.col_span,
  );
}

// midpoint of a band, derived from cell geometry, for whole-row/col splits
export function bandMidpoint(grid: GridPayload, index: number, vertical: boolean): number {
  const spans = grid.cells.filter((c) =>
    vertical
      ? c.row <= index && index < c.row + c.row_span && c.row_span === 1
      : c.col <= index && index < c.col + c.col_span && c.col_span === 1,
  );
  const boxes = spans.length ? spans : grid.cells;
  const lo = Math.min(...boxes.map((c) => (vertical ? c.bbox[1] : c.bbox[0])));
  const hi = Math.max(...boxes.map((c) => (vertical ? c.bbox[3] : c.bbox[2])));
  return (lo + hi) / 2;
}

export function renderGridTable(
  table: TablePayload,
  selected: string[],
  handlers: GridEditorHandlers,
  doc: Document,
): HTMLTableElement {
  const grid = table.grid;
  const el = doc.createElement("table");
  el.className = "grid-editor";
  el.dataset.tableId = grid.table_id;
  // the render is a pure function of the payload; the hash lets tests assert
  // the DOM was built from the exact server response
  el.dataset.payloadHash = payloadHash(grid);

  const header = doc.createElement("tr");
  header.appendChild(doc.createElement("th"));
  for (let c = 0; c < grid.n_cols; c++) {
    const th = doc.createElement("th");
    th.textContent = String(c);
    th.dataset.colIndex = String(c);
    th.addEventListener("dblclick", () => handlers.splitCol(grid.table_id, c, bandMidpoint(grid, c, false)));
    header.appendChild(th);
  }
  el.appendChild(header);

  const covered = new Set<string>();
  for (let r = 0; r < grid.n_rows; r++) {
    const tr = doc.createElement("tr");
    const rowHead = doc.createElement("th");
    rowHead.textContent = String(r);
    rowHead.dataset.rowIndex = String(r);
    rowHead.addEventListener("dblclick", () => handlers.splitRow(grid.table_id, r, bandMidpoint(grid, r, true)));
    tr.appendChild(rowHead);
    for (let c = 0; c < grid.n_cols; c++) {
      if (covered.has(`${r},${c}`)) {
        continue;
      }
      const cell = cellAt(grid, r, c);
      if (!cell || cell.row !== r || cell.col !== c) {
        continue;
      }
      for (let rr = cell.row; rr < cell.row + cell.row_span; rr++) {
        for (let cc = cell.col; cc < cell.col + cell.col_span; cc++) {
          covered.add(`${rr},${cc}`);
        }
      }
      tr.appendChild(renderCell(cell, grid, selected, handlers, doc));
    }
    el.appendChild(tr);
  }
  return el;
}

function renderCell(
  cell: CellPayload,
  grid: GridPayload,
  selected: string[],
  handlers: GridEditorHandlers,
  doc: Document,
): HTMLTableCellElement {
  const td = doc.createElement("td");
  td.dataset.cellId = cell.cell_id;
  if (cell.row_span > 1) {
    td.rowSpan = cell.row_span;
  }
  if (cell.col_span > 1) {
    td.colSpan = cell.col_span;
  }
  if (selected.includes(cell.cell_id)) {
    td.classList.add("selected");
  }
  td.addEventListener("click", (e) => {
    handlers.selectCell(cell.cell_id, e.shiftKey || e.ctrlKey || e.metaKey);
  });
  td.addEventListener("dragover", (e) => e.preventDefault());
  td.addEventListener("drop", (e) => {
    e.preventDefault();
    const tokenId = (e as DragEvent).dataTransfer?.getData("text/token-id");
    if (tokenId) {
      handlers.moveTokens(grid.table_id, [tokenId], cell.cell_id);
    }
  });
  for (const tokenId of cell.tokens) {
    const span = doc.createElement("span");
    span.className = "token-chip";
    span.draggable = true;
    span.dataset.tokenId = tokenId;
    span.textContent = tokenTextFromCell(cell, tokenId);
    span.addEventListener("dragstart", (e) => {
      (e as DragEvent).dataTransfer?.setData("text/token-id", tokenId);
    });
    span.addEventListener("dblclick", (e) => {
      e.stopPropagation();
      handlers.editToken(tokenId, span.textContent ?? "");
    });
    td.appendChild(span);
  }
  return td;
}

function tokenTextFromCell(cell: CellPayload, tokenId: string): string {
  // cell.text is the space-joined token texts in cell.tokens order
  const parts = cell.text.split(" ");
  const idx = cell.tokens.indexOf(tokenId);
  return parts.length === cell.tokens.length && idx >= 0 ? parts[idx] : tokenId;
}

export interface GridEditorView {
  root: HTMLElement;
  htmlPreview: HTMLElement;
  errorBox: HTMLElement;
  submitButton: HTMLButtonElement;
}

export function renderEditorPanel(
  container: HTMLElement,
  tables: TablePayload[],
  selectedTable: string | null,
  selectedCells: string[],
  opInFlight: boolean,
  labelStatus: string | null,
  handlers: GridEditorHandlers,
): GridEditorView {
  const doc = container.ownerDocument;
  container.textContent = "";

  const toolbar = doc.createElement("div");
  toolbar.className = "toolbar";
  const table = tables.find((t) => t.region.table_id === selectedTable) ?? null;

  const mergeBtn = doc.createElement("button");
  mergeBtn.textContent = "Merge cells";
  mergeBtn.disabled = opInFlight || !table || selectedCells.length < 2;
  mergeBtn.addEventListener("click", () => {
    if (table) {
      handlers.mergeCells(table.grid.table_id, selectedCells);
    }
  });
  toolbar.appendChild(mergeBtn);

  for (const axis of ["row", "col"] as const) {
    const btn = doc.createElement("button");
    btn.textContent = `Split ${axis}`;
    btn.disabled = opInFlight || !table || selectedCells.length !== 1;
    btn.addEventListener("click", () => {
      if (table && selectedCells.length === 1) {
        handlers.splitCell(table.grid.table_id, selectedCells[0], axis, 2);
      }
    });
    toolbar.appendChild(btn);
  }

  const mergeRowsBtn = doc.createElement("button");
  mergeRowsBtn.textContent = "Merge selected rows";
  const selectedRows = table ? rowsOf(table.grid, selectedCells) : [];
  mergeRowsBtn.disabled = opInFlight || !table || selectedRows.length < 2;
  mergeRowsBtn.addEventListener("click", () => {
    if (table) {
      handlers.mergeRows(table.grid.table_id, selectedRows);
    }
  });
  toolbar.appendChild(mergeRowsBtn);

  const mergeColsBtn = doc.createElement("button");
  mergeColsBtn.textContent = "Merge selected cols";
  const selectedCols = table ? colsOf(table.grid, selectedCells) : [];
  mergeColsBtn.disabled = opInFlight || !table || selectedCols.length < 2;
  mergeColsBtn.addEventListener("click", () => {
    if (table) {
      handlers.mergeCols(table.grid.table_id, selectedCols);
    }
  });
  toolbar.appendChild(mergeColsBtn);

  const deleteBtn = doc.createElement("button");
  deleteBtn.textContent = "Delete table";
  deleteBtn.disabled = opInFlight || !table;
  deleteBtn.addEventListener("click", () => {
    if (table) {
      handlers.deleteTable(table.grid.table_id);
    }
  });
  toolbar.appendChild(deleteBtn);

  const submitButton = doc.createElement("button");
  submitButton.className = "submit";
  submitButton.textContent = labelStatus === "submitted" ? "Submitted" : "Submit page";
  // disabled while any op is in flight
  submitButton.disabled = opInFlight || labelStatus === "submitted";
  submitButton.addEventListener("click", () => handlers.submit());
  toolbar.appendChild(submitButton);

  container.appendChild(toolbar);

  const errorBox = doc.createElement("div");
  errorBox.className = "error-box";
  errorBox.hidden = true;
  container.appendChild(errorBox);

  const gridHost = doc.createElement("div");
  gridHost.className = "grids";
  for (const t of tables) {
    const caption = doc.createElement("div");
    caption.className = "grid-caption";
    caption.textContent = `${t.region.table_id} (${t.grid.n_rows}x${t.grid.n_cols})`;
    gridHost.appendChild(caption);
    gridHost.appendChild(renderGridTable(t, selectedCells, handlers, doc));
  }
  container.appendChild(gridHost);

  const htmlPreview = doc.createElement("div");
  htmlPreview.className = "html-preview";
  // the preview is exactly the server's HTML export for the table
  htmlPreview.innerHTML = table ? table.html : "";
  container.appendChild(htmlPreview);

  return { root: container, htmlPreview, errorBox, submitButton };
}

function rowsOf(grid: GridPayload, cellIds: string[]): number[] {
  const rows = new Set<number>();
  for (const c of grid.cells) {
    if (cellIds.includes(c.cell_id)) {
      for (let r = c.row; r < c.row + c.row_span; r++) {
        rows.add(r);
      }
    }
  }
  return [...rows].sort((a, b) => a - b);
}

function colsOf(grid: GridPayload, cellIds: string[]): number[] {
  const cols = new Set<number>();
  for (const c of grid.cells) {
    if (cellIds.includes(c.cell_id)) {
      for (let k = c.col; k < c.col + c.col_span; k++) {
        cols.add(k);
      }
    }
  }
  return [...cols].sort((a, b) => a - b);
}
