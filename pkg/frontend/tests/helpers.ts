import type { GridPayload, PagePayload, PageSummary, TablePayload } from "../src/api.js";

export function grid2x2(tableId = "t0"): GridPayload {
  return {
    table_id: tableId,
    bbox: [0, 0, 44, 30],
    n_rows: 2,
    n_cols: 2,
    cells: [
      { cell_id: "c0", row: 0, col: 0, row_span: 1, col_span: 1, bbox: [0, 0, 20, 14], tokens: ["w0"], text: "alpha" },
      { cell_id: "c1", row: 0, col: 1, row_span: 1, col_span: 1, bbox: [24, 0, 44, 14], tokens: ["w1"], text: "beta" },
      { cell_id: "c2", row: 1, col: 0, row_span: 1, col_span: 1, bbox: [0, 16, 20, 30], tokens: ["w2"], text: "7" },
      { cell_id: "c3", row: 1, col: 1, row_span: 1, col_span: 1, bbox: [24, 16, 44, 30], tokens: ["w3"], text: "9" },
    ],
  };
}

export function tablePayload(grid: GridPayload = grid2x2()): TablePayload {
  return {
    region: { table_id: grid.table_id, bbox: grid.bbox, confidence: 1.0 },
    grid,
    html: "<table><tr><td>alpha</td><td>beta</td></tr><tr><td>7</td><td>9</td></tr></table>",
  };
}

export function summary(pageId: string, extra: Partial<PageSummary> = {}): PageSummary {
  return {
    page_id: pageId,
    table_count: 1,
    confidence: 0.9,
    template_id: 0,
    recommendation: null,
    labelled: false,
    label_status: null,
    ...extra,
  };
}

export function pagePayload(): PagePayload {
  const table = tablePayload();
  return {
    summary: summary("p1"),
    layout: {
      page_id: "p1",
      width: 612,
      height: 792,
      tokens: [
        { id: "w0", bbox: [2, 2, 18, 12], text: "alpha" },
        { id: "w1", bbox: [26, 2, 42, 12], text: "beta" },
        { id: "w2", bbox: [2, 18, 18, 28], text: "7" },
        { id: "w3", bbox: [26, 18, 42, 28], text: "9" },
      ],
      rulings: [],
      raster_ref: null,
    },
    tables: [table],
    label_status: null,
    edit_log: [],
  };
}

export function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}
