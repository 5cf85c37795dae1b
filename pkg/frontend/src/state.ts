import type { OpResponse, PagePayload, PageSummary, TablePayload } from "./api.js";

export type ViewMode = "overlay" | "magnify";

// All grid/table data rendered anywhere in the UI flows through `tables`,
// which is only ever replaced wholesale by a server payload.
export interface ViewState {
  projectId: string | null;
  pages: PageSummary[];
  selectedPage: string | null;
  page: PagePayload | null;
  tables: TablePayload[];
  mode: ViewMode;
  zoom: number;
  selectedTable: string | null;
  selectedCells: string[];
  selectedTokens: string[];
  opInFlight: boolean;
  banner: { kind: "error" | "info"; text: string } | null;
}

export function initialState(): ViewState {
  return {
    projectId: null,
    pages: [],
    selectedPage: null,
    page: null,
    tables: [],
    mode: "overlay",
    zoom: 1,
    selectedTable: null,
    selectedCells: [],
    selectedTokens: [],
    opInFlight: false,
    banner: null,
  };
}

export function loadPagePayload(state: ViewState, payload: PagePayload): void {
  state.page = payload;
  state.selectedPage = payload.summary.page_id;
  state.tables = payload.tables;
  state.selectedTable = payload.tables.length ? payload.tables[0].region.table_id : null;
  state.selectedCells = [];
  state.selectedTokens = [];
}

export function applyOpResponse(state: ViewState, response: OpResponse): void {
  // never merge: the server payload is the grid state
  state.tables = response.tables;
  if (state.page) {
    state.page = { ...state.page, tables: response.tables, label_status: response.status, edit_log: response.edit_log };
  }
  const stillThere = response.tables.some((t) => t.region.table_id === state.selectedTable);
  if (!stillThere) {
    state.selectedTable = response.tables.length ? response.tables[0].region.table_id : null;
  }
  state.selectedCells = state.selectedCells.filter((id) =>
    response.tables.some((t) => t.grid.cells.some((c) => c.cell_id === id)),
  );
  state.selectedTokens = [];
}

export function toggleCellSelection(state: ViewState, cellId: string, additive: boolean): void {
  if (!additive) {
    state.selectedCells = state.selectedCells.includes(cellId) ? [] : [cellId];
    return;
  }
  if (state.selectedCells.includes(cellId)) {
    state.selectedCells = state.selectedCells.filter((id) => id !== cellId);
  } else {
    state.selectedCells = [...state.selectedCells, cellId];
  }
}
