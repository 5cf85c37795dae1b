// Page overlay: token boxes, table borders with drag handles, cell borders,
// drawn over the raster (or a plain white canvas when no raster exists).
//
// Drawing is split in two so tests run without a 2d context: computeScene
// produces plain draw instructions from the payload, paint executes them.

import type { BBoxArr, LayoutPayload, TablePayload } from "./api.js";
import type { ViewMode } from "./state.js";

export interface SceneRect {
  kind: "page" | "token" | "table" | "cell" | "handle";
  x: number;
  y: number;
  w: number;
  h: number;
  id?: string;
}

export interface SceneView {
  scale: number;
  offsetX: number;
  offsetY: number;
  width: number;
  height: number;
}

export const HANDLE_SIZE = 8;

export function viewFor(
  layout: LayoutPayload,
  mode: ViewMode,
  zoom: number,
  focus: BBoxArr | null,
  canvasWidth: number,
): SceneView {
  if (mode === "magnify" && focus) {
    // zoomed canvas of the selected region, same overlays
    const pad = 12;
    const w = focus[2] - focus[0] + 2 * pad;
    const scale = (canvasWidth / w) * zoom;
    return {
      scale,
      offsetX: -(focus[0] - pad) * scale,
      offsetY: -(focus[1] - pad) * scale,
      width: canvasWidth,
      height: (focus[3] - focus[1] + 2 * pad) * scale,
    };
  }
  const scale = (canvasWidth / layout.width) * zoom;
  return { scale, offsetX: 0, offsetY: 0, width: canvasWidth, height: layout.height * scale };
}

export function toCanvas(view: SceneView, box: BBoxArr): { x: number; y: number; w: number; h: number } {
  return {
    x: box[0] * view.scale + view.offsetX,
    y: box[1] * view.scale + view.offsetY,
    w: (box[2] - box[0]) * view.scale,
    h: (box[3] - box[1]) * view.scale,
  };
}

export function toPage(view: SceneView, x: number, y: number): { x: number; y: number } {
  return { x: (x - view.offsetX) / view.scale, y: (y - view.offsetY) / view.scale };
}

export function computeScene(
  layout: LayoutPayload,
  tables: TablePayload[],
  view: SceneView,
  selectedTable: string | null,
): SceneRect[] {
  const out: SceneRect[] = [];
  out.push({ kind: "page", ...toCanvas(view, [0, 0, layout.width, layout.height]) });
  for (const t of layout.tokens) {
    out.push({ kind: "token", id: t.id, ...toCanvas(view, t.bbox) });
  }
  for (const table of tables) {
    for (const cell of table.grid.cells) {
      out.push({ kind: "cell", id: cell.cell_id, ...toCanvas(view, cell.bbox) });
    }
    const rect = toCanvas(view, table.region.bbox);
    out.push({ kind: "table", id: table.region.table_id, ...rect });
    if (table.region.table_id === selectedTable) {
      for (const [hx, hy] of corners(rect)) {
        out.push({
          kind: "handle",
          id: table.region.table_id,
          x: hx - HANDLE_SIZE / 2,
          y: hy - HANDLE_SIZE / 2,
          w: HANDLE_SIZE,
          h: HANDLE_SIZE,
        });
      }
    }
  }
  return out;
}

function corners(rect: { x: number; y: number; w: number; h: number }): [number, number][] {
  return [
    [rect.x, rect.y],
    [rect.x + rect.w, rect.y],
    [rect.x, rect.y + rect.h],
    [rect.x + rect.w, rect.y + rect.h],
  ];
}

export type Corner = "nw" | "ne" | "sw" | "se";

export function hitHandle(
  view: SceneView,
  box: BBoxArr,
  x: number,
  y: number,
): Corner | null {
  const rect = toCanvas(view, box);
  const candidates: [Corner, number, number][] = [
    ["nw", rect.x, rect.y],
    ["ne", rect.x + rect.w, rect.y],
    ["sw", rect.x, rect.y + rect.h],
    ["se", rect.x + rect.w, rect.y + rect.h],
  ];
  for (const [corner, cx, cy] of candidates) {
    if (Math.abs(x - cx) <= HANDLE_SIZE && Math.abs(y - cy) <= HANDLE_SIZE) {
      return corner;
    }
  }
  return null;
}

// a drag outside the page snaps to the page edge before commit
export function dragBox(box: BBoxArr, corner: Corner, px: number, py: number, layout: LayoutPayload): BBoxArr {
  const x = Math.min(Math.max(px, 0), layout.width);
  const y = Math.min(Math.max(py, 0), layout.height);
  let [x0, y0, x1, y1] = box;
  if (corner === "nw") {
    x0 = x;
    y0 = y;
  } else if (corner === "ne") {
    x1 = x;
    y0 = y;
  } else if (corner === "sw") {
    x0 = x;
    y1 = y;
  } else {
    x1 = x;
    y1 = y;
  }
  const MIN = 4;
  if (x1 - x0 < MIN || y1 - y0 < MIN) {
    return box;
  }
  return [x0, y0, x1, y1];
}

const STYLE: Record<SceneRect["kind"], { stroke: string; fill: string | null; width: number }> = {
  page: { stroke: "#bbb", fill: "#fff", width: 1 },
  token: { stroke: "#9bc4e8", fill: null, width: 1 },
  cell: { stroke: "#c9a7e0", fill: null, width: 1 },
  table: { stroke: "#d9534f", fill: null, width: 2 },
  handle: { stroke: "#d9534f", fill: "#d9534f", width: 1 },
};

export function paint(ctx: CanvasRenderingContext2D, scene: SceneRect[]): void {
  for (const rect of scene) {
    const style = STYLE[rect.kind];
    if (style.fill) {
      ctx.fillStyle = style.fill;
      ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
    }
    ctx.strokeStyle = style.stroke;
    ctx.lineWidth = style.width;
    ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
  }
}

export interface OverlayHandlers {
  commitTableBox(tableId: string, bbox: BBoxArr): void;
}

interface DragState {
  tableId: string;
  corner: Corner;
  original: BBoxArr;
  current: BBoxArr;
}

export class Overlay {
  private drag: DragState | null = null;
  preview: BBoxArr | null = null;

  constructor(
    readonly canvas: HTMLCanvasElement,
    private readonly handlers: OverlayHandlers,
  ) {
    canvas.addEventListener("mousedown", (e) => this.onDown(e));
    canvas.addEventListener("mousemove", (e) => this.onMove(e));
    canvas.addEventListener("mouseup", (e) => this.onUp(e));
    canvas.addEventListener("mouseleave", () => this.cancelDrag());
  }

  private layout: LayoutPayload | null = null;
  private tables: TablePayload[] = [];
  private view: SceneView | null = null;
  private selectedTable: string | null = null;

  render(
    layout: LayoutPayload,
    tables: TablePayload[],
    mode: ViewMode,
    zoom: number,
    selectedTable: string | null,
  ): void {
    this.layout = layout;
    this.tables = tables;
    this.selectedTable = selectedTable;
    const focus = tables.find((t) => t.region.table_id === selectedTable)?.region.bbox ?? null;
    this.view = viewFor(layout, mode, zoom, focus, this.canvas.width);
    this.canvas.height = Math.max(60, Math.round(this.view.height));
    this.paintNow();
  }

  private paintNow(): void {
    if (!this.layout || !this.view) {
      return;
    }
    const shown = this.tables.map((t) =>
      this.drag && t.region.table_id === this.drag.tableId
        ? { ...t, region: { ...t.region, bbox: this.drag.current } }
        : t,
    );
    const scene = computeScene(this.layout, shown, this.view, this.selectedTable);
    const ctx = this.canvas.getContext("2d");
    if (ctx) {
      ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
      paint(ctx, scene);
    }
  }

  private onDown(e: MouseEvent): void {
    if (!this.layout || !this.view || !this.selectedTable) {
      return;
    }
    const table = this.tables.find((t) => t.region.table_id === this.selectedTable);
    if (!table) {
      return;
    }
    const corner = hitHandle(this.view, table.region.bbox, e.offsetX, e.offsetY);
    if (corner) {
      this.drag = {
        tableId: table.region.table_id,
        corner,
        original: table.region.bbox,
        current: table.region.bbox,
      };
    }
  }

  private onMove(e: MouseEvent): void {
    if (!this.drag || !this.layout || !this.view) {
      return;
    }
    const p = toPage(this.view, e.offsetX, e.offsetY);
    this.drag.current = dragBox(this.drag.original, this.drag.corner, p.x, p.y, this.layout);
    this.preview = this.drag.current;
    this.paintNow();
  }

  private onUp(e: MouseEvent): void {
    if (!this.drag || !this.layout || !this.view) {
      return;
    }
    const p = toPage(this.view, e.offsetX, e.offsetY);
    const box = dragBox(this.drag.original, this.drag.corner, p.x, p.y, this.layout);
    const changed = box.some((v, i) => v !== this.drag!.original[i]);
    const tableId = this.drag.tableId;
    this.drag = null;
    this.preview = null;
    if (changed) {
      this.handlers.commitTableBox(tableId, box);
    } else {
      this.paintNow(); // cancel restores the prior geometry
    }
  }

  cancelDrag(): void {
    if (this.drag) {
      this.drag = null;
      this.preview = null;
      this.paintNow();
    }
  }
}
