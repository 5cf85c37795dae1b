// Typed client for the workbench HTTP API. Every helper resolves to the raw
// server payload; errors carry the server's machine-readable code.

export type BBoxArr = [number, number, number, number];

export interface TokenPayload {
  id: string;
  bbox: BBoxArr;
  text: string;
}

export interface RulingPayload {
  orientation: "h" | "v";
  bbox: BBoxArr;
}

export interface LayoutPayload {
  page_id: string;
  width: number;
  height: number;
  tokens: TokenPayload[];
  rulings: RulingPayload[];
  raster_ref: string | null;
}

export interface RegionPayload {
  table_id: string;
  bbox: BBoxArr;
  confidence: number;
}

export interface CellPayload {
  cell_id: string;
  row: number;
  col: number;
  row_span: number;
  col_span: number;
  bbox: BBoxArr;
  tokens: string[];
  text: string;
}

export interface GridPayload {
  table_id: string;
  bbox: BBoxArr;
  n_rows: number;
  n_cols: number;
  cells: CellPayload[];
}

export interface TablePayload {
  region: RegionPayload;
  grid: GridPayload;
  html: string;
}

export type RecommendationKind = "impact" | "easy";

export interface PageSummary {
  page_id: string;
  table_count: number;
  confidence: number | null;
  template_id: number | null;
  recommendation: RecommendationKind | null;
  labelled: boolean;
  label_status: string | null;
}

export interface PagePayload {
  summary: PageSummary;
  layout: LayoutPayload;
  tables: TablePayload[];
  label_status: string | null;
  edit_log: Record<string, unknown>[];
}

export interface OpResponse {
  page_id: string;
  status: string;
  tables: TablePayload[];
  edit_log: Record<string, unknown>[];
}

export interface ProgressPayload {
  pages: number;
  labelled: number;
  submitted: number;
  recommended_remaining: number;
  job_state: "idle" | "extracting" | "finetuning";
  job_progress: number;
}

export interface JobPayload {
  job_id: string;
  project_id: string;
  kind: string;
  state: "running" | "done" | "error";
  progress: number;
  error: string | null;
  error_code: string | null;
}

export interface ModelPayload {
  version_id: string;
  parent_id: string | null;
  training_pages: string[];
  metrics: Record<string, number>;
}

export interface ProjectPayload {
  project_id: string;
  name: string;
  active_model: string;
  page_count: number;
  stale: boolean;
  job_state: string;
  job_progress: number;
}

export class ApiError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export type EditOp =
  | "set_table_bbox"
  | "add_table"
  | "delete_table"
  | "merge_cells"
  | "split_cell"
  | "merge_rows"
  | "merge_cols"
  | "split_row"
  | "split_col"
  | "move_text_chunk"
  | "edit_token"
  | "submit";

export class Client {
  constructor(
    readonly base: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    let payload: unknown = null;
    try {
      payload = text ? JSON.parse(text) : null;
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const err = (payload as { error?: { code?: string; message?: string } } | null)?.error;
      throw new ApiError(
        err?.code ?? "http_error",
        err?.message ?? `HTTP ${response.status}`,
        response.status,
      );
    }
    return payload as T;
  }

  createProject(name: string): Promise<ProjectPayload> {
    return this.request("POST", "/projects", { name });
  }

  getProject(projectId: string): Promise<ProjectPayload> {
    return this.request("GET", `/projects/${projectId}`);
  }

  addDocuments(projectId: string, files: unknown[]): Promise<{ added: number; job_id: string | null }> {
    return this.request("POST", `/projects/${projectId}/documents`, { files });
  }

  extract(projectId: string): Promise<{ job_id: string }> {
    return this.request("POST", `/projects/${projectId}/extract`);
  }

  listPages(projectId: string): Promise<{ pages: PageSummary[] }> {
    return this.request("GET", `/projects/${projectId}/pages`);
  }

  getPage(projectId: string, pageId: string): Promise<PagePayload> {
    return this.request("GET", `/projects/${projectId}/pages/${pageId}`);
  }

  applyOp(projectId: string, pageId: string, op: EditOp, args: Record<string, unknown>): Promise<OpResponse> {
    return this.request("POST", `/projects/${projectId}/pages/${pageId}/ops/${op}`, args);
  }

  finetune(projectId: string, baseVersion?: string): Promise<{ job_id: string }> {
    return this.request(
      "POST",
      `/projects/${projectId}/finetune`,
      baseVersion ? { base_version: baseVersion } : {},
    );
  }

  getJob(projectId: string, jobId: string): Promise<JobPayload> {
    return this.request("GET", `/projects/${projectId}/jobs/${jobId}`);
  }

  listModels(): Promise<{ models: ModelPayload[] }> {
    return this.request("GET", "/models");
  }

  selectModel(projectId: string, versionId: string): Promise<{ active_model: string; stale: boolean }> {
    return this.request("POST", `/projects/${projectId}/model`, { version_id: versionId });
  }

  getProgress(projectId: string): Promise<ProgressPayload> {
    return this.request("GET", `/projects/${projectId}/progress`);
  }

  exportUrl(projectId: string): string {
    return `${this.base}/projects/${projectId}/export`;
  }

  async pollJob(
    projectId: string,
    jobId: string,
    options?: { intervalMs?: number; timeoutMs?: number; onTick?: (job: JobPayload) => void },
  ): Promise<JobPayload> {
    const intervalMs = options?.intervalMs ?? 1000;
    const timeoutMs = options?.timeoutMs ?? 300_000;
    const startedAt = Date.now();
    for (;;) {
      const job = await this.getJob(projectId, jobId);
      options?.onTick?.(job);
      if (job.state === "done") {
        return job;
      }
      if (job.state === "error") {
        throw new ApiError(job.error_code ?? "job_failed", job.error ?? "job failed", 500);
      }
      if (Date.now() - startedAt > timeoutMs) {
        throw new ApiError("timeout", `job ${jobId} timed out`, 504);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
