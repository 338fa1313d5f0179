/** Typed fetch client for the calculation service. */

import type {
  Address,
  AuditResponse,
  CalcReport,
  CellWrite,
  LoadReport,
  ModelSummary,
  RulesPatchResponse,
  RulesResponse,
  StatsInfo,
  StructureInfo,
  TraceResponse,
  ViewGrid,
  ViewSpecBody,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail: string | null = null,
  ) {
    super(message);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = "http_error";
  let message = `${response.status} ${response.statusText}`;
  let detail: string | null = null;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      code = body.code ?? code;
      message = body.message ?? message;
      detail = body.detail ?? null;
    }
  } catch {
    // non-JSON error body; keep the HTTP status line
  }
  return new ApiError(response.status, code, message, detail);
}

export class Client {
  constructor(public baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      if (typeof body === "string") {
        (init.headers as Record<string, string>)["content-type"] = "text/csv";
        init.body = body;
      } else {
        (init.headers as Record<string, string>)["content-type"] = "application/json";
        init.body = JSON.stringify(body);
      }
    }
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) {
      throw await parseError(response);
    }
    const type = response.headers.get("content-type") ?? "";
    if (type.includes("application/json")) {
      return (await response.json()) as T;
    }
    return (await response.text()) as unknown as T;
  }

  listModels(): Promise<ModelSummary[]> {
    return this.request("GET", "/models");
  }

  createModel(document: unknown): Promise<{ id: string; model_version: number }> {
    return this.request("POST", "/models", document);
  }

  getStats(modelId: string): Promise<StatsInfo> {
    return this.request("GET", `/models/${modelId}/stats`);
  }

  getStructure(modelId: string): Promise<StructureInfo> {
    return this.request("GET", `/models/${modelId}/structure`);
  }

  postView(modelId: string, spec: ViewSpecBody): Promise<ViewGrid> {
    return this.request("POST", `/models/${modelId}/view`, spec);
  }

  putCells(
    modelId: string,
    cells: CellWrite[],
    modelVersion: number | null,
    sourceId = "frontend",
  ): Promise<CalcReport> {
    return this.request("PUT", `/models/${modelId}/cells`, {
      cells,
      source_id: sourceId,
      model_version: modelVersion,
    });
  }

  getRules(modelId: string): Promise<RulesResponse> {
    return this.request("GET", `/models/${modelId}/rules`);
  }

  patchRules(
    modelId: string,
    body: {
      reorder?: string[];
      set_enabled?: Record<string, boolean>;
      model_version?: number | null;
    },
  ): Promise<RulesPatchResponse> {
    return this.request("PATCH", `/models/${modelId}/rules`, body);
  }

  postTrace(modelId: string, address: Address, rule?: string, label?: string): Promise<TraceResponse> {
    return this.request("POST", `/models/${modelId}/trace`, { address, rule, label: label ?? "L1" });
  }

  getAudit(modelId: string): Promise<AuditResponse> {
    return this.request("GET", `/models/${modelId}/audit`);
  }

  loadData(
    modelId: string,
    csv: string,
    format: "long" | "wide",
    sourceId = "upload",
  ): Promise<LoadReport> {
    const params = new URLSearchParams({ format, source_id: sourceId });
    return this.request("POST", `/models/${modelId}/data?${params}`, csv);
  }

  calc(modelId: string): Promise<CalcReport> {
    return this.request("POST", `/models/${modelId}/calc`);
  }
}
