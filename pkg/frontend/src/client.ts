import type {
  LogDoc,
  MetricsDoc,
  StatusDoc,
  StrategySpecDoc,
  SummaryDoc,
} from "./types.js";

/** Non-2xx response, body text preserved verbatim for the UI. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: string,
  ) {
    super(`HTTP ${status}: ${body}`);
    this.name = "ApiError";
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin wrapper over the documented /api/ endpoints. The fetch function
 * is injectable so tests can script the server side.
 */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchFn(this.base + path, init);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return text ? JSON.parse(text) : null;
  }

  status(): Promise<StatusDoc> {
    return this.request("/api/status") as Promise<StatusDoc>;
  }

  latestMetrics(n: number): Promise<MetricsDoc[]> {
    return this.request(`/api/latest_metrics_data?n=${n}`) as Promise<MetricsDoc[]>;
  }

  latestLogs(n: number): Promise<LogDoc[]> {
    return this.request(`/api/latest_logs?n=${n}`) as Promise<LogDoc[]>;
  }

  startProcess(config: Record<string, unknown> | null): Promise<StatusDoc> {
    return this.request("/api/startProcess", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: config === null ? "" : JSON.stringify(config),
    }) as Promise<StatusDoc>;
  }

  stopProcess(drain = true): Promise<SummaryDoc> {
    return this.request(`/api/stopProcess?drain=${drain}`, {
      method: "POST",
    }) as Promise<SummaryDoc>;
  }

  changeKnowledge(spec: StrategySpecDoc): Promise<unknown> {
    return this.request("/api/changeKnowledge", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(spec),
    });
  }

  /** Multipart staging: field name declares the artifact type. */
  uploadFile(field: "trace" | "payloads" | "config", file: File | Blob, name: string) {
    const form = new FormData();
    form.append(field, file, name);
    return this.request("/api/upload", { method: "POST", body: form });
  }

  /** Raw-body ingestion of one request payload. */
  uploadPayload(payload: BodyInit): Promise<{ request_id: number }> {
    return this.request("/api/upload", {
      method: "POST",
      body: payload,
    }) as Promise<{ request_id: number }>;
  }

  downloadUrl(experimentId?: string): string {
    const suffix = experimentId ? `?experiment_id=${encodeURIComponent(experimentId)}` : "";
    return `${this.base}/api/downloadData${suffix}`;
  }
}
