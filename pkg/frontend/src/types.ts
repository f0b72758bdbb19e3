// Document shapes as the API actually serves them; the test fixtures
// under test/fixtures are captured from a live server.

export interface StatusDoc {
  running: boolean;
  experiment_id: string | null;
  clock_mode?: string;
  elapsed?: number;
  active_model?: string;
  strategy?: string;
  processed?: number;
  queue_depth?: number;
  accepted?: number;
  dropped?: number;
  switches?: number;
}

export interface MetricsDoc {
  log_id: number;
  timestamp: number;
  request_no: number;
  model_name: string;
  model_processing_time: number;
  total_time: number;
  absolute_time: number;
  utility: number;
  kept_count: number;
  avg_confidence: number;
  queue_depth_at_start: number;
  request_id: number;
  cpu_load: number;
}

// new_logs is heterogeneous; `event` discriminates.
export interface LogDoc {
  log_id: number;
  timestamp: number;
  event: string;
  // switch events
  old?: unknown;
  new?: unknown;
  reason?: string;
  swap_latency?: number;
  // decision events
  strategy?: string;
  model?: string | null;
  arrival_rate?: number;
  queue_depth?: number;
  needs_adaptation?: boolean;
  switched?: boolean;
}

export interface SummaryDoc {
  experiment_id: string;
  total_processed: number;
  avg_confidence: number;
  avg_cpu: number | null;
  total_objects_detected: number;
  avg_model_processing_time: number;
  avg_image_processing_time: number;
  switches: number;
  utility_mean: number;
  unprocessed_depth: number;
  dropped: number;
}

export interface StrategySpecDoc {
  kind: string;
  params: Record<string, unknown>;
}

/** Everything one poll cycle gathers; panels render from this alone. */
export interface Snapshot {
  status: StatusDoc;
  metrics: MetricsDoc[];
  logs: LogDoc[];
  summary: SummaryDoc | null;
}
