// Browser glue: a controls form rendered once, and a poll loop that
// re-renders the panel region from each snapshot. All experiment truth
// lives server-side; this file only forwards actions and draws.

import { ApiClient, ApiError } from "./client.js";
import {
  DEFAULT_OPTIONS,
  INITIAL_STATE,
  nextDelay,
  reduce,
  shouldPoll,
  type PollState,
} from "./state.js";
import { renderPanels } from "./panels.js";
import type { Snapshot, StrategySpecDoc, SummaryDoc } from "./types.js";

const DOCS_PER_POLL = 50;

const params = new URLSearchParams(window.location.search);
const client = new ApiClient(params.get("api") ?? "");

let poll: PollState = INITIAL_STATE;
let lastSummary: SummaryDoc | null = null;

function show(message: string): void {
  const el = document.getElementById("action-result")!;
  el.textContent = message;
}

async function act(label: string, action: () => Promise<unknown>): Promise<void> {
  try {
    const result = await action();
    show(`${label}: ok ${result ? JSON.stringify(result).slice(0, 200) : ""}`);
  } catch (err) {
    // Server-side errors go to the operator verbatim.
    show(err instanceof ApiError ? `${label}: ${err.message}` : `${label}: ${String(err)}`);
  }
}

function strategyFromForm(): StrategySpecDoc {
  const kind = (document.getElementById("strategy-kind") as HTMLSelectElement).value;
  const model = (document.getElementById("strategy-model") as HTMLSelectElement).value;
  const path = (document.getElementById("switch-file") as HTMLInputElement).value;
  if (kind === "single") {
    return { kind, params: { model } };
  }
  if (kind === "external") {
    return { kind, params: { path } };
  }
  return { kind, params: {} };
}

function configFromForm(): Record<string, unknown> {
  const id = (document.getElementById("experiment-id") as HTMLInputElement).value || "dashboard-run";
  const rate = Number((document.getElementById("arrival-rate") as HTMLInputElement).value) || 10;
  const count = Number((document.getElementById("request-count") as HTMLInputElement).value) || 500;
  return {
    experiment_id: id,
    seed: 0,
    clock_mode: "real_time",
    trace: { synthetic: { kind: "poisson", rate, count } },
    strategy: strategyFromForm(),
  };
}

function wireControls(): void {
  document.getElementById("start")!.addEventListener("click", () => {
    lastSummary = null;
    void act("start", () => client.startProcess(configFromForm()));
  });
  document.getElementById("start-staged")!.addEventListener("click", () => {
    void act("start from staged config", () => client.startProcess(null));
  });
  document.getElementById("stop")!.addEventListener("click", () => {
    void act("stop", async () => {
      lastSummary = await client.stopProcess(true);
      return lastSummary;
    });
  });
  document.getElementById("change-strategy")!.addEventListener("click", () => {
    void act("change strategy", () => client.changeKnowledge(strategyFromForm()));
  });
  document.getElementById("download")!.addEventListener("click", () => {
    window.open(client.downloadUrl(), "_blank");
  });
  const traceInput = document.getElementById("trace-file") as HTMLInputElement;
  traceInput.addEventListener("change", () => {
    const file = traceInput.files?.[0];
    if (file) {
      void act("stage trace", () => client.uploadFile("trace", file, file.name));
    }
  });
  const configInput = document.getElementById("config-file") as HTMLInputElement;
  configInput.addEventListener("change", () => {
    const file = configInput.files?.[0];
    if (file) {
      void act("stage config", () => client.uploadFile("config", file, file.name));
    }
  });
}

async function fetchSnapshot(): Promise<Snapshot> {
  const [status, metrics, logs] = await Promise.all([
    client.status(),
    client.latestMetrics(DOCS_PER_POLL),
    client.latestLogs(DOCS_PER_POLL),
  ]);
  return { status, metrics, logs, summary: lastSummary };
}

async function tick(): Promise<void> {
  if (shouldPoll(poll)) {
    poll = reduce(poll, { kind: "poll-started" });
    try {
      const snapshot = await fetchSnapshot();
      poll = reduce(poll, { kind: "poll-succeeded", at: Date.now() });
      document.getElementById("panels")!.innerHTML = renderPanels(snapshot, poll);
    } catch (err) {
      poll = reduce(poll, { kind: "poll-failed", at: Date.now(), error: String(err) });
      const current = document.getElementById("panels")!;
      current.innerHTML = renderPanels(
        { status: { running: false, experiment_id: null }, metrics: [], logs: [], summary: null },
        poll,
      );
    }
  }
  window.setTimeout(() => void tick(), nextDelay(poll, DEFAULT_OPTIONS));
}

wireControls();
void tick();
