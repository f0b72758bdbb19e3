import { describe, expect, it } from "vitest";

import {
  escapeHtml,
  renderBanner,
  renderMetricsTable,
  renderPanels,
  renderStatus,
  renderSummary,
  renderTimeline,
} from "../src/panels.js";
import { INITIAL_STATE, reduce, type PollState } from "../src/state.js";
import { activeModelSegments } from "../src/timeline.js";
import type { LogDoc, MetricsDoc, Snapshot, StatusDoc, SummaryDoc } from "../src/types.js";

import logsFixture from "./fixtures/logs.json" with { type: "json" };
import metricsFixture from "./fixtures/metrics.json" with { type: "json" };
import statusIdle from "./fixtures/status-idle.json" with { type: "json" };
import statusRunning from "./fixtures/status-running.json" with { type: "json" };
import summaryFixture from "./fixtures/summary.json" with { type: "json" };

const logs = logsFixture as LogDoc[];
const metrics = metricsFixture as MetricsDoc[];
const summary = summaryFixture as SummaryDoc;

const LIVE: PollState = reduce(INITIAL_STATE, { kind: "poll-succeeded", at: 1000 });
const STALE: PollState = [1, 2].reduce(
  (s, i) => reduce(s, { kind: "poll-failed", at: i, error: "ECONNREFUSED" }),
  LIVE,
);

function liveSnapshot(): Snapshot {
  return {
    status: statusRunning as StatusDoc,
    metrics,
    logs,
    summary: null,
  };
}

describe("panel rendering", () => {
  it("no experiment: form view with panels disabled", () => {
    const html = renderPanels(
      { status: statusIdle as StatusDoc, metrics: [], logs: [], summary: null },
      LIVE,
    );
    expect(html).toContain("No experiment running");
    expect(html).toContain("Panels activate once an experiment starts");
    expect(html).not.toContain("timeline-panel");
  });

  it("running experiment: all live panels present", () => {
    const html = renderPanels(liveSnapshot(), LIVE);
    for (const id of ["status-panel", "timeline-panel", "rate-panel", "gauge-panel", "metrics-panel", "events-panel"]) {
      expect(html).toContain(id);
    }
    expect(html).toContain("yolov5");
  });

  it("stale banner appears exactly when the poll state says so", () => {
    expect(renderBanner(LIVE)).toBe("");
    const banner = renderBanner(STALE);
    expect(banner).toContain("stale");
    expect(banner).toContain("ECONNREFUSED");
    expect(renderPanels(liveSnapshot(), STALE)).toContain("Data is stale");
  });

  it("summary table carries the six comparison metric names", () => {
    const html = renderSummary(summary);
    for (const label of [
      "Total Images Processed",
      "Average Confidence Score",
      "Average CPU Consumption",
      "Total Objects Detected",
      "Average Model Processing Time (s)",
      "Average Image Processing Time (s)",
    ]) {
      expect(html).toContain(label);
    }
    expect(html).toContain(String(summary.total_processed));
  });

  it("metrics table shows the newest docs up to the limit", () => {
    const html = renderMetricsTable(metrics, 3);
    const rows = html.match(/<tr><td>/g) ?? [];
    expect(rows).toHaveLength(3);
    expect(html).toContain(`<td>${metrics[0]!.request_no}</td>`);
  });

  it("timeline SVG draws one horizontal run per segment", () => {
    const segments = activeModelSegments(logs, "yolov5nu");
    const svg = renderTimeline(segments, 10);
    expect(svg).toContain("<polyline");
    for (const seg of segments) {
      expect(svg).toContain(seg.model);
    }
  });

  it("status panel renders counters for a running experiment", () => {
    const html = renderStatus(statusRunning as StatusDoc);
    expect(html).toContain("fixture-run");
    expect(html).toContain("queue depth");
  });

  it("escapes markup smuggled through server strings", () => {
    expect(escapeHtml("<img src=x>")).toBe("&lt;img src=x&gt;");
    const hostile: StatusDoc = {
      running: true,
      experiment_id: "<script>alert(1)</script>",
    };
    expect(renderStatus(hostile)).not.toContain("<script>");
  });

  it("reload reconstructs identical panels from the same API docs (K)", () => {
    // Two fresh render passes over one snapshot stand in for the page
    // before and after a reload: no hidden client state may leak in.
    const a = renderPanels(liveSnapshot(), LIVE);
    const b = renderPanels(
      JSON.parse(JSON.stringify(liveSnapshot())) as Snapshot,
      { ...LIVE },
    );
    expect(b).toBe(a);
    console.log(`PASS K: two independent renders of the same snapshot are byte-identical (${a.length} chars)`);
  });
});
