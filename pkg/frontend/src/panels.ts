// Every panel is a pure (docs -> HTML string) function: rendering twice
// from the same snapshot yields identical markup, so a page reload
// rebuilds the exact view from the API alone.

import type { PollState } from "./state.js";
import { isStale } from "./state.js";
import type { Segment, Point } from "./timeline.js";
import { activeModelSegments, ratePoints } from "./timeline.js";
import type { LogDoc, MetricsDoc, Snapshot, StatusDoc, SummaryDoc } from "./types.js";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const fmt = (value: number | null | undefined, digits = 4): string =>
  value === null || value === undefined ? "n/a" : value.toFixed(digits);

export function renderBanner(poll: PollState): string {
  if (!isStale(poll)) {
    return "";
  }
  return (
    `<div class="banner stale">Data is stale: server unreachable` +
    (poll.lastError ? ` (${escapeHtml(poll.lastError)})` : "") +
    `; retrying every ${(poll.backoffMs / 1000).toFixed(0)}s</div>`
  );
}

export function renderStatus(status: StatusDoc): string {
  if (!status.running && status.experiment_id === null) {
    return `<div class="status idle">No experiment running</div>`;
  }
  const rows = [
    ["experiment", status.experiment_id],
    ["state", status.running ? "running" : "finished"],
    ["active model", status.active_model ?? "n/a"],
    ["strategy", status.strategy ?? "n/a"],
    ["processed", status.processed ?? 0],
    ["queue depth", status.queue_depth ?? 0],
    ["accepted", status.accepted ?? 0],
    ["dropped", status.dropped ?? 0],
    ["switches", status.switches ?? 0],
  ];
  const cells = rows
    .map(([k, v]) => `<tr><th>${escapeHtml(k)}</th><td>${escapeHtml(v)}</td></tr>`)
    .join("");
  return `<table class="status">${cells}</table>`;
}

const CHART_WIDTH = 600;
const CHART_HEIGHT = 120;

function xScale(t: number, tMin: number, tMax: number): number {
  const span = tMax - tMin || 1;
  return ((t - tMin) / span) * (CHART_WIDTH - 20) + 10;
}

/** The model timeline as an SVG step chart, one y-level per model. */
export function renderTimeline(segments: Segment[], now: number): string {
  if (segments.length === 0) {
    return `<svg class="timeline" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}"></svg>`;
  }
  const models: string[] = [];
  for (const seg of segments) {
    if (!models.includes(seg.model)) {
      models.push(seg.model);
    }
  }
  const tMin = segments[0]!.start;
  const tMax = Math.max(now, ...segments.map((s) => s.end ?? s.start));
  const levelOf = (model: string): number =>
    CHART_HEIGHT - 20 - models.indexOf(model) * ((CHART_HEIGHT - 40) / Math.max(1, models.length - 1));

  const steps: string[] = [];
  for (let i = 0; i < segments.length; i++) {
    const seg = segments[i]!;
    const x1 = xScale(seg.start, tMin, tMax);
    const x2 = xScale(seg.end ?? tMax, tMin, tMax);
    const y = levelOf(seg.model);
    steps.push(`${x1},${y} ${x2},${y}`);
  }
  const labels = models
    .map(
      (m) =>
        `<text x="2" y="${levelOf(m) - 3}" class="model-label">${escapeHtml(m)}</text>`,
    )
    .join("");
  return (
    `<svg class="timeline" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}">` +
    `<polyline fill="none" stroke="currentColor" stroke-width="2" points="${steps.join(" ")}"/>` +
    labels +
    `</svg>`
  );
}

export function renderRateChart(points: Point[]): string {
  if (points.length === 0) {
    return `<svg class="rate" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}"></svg>`;
  }
  const tMin = points[0]!.x;
  const tMax = points[points.length - 1]!.x;
  const yMax = Math.max(1, ...points.map((p) => p.y));
  const marks = points
    .map((p) => {
      const cx = xScale(p.x, tMin, tMax);
      const cy = CHART_HEIGHT - 10 - (p.y / yMax) * (CHART_HEIGHT - 30);
      return `<circle cx="${cx.toFixed(1)}" cy="${cy.toFixed(1)}" r="2"/>`;
    })
    .join("");
  return `<svg class="rate" viewBox="0 0 ${CHART_WIDTH} ${CHART_HEIGHT}">${marks}</svg>`;
}

export function renderMetricsTable(metrics: MetricsDoc[], limit = 10): string {
  const rows = metrics
    .slice(0, limit)
    .map(
      (d) =>
        `<tr><td>${d.request_no}</td><td>${escapeHtml(d.model_name)}</td>` +
        `<td>${fmt(d.model_processing_time)}</td><td>${fmt(d.total_time)}</td>` +
        `<td>${fmt(d.avg_confidence, 3)}</td><td>${d.kept_count}</td>` +
        `<td>${d.queue_depth_at_start}</td></tr>`,
    )
    .join("");
  return (
    `<table class="metrics"><thead><tr><th>#</th><th>model</th>` +
    `<th>service (s)</th><th>total (s)</th><th>conf</th><th>objects</th>` +
    `<th>depth</th></tr></thead><tbody>${rows}</tbody></table>`
  );
}

export function renderEventFeed(logs: LogDoc[], limit = 15): string {
  const interesting = logs.filter((d) =>
    ["switch", "decision", "rules_changed"].includes(d.event),
  );
  const items = interesting
    .slice(0, limit)
    .map((d) => {
      if (d.event === "switch") {
        return (
          `<li class="switch">t=${fmt(d.timestamp, 2)} switch ` +
          `${escapeHtml(d.old)} &rarr; ${escapeHtml(d.new)} (${escapeHtml(d.reason ?? "")})</li>`
        );
      }
      if (d.event === "rules_changed") {
        return `<li class="rules">t=${fmt(d.timestamp, 2)} rules changed</li>`;
      }
      return (
        `<li class="decision">t=${fmt(d.timestamp, 2)} ${escapeHtml(d.strategy)} ` +
        `&rarr; ${escapeHtml(d.model ?? "?")}${d.switched ? " (switched)" : ""}</li>`
      );
    })
    .join("");
  return `<ul class="events">${items}</ul>`;
}

const SUMMARY_ROWS: Array<[string, (s: SummaryDoc) => string]> = [
  ["Total Images Processed", (s) => String(s.total_processed)],
  ["Average Confidence Score", (s) => fmt(s.avg_confidence)],
  ["Average CPU Consumption", (s) => fmt(s.avg_cpu, 2)],
  ["Total Objects Detected", (s) => String(s.total_objects_detected)],
  ["Average Model Processing Time (s)", (s) => fmt(s.avg_model_processing_time)],
  ["Average Image Processing Time (s)", (s) => fmt(s.avg_image_processing_time)],
];

export function renderSummary(summary: SummaryDoc): string {
  const rows = SUMMARY_ROWS.map(
    ([label, pick]) =>
      `<tr><th>${escapeHtml(label)}</th><td>${escapeHtml(pick(summary))}</td></tr>`,
  ).join("");
  return (
    `<h2>Run summary: ${escapeHtml(summary.experiment_id)}</h2>` +
    `<table class="summary">${rows}</table>`
  );
}

/** The whole panel region from one poll snapshot; pure by construction. */
export function renderPanels(snapshot: Snapshot, poll: PollState): string {
  const { status, metrics, logs, summary } = snapshot;
  const idle = !status.running && status.experiment_id === null;
  const gauge = metrics.length > 0 ? metrics[0]!.avg_confidence : null;
  const depth = status.queue_depth ?? 0;
  const now = metrics.length > 0 ? metrics[0]!.absolute_time : 0;
  const sections = [
    renderBanner(poll),
    `<section id="status-panel">${renderStatus(status)}</section>`,
  ];
  if (idle) {
    sections.push(`<section class="disabled">Panels activate once an experiment starts.</section>`);
  } else {
    sections.push(
      `<section id="timeline-panel"><h3>Active model</h3>` +
        renderTimeline(activeModelSegments(logs, status.active_model), now) +
        `</section>`,
      `<section id="rate-panel"><h3>Request rate</h3>${renderRateChart(ratePoints(metrics))}</section>`,
      `<section id="gauge-panel"><h3>Latest confidence</h3>` +
        `<div class="gauge">${gauge === null ? "n/a" : fmt(gauge, 3)}</div>` +
        `<h3>Queue depth</h3><div class="gauge">${depth}</div></section>`,
      `<section id="metrics-panel"><h3>Latest requests</h3>${renderMetricsTable(metrics)}</section>`,
      `<section id="events-panel"><h3>Decisions &amp; switches</h3>${renderEventFeed(logs)}</section>`,
    );
    if (summary !== null) {
      sections.push(`<section id="summary-panel">${renderSummary(summary)}</section>`);
    }
  }
  return sections.join("\n");
}
