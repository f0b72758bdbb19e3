import type { LogDoc, MetricsDoc } from "./types.js";

/** One horizontal run of the active-model step chart. */
export interface Segment {
  model: string;
  start: number;
  end: number | null; // null = still active
}

function isSwitch(doc: LogDoc): doc is LogDoc & { old: string; new: string } {
  return doc.event === "switch" && typeof doc.old === "string" && typeof doc.new === "string";
}

/**
 * Rebuild the active-model timeline from switch events alone.
 *
 * The model before the first switch comes from that event's `old` field,
 * so the chart is correct even when polling started mid-run; `fallback`
 * (status.active_model) covers runs that never switched.
 */
export function activeModelSegments(logs: LogDoc[], fallback?: string): Segment[] {
  const switches = logs.filter(isSwitch).sort(
    (a, b) => a.timestamp - b.timestamp || a.log_id - b.log_id,
  );
  if (switches.length === 0) {
    return fallback ? [{ model: fallback, start: 0, end: null }] : [];
  }
  const segments: Segment[] = [{ model: switches[0]!.old, start: 0, end: null }];
  for (const event of switches) {
    const current = segments[segments.length - 1]!;
    current.end = event.timestamp;
    segments.push({ model: event.new, start: event.timestamp, end: null });
  }
  return segments;
}

export interface Point {
  x: number;
  y: number;
}

/**
 * Request-rate series: one point per metrics doc, rate estimated from
 * the spacing to the previous arrival (0 for the oldest doc in view).
 */
export function ratePoints(metrics: MetricsDoc[]): Point[] {
  const ordered = [...metrics].sort((a, b) => a.absolute_time - b.absolute_time);
  return ordered.map((doc, i) => {
    if (i === 0) {
      return { x: doc.absolute_time, y: 0 };
    }
    const gap = doc.absolute_time - ordered[i - 1]!.absolute_time;
    return { x: doc.absolute_time, y: gap > 0 ? 1 / gap : 0 };
  });
}

/** Per-request series for any numeric record field. */
export function fieldPoints(metrics: MetricsDoc[], field: keyof MetricsDoc): Point[] {
  return [...metrics]
    .sort((a, b) => a.absolute_time - b.absolute_time)
    .map((doc) => ({ x: doc.absolute_time, y: Number(doc[field]) }));
}
