// Poll-loop state machine, kept pure so the liveness behaviour
// (stale banner, backoff, recovery) is testable without timers.

export type Phase = "idle" | "live" | "stale";

export interface PollState {
  phase: Phase;
  inFlight: boolean;
  consecutiveFailures: number;
  backoffMs: number;
  lastSuccessAt: number | null;
  lastError: string | null;
}

export interface PollOptions {
  periodMs: number;
  /* failures before the banner shows */
  staleAfter: number;
  maxBackoffMs: number;
}

export const DEFAULT_OPTIONS: PollOptions = {
  periodMs: 2000,
  staleAfter: 2,
  maxBackoffMs: 30000,
};

export const INITIAL_STATE: PollState = {
  phase: "idle",
  inFlight: false,
  consecutiveFailures: 0,
  backoffMs: DEFAULT_OPTIONS.periodMs,
  lastSuccessAt: null,
  lastError: null,
};

export type PollEvent =
  | { kind: "poll-started" }
  | { kind: "poll-succeeded"; at: number }
  | { kind: "poll-failed"; at: number; error: string };

export function reduce(
  state: PollState,
  event: PollEvent,
  options: PollOptions = DEFAULT_OPTIONS,
): PollState {
  switch (event.kind) {
    case "poll-started":
      return { ...state, inFlight: true };
    case "poll-succeeded":
      return {
        phase: "live",
        inFlight: false,
        consecutiveFailures: 0,
        backoffMs: options.periodMs,
        lastSuccessAt: event.at,
        lastError: null,
      };
    case "poll-failed": {
      const failures = state.consecutiveFailures + 1;
      const stale = failures >= options.staleAfter;
      return {
        ...state,
        phase: stale ? "stale" : state.phase,
        inFlight: false,
        consecutiveFailures: failures,
        backoffMs: stale
          ? Math.min(state.backoffMs * 2, options.maxBackoffMs)
          : options.periodMs,
        lastError: event.error,
      };
    }
  }
}

/** One in-flight poll per panel group: skip ticks that land mid-fetch. */
export function shouldPoll(state: PollState): boolean {
  return !state.inFlight;
}

/** Wait before the next poll: the period while live, backoff once stale. */
export function nextDelay(state: PollState, options: PollOptions = DEFAULT_OPTIONS): number {
  return state.phase === "stale" ? state.backoffMs : options.periodMs;
}

export function isStale(state: PollState): boolean {
  return state.phase === "stale";
}
