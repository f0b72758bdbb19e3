"""Monitor-Analyze-Plan-Execute loop over the knowledge store.

One tick reads recent metrics and the backlog (Monitor), predicts each
model's response time and confidence (Analyze), picks a model under the
configured strategy (Plan), and swaps the repository if needed
(Execute).  The selectors are pure functions; everything stateful stays
in the knowledge store and the repository.
"""

from __future__ import annotations

import bisect
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

from switchboard.ingestion import Backlog
from switchboard.knowledge import KnowledgeStore
from switchboard.models import (
    DomainError,
    KnowledgeState,
    ModelProfile,
    StrategyDecision,
    StrategySpec,
    band_table_violations,
    resolve_model_token,
)
from switchboard.runtime import Repository, poll_switch_signal

log = logging.getLogger(__name__)

# Rate bands (requests/second, half-open [lo, hi)) -> model id.  Only the
# two outer bands are measurement-anchored; the middle boundaries are
# overridable defaults.
DEFAULT_NAIVE_BANDS: list[list] = [
    [0.0, 2.0, "x"],
    [2.0, 4.0, "l"],
    [4.0, 8.0, "m"],
    [8.0, 15.0, "s"],
    [15.0, None, "n"],
]

MONITOR_FIELDS = ("model_processing_time", "total_time", "avg_confidence", "utility")


class MalformedBands(DomainError):
    pass


class KnowledgeUnavailable(DomainError):
    pass


@dataclass
class MonitoredSnapshot:
    """What one Monitor pass saw: backlog probe plus knowledge reads."""

    taken_at: float
    arrival_rate: float
    queue_depth: int
    recent: dict[str, tuple[float, int]]
    active_model: str


@dataclass
class AnalysisReport:
    """Per-model predictions and whether adaptation is called for."""

    needs_adaptation: bool
    predicted_response_time: dict[str, float]
    predicted_confidence: dict[str, float]
    target_missed: bool
    confidence_headroom: bool


def monitor_tick(
    store: KnowledgeStore,
    backlog: Backlog,
    repo: Repository,
    now: float,
    window: float,
) -> MonitoredSnapshot:
    """Probe the backlog and summarize the freshest metrics."""
    try:
        arrivals = backlog.arrivals_in_window(now, window)
        arrival_rate = arrivals / window
        recent: dict[str, tuple[float, int]] = {}
        n = min(arrivals, 100)
        if n >= 1 and store.size("final_metrics") > 0:
            for f in MONITOR_FIELDS:
                try:
                    recent[f] = store.fetch_latest("final_metrics", [f], n)[f]
                except DomainError:
                    pass  # field absent from the selected docs; report nothing
    except OSError as exc:  # pragma: no cover - in-process store cannot fail
        raise KnowledgeUnavailable(str(exc)) from exc
    return MonitoredSnapshot(
        taken_at=now,
        arrival_rate=arrival_rate,
        queue_depth=backlog.queue_depth(),
        recent=recent,
        active_model=repo.active_id,
    )


def analyze(
    snapshot: MonitoredSnapshot,
    state: KnowledgeState,
    target: float,
    profiles: Sequence[ModelProfile],
) -> AnalysisReport:
    """Predict each model's response time and confidence at current depth.

    Response time is queue-aware: (queue_depth + 1) x learned latency
    mean, falling back to the configured profile mean for models with no
    observations yet.
    """
    depth = snapshot.queue_depth
    predicted_rt: dict[str, float] = {}
    predicted_conf: dict[str, float] = {}
    for p in profiles:
        stats = state.model_stats.get(p.display_name)
        if stats is not None and stats.count > 0:
            lat, conf = stats.latency_mean, stats.confidence_mean
        else:
            lat, conf = p.latency_mean, p.confidence_mean
        predicted_rt[p.id] = (depth + 1) * lat
        predicted_conf[p.id] = conf
    active = snapshot.active_model
    target_missed = predicted_rt[active] > target
    active_conf = predicted_conf[active]
    confidence_headroom = any(
        predicted_conf[m] > active_conf and predicted_rt[m] <= target
        for m in predicted_rt
        if m != active
    )
    return AnalysisReport(
        needs_adaptation=target_missed or confidence_headroom,
        predicted_response_time=predicted_rt,
        predicted_confidence=predicted_conf,
        target_missed=target_missed,
        confidence_headroom=confidence_headroom,
    )


def naive_select(rate: float, bands: Sequence[Sequence] = DEFAULT_NAIVE_BANDS) -> str:
    """Model for the unique half-open band [lo, hi) containing ``rate``."""
    problems = band_table_violations(bands)
    if problems:
        raise MalformedBands("; ".join(str(v) for v in problems))
    rows = sorted(
        ((float(lo), math.inf if hi is None else float(hi), str(m)) for lo, hi, m in bands),
        key=lambda r: r[0],
    )
    lows = [r[0] for r in rows]
    idx = bisect.bisect_right(lows, rate) - 1
    if idx < 0:
        raise MalformedBands(f"rate {rate} below the first band")
    return rows[idx][2]


def adamls_select(report: AnalysisReport, target: float) -> str:
    """Highest predicted confidence among models meeting the target.

    Ties break toward lower predicted response time, then id.  If no
    model meets the target, fall back to the fastest prediction.
    """
    rt = report.predicted_response_time
    conf = report.predicted_confidence
    qualifying = [m for m in rt if rt[m] <= target]
    if qualifying:
        return min(qualifying, key=lambda m: (-conf[m], rt[m], m))
    return min(rt, key=lambda m: (rt[m], m))


def plan(
    report: AnalysisReport,
    spec: StrategySpec,
    snapshot: MonitoredSnapshot,
    default_target: float,
) -> Optional[StrategyDecision]:
    """Pick the model the configured strategy wants right now.

    Returns None for external specs: those are driven by the switch file,
    not by this planner.
    """
    now = snapshot.taken_at
    if spec.kind == "single":
        model = spec.params["model"]
        return StrategyDecision(model, "single: pinned model", now)
    if spec.kind in ("naive", "modified_naive"):
        bands = spec.params.get("bands", DEFAULT_NAIVE_BANDS)
        model = naive_select(snapshot.arrival_rate, bands)
        return StrategyDecision(
            model, f"{spec.kind}: rate {snapshot.arrival_rate:.3f}/s", now
        )
    if spec.kind == "adamls":
        target = float(spec.params.get("target", default_target))
        model = adamls_select(report, target)
        rt = report.predicted_response_time[model]
        return StrategyDecision(
            model,
            f"adamls: predicted {rt:.4f}s vs target {target}s at depth {snapshot.queue_depth}",
            now,
        )
    if spec.kind == "external":
        return None
    raise DomainError(f"unplannable strategy kind {spec.kind!r}")


def execute(
    decision: StrategyDecision,
    repo: Repository,
    store: KnowledgeStore,
    now: float,
) -> bool:
    """Apply the decision; log a switch event only when a swap happens."""
    old = repo.active_id
    if decision.model_id == old:
        return False
    swap_latency = repo.apply_switch(decision.model_id)
    store.append(
        "new_logs",
        {
            "event": "switch",
            "timestamp": now,
            "old": repo.profiles[old].display_name,
            "new": repo.profiles[decision.model_id].display_name,
            "reason": decision.reason,
            "swap_latency": swap_latency,
        },
    )
    return True


class ControlLoop:
    """One managing system instance: repeated MAPE ticks over shared parts.

    The tick body is identical in real and virtual time; only the driver
    differs (a thread with sleeps vs. scheduled simulator events).
    """

    def __init__(
        self,
        store: KnowledgeStore,
        backlog: Backlog,
        repo: Repository,
        profiles: Sequence[ModelProfile],
        target_response_time: float,
        window: float,
    ):
        self.store = store
        self.backlog = backlog
        self.repo = repo
        self.profiles = list(profiles)
        self.target = target_response_time
        self.window = window
        self.tick_count = 0
        self.last_file_token: Optional[str] = None

    def tick(self, now: float) -> None:
        """Run one MAPE pass; errors are logged, never propagated."""
        self.tick_count += 1
        try:
            spec = self.store.get_adaptation_rules()
            if spec is None:
                return
            if spec.kind == "external":
                self._external_tick(spec, now)
                return
            snapshot = monitor_tick(self.store, self.backlog, self.repo, now, self.window)
            report = analyze(snapshot, self.store.state, self.target, self.profiles)
            decision = plan(report, spec, snapshot, self.target)
            assert decision is not None
            switched = execute(decision, self.repo, self.store, now)
            self.store.append(
                "new_logs",
                {
                    "event": "decision",
                    "timestamp": now,
                    "strategy": spec.kind,
                    "model": decision.model_id,
                    "reason": decision.reason,
                    "arrival_rate": snapshot.arrival_rate,
                    "queue_depth": snapshot.queue_depth,
                    "needs_adaptation": report.needs_adaptation,
                    "switched": switched,
                },
            )
        except Exception:
            log.exception("MAPE tick failed; skipping")
            try:
                self.store.append(
                    "new_logs", {"event": "tick_error", "timestamp": now}
                )
            except Exception:
                pass

    def _external_tick(self, spec: StrategySpec, now: float) -> None:
        token = poll_switch_signal(spec.params["path"], self.last_file_token)
        model_id = None
        if token is not None:
            self.last_file_token = token
            model_id = resolve_model_token(token, self.profiles)
            if model_id is None:
                self.store.append(
                    "new_logs",
                    {"event": "decision", "timestamp": now, "strategy": "external",
                     "model": None, "reason": f"external: unknown token {token!r}", "switched": False},
                )
                return
        if model_id is not None:
            decision = StrategyDecision(model_id, f"external: file token {token!r}", now)
            switched = execute(decision, self.repo, self.store, now)
            reason = decision.reason
            model = model_id
        else:
            switched = False
            reason = "external: no signal"
            model = self.repo.active_id
        self.store.append(
            "new_logs",
            {"event": "decision", "timestamp": now, "strategy": "external",
             "model": model, "reason": reason, "switched": switched},
        )


def run_loop(
    loop: ControlLoop,
    period: float,
    stop,
    clock=time.monotonic,
    sleep=time.sleep,
) -> int:
    """Real-time driver: tick every ``period`` seconds until stopped."""
    next_tick = clock() + period
    while not stop.is_set():
        now = clock()
        if now >= next_tick:
            loop.tick(now)
            next_tick += period
            continue
        sleep(min(period / 20.0, max(0.0, next_tick - now)))
    return loop.tick_count
