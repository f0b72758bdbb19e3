"""Experiment lifecycle: wire the parts, run, summarize, compare.

Two execution modes share the identical pipeline components:

* virtual_time: a single-threaded event loop over (time, seq)-ordered
  events (arrivals, service completions, control ticks).  Runs are
  deterministic and typically finish in milliseconds.
* real_time: the load generator, the processing worker, and the MAPE
  loop each run on their own thread against the wall clock.

All record timestamps are seconds since experiment start in both modes.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from switchboard.ingestion import Backlog, Dropped, NotRunning
from switchboard.knowledge import KnowledgeStore, read_archive, update_model_stats
from switchboard.loadgen import ReplayReport, replay, resolve_trace
from switchboard.mape import ControlLoop, run_loop
from switchboard.models import (
    DomainError,
    ExperimentConfig,
    InvalidConfig,
    StrategySpec,
    Violation,
    validate_config,
)
from switchboard.runtime import RequestProcessor, preload, run_worker

DEFAULT_HALF_LIFE = 30.0

COMPARISON_METRICS = (
    "Total Images Processed",
    "Average Confidence Score",
    "Average CPU Consumption",
    "Total Objects Detected",
    "Average Model Processing Time (s)",
    "Average Image Processing Time (s)",
)


class AlreadyRunning(DomainError):
    pass


class UnknownExperiment(DomainError):
    pass


@dataclass
class ExperimentSummary:
    """Aggregates over one run, recomputable from its final_metrics index."""

    experiment_id: str
    total_processed: int
    avg_confidence: float
    avg_cpu: Optional[float]
    total_objects_detected: int
    avg_model_processing_time: float
    avg_image_processing_time: float
    switches: int
    utility_mean: float
    unprocessed_depth: int = 0
    dropped: int = 0

    def to_doc(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "total_processed": self.total_processed,
            "avg_confidence": self.avg_confidence,
            "avg_cpu": self.avg_cpu,
            "total_objects_detected": self.total_objects_detected,
            "avg_model_processing_time": self.avg_model_processing_time,
            "avg_image_processing_time": self.avg_image_processing_time,
            "switches": self.switches,
            "utility_mean": self.utility_mean,
            "unprocessed_depth": self.unprocessed_depth,
            "dropped": self.dropped,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ExperimentSummary":
        return cls(
            experiment_id=str(doc["experiment_id"]),
            total_processed=int(doc["total_processed"]),
            avg_confidence=float(doc["avg_confidence"]),
            avg_cpu=None if doc.get("avg_cpu") is None else float(doc["avg_cpu"]),
            total_objects_detected=int(doc["total_objects_detected"]),
            avg_model_processing_time=float(doc["avg_model_processing_time"]),
            avg_image_processing_time=float(doc["avg_image_processing_time"]),
            switches=int(doc["switches"]),
            utility_mean=float(doc["utility_mean"]),
            unprocessed_depth=int(doc.get("unprocessed_depth", 0)),
            dropped=int(doc.get("dropped", 0)),
        )

    def comparison_row(self) -> dict:
        return {
            "Total Images Processed": self.total_processed,
            "Average Confidence Score": self.avg_confidence,
            "Average CPU Consumption": self.avg_cpu,
            "Total Objects Detected": self.total_objects_detected,
            "Average Model Processing Time (s)": self.avg_model_processing_time,
            "Average Image Processing Time (s)": self.avg_image_processing_time,
        }


def initial_model_id(config: ExperimentConfig) -> str:
    """The model active at t=0: a single strategy's pin, else the fastest."""
    if config.strategy.kind == "single":
        return config.strategy.params["model"]
    return min(config.profiles, key=lambda p: p.latency_mean).id


def summarize_docs(
    experiment_id: str,
    final_docs: Sequence[dict],
    new_log_docs: Sequence[dict],
    unprocessed_depth: int = 0,
    dropped: int = 0,
) -> ExperimentSummary:
    """Aggregate index documents into a summary (the audit path).

    Average CPU is abstract: the cpu_load units of every executed
    inference summed and divided by the run's elapsed time.  Host process
    counters are deliberately not consulted; they would measure this
    simulator, not a model.
    """
    n = len(final_docs)
    switches = sum(1 for d in new_log_docs if d.get("event") == "switch")
    if n == 0:
        return ExperimentSummary(
            experiment_id=experiment_id,
            total_processed=0,
            avg_confidence=0.0,
            avg_cpu=None,
            total_objects_detected=0,
            avg_model_processing_time=0.0,
            avg_image_processing_time=0.0,
            switches=switches,
            utility_mean=0.0,
            unprocessed_depth=unprocessed_depth,
            dropped=dropped,
        )
    elapsed = max(d["timestamp"] for d in final_docs)
    cpu_total = sum(d["cpu_load"] for d in final_docs if d.get("cpu_load") is not None)
    return ExperimentSummary(
        experiment_id=experiment_id,
        total_processed=n,
        avg_confidence=sum(d["avg_confidence"] for d in final_docs) / n,
        avg_cpu=None if elapsed <= 0 else cpu_total / elapsed,
        total_objects_detected=sum(d["kept_count"] for d in final_docs),
        avg_model_processing_time=sum(d["model_processing_time"] for d in final_docs) / n,
        avg_image_processing_time=sum(d["total_time"] for d in final_docs) / n,
        switches=switches,
        utility_mean=sum(d["utility"] for d in final_docs) / n,
        unprocessed_depth=unprocessed_depth,
        dropped=dropped,
    )


def summarize_store(
    store: KnowledgeStore, unprocessed_depth: int = 0, dropped: int = 0
) -> ExperimentSummary:
    return summarize_docs(
        store.experiment_id,
        store.latest_docs("final_metrics", store.size("final_metrics"))[::-1],
        store.latest_docs("new_logs", store.size("new_logs"))[::-1],
        unprocessed_depth=unprocessed_depth,
        dropped=dropped,
    )


def summarize_archive(experiment_id: str, archive: bytes) -> ExperimentSummary:
    """Independent recomputation from an exported archive."""
    indexes = read_archive(archive)
    return summarize_docs(
        experiment_id, indexes.get("final_metrics", []), indexes.get("new_logs", [])
    )


# --- virtual-time engine --------------------------------------------------


@dataclass
class VirtualRun:
    """Everything a finished virtual run leaves behind."""

    summary: ExperimentSummary
    store: KnowledgeStore
    repo: object
    backlog: Backlog
    loop: ControlLoop
    processor: RequestProcessor
    arrival_times: list[float]
    end_time: float


def run_virtual(
    config: ExperimentConfig,
    root: Optional[str | Path] = None,
    injections: Sequence[tuple[float, Callable]] = (),
) -> VirtualRun:
    """Run one experiment on the logical clock, to completion.

    ``injections`` schedules callables at given virtual times; each is
    called with the VirtualRun-in-progress (store, repo, ... are live),
    which is how tests flip rules or prod state mid-run.
    """
    validate_config(config)
    trace = resolve_trace(config.trace, config.seed)
    store = KnowledgeStore(
        config.experiment_id,
        root=root,
        config_text=config.to_yaml(),
        profile_ids={p.id for p in config.profiles},
    )
    repo = preload(config.profiles, initial_model_id(config))
    backlog = Backlog(capacity=config.backlog_capacity)
    processor = RequestProcessor(
        repo=repo,
        sink=store,
        seed=config.seed,
        confidence_threshold=config.confidence_threshold,
        class_filter=config.class_filter,
        target_response_time=config.target_response_time,
        epoch=0.0,
    )
    loop = ControlLoop(
        store, backlog, repo, config.profiles, config.target_response_time,
        window=config.mape_period,
    )
    store.set_adaptation_rules(config.strategy, now=0.0)
    known = {p.display_name for p in config.profiles}
    half_life = float(config.strategy.params.get("half_life", DEFAULT_HALF_LIFE))

    ctx = VirtualRun(
        summary=None,  # filled at the end
        store=store,
        repo=repo,
        backlog=backlog,
        loop=loop,
        processor=processor,
        arrival_times=[],
        end_time=0.0,
    )

    heap: list[tuple] = []
    seq = itertools.count()

    def push(t: float, kind: str, data=None) -> None:
        heapq.heappush(heap, (t, next(seq), kind, data))

    gaps = trace.gaps
    scheduled = 0
    issued = 0
    next_arrival_time = 0.0
    done = False
    job = None

    def schedule_next_arrival() -> None:
        nonlocal scheduled, next_arrival_time
        if scheduled < len(gaps) and not done:
            next_arrival_time += gaps[scheduled]
            push(next_arrival_time, "arrival")
            scheduled += 1

    def pending_work() -> bool:
        return issued < len(gaps) or backlog.queue_depth() > 0 or job is not None

    def start_service(t: float) -> None:
        nonlocal job
        request = backlog.dequeue_oldest(t)
        if request is None:
            return
        job = processor.begin(request, backlog.queue_depth())
        push(t + job.raw.sampled_latency, "finish")

    schedule_next_arrival()
    push(config.mape_period, "tick")
    for t, fn in injections:
        push(t, "inject", fn)

    while heap:
        t, _, kind, data = heapq.heappop(heap)
        if kind == "arrival":
            issued += 1
            if not done:
                try:
                    backlog.ingest(0, now=t)
                except Dropped:
                    pass  # counted by the backlog; the schedule marches on
                else:
                    ctx.arrival_times.append(t)
                    if job is None:
                        start_service(t)
            schedule_next_arrival()
        elif kind == "finish":
            record = processor.finish(job, t)
            update_model_stats(store.state, record, half_life, known_models=known)
            job = None
            ctx.end_time = t
            if config.request_limit is not None and processor.processed_count >= config.request_limit:
                done = True
            elif backlog.queue_depth() > 0:
                start_service(t)
        elif kind == "tick":
            if not done:
                loop.tick(t)
                if pending_work():
                    push(t + config.mape_period, "tick")
        elif kind == "inject":
            data(ctx)

    backlog.close()
    ctx.summary = summarize_store(
        store,
        unprocessed_depth=backlog.queue_depth(),
        dropped=backlog.dropped_total,
    )
    return ctx


# --- real-time runner -----------------------------------------------------


class RunHandle:
    """A live (or just-finished) experiment and its moving parts."""

    def __init__(self, config: ExperimentConfig, store: KnowledgeStore):
        self.config = config
        self.store = store
        self.repo = preload(config.profiles, initial_model_id(config))
        self.backlog = Backlog(capacity=config.backlog_capacity)
        self.processor = RequestProcessor(
            repo=self.repo,
            sink=store,
            seed=config.seed,
            confidence_threshold=config.confidence_threshold,
            class_filter=config.class_filter,
            target_response_time=config.target_response_time,
            epoch=0.0,
        )
        self.loop = ControlLoop(
            store, self.backlog, self.repo, config.profiles,
            config.target_response_time, window=config.mape_period,
        )
        self._epoch = time.monotonic()
        self._replay_stop = threading.Event()
        self._worker_stop = threading.Event()
        self._mape_stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self.replay_report: Optional[ReplayReport] = None
        self.summary: Optional[ExperimentSummary] = None
        self.running = False
        self._known = {p.display_name for p in config.profiles}
        self._half_life = float(config.strategy.params.get("half_life", DEFAULT_HALF_LIFE))
        self._stats_lock = threading.Lock()

    def clock(self) -> float:
        """Seconds since experiment start."""
        return time.monotonic() - self._epoch

    def _on_record(self, record) -> None:
        with self._stats_lock:
            update_model_stats(
                self.store.state, record, self._half_life, known_models=self._known
            )

    def start(self) -> None:
        self.store.set_adaptation_rules(self.config.strategy, now=0.0)
        self.processor.on_record = self._on_record
        trace = resolve_trace(self.config.trace, self.config.seed)

        def replay_task():
            self.replay_report = replay(
                trace,
                self.backlog.ingest,
                clock_mode="real_time",
                clock=self.clock,
                stop=self._replay_stop,
            )

        worker = threading.Thread(
            target=run_worker,
            args=(self.backlog, self.processor, self._worker_stop),
            kwargs={"clock": self.clock},
            name="worker",
            daemon=True,
        )
        mape = threading.Thread(
            target=run_loop,
            args=(self.loop, self.config.mape_period, self._mape_stop),
            kwargs={"clock": self.clock},
            name="mape",
            daemon=True,
        )
        generator = threading.Thread(target=replay_task, name="replay", daemon=True)
        self._threads = [worker, mape, generator]
        self.running = True
        for t in self._threads:
            t.start()

    def wait_for_replay(self, timeout: Optional[float] = None) -> None:
        """Block until the load generator has issued its whole trace."""
        self._threads[2].join(timeout=timeout)

    def status(self) -> dict:
        spec = self.store.get_adaptation_rules()
        return {
            "running": self.running,
            "experiment_id": self.config.experiment_id,
            "clock_mode": self.config.clock_mode,
            "elapsed": self.clock() if self.running else None,
            "active_model": self.repo.profiles[self.repo.active_id].display_name,
            "strategy": None if spec is None else spec.kind,
            "processed": self.processor.processed_count,
            "queue_depth": self.backlog.queue_depth(),
            "accepted": self.backlog.accepted_total,
            "dropped": self.backlog.dropped_total,
            "switches": self.repo.swap_count,
        }

    def stop(self, drain: bool = True, timeout: float = 30.0) -> ExperimentSummary:
        if not self.running:
            assert self.summary is not None
            return self.summary
        self._replay_stop.set()
        replay_thread = self._threads[2]
        replay_thread.join(timeout=timeout)
        self.backlog.close()
        if drain:
            deadline = time.monotonic() + timeout
            while self.backlog.queue_depth() > 0 and time.monotonic() < deadline:
                time.sleep(0.005)
        self._worker_stop.set()
        self._mape_stop.set()
        for t in self._threads[:2]:
            t.join(timeout=timeout)
        self.running = False
        self.summary = summarize_store(
            self.store,
            unprocessed_depth=self.backlog.queue_depth(),
            dropped=self.backlog.dropped_total,
        )
        return self.summary


# --- orchestrator ---------------------------------------------------------


class Orchestrator:
    """At most one experiment at a time; finished runs stay queryable."""

    def __init__(self, root: Optional[str | Path] = None):
        self.root = None if root is None else Path(root)
        self._lock = threading.Lock()
        self._handle: Optional[RunHandle] = None
        self._stores: dict[str, KnowledgeStore] = {}
        self._summaries: dict[str, ExperimentSummary] = {}
        self._last_experiment: Optional[str] = None

    def is_running(self) -> bool:
        return self._handle is not None and self._handle.running

    def start_experiment(self, config: ExperimentConfig):
        """Validate, wire, and launch; virtual runs complete synchronously."""
        with self._lock:
            if self.is_running():
                raise AlreadyRunning(f"experiment {self._handle.config.experiment_id!r} is active")
            validate_config(config)
            if config.experiment_id in self._stores:
                raise InvalidConfig(
                    [Violation("DuplicateExperiment", f"experiment id {config.experiment_id!r} already used")]
                )
            if config.clock_mode == "virtual_time":
                run = run_virtual(config, root=self.root)
                self._stores[config.experiment_id] = run.store
                self._summaries[config.experiment_id] = run.summary
                self._last_experiment = config.experiment_id
                return run
            store = KnowledgeStore(
                config.experiment_id,
                root=self.root,
                config_text=config.to_yaml(),
                profile_ids={p.id for p in config.profiles},
            )
            handle = RunHandle(config, store)
            handle.start()
            self._handle = handle
            self._stores[config.experiment_id] = store
            self._last_experiment = config.experiment_id
            return handle

    def stop_experiment(self, drain: bool = True) -> ExperimentSummary:
        """Stop the live run; repeated calls return the same summary."""
        with self._lock:
            if self._handle is not None:
                summary = self._handle.stop(drain=drain)
                self._summaries[self._handle.config.experiment_id] = summary
                self._handle = None
                return summary
            if self._last_experiment in self._summaries:
                return self._summaries[self._last_experiment]
            raise NotRunning("no experiment to stop")

    def status(self) -> dict:
        if self._handle is not None:
            return self._handle.status()
        if self._last_experiment is not None:
            doc = {"running": False, "experiment_id": self._last_experiment}
            summary = self._summaries.get(self._last_experiment)
            if summary is not None:
                doc["summary"] = summary.to_doc()
            return doc
        return {"running": False, "experiment_id": None}

    def current_store(self) -> KnowledgeStore:
        if self._handle is not None:
            return self._handle.store
        if self._last_experiment is not None:
            return self._stores[self._last_experiment]
        raise NotRunning("no experiment has run")

    def change_knowledge(self, spec: StrategySpec) -> None:
        """Swap adaptation rules on the live run (the changeKnowledge path)."""
        if self._handle is None or not self._handle.running:
            raise NotRunning("no active experiment")
        now = self._handle.clock()
        self._handle.store.set_adaptation_rules(spec, now=now)

    def ingest(self, payload: bytes | int) -> int:
        if self._handle is None or not self._handle.running:
            raise NotRunning("no active experiment")
        return self._handle.backlog.ingest(payload, now=self._handle.clock())

    def get_store(self, experiment_id: str) -> KnowledgeStore:
        store = self._stores.get(experiment_id)
        if store is None:
            raise UnknownExperiment(f"unknown experiment {experiment_id!r}")
        return store

    def export(self, experiment_id: str) -> bytes:
        return self.get_store(experiment_id).export_archive()

    def get_summary(self, experiment_id: str) -> ExperimentSummary:
        if experiment_id in self._summaries:
            return self._summaries[experiment_id]
        if experiment_id in self._stores:
            return summarize_store(self._stores[experiment_id])
        raise UnknownExperiment(f"unknown experiment {experiment_id!r}")

    def compare(self, experiment_ids: Sequence[str]) -> tuple[str, dict]:
        summaries = [self.get_summary(e) for e in experiment_ids]
        return render_comparison(summaries), comparison_doc(summaries)


# --- comparison rendering -------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def comparison_doc(summaries: Sequence[ExperimentSummary]) -> dict:
    return {
        "metrics": list(COMPARISON_METRICS),
        "experiments": {s.experiment_id: {m: s.comparison_row()[m] for m in COMPARISON_METRICS} for s in summaries},
    }


def render_comparison(summaries: Sequence[ExperimentSummary]) -> str:
    """Plain-text metric x experiment table."""
    headers = ["Metric"] + [s.experiment_id for s in summaries]
    rows = [
        [metric] + [_fmt(s.comparison_row()[metric]) for s in summaries]
        for metric in COMPARISON_METRICS
    ]
    widths = [
        max(len(headers[c]), *(len(r[c]) for r in rows)) for c in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines) + "\n"
