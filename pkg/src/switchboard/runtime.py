"""Model repository, synthetic inference, and request processing.

The repository preloads every model profile once and keeps a single
swappable active-model cell.  Inference is simulated: latency, detection
count, confidences, and class ids are drawn from each profile's
calibrated distributions, reproducibly per (seed, request_id, profile).
"""

from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from switchboard.models import (
    DEFAULT_CLASS_UNIVERSE,
    DetectionResult,
    DomainError,
    MetricsRecord,
    ModelProfile,
    Request,
)

log = logging.getLogger(__name__)


class UnknownModel(DomainError):
    """Switch target does not name a preloaded profile."""


class UnknownInitial(DomainError):
    """Initial active model is not among the profiles being preloaded."""


@dataclass
class RawDetections:
    """Unfiltered simulated detector output for one request."""

    entries: list[tuple[int, float]]
    sampled_latency: float


class Repository:
    """All profiles resident in memory plus the active-model cell.

    The profile set is immutable after preload.  ``active_id`` reads are
    lock-free (plain attribute read); swaps are serialized.
    """

    def __init__(self, profiles: Sequence[ModelProfile], initial: str):
        if initial not in {p.id for p in profiles}:
            raise UnknownInitial(f"initial model {initial!r} not among profiles")
        self.profiles: dict[str, ModelProfile] = {}
        self.preload_times: dict[str, float] = {}
        for p in profiles:
            t0 = time.perf_counter()
            # Residency for a synthetic profile is just the object itself;
            # a real checkpoint load would land here.
            self.profiles[p.id] = p
            self.preload_times[p.id] = time.perf_counter() - t0
        self.active_id = initial
        self.swap_count = 0
        self._swap_lock = threading.Lock()

    def active_profile(self) -> ModelProfile:
        return self.profiles[self.active_id]

    def apply_switch(self, target: str) -> float:
        """Point the active cell at ``target``; returns measured swap seconds.

        Idempotent when target is already active (still counted, so
        callers can audit redundant decisions).  In-flight work keeps the
        profile it snapshotted at start.
        """
        if target not in self.profiles:
            raise UnknownModel(f"cannot switch to unknown model {target!r}")
        with self._swap_lock:
            t0 = time.perf_counter()
            self.active_id = target
            elapsed = time.perf_counter() - t0
            self.swap_count += 1
        return elapsed


def preload(profiles: Sequence[ModelProfile], initial: str) -> Repository:
    return Repository(profiles, initial)


def poll_switch_signal(path: str | Path, last_seen: Optional[str]) -> Optional[str]:
    """Read the switch-signal file; return its token if it changed.

    The file carries exactly one model token (id or display name),
    surrounding whitespace ignored.  Missing, empty, or unreadable files
    mean "no signal".
    """
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        return None
    except OSError as exc:
        log.warning("switch file %s unreadable: %s", path, exc)
        return None
    token = text.strip()
    if not token or token == last_seen:
        return None
    return token


def request_rng(seed: int, request_id: int, profile_id: str) -> np.random.Generator:
    """Generator keyed by (seed, request, profile): same triple, same stream."""
    return np.random.default_rng((seed, request_id) + tuple(profile_id.encode("utf-8")))


def infer(
    request: Request,
    profile: ModelProfile,
    rng: np.random.Generator,
    class_universe: Sequence[int] = DEFAULT_CLASS_UNIVERSE,
) -> RawDetections:
    """Simulate one inference pass under ``profile``.

    Latency is log-normal with the profile's mean and coefficient of
    variation (cv 0 degenerates to the exact mean); the entry count is
    Poisson; confidences are normal clamped to [0, 1]; class ids are
    uniform over the universe.  Draw order is fixed, so outputs are a
    pure function of the generator state.
    """
    if profile.latency_cv > 0:
        sigma2 = math.log1p(profile.latency_cv**2)
        mu = math.log(profile.latency_mean) - 0.5 * sigma2
        sampled_latency = float(rng.lognormal(mean=mu, sigma=math.sqrt(sigma2)))
    else:
        sampled_latency = profile.latency_mean
    count = int(rng.poisson(profile.detections_mean))
    entries: list[tuple[int, float]] = []
    if count > 0:
        confs = np.clip(rng.normal(profile.confidence_mean, profile.confidence_sd, size=count), 0.0, 1.0)
        classes = rng.integers(0, len(class_universe), size=count)
        entries = [(int(class_universe[c]), float(conf)) for c, conf in zip(classes, confs)]
    return RawDetections(entries=entries, sampled_latency=sampled_latency)


def postprocess(
    raw: RawDetections,
    threshold: float,
    classes: Optional[Iterable[int]] = None,
) -> DetectionResult:
    """Filter raw detections by confidence threshold and class set.

    ``classes=None`` keeps every class.  avg_confidence is the mean over
    kept entries, 0 when nothing survives.
    """
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    allowed = None if classes is None else set(classes)
    kept = [
        (c, conf)
        for c, conf in raw.entries
        if conf >= threshold and (allowed is None or c in allowed)
    ]
    avg = float(np.mean([conf for _, conf in kept])) if kept else 0.0
    return DetectionResult(
        raw=list(raw.entries), kept=kept, kept_count=len(kept), avg_confidence=avg
    )


def compute_utility(total_time: float, avg_confidence: float, target: float) -> float:
    """U = confidence x min(1, target / total_time).

    Equals raw confidence while the response-time target is met, then
    decays hyperbolically; bounded by [0, avg_confidence].
    """
    if total_time <= 0:
        raise ValueError("total_time must be > 0")
    if target <= 0:
        raise ValueError("target must be > 0")
    return avg_confidence * min(1.0, target / total_time)


@dataclass
class InFlight:
    """One request mid-service: profile snapshot taken at start."""

    request: Request
    profile: ModelProfile
    raw: RawDetections
    queue_depth_at_start: int

    @property
    def finish_time(self) -> float:
        assert self.request.start_time is not None
        return self.request.start_time + self.raw.sampled_latency


class RequestProcessor:
    """Turns dequeued requests into MetricsRecords.

    Shared by the virtual-time engine and the real-time worker so both
    modes run the identical pipeline: snapshot the active profile, draw
    the inference, filter, score, and append to the knowledge sink.
    """

    def __init__(
        self,
        repo: Repository,
        sink,
        seed: int,
        confidence_threshold: float,
        class_filter: Optional[Sequence[int]],
        target_response_time: float,
        epoch: float = 0.0,
        class_universe: Sequence[int] = DEFAULT_CLASS_UNIVERSE,
    ):
        self.repo = repo
        self.sink = sink
        self.seed = seed
        self.confidence_threshold = confidence_threshold
        self.class_filter = None if class_filter is None else list(class_filter)
        self.target_response_time = target_response_time
        self.epoch = epoch
        self.class_universe = class_universe
        self.processed_count = 0
        # Optional hook invoked with each finished MetricsRecord (used to
        # fold records into the online model statistics).
        self.on_record = None

    def begin(self, request: Request, queue_depth: int) -> InFlight:
        """Snapshot the active profile and draw the full inference."""
        profile = self.repo.active_profile()
        rng = request_rng(self.seed, request.request_id, profile.id)
        raw = infer(request, profile, rng, self.class_universe)
        return InFlight(request=request, profile=profile, raw=raw, queue_depth_at_start=queue_depth)

    def finish(self, job: InFlight, finish_time: float) -> MetricsRecord:
        """Post-process, score, append to both indexes, return the record."""
        job.request.finish_time = finish_time
        det = postprocess(job.raw, self.confidence_threshold, self.class_filter)
        total_time = finish_time - job.request.arrival_time
        self.processed_count += 1
        record = MetricsRecord(
            timestamp=finish_time,
            request_no=self.processed_count,
            model_name=job.profile.display_name,
            model_processing_time=job.raw.sampled_latency,
            total_time=total_time,
            absolute_time=finish_time - self.epoch,
            utility=compute_utility(total_time, det.avg_confidence, self.target_response_time),
            kept_count=det.kept_count,
            avg_confidence=det.avg_confidence,
            queue_depth_at_start=job.queue_depth_at_start,
            request_id=job.request.request_id,
            cpu_load=job.profile.cpu_cost,
        )
        record.log_id = self.sink.append("final_metrics", record.to_doc())
        self.sink.append(
            "new_logs",
            {
                "event": "request_processed",
                "timestamp": finish_time,
                "request_id": job.request.request_id,
                "request_no": record.request_no,
                "model_name": job.profile.display_name,
                "queue_depth_at_start": record.queue_depth_at_start,
                "raw_count": len(job.raw.entries),
                "kept_count": det.kept_count,
                "avg_confidence": det.avg_confidence,
                "total_time": total_time,
                "utility": record.utility,
            },
        )
        if self.on_record is not None:
            self.on_record(record)
        return record


def run_worker(
    backlog,
    processor: RequestProcessor,
    stop,
    clock=time.monotonic,
    sleep=time.sleep,
    poll_interval: float = 0.005,
) -> int:
    """Real-time single consumer: drain the backlog until ``stop`` is set.

    Occupies the sampled latency of each request with a real sleep.  On
    an empty queue it idles one poll interval.  Returns the processed
    count.  Stop semantics: current request always completes.
    """
    while not stop.is_set():
        request = backlog.dequeue_oldest(now=clock())
        if request is None:
            sleep(poll_interval)
            continue
        job = processor.begin(request, backlog.queue_depth())
        sleep(job.raw.sampled_latency)
        processor.finish(job, clock())
    return processor.processed_count


def drain_worker(backlog, processor: RequestProcessor, clock=time.monotonic, sleep=time.sleep) -> int:
    """Process whatever is queued right now, then return."""
    while True:
        request = backlog.dequeue_oldest(now=clock())
        if request is None:
            return processor.processed_count
        job = processor.begin(request, backlog.queue_depth())
        sleep(job.raw.sampled_latency)
        processor.finish(job, clock())
