"""Shared domain types and experiment configuration.

Every value passed between subsystems (profiles, requests, metrics
records, traces, strategy specs) is defined here, together with the
experiment configuration schema and its validator.  This module does no
I/O beyond (de)serializing documents.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

# COCO-style class id universe used by the synthetic detector.
DEFAULT_CLASS_UNIVERSE = tuple(range(80))

DEFAULT_TARGET_RESPONSE_TIME = 0.5
DEFAULT_CONFIDENCE_THRESHOLD = 0.35
DEFAULT_MAPE_PERIOD = 1.0

CLOCK_MODES = ("real_time", "virtual_time")
STRATEGY_KINDS = ("single", "naive", "modified_naive", "adamls", "external")


class DomainError(Exception):
    """Base class for errors raised by the testbed."""


@dataclass(frozen=True)
class ModelProfile:
    """Synthetic stand-in for one object-detection model variant.

    A profile is a small set of distribution parameters: what a request
    costs in latency, what confidence the detector reports, and how many
    objects it tends to find.  Within one repository profiles are ordered
    "smaller is faster, larger is more confident".

    Attributes:
        id: Short token ("n", "s", "m", "l", "x").
        display_name: Long name accepted by the switch-signal file
            (e.g. "yolov5nu").
        latency_mean: Mean service time in seconds, > 0.
        latency_cv: Coefficient of variation of the service time, >= 0.
        confidence_mean: Mean reported confidence, in (0, 1].
        confidence_sd: Std dev of reported confidences, >= 0.
        detections_mean: Expected raw detections per request, >= 0.
        cpu_cost: Abstract load units consumed while this model is active.
    """

    id: str
    display_name: str
    latency_mean: float
    latency_cv: float
    confidence_mean: float
    confidence_sd: float
    detections_mean: float
    cpu_cost: float

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "display_name": self.display_name,
            "latency_mean": self.latency_mean,
            "latency_cv": self.latency_cv,
            "confidence_mean": self.confidence_mean,
            "confidence_sd": self.confidence_sd,
            "detections_mean": self.detections_mean,
            "cpu_cost": self.cpu_cost,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelProfile":
        return cls(
            id=str(doc["id"]),
            display_name=str(doc["display_name"]),
            latency_mean=float(doc["latency_mean"]),
            latency_cv=float(doc["latency_cv"]),
            confidence_mean=float(doc["confidence_mean"]),
            confidence_sd=float(doc["confidence_sd"]),
            detections_mean=float(doc["detections_mean"]),
            cpu_cost=float(doc["cpu_cost"]),
        )


def default_profiles() -> list[ModelProfile]:
    """The five shipped model profiles, ordered fastest to most confident.

    The nano numbers (0.015 s, 0.65) are the published measurements for the
    smallest detector variant; the remaining magnitudes are placeholder
    defaults chosen to be strictly monotone and are freely overridable in
    the experiment config.
    """
    rows = [
        # id, display,      lat,   conf, det,  cpu
        ("n", "yolov5nu", 0.015, 0.65, 3.8, 21.3),
        ("s", "yolov5su", 0.025, 0.69, 4.2, 24.7),
        ("m", "yolov5mu", 0.045, 0.73, 4.5, 28.0),
        ("l", "yolov5lu", 0.070, 0.76, 4.8, 31.4),
        ("x", "yolov5xu", 0.110, 0.79, 5.0, 34.8),
    ]
    return [
        ModelProfile(
            id=i,
            display_name=name,
            latency_mean=lat,
            latency_cv=0.25,
            confidence_mean=conf,
            confidence_sd=0.05,
            detections_mean=det,
            cpu_cost=cpu,
        )
        for i, name, lat, conf, det, cpu in rows
    ]


def profiles_by_id(profiles: list[ModelProfile]) -> dict[str, ModelProfile]:
    return {p.id: p for p in profiles}


def resolve_model_token(token: str, profiles: list[ModelProfile]) -> Optional[str]:
    """Map a switch-file token (id or display name) to a profile id."""
    token = token.strip()
    for p in profiles:
        if token == p.id or token == p.display_name:
            return p.id
    return None


@dataclass
class Request:
    """One ingested work item.

    ``payload`` is either raw bytes or a synthetic size in bytes; the
    pipeline never interprets its content.  Timestamps are on the
    experiment clock and obey arrival <= enqueue <= start <= finish
    whenever set.
    """

    request_id: int
    payload: bytes | int
    arrival_time: float
    enqueue_time: float
    start_time: Optional[float] = None
    finish_time: Optional[float] = None

    @property
    def payload_size(self) -> int:
        if isinstance(self.payload, bytes):
            return len(self.payload)
        return int(self.payload)

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {
            "request_id": self.request_id,
            "arrival_time": self.arrival_time,
            "enqueue_time": self.enqueue_time,
            "start_time": self.start_time,
            "finish_time": self.finish_time,
        }
        if isinstance(self.payload, bytes):
            doc["payload_b64"] = base64.b64encode(self.payload).decode("ascii")
        else:
            doc["payload_size"] = int(self.payload)
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Request":
        payload: bytes | int
        if "payload_b64" in doc:
            payload = base64.b64decode(doc["payload_b64"])
        else:
            payload = int(doc.get("payload_size", 0))
        return cls(
            request_id=int(doc["request_id"]),
            payload=payload,
            arrival_time=float(doc["arrival_time"]),
            enqueue_time=float(doc["enqueue_time"]),
            start_time=None if doc.get("start_time") is None else float(doc["start_time"]),
            finish_time=None if doc.get("finish_time") is None else float(doc["finish_time"]),
        )


@dataclass
class DetectionResult:
    """Raw detections plus the subset surviving the threshold/class filter."""

    raw: list[tuple[int, float]]
    kept: list[tuple[int, float]]
    kept_count: int
    avg_confidence: float

    def to_doc(self) -> dict:
        return {
            "raw": [[c, conf] for c, conf in self.raw],
            "kept": [[c, conf] for c, conf in self.kept],
            "kept_count": self.kept_count,
            "avg_confidence": self.avg_confidence,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "DetectionResult":
        return cls(
            raw=[(int(c), float(conf)) for c, conf in doc["raw"]],
            kept=[(int(c), float(conf)) for c, conf in doc["kept"]],
            kept_count=int(doc["kept_count"]),
            avg_confidence=float(doc["avg_confidence"]),
        )


@dataclass
class MetricsRecord:
    """Per-request observability document appended to the final_metrics index.

    ``log_id`` is assigned by the knowledge store at append time and is 0
    until then.  ``request_no`` is the running count of processed requests
    (the 370th processed request carries request_no 370).
    """

    timestamp: float
    request_no: int
    model_name: str
    model_processing_time: float
    total_time: float
    absolute_time: float
    utility: float
    kept_count: int
    avg_confidence: float
    queue_depth_at_start: int
    request_id: int
    cpu_load: Optional[float] = None
    log_id: int = 0

    def to_doc(self) -> dict:
        return {
            "log_id": self.log_id,
            "timestamp": self.timestamp,
            "request_no": self.request_no,
            "model_name": self.model_name,
            "model_processing_time": self.model_processing_time,
            "total_time": self.total_time,
            "absolute_time": self.absolute_time,
            "utility": self.utility,
            "kept_count": self.kept_count,
            "avg_confidence": self.avg_confidence,
            "queue_depth_at_start": self.queue_depth_at_start,
            "request_id": self.request_id,
            "cpu_load": self.cpu_load,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "MetricsRecord":
        return cls(
            log_id=int(doc.get("log_id", 0)),
            timestamp=float(doc["timestamp"]),
            request_no=int(doc["request_no"]),
            model_name=str(doc["model_name"]),
            model_processing_time=float(doc["model_processing_time"]),
            total_time=float(doc["total_time"]),
            absolute_time=float(doc["absolute_time"]),
            utility=float(doc["utility"]),
            kept_count=int(doc["kept_count"]),
            avg_confidence=float(doc["avg_confidence"]),
            queue_depth_at_start=int(doc["queue_depth_at_start"]),
            request_id=int(doc["request_id"]),
            cpu_load=None if doc.get("cpu_load") is None else float(doc["cpu_load"]),
        )


@dataclass
class ArrivalTrace:
    """Ordered interarrival gaps (seconds) driving the open-loop generator."""

    gaps: list[float]
    source_label: str = ""

    def __post_init__(self) -> None:
        for i, g in enumerate(self.gaps):
            if not math.isfinite(g) or g < 0:
                raise ValueError(f"gap {i} is {g!r}; gaps must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.gaps)

    def to_doc(self) -> dict:
        return {"gaps": list(self.gaps), "source_label": self.source_label}

    @classmethod
    def from_doc(cls, doc: dict) -> "ArrivalTrace":
        return cls(gaps=[float(g) for g in doc["gaps"]], source_label=str(doc.get("source_label", "")))


@dataclass
class SyntheticTraceSpec:
    """Recipe for generating a trace at experiment start (seeded by the run)."""

    kind: str  # poisson | bursty | constant
    params: dict = field(default_factory=dict)
    count: int = 0

    def to_doc(self) -> dict:
        return {"synthetic": {"kind": self.kind, "count": self.count, **self.params}}

    @classmethod
    def from_doc(cls, doc: dict) -> "SyntheticTraceSpec":
        inner = dict(doc["synthetic"])
        kind = str(inner.pop("kind"))
        count = int(inner.pop("count", 0))
        return cls(kind=kind, params=inner, count=count)


@dataclass
class TraceFileRef:
    """Reference to a trace file on disk, optionally rate-scaled at load."""

    path: str
    rate_factor: float = 1.0

    def to_doc(self) -> dict:
        return {"path": self.path, "rate_factor": self.rate_factor}

    @classmethod
    def from_doc(cls, doc: dict) -> "TraceFileRef":
        return cls(path=str(doc["path"]), rate_factor=float(doc.get("rate_factor", 1.0)))


TraceSource = "ArrivalTrace | SyntheticTraceSpec | TraceFileRef"


def trace_source_from_doc(doc: dict) -> ArrivalTrace | SyntheticTraceSpec | TraceFileRef:
    if "gaps" in doc:
        return ArrivalTrace.from_doc(doc)
    if "synthetic" in doc:
        return SyntheticTraceSpec.from_doc(doc)
    if "path" in doc:
        return TraceFileRef.from_doc(doc)
    raise ValueError(f"unrecognized trace document: {sorted(doc)}")


@dataclass
class StrategySpec:
    """Which switching strategy the control loop runs, plus its parameters.

    Kinds and their params:
        single:          {"model": <profile id>}
        naive:           {} or {"bands": [[lo, hi|null, model], ...]}
        modified_naive:  {"bands": [[lo, hi|null, model], ...]}
        adamls:          {"target": seconds?, "half_life": seconds?}
        external:        {"path": switch-file path, "poll_period": seconds?}
    """

    kind: str
    params: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_doc(cls, doc: dict) -> "StrategySpec":
        return cls(kind=str(doc["kind"]), params=dict(doc.get("params", {})))

    def violations(self, profile_ids: Optional[set[str]] = None) -> list["Violation"]:
        """Validate params against kind; returns all problems found."""
        out: list[Violation] = []
        if self.kind not in STRATEGY_KINDS:
            out.append(Violation("UnknownStrategyKind", f"unknown strategy kind {self.kind!r}"))
            return out
        if self.kind == "single":
            model = self.params.get("model")
            if not model:
                out.append(Violation("InvalidStrategyParams", "single strategy needs a 'model' id"))
            elif profile_ids is not None and model not in profile_ids:
                out.append(Violation("InvalidStrategyParams", f"single strategy model {model!r} is not a configured profile"))
        elif self.kind in ("naive", "modified_naive"):
            bands = self.params.get("bands")
            if self.kind == "modified_naive" and bands is None:
                out.append(Violation("InvalidStrategyParams", "modified_naive needs a 'bands' table"))
            if bands is not None:
                out.extend(band_table_violations(bands, profile_ids))
        elif self.kind == "adamls":
            target = self.params.get("target")
            if target is not None and not (isinstance(target, (int, float)) and target > 0):
                out.append(Violation("InvalidStrategyParams", "adamls 'target' must be > 0"))
            half_life = self.params.get("half_life")
            if half_life is not None and not (isinstance(half_life, (int, float)) and half_life > 0):
                out.append(Violation("InvalidStrategyParams", "adamls 'half_life' must be > 0"))
        elif self.kind == "external":
            if not self.params.get("path"):
                out.append(Violation("InvalidStrategyParams", "external strategy needs a switch-file 'path'"))
        return out


def band_table_violations(bands: Any, profile_ids: Optional[set[str]] = None) -> list["Violation"]:
    """Check a rate-band table covers [0, inf) with half-open, gapless bands."""
    out: list[Violation] = []
    try:
        rows = [(float(lo), math.inf if hi is None else float(hi), str(model)) for lo, hi, model in bands]
    except (TypeError, ValueError):
        return [Violation("MalformedBands", "bands must be [lo, hi|null, model] rows")]
    if not rows:
        return [Violation("MalformedBands", "band table is empty")]
    rows.sort(key=lambda r: r[0])
    if rows[0][0] != 0.0:
        out.append(Violation("MalformedBands", "bands must start at rate 0"))
    for (lo, hi, _), (lo2, _, _) in zip(rows, rows[1:]):
        if hi < lo2:
            out.append(Violation("MalformedBands", f"gap between {hi} and {lo2}"))
        elif hi > lo2:
            out.append(Violation("MalformedBands", f"overlap between {hi} and {lo2}"))
    for lo, hi, _ in rows:
        if hi <= lo:
            out.append(Violation("MalformedBands", f"empty band [{lo}, {hi})"))
    if rows[-1][1] != math.inf:
        out.append(Violation("MalformedBands", "last band must extend to infinity"))
    if profile_ids is not None:
        for _, _, model in rows:
            if model not in profile_ids:
                out.append(Violation("MalformedBands", f"band names unknown model {model!r}"))
    return out


@dataclass
class StrategyDecision:
    """Planner output: which model to run and why."""

    model_id: str
    reason: str
    decided_at: float

    def to_doc(self) -> dict:
        return {"model_id": self.model_id, "reason": self.reason, "decided_at": self.decided_at}

    @classmethod
    def from_doc(cls, doc: dict) -> "StrategyDecision":
        return cls(str(doc["model_id"]), str(doc["reason"]), float(doc["decided_at"]))


@dataclass
class ModelStats:
    """Time-decayed online statistics for one model (knowledge state entry)."""

    latency_mean: float = 0.0
    latency_var: float = 0.0
    confidence_mean: float = 0.0
    count: int = 0
    weight: float = 0.0  # decayed effective sample weight
    latency_sq_mean: float = 0.0
    last_seen: Optional[float] = None

    def to_doc(self) -> dict:
        return {
            "latency_mean": self.latency_mean,
            "latency_var": self.latency_var,
            "confidence_mean": self.confidence_mean,
            "count": self.count,
            "weight": self.weight,
            "latency_sq_mean": self.latency_sq_mean,
            "last_seen": self.last_seen,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ModelStats":
        return cls(
            latency_mean=float(doc["latency_mean"]),
            latency_var=float(doc["latency_var"]),
            confidence_mean=float(doc["confidence_mean"]),
            count=int(doc["count"]),
            weight=float(doc["weight"]),
            latency_sq_mean=float(doc["latency_sq_mean"]),
            last_seen=None if doc.get("last_seen") is None else float(doc["last_seen"]),
        )


@dataclass
class KnowledgeState:
    """Mutable adaptation knowledge: per-model stats, current rules, rate estimate.

    Mutated only by the knowledge module (update_model_stats / rule setters).
    """

    model_stats: dict[str, ModelStats] = field(default_factory=dict)
    rules: Optional[StrategySpec] = None
    arrival_rate: float = 0.0

    def to_doc(self) -> dict:
        return {
            "model_stats": {k: v.to_doc() for k, v in self.model_stats.items()},
            "rules": None if self.rules is None else self.rules.to_doc(),
            "arrival_rate": self.arrival_rate,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "KnowledgeState":
        return cls(
            model_stats={k: ModelStats.from_doc(v) for k, v in doc["model_stats"].items()},
            rules=None if doc.get("rules") is None else StrategySpec.from_doc(doc["rules"]),
            arrival_rate=float(doc.get("arrival_rate", 0.0)),
        )


@dataclass
class ExperimentConfig:
    """Complete description of one experiment run."""

    experiment_id: str
    seed: int = 0
    clock_mode: str = "virtual_time"
    trace: ArrivalTrace | SyntheticTraceSpec | TraceFileRef = field(
        default_factory=lambda: SyntheticTraceSpec("constant", {"gap": 0.1}, count=100)
    )
    strategy: StrategySpec = field(default_factory=lambda: StrategySpec("single", {"model": "n"}))
    target_response_time: float = DEFAULT_TARGET_RESPONSE_TIME
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    class_filter: Optional[list[int]] = None  # None = all classes
    profiles: list[ModelProfile] = field(default_factory=default_profiles)
    request_limit: Optional[int] = None
    mape_period: float = DEFAULT_MAPE_PERIOD
    backlog_capacity: Optional[int] = None  # None = unbounded

    def to_doc(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "seed": self.seed,
            "clock_mode": self.clock_mode,
            "trace": self.trace.to_doc(),
            "strategy": self.strategy.to_doc(),
            "target_response_time": self.target_response_time,
            "confidence_threshold": self.confidence_threshold,
            "class_filter": None if self.class_filter is None else list(self.class_filter),
            "profiles": [p.to_doc() for p in self.profiles],
            "request_limit": self.request_limit,
            "mape_period": self.mape_period,
            "backlog_capacity": self.backlog_capacity,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ExperimentConfig":
        return cls(
            experiment_id=str(doc["experiment_id"]),
            seed=int(doc.get("seed", 0)),
            clock_mode=str(doc.get("clock_mode", "virtual_time")),
            trace=trace_source_from_doc(doc["trace"]) if "trace" in doc else SyntheticTraceSpec("constant", {"gap": 0.1}, count=100),
            strategy=StrategySpec.from_doc(doc["strategy"]) if "strategy" in doc else StrategySpec("single", {"model": "n"}),
            target_response_time=float(doc.get("target_response_time", DEFAULT_TARGET_RESPONSE_TIME)),
            confidence_threshold=float(doc.get("confidence_threshold", DEFAULT_CONFIDENCE_THRESHOLD)),
            class_filter=None if doc.get("class_filter") is None else [int(c) for c in doc["class_filter"]],
            profiles=[ModelProfile.from_doc(p) for p in doc["profiles"]] if "profiles" in doc else default_profiles(),
            request_limit=None if doc.get("request_limit") is None else int(doc["request_limit"]),
            mape_period=float(doc.get("mape_period", DEFAULT_MAPE_PERIOD)),
            backlog_capacity=None if doc.get("backlog_capacity") is None else int(doc["backlog_capacity"]),
        )

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_doc(), sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ExperimentConfig":
        return cls.from_doc(yaml.safe_load(text))


@dataclass(frozen=True)
class Violation:
    """One configuration problem: a stable code plus a human message."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class InvalidConfig(DomainError):
    """Raised by validate_config; carries every violation found."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def config_violations(config: ExperimentConfig) -> list[Violation]:
    """Collect every invariant violation in the config (empty list = valid)."""
    out: list[Violation] = []

    if not config.profiles:
        out.append(Violation("EmptyProfiles", "at least one model profile is required"))
    else:
        ids = [p.id for p in config.profiles]
        if len(set(ids)) != len(ids):
            out.append(Violation("DuplicateProfileId", f"profile ids must be distinct, got {ids}"))
        for p in config.profiles:
            if p.latency_mean <= 0:
                out.append(Violation("BadProfileField", f"profile {p.id!r}: latency_mean must be > 0"))
            if p.latency_cv < 0:
                out.append(Violation("BadProfileField", f"profile {p.id!r}: latency_cv must be >= 0"))
            if not (0 < p.confidence_mean <= 1):
                out.append(Violation("BadProfileField", f"profile {p.id!r}: confidence_mean must be in (0, 1]"))
            if p.confidence_sd < 0:
                out.append(Violation("BadProfileField", f"profile {p.id!r}: confidence_sd must be >= 0"))
            if p.detections_mean < 0:
                out.append(Violation("BadProfileField", f"profile {p.id!r}: detections_mean must be >= 0"))
            if p.cpu_cost < 0:
                out.append(Violation("BadProfileField", f"profile {p.id!r}: cpu_cost must be >= 0"))
        ordered = sorted(config.profiles, key=lambda p: p.latency_mean)
        for a, b in zip(ordered, ordered[1:]):
            if not (a.latency_mean < b.latency_mean and a.confidence_mean < b.confidence_mean):
                out.append(
                    Violation(
                        "UnorderedProfiles",
                        "profiles must be strictly increasing in both latency_mean and "
                        f"confidence_mean in the same order ({a.id!r} vs {b.id!r})",
                    )
                )

    if config.target_response_time <= 0:
        out.append(Violation("NonPositiveTarget", "target_response_time must be > 0"))
    if not (0 <= config.confidence_threshold <= 1):
        out.append(Violation("BadThreshold", "confidence_threshold must be in [0, 1]"))
    if config.clock_mode not in CLOCK_MODES:
        out.append(Violation("BadClockMode", f"clock_mode must be one of {CLOCK_MODES}"))
    if config.mape_period <= 0:
        out.append(Violation("NonPositiveMapePeriod", "mape_period must be > 0"))
    if config.request_limit is not None and config.request_limit <= 0:
        out.append(Violation("BadRequestLimit", "request_limit must be positive when set"))
    if config.backlog_capacity is not None and config.backlog_capacity < 1:
        out.append(Violation("BadCapacity", "backlog_capacity must be >= 1 when set"))

    profile_ids = {p.id for p in config.profiles}
    out.extend(config.strategy.violations(profile_ids if config.profiles else None))
    return out


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Return the config unchanged if valid, else raise with all violations."""
    violations = config_violations(config)
    if violations:
        raise InvalidConfig(violations)
    return config
