"""Interarrival-trace tools and the open-loop replayer.

Traces are plain text, one gap (seconds) per line, header optional.  A
two-column "timestamp count" importer converts per-second arrival counts
(web-server log style) into gaps.  Replay issues requests at the trace's
cumulative times and never waits for processing: the schedule is a pure
function of the trace.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from switchboard.ingestion import Dropped
from switchboard.models import (
    ArrivalTrace,
    DomainError,
    SyntheticTraceSpec,
    TraceFileRef,
)

__all__ = [
    "EmptyTrace",
    "InvalidParams",
    "NegativeGap",
    "NonNumeric",
    "NonPositiveFactor",
    "ReplayReport",
    "load_trace_file",
    "parse_counts_trace",
    "parse_trace",
    "render_trace",
    "replay",
    "resolve_trace",
    "scale_trace",
    "synth_trace",
]


class EmptyTrace(DomainError):
    pass


class NegativeGap(DomainError):
    def __init__(self, line: int, value: float):
        self.line = line
        super().__init__(f"line {line}: negative gap {value}")


class NonNumeric(DomainError):
    def __init__(self, line: int, token: str):
        self.line = line
        super().__init__(f"line {line}: not a number: {token!r}")


class NonPositiveFactor(DomainError):
    pass


class InvalidParams(DomainError):
    pass


def parse_trace(text: str | bytes, source_label: str = "") -> ArrivalTrace:
    """One non-negative decimal per line; 'gap' header and blanks ignored."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    gaps: list[float] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        token = raw.strip()
        if not token:
            continue
        if lineno == 1 and token.lower() == "gap":
            continue
        try:
            value = float(token)
        except ValueError:
            raise NonNumeric(lineno, token) from None
        if not math.isfinite(value) or value < 0:
            raise NegativeGap(lineno, value)
        gaps.append(value)
    if not gaps:
        raise EmptyTrace("no gaps found")
    return ArrivalTrace(gaps=gaps, source_label=source_label)


def parse_counts_trace(text: str | bytes, source_label: str = "") -> ArrivalTrace:
    """Two-column 'timestamp count' log -> gaps.

    Each line means ``count`` arrivals during the second starting at
    ``timestamp``; they are spread evenly across it.  Lines must be in
    timestamp order.  A non-numeric first line is treated as a header.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    times: list[float] = []
    last_ts = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        token = raw.strip()
        if not token:
            continue
        parts = token.replace(",", " ").split()
        try:
            if len(parts) != 2:
                raise ValueError(token)
            ts, count = float(parts[0]), int(float(parts[1]))
        except ValueError:
            if lineno == 1:
                continue  # header
            raise NonNumeric(lineno, token) from None
        if ts < last_ts:
            raise InvalidParams(f"line {lineno}: timestamps must be non-decreasing")
        if count < 0:
            raise InvalidParams(f"line {lineno}: negative arrival count {count}")
        last_ts = ts
        times.extend(ts + i / count for i in range(count))
    if not times:
        raise EmptyTrace("no arrivals found")
    gaps = [times[0]] + [b - a for a, b in zip(times, times[1:])]
    return ArrivalTrace(gaps=gaps, source_label=source_label)


def render_trace(trace: ArrivalTrace) -> str:
    """Writer inverse of parse_trace: header plus one gap per line."""
    return "gap\n" + "".join(f"{g!r}\n" for g in trace.gaps)


def scale_trace(trace: ArrivalTrace, rate_factor: float) -> ArrivalTrace:
    """Divide every gap by rate_factor: factor 2 doubles the request rate."""
    if rate_factor <= 0:
        raise NonPositiveFactor(f"rate_factor must be > 0, got {rate_factor}")
    return ArrivalTrace(
        gaps=[g / rate_factor for g in trace.gaps],
        source_label=trace.source_label,
    )


def synth_trace(kind: str, params: dict, seed: int, count: int) -> ArrivalTrace:
    """Generate a trace: poisson, bursty, or constant.

    poisson: exponential gaps at ``rate``/s.  bursty: alternating
    high_rate / low_rate phases of ``phase_len`` trace-seconds with
    evenly spaced arrivals (deterministic, seed unused).  constant: fixed
    ``gap``.
    """
    if count < 1:
        raise InvalidParams("count must be >= 1")
    if kind == "constant":
        gap = params.get("gap")
        if not isinstance(gap, (int, float)) or gap <= 0:
            raise InvalidParams("constant trace needs gap > 0")
        gaps = [float(gap)] * count
    elif kind == "poisson":
        rate = params.get("rate")
        if not isinstance(rate, (int, float)) or rate <= 0:
            raise InvalidParams("poisson trace needs rate > 0")
        rng = np.random.default_rng(seed)
        gaps = [float(g) for g in rng.exponential(1.0 / rate, size=count)]
    elif kind == "bursty":
        high = params.get("high_rate")
        low = params.get("low_rate")
        phase_len = params.get("phase_len")
        for name, v in (("high_rate", high), ("low_rate", low), ("phase_len", phase_len)):
            if not isinstance(v, (int, float)) or v <= 0:
                raise InvalidParams(f"bursty trace needs {name} > 0")
        gaps = []
        t = 0.0
        for _ in range(count):
            in_high = int(t // phase_len) % 2 == 0
            gap = 1.0 / (high if in_high else low)
            gaps.append(gap)
            t += gap
    else:
        raise InvalidParams(f"unknown trace kind {kind!r}")
    return ArrivalTrace(gaps=gaps, source_label=f"synth:{kind}")


def load_trace_file(path: str | Path, rate_factor: float = 1.0) -> ArrivalTrace:
    """Read a gap-per-line or timestamp-count file, then rate-scale it."""
    text = Path(path).read_text(encoding="utf-8")
    first_data = next((l.strip() for l in text.splitlines() if l.strip()), "")
    if len(first_data.replace(",", " ").split()) == 2:
        trace = parse_counts_trace(text, source_label=str(path))
    else:
        trace = parse_trace(text, source_label=str(path))
    if rate_factor != 1.0:
        trace = scale_trace(trace, rate_factor)
    return trace


def resolve_trace(source, seed: int) -> ArrivalTrace:
    """Turn any configured trace source into a concrete ArrivalTrace."""
    if isinstance(source, ArrivalTrace):
        return source
    if isinstance(source, SyntheticTraceSpec):
        return synth_trace(source.kind, source.params, seed, source.count)
    if isinstance(source, TraceFileRef):
        return load_trace_file(source.path, source.rate_factor)
    raise InvalidParams(f"unsupported trace source {type(source).__name__}")


@dataclass
class ReplayReport:
    """Outcome of one replay: counts plus the realized schedule."""

    sent: int = 0
    dropped: int = 0
    unavailable: int = 0
    issue_times: list[float] = field(default_factory=list)
    schedule_errors: list[float] = field(default_factory=list)

    def schedule_error_percentile(self, q: float) -> float:
        if not self.schedule_errors:
            return 0.0
        return float(np.percentile(np.abs(self.schedule_errors), q))


def _payload_cycle(payloads: bytes | int | Sequence[bytes]):
    if isinstance(payloads, (bytes, int)):
        return itertools.repeat(payloads)
    return itertools.cycle(payloads)


def replay(
    trace: ArrivalTrace,
    ingest: Callable[[bytes | int, float], int],
    clock_mode: str = "virtual_time",
    payloads: bytes | int | Sequence[bytes] = 0,
    clock: Callable[[], float] = time.monotonic,
    sleep: Callable[[float], None] = time.sleep,
    stop=None,
) -> ReplayReport:
    """Issue every request at its trace time, open loop.

    virtual_time: issue times are the exact running sums of the gaps and
    the ingest callable is invoked with those logical timestamps (no
    waiting).  real_time: waits on the wall clock and records per-request
    schedule error (actual - planned).  Drops and ingest failures are
    counted and never pause the schedule.
    """
    report = ReplayReport()
    supply = _payload_cycle(payloads)
    if clock_mode == "virtual_time":
        t = 0.0
        for gap in trace.gaps:
            if stop is not None and stop.is_set():
                break
            t += gap
            report.issue_times.append(t)
            report.schedule_errors.append(0.0)
            _issue(ingest, next(supply), t, report)
        return report
    if clock_mode != "real_time":
        raise InvalidParams(f"unknown clock_mode {clock_mode!r}")
    start = clock()
    planned = 0.0
    for gap in trace.gaps:
        if stop is not None and stop.is_set():
            break
        planned += gap
        target = start + planned
        while True:
            if stop is not None and stop.is_set():
                return report
            now = clock()
            if now >= target:
                break
            sleep(min(target - now, 0.02))
        actual = clock()
        report.issue_times.append(actual - start)
        report.schedule_errors.append((actual - start) - planned)
        _issue(ingest, next(supply), actual, report)
    return report


def _issue(ingest, payload, now: float, report: ReplayReport) -> None:
    try:
        ingest(payload, now)
        report.sent += 1
    except Dropped:
        report.dropped += 1
    except Exception:
        report.unavailable += 1
