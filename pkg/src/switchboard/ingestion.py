"""Open-loop request acceptance and the FIFO backlog.

The backlog sits between the load generator (many producers) and the
single processing worker (one consumer).  Accepting never blocks on
processing: a request is timestamped, appended at the tail, and the
caller gets its id back immediately.  Overload shows up as queue depth,
not as slowed producers.
"""

from __future__ import annotations

import threading
from collections import deque
from pathlib import Path
from typing import Optional

from switchboard.models import DomainError, Request

__all__ = ["Backlog", "Dropped", "NotRunning", "SPILL_THRESHOLD"]

# Payloads above this many bytes are written to the spill area instead of
# being held in memory.
SPILL_THRESHOLD = 1 << 20

# How far back ingest timestamps are retained for rate estimation.
ARRIVAL_RETENTION = 120.0


class NotRunning(DomainError):
    """Submission refused because the backlog is closed (no active run)."""


class Dropped(DomainError):
    """Capacity reached: the request was rejected, not queued."""


class Backlog:
    """Arrival-ordered queue with conservation counters.

    Invariant, after every operation:
        accepted_total == dequeued_total + depth + dropped_total

    Safe for many concurrent producers and one consumer.  Depth reads are
    exact under the internal lock.
    """

    def __init__(
        self,
        capacity: Optional[int] = None,
        spill_dir: Optional[str | Path] = None,
        spill_threshold: int = SPILL_THRESHOLD,
    ):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1 when set")
        self.capacity = capacity
        self.accepted_total = 0
        self.dequeued_total = 0
        self.dropped_total = 0
        self._queue: deque[Request] = deque()
        self._lock = threading.Lock()
        self._next_id = 1
        self._open = True
        self._spill_dir = None if spill_dir is None else Path(spill_dir)
        self._spill_threshold = spill_threshold
        self._arrivals: deque[float] = deque()

    def close(self) -> None:
        """Stop accepting; queued requests remain drainable."""
        with self._lock:
            self._open = False

    @property
    def is_open(self) -> bool:
        return self._open

    def ingest(self, payload: bytes | int, now: float) -> int:
        """Append a request; returns its id. Never waits on the consumer."""
        with self._lock:
            if not self._open:
                raise NotRunning("backlog is closed; no experiment accepting requests")
            if self.capacity is not None and len(self._queue) >= self.capacity:
                self.dropped_total += 1
                self.accepted_total += 1
                raise Dropped(f"backlog at capacity {self.capacity}")
            request_id = self._next_id
            self._next_id += 1
            stored = self._maybe_spill(request_id, payload)
            self._queue.append(
                Request(request_id=request_id, payload=stored, arrival_time=now, enqueue_time=now)
            )
            self.accepted_total += 1
            self._arrivals.append(now)
            while self._arrivals and self._arrivals[0] < now - ARRIVAL_RETENTION:
                self._arrivals.popleft()
            return request_id

    def dequeue_oldest(self, now: float) -> Optional[Request]:
        """Remove and return the head, stamping start_time; None when empty."""
        with self._lock:
            if not self._queue:
                return None
            request = self._queue.popleft()
            request.start_time = now
            self.dequeued_total += 1
            return request

    def queue_depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def arrivals_in_window(self, now: float, window: float) -> int:
        """Count of ingests with timestamp in (now - window, now]."""
        lo = now - window
        with self._lock:
            return sum(1 for t in self._arrivals if lo < t <= now)

    def _maybe_spill(self, request_id: int, payload: bytes | int) -> bytes | int:
        # Oversized payloads go to disk; the queue keeps only the size.
        if (
            isinstance(payload, bytes)
            and len(payload) > self._spill_threshold
            and self._spill_dir is not None
        ):
            self._spill_dir.mkdir(parents=True, exist_ok=True)
            (self._spill_dir / f"req_{request_id}.bin").write_bytes(payload)
            return len(payload)
        return payload

    def read_spilled(self, request_id: int) -> bytes:
        if self._spill_dir is None:
            raise FileNotFoundError("no spill area configured")
        return (self._spill_dir / f"req_{request_id}.bin").read_bytes()
