"""Append-only knowledge store: two indexes, queries, rules, and export.

Two newline-delimited document logs back every experiment: new_logs
(verbose events for troubleshooting) and final_metrics (one record per
processed request, driving adaptation).  Documents are JSON, one per
line, first field log_id, ids dense from 1.  The store also holds the
current adaptation rules and the online per-model statistics the planner
reads.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import threading
import zipfile
from pathlib import Path
from typing import Optional, Sequence

from switchboard.models import (
    DomainError,
    KnowledgeState,
    MetricsRecord,
    ModelStats,
    StrategySpec,
    Violation,
)
from switchboard.runtime import UnknownModel

log = logging.getLogger(__name__)

INDEX_NAMES = ("new_logs", "final_metrics")

# Archive members use a fixed timestamp so identical runs export
# byte-identical zips.
_EPOCH_1980 = (1980, 1, 1, 0, 0, 0)


class UnknownIndex(DomainError):
    pass


class StorageFailure(DomainError):
    pass


class NoNumericField(DomainError):
    """Requested field carries no numeric value in any selected doc."""


class InvalidSpec(DomainError):
    """Adaptation-rule change rejected; current rules are unchanged."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def _doc_line(log_id: int, doc: dict) -> str:
    ordered = {"log_id": log_id, **{k: v for k, v in doc.items() if k != "log_id"}}
    return json.dumps(ordered)


class KnowledgeStore:
    """Per-experiment append-only document store.

    ``root=None`` keeps everything in memory (fast deterministic runs);
    otherwise each index lives in ``root/<experiment_id>/<index>.ndjson``
    and every append is flushed before the log_id is returned.  fsync is
    off by default: a process kill loses nothing already flushed, and
    desk-scale runs do not need crash-of-the-host durability.
    """

    def __init__(
        self,
        experiment_id: str,
        root: Optional[str | Path] = None,
        config_text: Optional[str] = None,
        profile_ids: Optional[set[str]] = None,
        fsync: bool = False,
    ):
        self.experiment_id = experiment_id
        self.root = None if root is None else Path(root)
        self.config_text = config_text
        self.fsync = fsync
        self._lock = threading.RLock()
        self._docs: dict[str, list[dict]] = {name: [] for name in INDEX_NAMES}
        self._lines: dict[str, list[str]] = {name: [] for name in INDEX_NAMES}
        self._files: dict[str, io.TextIOWrapper] = {}
        self._rules: Optional[StrategySpec] = None
        self._profile_ids = profile_ids
        self.state = KnowledgeState()
        if self.root is not None:
            exp_dir = self.root / experiment_id
            exp_dir.mkdir(parents=True, exist_ok=True)
            for name in INDEX_NAMES:
                path = exp_dir / f"{name}.ndjson"
                if path.exists():
                    self._replay(name, path)
                self._files[name] = path.open("a", encoding="utf-8")
            if config_text is not None:
                (exp_dir / "config.yaml").write_text(config_text)

    def _replay(self, name: str, path: Path) -> None:
        lines = path.read_text(encoding="utf-8").splitlines()
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                if i == len(lines) - 1:
                    # Torn final line from an interrupted append; drop it.
                    log.warning("%s: dropping torn final line in %s", self.experiment_id, name)
                    break
                raise StorageFailure(f"{path}: corrupt line {i + 1}")
            self._docs[name].append(doc)
            self._lines[name].append(line)
        ids = [d["log_id"] for d in self._docs[name]]
        if ids != list(range(1, len(ids) + 1)):
            raise StorageFailure(f"{path}: log_ids not dense from 1")

    def close(self) -> None:
        with self._lock:
            for fh in self._files.values():
                fh.close()
            self._files = {}

    def _index(self, name: str) -> list[dict]:
        if name not in self._docs:
            raise UnknownIndex(f"unknown index {name!r}; expected one of {INDEX_NAMES}")
        return self._docs[name]

    def append(self, index: str, doc: dict) -> int:
        """Store the doc under the next log_id; durable before return."""
        with self._lock:
            docs = self._index(index)
            log_id = len(docs) + 1
            line = _doc_line(log_id, doc)
            stored = json.loads(line)
            if index in self._files:
                fh = self._files[index]
                try:
                    fh.write(line + "\n")
                    fh.flush()
                    if self.fsync:
                        os.fsync(fh.fileno())
                except OSError as exc:
                    raise StorageFailure(str(exc)) from exc
            docs.append(stored)
            self._lines[index].append(line)
            return log_id

    def size(self, index: str) -> int:
        with self._lock:
            return len(self._index(index))

    def index_bytes(self, index: str) -> bytes:
        """The index file content, exactly as persisted/exported."""
        with self._lock:
            self._index(index)
            lines = self._lines[index]
            return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")

    def latest_docs(self, index: str, n: int = 50) -> list[dict]:
        """Newest n docs, newest first (highest log_id leads)."""
        with self._lock:
            docs = self._index(index)
            return [dict(d) for d in docs[-n:][::-1]] if n > 0 else []

    def fetch_latest(self, index: str, fields: Sequence[str], n: int) -> dict[str, tuple[float, int]]:
        """Per-field arithmetic means over the n most recent docs.

        Fields absent from a doc are skipped for that doc; a field absent
        from every selected doc raises NoNumericField.  Returns
        field -> (mean, sample_count).
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        with self._lock:
            selected = self._index(index)[-n:]
        out: dict[str, tuple[float, int]] = {}
        for field in fields:
            values = [
                d[field]
                for d in selected
                if isinstance(d.get(field), (int, float)) and not isinstance(d.get(field), bool)
            ]
            if not values:
                raise NoNumericField(f"field {field!r} has no numeric value in the latest {n} docs of {index}")
            out[field] = (sum(values) / len(values), len(values))
        return out

    def query_window(
        self,
        index: str,
        from_time: float,
        to_time: float,
        field_filter: Optional[dict] = None,
    ) -> list[dict]:
        """Docs with timestamp in [from_time, to_time), log_id order."""
        if from_time > to_time:
            raise ValueError("from_time must be <= to_time")
        with self._lock:
            docs = self._index(index)
            out = [
                dict(d)
                for d in docs
                if "timestamp" in d and from_time <= d["timestamp"] < to_time
            ]
        if field_filter:
            out = [d for d in out if all(d.get(k) == v for k, v in field_filter.items())]
        return out

    # --- adaptation rules ------------------------------------------------

    def set_adaptation_rules(self, spec: StrategySpec, now: float = 0.0) -> None:
        """Install new rules; the change itself lands in new_logs."""
        violations = spec.violations(self._profile_ids)
        if violations:
            raise InvalidSpec(violations)
        with self._lock:
            old = self._rules
            self._rules = spec
            self.append(
                "new_logs",
                {
                    "event": "rules_changed",
                    "timestamp": now,
                    "old": None if old is None else old.to_doc(),
                    "new": spec.to_doc(),
                },
            )

    def get_adaptation_rules(self) -> Optional[StrategySpec]:
        with self._lock:
            return self._rules

    # --- export ----------------------------------------------------------

    def export_archive(self) -> bytes:
        """Zip of both index files plus the config snapshot, reproducible."""
        with self._lock:
            members = [
                (f"{self.experiment_id}/{name}.ndjson", self.index_bytes(name).decode("utf-8"))
                for name in INDEX_NAMES
            ]
            if self.config_text is not None:
                members.append((f"{self.experiment_id}/config.yaml", self.config_text))
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, text in members:
                info = zipfile.ZipInfo(name, date_time=_EPOCH_1980)
                zf.writestr(info, text)
        return buf.getvalue()


def read_archive(data: bytes) -> dict[str, list[dict]]:
    """Parse an exported archive back into index doc lists."""
    out: dict[str, list[dict]] = {}
    with zipfile.ZipFile(io.BytesIO(data)) as zf:
        for name in zf.namelist():
            stem = Path(name).stem
            if stem in INDEX_NAMES:
                text = zf.read(name).decode("utf-8")
                out[stem] = [json.loads(line) for line in text.splitlines() if line.strip()]
    return out


# --- online statistics ----------------------------------------------------


def decay_factor(dt: float, half_life: float) -> float:
    """Weight multiplier after dt seconds: 2^(-dt / half_life)."""
    if math.isinf(half_life):
        return 1.0
    return math.exp(-dt * math.log(2.0) / half_life)


def update_model_stats(
    state: KnowledgeState,
    record: MetricsRecord,
    half_life: float,
    known_models: Optional[set[str]] = None,
) -> KnowledgeState:
    """Fold one record into the EWMA stats for its model.

    Existing weight decays by 2^(-dt/half_life) before the new sample
    enters with weight 1, so an infinite half-life reproduces the plain
    arithmetic mean.  ``known_models`` restricts which names may appear;
    without it, models are registered on first sight.
    """
    if half_life <= 0:
        raise ValueError("half_life must be > 0")
    name = record.model_name
    if known_models is not None and name not in known_models:
        raise UnknownModel(f"metrics record names unknown model {name!r}")
    stats = state.model_stats.get(name)
    if stats is None:
        stats = ModelStats()
        state.model_stats[name] = stats
    t = record.timestamp
    lat = record.model_processing_time
    conf = record.avg_confidence
    if stats.count == 0 or stats.last_seen is None:
        w_total = 1.0
        stats.latency_mean = lat
        stats.latency_sq_mean = lat * lat
        stats.confidence_mean = conf
    else:
        d = decay_factor(max(0.0, t - stats.last_seen), half_life)
        w_old = d * stats.weight
        w_total = w_old + 1.0
        stats.latency_mean = (w_old * stats.latency_mean + lat) / w_total
        stats.latency_sq_mean = (w_old * stats.latency_sq_mean + lat * lat) / w_total
        stats.confidence_mean = (w_old * stats.confidence_mean + conf) / w_total
    stats.weight = w_total
    stats.latency_var = max(0.0, stats.latency_sq_mean - stats.latency_mean**2)
    stats.count += 1
    stats.last_seen = t
    return state
