from __future__ import annotations

import json
import math

import pytest

from switchboard.knowledge import (
    InvalidSpec,
    KnowledgeStore,
    NoNumericField,
    StorageFailure,
    UnknownIndex,
    decay_factor,
    read_archive,
    update_model_stats,
)
from switchboard.models import KnowledgeState, MetricsRecord, StrategySpec
from switchboard.runtime import UnknownModel


def record(model="yolov5nu", mpt=0.015, conf=0.65, ts=0.0, no=1):
    return MetricsRecord(
        timestamp=ts,
        request_no=no,
        model_name=model,
        model_processing_time=mpt,
        total_time=mpt,
        absolute_time=ts,
        utility=conf,
        kept_count=3,
        avg_confidence=conf,
        queue_depth_at_start=0,
        request_id=no,
    )


# --- append / log_id ----------------------------------------------------


def test_first_append_gets_log_id_1():
    store = KnowledgeStore("e1")
    assert store.append("new_logs", {"event": "x"}) == 1


def test_thousand_appends_in_order():
    store = KnowledgeStore("e1")
    ids = [store.append("final_metrics", {"k": i}) for i in range(1000)]
    assert ids == list(range(1, 1001))


def test_unknown_index_rejected():
    store = KnowledgeStore("e1")
    with pytest.raises(UnknownIndex):
        store.append("old_logs", {})
    with pytest.raises(UnknownIndex):
        store.latest_docs("old_logs")


def test_log_id_is_first_field_on_disk(tmp_path):
    store = KnowledgeStore("e1", root=tmp_path)
    store.append("new_logs", {"event": "x", "timestamp": 1.0})
    store.close()
    line = (tmp_path / "e1" / "new_logs.ndjson").read_text().strip()
    assert line.startswith('{"log_id": 1,')


def test_restart_replays_to_identical_sequence(tmp_path):
    store = KnowledgeStore("e1", root=tmp_path)
    for i in range(5):
        store.append("final_metrics", {"v": i, "timestamp": float(i)})
    store.append("new_logs", {"event": "e", "timestamp": 0.5})
    before = store.latest_docs("final_metrics", 10)
    store.close()

    reopened = KnowledgeStore("e1", root=tmp_path)
    assert reopened.latest_docs("final_metrics", 10) == before
    # Appends continue with the next dense id.
    assert reopened.append("final_metrics", {"v": 99}) == 6
    reopened.close()


def test_torn_final_line_dropped_on_replay(tmp_path):
    store = KnowledgeStore("e1", root=tmp_path)
    store.append("new_logs", {"event": "ok", "timestamp": 0.0})
    store.close()
    path = tmp_path / "e1" / "new_logs.ndjson"
    with path.open("a") as fh:
        fh.write('{"log_id": 2, "event": "tru')  # interrupted write
    reopened = KnowledgeStore("e1", root=tmp_path)
    assert reopened.size("new_logs") == 1
    assert reopened.append("new_logs", {"event": "next"}) == 2
    reopened.close()


def test_corrupt_middle_line_raises(tmp_path):
    exp = tmp_path / "e1"
    exp.mkdir()
    (exp / "new_logs.ndjson").write_text('garbage\n{"log_id": 1, "event": "x"}\n')
    with pytest.raises(StorageFailure):
        KnowledgeStore("e1", root=tmp_path)


# --- fetch_latest -------------------------------------------------------


def test_fetch_latest_mean_of_three():
    store = KnowledgeStore("e1")
    for v in (0.01, 0.02, 0.03):
        store.append("final_metrics", {"model_processing_time": v})
    out = store.fetch_latest("final_metrics", ["model_processing_time"], 3)
    mean, count = out["model_processing_time"]
    assert mean == pytest.approx(0.02, rel=1e-12)
    assert count == 3


def test_fetch_latest_n1_is_newest_verbatim():
    store = KnowledgeStore("e1")
    for v in (0.5, 0.9, 0.123):
        store.append("final_metrics", {"total_time": v})
    mean, count = store.fetch_latest("final_metrics", ["total_time"], 1)["total_time"]
    assert mean == 0.123
    assert count == 1


def test_fetch_latest_clamps_to_index_size():
    store = KnowledgeStore("e1")
    for v in (1.0, 2.0, 3.0):
        store.append("final_metrics", {"u": v})
    mean, count = store.fetch_latest("final_metrics", ["u"], 10)["u"]
    assert mean == pytest.approx(2.0)
    assert count == 3


def test_fetch_latest_no_numeric_field():
    store = KnowledgeStore("e1")
    store.append("final_metrics", {"model_name": "yolov5nu", "flagged": True})
    with pytest.raises(NoNumericField):
        store.fetch_latest("final_metrics", ["missing"], 5)
    with pytest.raises(NoNumericField):
        # bools do not count as numeric samples
        store.fetch_latest("final_metrics", ["flagged"], 5)


def test_fetch_latest_skips_docs_missing_the_field():
    store = KnowledgeStore("e1")
    store.append("final_metrics", {"a": 1.0})
    store.append("final_metrics", {"b": 5.0})
    store.append("final_metrics", {"a": 3.0})
    mean, count = store.fetch_latest("final_metrics", ["a"], 3)["a"]
    assert (mean, count) == (2.0, 2)


def test_fetch_latest_matches_file_recomputation(tmp_path):
    store = KnowledgeStore("e1", root=tmp_path)
    import numpy as np

    rng = np.random.default_rng(4)
    for i in range(200):
        store.append("final_metrics", {"total_time": float(rng.uniform(0, 2)), "timestamp": float(i)})
    got, count = store.fetch_latest("final_metrics", ["total_time"], 64)["total_time"]
    store.close()
    lines = (tmp_path / "e1" / "final_metrics.ndjson").read_text().splitlines()
    docs = [json.loads(x) for x in lines]
    docs.sort(key=lambda d: d["log_id"])
    vals = [d["total_time"] for d in docs[-64:]]
    expected = sum(vals) / len(vals)
    assert count == 64
    assert abs(got - expected) <= 1e-12 * abs(expected)


# --- query_window -------------------------------------------------------


def test_query_window_empty_index():
    store = KnowledgeStore("e1")
    assert store.query_window("final_metrics", 0.0, 100.0) == []


def test_query_window_full_and_boundary():
    store = KnowledgeStore("e1")
    for t in (0.0, 1.0, 2.0):
        store.append("final_metrics", {"timestamp": t})
    everything = store.query_window("final_metrics", 0.0, 100.0)
    assert [d["timestamp"] for d in everything] == [0.0, 1.0, 2.0]
    # Half-open: doc at exactly to_time excluded, at from_time included.
    window = store.query_window("final_metrics", 0.0, 2.0)
    assert [d["timestamp"] for d in window] == [0.0, 1.0]


def test_query_window_field_filter():
    store = KnowledgeStore("e1")
    store.append("new_logs", {"timestamp": 0.0, "event": "switch"})
    store.append("new_logs", {"timestamp": 1.0, "event": "decision"})
    out = store.query_window("new_logs", 0.0, 10.0, field_filter={"event": "switch"})
    assert len(out) == 1 and out[0]["event"] == "switch"


# --- adaptation rules ---------------------------------------------------


def test_set_then_get_rules():
    store = KnowledgeStore("e1")
    store.set_adaptation_rules(StrategySpec("naive"), now=1.0)
    assert store.get_adaptation_rules().kind == "naive"
    # The change is recorded in new_logs.
    events = [d for d in store.latest_docs("new_logs", 10) if d["event"] == "rules_changed"]
    assert len(events) == 1
    assert events[0]["new"]["kind"] == "naive"


def test_malformed_rules_leave_current_untouched():
    store = KnowledgeStore("e1")
    store.set_adaptation_rules(StrategySpec("naive"), now=0.0)
    bad = StrategySpec("modified_naive", {"bands": [[5.0, 2.0, "n"]]})
    with pytest.raises(InvalidSpec):
        store.set_adaptation_rules(bad, now=1.0)
    assert store.get_adaptation_rules().kind == "naive"


def test_rules_validated_against_profile_ids():
    store = KnowledgeStore("e1", profile_ids={"n", "x"})
    with pytest.raises(InvalidSpec):
        store.set_adaptation_rules(StrategySpec("single", {"model": "qq"}), now=0.0)


# --- EWMA model stats ---------------------------------------------------


def test_first_sample_taken_verbatim():
    state = update_model_stats(KnowledgeState(), record(mpt=0.015, conf=0.65), half_life=30.0)
    stats = state.model_stats["yolov5nu"]
    assert stats.latency_mean == 0.015
    assert stats.confidence_mean == 0.65
    assert stats.count == 1
    assert stats.latency_var == 0.0


def test_two_identical_records_same_means():
    state = KnowledgeState()
    update_model_stats(state, record(ts=0.0), half_life=30.0)
    update_model_stats(state, record(ts=1.0, no=2), half_life=30.0)
    stats = state.model_stats["yolov5nu"]
    assert stats.latency_mean == pytest.approx(0.015)
    assert stats.confidence_mean == pytest.approx(0.65)
    assert stats.count == 2


def test_infinite_half_life_is_arithmetic_mean():
    state = KnowledgeState()
    for i in range(1000):
        mpt = 0.01 if i % 2 == 0 else 0.02
        update_model_stats(state, record(mpt=mpt, ts=float(i), no=i + 1), half_life=math.inf)
    assert abs(state.model_stats["yolov5nu"].latency_mean - 0.015) < 1e-6


def test_short_half_life_tracks_recent():
    state = KnowledgeState()
    update_model_stats(state, record(mpt=0.010, ts=0.0), half_life=1.0)
    # 20 half-lives later the old weight is ~1e-6 of the new sample's.
    update_model_stats(state, record(mpt=0.100, ts=20.0, no=2), half_life=1.0)
    assert state.model_stats["yolov5nu"].latency_mean == pytest.approx(0.100, rel=1e-4)


def test_unknown_model_rejected_when_universe_given():
    with pytest.raises(UnknownModel):
        update_model_stats(KnowledgeState(), record(model="mystery"), half_life=30.0, known_models={"yolov5nu"})


def test_decay_factor_shape():
    assert decay_factor(0.0, 30.0) == 1.0
    assert decay_factor(30.0, 30.0) == pytest.approx(0.5)
    assert decay_factor(5.0, math.inf) == 1.0


# --- export -------------------------------------------------------------


def test_export_round_trip_and_determinism(tmp_path):
    def build(root):
        store = KnowledgeStore("e9", root=root, config_text="experiment_id: e9\n")
        for i in range(20):
            store.append("final_metrics", {"total_time": i * 0.1, "timestamp": float(i)})
        store.append("new_logs", {"event": "switch", "timestamp": 2.0})
        return store

    a = build(tmp_path / "a")
    b = build(tmp_path / "b")
    blob_a = a.export_archive()
    assert blob_a == b.export_archive()  # same content, same bytes
    assert blob_a == a.export_archive()  # repeated export stable

    parsed = read_archive(blob_a)
    assert [d["total_time"] for d in parsed["final_metrics"]] == [pytest.approx(i * 0.1) for i in range(20)]
    assert parsed["new_logs"][0]["event"] == "switch"
    a.close()
    b.close()


def test_export_works_in_memory_mode():
    store = KnowledgeStore("mem")
    store.append("final_metrics", {"v": 1})
    parsed = read_archive(store.export_archive())
    assert parsed["final_metrics"][0]["v"] == 1
