"""
Adaptive selection vs. pinned models under a bursty workload
============================================================

The trace alternates 25 req/s bursts with 1 req/s lulls.  A pinned fast
model stays responsive but sees less; a pinned slow model drowns; the
adaptive strategy rides the queue depth between them.
"""
import numpy as np

from switchboard import ExperimentConfig, StrategySpec, SyntheticTraceSpec
from switchboard.orchestrator import render_comparison, run_virtual


def experiment(name, strategy):
    return ExperimentConfig(
        experiment_id=name,
        seed=42,
        clock_mode="virtual_time",
        trace=SyntheticTraceSpec(
            "bursty",
            {"high_rate": 25.0, "low_rate": 1.0, "phase_len": 20.0},
            count=2000,
        ),
        strategy=strategy,
        target_response_time=0.5,
        mape_period=0.1,
    )


runs = {
    "adaptive": run_virtual(experiment("adaptive", StrategySpec("adamls", {}))),
    "pinned-nano": run_virtual(experiment("pinned-nano", StrategySpec("single", {"model": "n"}))),
    "pinned-xl": run_virtual(experiment("pinned-xl", StrategySpec("single", {"model": "x"}))),
}

print(render_comparison([r.summary for r in runs.values()]))

# The summary table hides the latency distribution, which is where the
# pinned-xl run falls apart.  Look at the tails directly.
print("response time percentiles (s)")
for name, run in runs.items():
    totals = np.array([d["total_time"] for d in run.store.latest_docs("final_metrics", 5000)])
    p50, p95, p99 = np.percentile(totals, [50, 95, 99])
    print(f"  {name:12} p50={p50:7.3f}  p95={p95:7.3f}  p99={p99:7.3f}")

# How often did the adaptive run actually change models?
switches = [
    d for d in runs["adaptive"].store.latest_docs("new_logs", 100_000)
    if d.get("event") == "switch"
]
print(f"\nadaptive run switched models {len(switches)} times; first five:")
for event in sorted(switches, key=lambda d: d["timestamp"])[:5]:
    print(f"  t={event['timestamp']:8.3f}s  {event['old']} -> {event['new']}  ({event['reason']})")
