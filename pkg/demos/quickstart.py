"""
Smallest possible experiment: one pinned model, one synthetic trace
===================================================================

Everything runs on the logical clock, so the whole thing finishes in
milliseconds regardless of how much simulated time passes.
"""
import numpy as np

from switchboard import (
    ExperimentConfig,
    StrategySpec,
    SyntheticTraceSpec,
)
from switchboard.orchestrator import run_virtual

# 500 Poisson arrivals at 12/s, served by the nano profile only.
config = ExperimentConfig(
    experiment_id="quickstart",
    seed=7,
    clock_mode="virtual_time",
    trace=SyntheticTraceSpec("poisson", {"rate": 12.0}, count=500),
    strategy=StrategySpec("single", {"model": "n"}),
)

out = run_virtual(config)

print("summary")
for key, value in out.summary.to_doc().items():
    print(f"  {key}: {value}")

# The store keeps every per-request record; newest first.
docs = out.store.latest_docs("final_metrics", 3)
print("\nlast three records")
for doc in docs:
    print(f"  #{doc['request_no']}: {doc['model_name']} "
          f"service={doc['model_processing_time']:.4f}s "
          f"total={doc['total_time']:.4f}s conf={doc['avg_confidence']:.3f}")

# Sanity: totals recomputed straight from the records agree with the summary.
all_docs = out.store.latest_docs("final_metrics", 10_000)
confs = np.array([d["avg_confidence"] for d in all_docs])
print(f"\nmean confidence from raw records: {confs.mean():.4f} "
      f"(summary says {out.summary.avg_confidence:.4f})")
