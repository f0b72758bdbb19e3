"""
Driving model selection from outside the process
================================================

The "external" strategy turns the control loop into a follower: each
MAPE tick it polls a signal file and applies whatever model token it
finds there.  Any script that can write a file can act as the planner,
which is how you plug a hand-rolled policy into the running system.
"""
import tempfile
import time
from pathlib import Path

from switchboard import ExperimentConfig, StrategySpec, SyntheticTraceSpec
from switchboard.orchestrator import Orchestrator

switch_file = Path(tempfile.mkdtemp()) / "switch_signal.txt"

config = ExperimentConfig(
    experiment_id="external-demo",
    seed=1,
    clock_mode="real_time",
    trace=SyntheticTraceSpec("constant", {"gap": 0.02}, count=300),
    strategy=StrategySpec("external", {"path": str(switch_file)}),
    mape_period=0.2,
)

orch = Orchestrator()
orch.start_experiment(config)
print(f"running; control loop polls {switch_file} every {config.mape_period}s")

# The external planner: a plain loop writing tokens.  Both profile ids
# ("m") and display names ("yolov5xu") are accepted.
schedule = ["yolov5su", "m", "yolov5xu", "n"]
try:
    for token in schedule:
        switch_file.write_text(token + "\n")
        time.sleep(0.5)
        status = orch.status()
        print(f"  wrote {token!r:12} -> active model {status['active_model']} "
              f"(queue depth {status['queue_depth']})")
finally:
    summary = orch.stop_experiment(drain=False)

print(f"\nprocessed {summary.total_processed} requests, "
      f"{summary.switches} switches recorded")

# Every applied signal left a switch event in the log.
events = [
    d for d in orch.get_store("external-demo").latest_docs("new_logs", 1000)
    if d.get("event") == "switch"
]
for event in sorted(events, key=lambda d: d["timestamp"]):
    print(f"  t={event['timestamp']:6.3f}s  {event['old']} -> {event['new']}")
