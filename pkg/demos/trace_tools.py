"""
Working with interarrival traces
================================

Traces are one-column "gap" files: seconds between consecutive arrivals.
Everything downstream (replay, the simulator, the load generator) speaks
this format, so the tooling here is deliberately small.
"""
from itertools import accumulate

import numpy as np

from switchboard.loadgen import (
    parse_trace,
    render_trace,
    replay,
    scale_trace,
    synth_trace,
)

# --- synthesize --------------------------------------------------------

poisson = synth_trace("poisson", {"rate": 30.0}, seed=4, count=3000)
gaps = np.array(poisson.gaps)
print(f"poisson(30/s): {len(gaps)} gaps, mean {gaps.mean():.4f}s "
      f"(expected {1 / 30:.4f}), cv {gaps.std() / gaps.mean():.2f} (expected ~1)")

bursty = synth_trace(
    "bursty", {"high_rate": 25.0, "low_rate": 1.0, "phase_len": 10.0}, seed=0, count=600
)
times = list(accumulate(bursty.gaps))
first_half = sum(1 for t in times if t <= 10.0)
print(f"bursty: {first_half} arrivals in the first 10s phase, "
      f"{len(times) - first_half} spread over the rest")

# --- scale -------------------------------------------------------------

# Doubling the rate halves every gap; total duration shrinks to match.
doubled = scale_trace(poisson, 2.0)
print(f"2x scale: duration {sum(poisson.gaps):.1f}s -> {sum(doubled.gaps):.1f}s")

# --- round-trip through the file format --------------------------------

text = render_trace(doubled)
back = parse_trace(text)
assert back.gaps == doubled.gaps  # repr round-trip is exact
print(f"file round-trip preserved all {len(back.gaps)} gaps exactly")

# --- replay on the logical clock ---------------------------------------

# Open loop means issue times come from the trace alone.  The callable
# here stands in for the ingestion endpoint.
seen = []
report = replay(poisson, lambda payload, now: seen.append(now) or len(seen), "virtual_time")
assert report.issue_times == list(accumulate(poisson.gaps))
print(f"replayed {report.sent} requests; issue times are exact cumulative sums")
