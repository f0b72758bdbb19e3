"""
The REST surface, end to end
============================

Starts the API server on a local port, then walks the full lifecycle a
remote client would use: configure, start, feed requests, watch metrics,
change the adaptation rules, stop, download the archive.
"""
import io
import threading
import time
import zipfile

import httpx
import uvicorn

from switchboard.api import create_app
from switchboard.models import ExperimentConfig, StrategySpec, SyntheticTraceSpec

PORT = 8793

server = uvicorn.Server(
    uvicorn.Config(create_app(), host="127.0.0.1", port=PORT, log_level="warning")
)
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.01)

base = f"http://127.0.0.1:{PORT}/api"
client = httpx.Client(timeout=10.0)

print("1. status before anything runs")
print("  ", client.get(f"{base}/status").json())

print("\n2. start a real-time experiment")
config = ExperimentConfig(
    experiment_id="rest-tour",
    seed=2,
    clock_mode="real_time",
    trace=SyntheticTraceSpec("constant", {"gap": 0.02}, count=200),
    strategy=StrategySpec("naive", {}),
    mape_period=0.2,
)
r = client.post(f"{base}/startProcess", json=config.to_doc())
print("  ", r.status_code, r.json())

print("\n3. push two extra requests through ingestion")
for payload in (b"frame-a", b"frame-b"):
    r = client.post(f"{base}/upload", content=payload)
    print(f"   {payload!r} -> {r.status_code} {r.json()}")

time.sleep(1.0)

print("\n4. live metrics (3 newest)")
for doc in client.get(f"{base}/latest_metrics_data", params={"n": 3}).json():
    print(f"   #{doc['request_no']} {doc['model_name']} total={doc['total_time']:.4f}s")

print("\n5. swap the adaptation rules mid-run")
r = client.post(f"{base}/changeKnowledge", json={"kind": "single", "params": {"model": "s"}})
print("  ", r.status_code, r.json())
time.sleep(0.6)
print("   active model now:", client.get(f"{base}/status").json()["active_model"])

print("\n6. stop (drain the queue first)")
summary = client.post(f"{base}/stopProcess").json()
print(f"   processed {summary['total_processed']}, "
      f"avg confidence {summary['avg_confidence']:.4f}, "
      f"switches {summary['switches']}")

print("\n7. download the archive")
r = client.get(f"{base}/downloadData", params={"experiment_id": "rest-tour"})
with zipfile.ZipFile(io.BytesIO(r.content)) as zf:
    for name in zf.namelist():
        print(f"   {name}: {len(zf.read(name))} bytes")

server.should_exit = True
