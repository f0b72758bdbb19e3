"""REST control surface.

Endpoints (all under /api/):

    POST /api/upload               stage artifacts (multipart) or ingest one
                                   request (raw body) -> 202 {"request_id"}
    POST /api/startProcess         start an experiment from a config document
    POST /api/stopProcess          stop it, returning the summary
    GET  /api/status               lifecycle and live counters
    GET  /api/latest_metrics_data  newest final_metrics docs
    GET  /api/latest_logs          newest new_logs docs
    POST /api/changeKnowledge      swap adaptation rules mid-run
    GET  /api/downloadData         zip of both indexes plus the config

Overload is a 429, lifecycle conflicts are 409, bad documents are 422.
"""

from __future__ import annotations

import tempfile
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from switchboard.ingestion import Dropped, NotRunning
from switchboard.knowledge import InvalidSpec
from switchboard.models import ExperimentConfig, InvalidConfig, StrategySpec
from switchboard.orchestrator import AlreadyRunning, Orchestrator, UnknownExperiment

STAGEABLE = ("trace", "payloads", "config")


def create_app(
    orchestrator: Optional[Orchestrator] = None,
    staging_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="model-switching testbed", docs_url=None, redoc_url=None)
    # Allow the dashboard to be served from a different origin.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    orch = orchestrator or Orchestrator()
    staging = Path(staging_dir) if staging_dir is not None else Path(tempfile.mkdtemp(prefix="staging-"))
    staging.mkdir(parents=True, exist_ok=True)
    app.state.orchestrator = orch
    app.state.staging = staging

    @app.post("/api/upload")
    async def upload(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            staged = {}
            for name in STAGEABLE:
                item = form.get(name)
                if item is None:
                    continue
                suffix = {"trace": "trace.csv", "payloads": "payloads.zip", "config": "config.yaml"}[name]
                dest = staging / suffix
                dest.write_bytes(await item.read())
                staged[name] = str(dest)
            if not staged:
                return JSONResponse({"error": f"no recognized field; use one of {STAGEABLE}"}, status_code=422)
            return {"staged": staged}
        body = await request.body()
        try:
            request_id = orch.ingest(body)
        except Dropped:
            return JSONResponse({"error": "backlog full"}, status_code=429)
        except NotRunning:
            return JSONResponse({"error": "no active experiment"}, status_code=409)
        return JSONResponse({"request_id": request_id}, status_code=202)

    @app.post("/api/startProcess")
    async def start_process(request: Request):
        body = await request.body()
        try:
            if body.strip():
                doc = await request.json()
                config = ExperimentConfig.from_doc(doc)
            else:
                staged_config = staging / "config.yaml"
                if not staged_config.exists():
                    return JSONResponse({"error": "no config given and none staged"}, status_code=422)
                config = ExperimentConfig.from_yaml(staged_config.read_text())
            orch.start_experiment(config)
        except AlreadyRunning as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except InvalidConfig as exc:
            return JSONResponse(
                {"error": "invalid config", "violations": [{"code": v.code, "message": v.message} for v in exc.violations]},
                status_code=422,
            )
        except (KeyError, TypeError, ValueError) as exc:
            return JSONResponse({"error": f"malformed config document: {exc}"}, status_code=422)
        return orch.status()

    @app.post("/api/stopProcess")
    def stop_process(drain: bool = True):
        try:
            summary = orch.stop_experiment(drain=drain)
        except NotRunning:
            return JSONResponse({"error": "nothing to stop"}, status_code=409)
        return summary.to_doc()

    @app.get("/api/status")
    def status():
        return orch.status()

    def _latest(index: str, n: int):
        try:
            store = orch.current_store()
        except NotRunning:
            return []
        return store.latest_docs(index, n)

    @app.get("/api/latest_metrics_data")
    def latest_metrics_data(n: int = 50):
        return _latest("final_metrics", n)

    @app.get("/api/latest_logs")
    def latest_logs(n: int = 50):
        return _latest("new_logs", n)

    @app.post("/api/changeKnowledge")
    async def change_knowledge(request: Request):
        doc = await request.json()
        try:
            spec = StrategySpec.from_doc(doc)
            orch.change_knowledge(spec)
        except NotRunning:
            return JSONResponse({"error": "no active experiment"}, status_code=409)
        except InvalidSpec as exc:
            return JSONResponse(
                {"error": "invalid spec", "violations": [{"code": v.code, "message": v.message} for v in exc.violations]},
                status_code=422,
            )
        except (KeyError, TypeError) as exc:
            return JSONResponse({"error": f"malformed spec document: {exc}"}, status_code=422)
        return {"applied": spec.to_doc()}

    @app.get("/api/downloadData")
    def download_data(experiment_id: Optional[str] = None):
        try:
            if experiment_id is None:
                store = orch.current_store()
            else:
                store = orch.get_store(experiment_id)
        except (UnknownExperiment, NotRunning) as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        blob = store.export_archive()
        return Response(
            content=blob,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{store.experiment_id}.zip"'},
        )

    return app
