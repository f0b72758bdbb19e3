"""Command-line entry points: run, serve, compare, trace."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from switchboard.knowledge import KnowledgeStore
from switchboard.loadgen import (
    load_trace_file,
    render_trace,
    scale_trace,
    synth_trace,
)
from switchboard.models import DomainError, ExperimentConfig, InvalidConfig
from switchboard.orchestrator import (
    Orchestrator,
    RunHandle,
    render_comparison,
    summarize_store,
)

CONFIG_ENV_VAR = "SWITCHBOARD_CONFIG"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchboard",
        description="Self-adaptive model-serving testbed",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment headless and print its summary")
    run.add_argument("--config", help=f"config YAML path (default: ${CONFIG_ENV_VAR})")
    run.add_argument("--seed", type=int, help="override the config's seed")
    run.add_argument("--root", help="directory for persisted index files")
    run.add_argument("--export", help="write the export archive (zip) here")

    serve = sub.add_parser("serve", help="start the REST API server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--root", help="directory for persisted index files")

    compare = sub.add_parser("compare", help="tabulate finished experiments side by side")
    compare.add_argument("experiment_ids", nargs="+")
    compare.add_argument("--root", required=True, help="directory holding the experiment dirs")

    trace = sub.add_parser("trace", help="trace utilities")
    trace_sub = trace.add_subparsers(dest="trace_command", required=True)

    t_parse = trace_sub.add_parser("parse", help="validate a trace file and print its stats")
    t_parse.add_argument("path")
    t_parse.add_argument("-o", "--out", help="also write the normalized trace here")

    t_scale = trace_sub.add_parser("scale", help="rate-scale a trace")
    t_scale.add_argument("path")
    t_scale.add_argument("--factor", type=float, required=True, help="2 doubles the rate")
    t_scale.add_argument("-o", "--out")

    t_synth = trace_sub.add_parser("synth", help="generate a synthetic trace")
    t_synth.add_argument("kind", choices=("poisson", "bursty", "constant"))
    t_synth.add_argument("--count", type=int, required=True)
    t_synth.add_argument("--seed", type=int, default=0)
    t_synth.add_argument("--rate", type=float, help="poisson: arrivals/second")
    t_synth.add_argument("--gap", type=float, help="constant: seconds between arrivals")
    t_synth.add_argument("--high-rate", type=float, help="bursty: high-phase rate")
    t_synth.add_argument("--low-rate", type=float, help="bursty: low-phase rate")
    t_synth.add_argument("--phase-len", type=float, help="bursty: seconds per phase")
    t_synth.add_argument("-o", "--out")

    return parser


def _load_config(args) -> ExperimentConfig:
    path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not path:
        raise DomainError(f"no config: pass --config or set ${CONFIG_ENV_VAR}")
    config = ExperimentConfig.from_yaml(Path(path).read_text())
    if args.seed is not None:
        config.seed = args.seed
    return config


def cmd_run(args) -> int:
    config = _load_config(args)
    orch = Orchestrator(root=args.root)
    handle = orch.start_experiment(config)
    if isinstance(handle, RunHandle):
        handle.wait_for_replay()
        summary = orch.stop_experiment(drain=True)
    else:
        summary = handle.summary
    if args.export:
        Path(args.export).write_bytes(orch.export(config.experiment_id))
    for key, value in summary.to_doc().items():
        print(f"{key}: {value}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from switchboard.api import create_app

    app = create_app(Orchestrator(root=args.root))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_compare(args) -> int:
    root = Path(args.root)
    summaries = []
    for experiment_id in args.experiment_ids:
        if not (root / experiment_id).is_dir():
            raise DomainError(f"unknown experiment {experiment_id!r} under {root}")
        store = KnowledgeStore(experiment_id, root=root)
        summaries.append(summarize_store(store))
        store.close()
    sys.stdout.write(render_comparison(summaries))
    return 0


def _emit_trace(trace, out: str | None) -> None:
    text = render_trace(trace)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_trace(args) -> int:
    if args.trace_command == "parse":
        trace = load_trace_file(args.path)
        duration = sum(trace.gaps)
        print(f"count: {len(trace.gaps)}")
        print(f"duration: {duration:g}")
        if duration > 0:
            print(f"mean_rate: {len(trace.gaps) / duration:g}")
        if args.out:
            Path(args.out).write_text(render_trace(trace))
    elif args.trace_command == "scale":
        _emit_trace(scale_trace(load_trace_file(args.path), args.factor), args.out)
    elif args.trace_command == "synth":
        params = {
            k: v
            for k, v in {
                "rate": args.rate,
                "gap": args.gap,
                "high_rate": args.high_rate,
                "low_rate": args.low_rate,
                "phase_len": args.phase_len,
            }.items()
            if v is not None
        }
        _emit_trace(synth_trace(args.kind, params, args.seed, args.count), args.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "serve": cmd_serve,
        "compare": cmd_compare,
        "trace": cmd_trace,
    }
    try:
        return handlers[args.command](args)
    except InvalidConfig as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except (DomainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
