"""Command line entry point: tailor <stage> --config <path> [--seed N] [--out DIR].

Exit codes: 0 success, 2 configuration error, 3 missing upstream artifact.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, ExperimentConfig
from .stages import PIPELINE_ORDER, MissingArtifactError, run_all, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailor",
        description="Knowledge-conditioned generation and diagnosis pipeline")
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in [*PIPELINE_ORDER, "all"]:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output root")

    serve = sub.add_parser("serve", help="run the two-stage reader-study service")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--cases", required=True, help="case manifest CSV")
    serve.add_argument("--predictions", required=True, help="model predictions JSONL")
    serve.add_argument("--gold", required=True, help="gold-label manifest CSV")
    serve.add_argument("--state-dir", default="study_state", help="event log directory")
    serve.add_argument("--static-dir", default=None, help="optional UI bundle to serve at /")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.stage == "serve":
        return _serve(args)
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_root = args.out
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.stage == "all":
            results = run_all(cfg)
        else:
            results = {args.stage: run_stage(cfg, args.stage)}
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(results, indent=2))
    return 0


def _serve(args) -> int:
    import uvicorn

    from ..study.service import create_app

    app = create_app(cases_csv=args.cases, predictions_jsonl=args.predictions,
                     gold_csv=args.gold, state_dir=args.state_dir,
                     static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
