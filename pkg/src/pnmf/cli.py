"""Pipeline command line.

    pnmf <stage> --config cfg.json [--seed N] [--threads N] [--work-dir D]
    pnmf run-all --config cfg.json
    pnmf emit-plots --config cfg.json

Exit codes: 0 success, 2 validation error, 3 missing/corrupt upstream
artifact.  ``PNMF_WORKDIR`` supplies the default work directory.
"""

import argparse
import json
import os
import sys

from pnmf.errors import (
    BadConfig,
    CorruptFile,
    DependencyError,
    FormatError,
    ParseError,
    PnmfError,
)
from pnmf.pipeline import STAGES, Pipeline, PipelineConfig

EXIT_VALIDATION = 2
EXIT_DEPENDENCY = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pnmf",
        description="Factorization-feature classification pipeline with "
        "diffusion purification and attack evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run-all", "emit-plots"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=False, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None, help="override global seed")
        p.add_argument("--threads", type=int, default=None, help="worker cap")
        p.add_argument("--work-dir", default=None, help="artifact directory")
    return parser


def load_config(args) -> PipelineConfig:
    if args.config:
        cfg = PipelineConfig.from_json(args.config)
    else:
        cfg = PipelineConfig()
    if args.seed is not None:
        cfg.global_seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    if args.work_dir is not None:
        cfg.work_dir = args.work_dir
    elif not args.config or "work_dir" not in json.load(open(args.config)):
        cfg.work_dir = os.environ.get("PNMF_WORKDIR", cfg.work_dir)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except (BadConfig, ParseError, json.JSONDecodeError, FileNotFoundError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        pipe = Pipeline(cfg)
        if args.command == "run-all":
            for report in pipe.run_all():
                print(f"[{report.stage}] ok in {report.seconds:.2f}s")
        elif args.command == "emit-plots":
            from pnmf.plots import emit_plots

            out = emit_plots(pipe)
            print(f"plot data written to {out}")
        else:
            report = pipe.run_stage(args.command)
            print(f"[{report.stage}] ok in {report.seconds:.2f}s")
        return 0
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (CorruptFile, FormatError) as exc:
        print(f"artifact error: {exc} (re-run the producing stage)", file=sys.stderr)
        return EXIT_DEPENDENCY
    except BadConfig as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PnmfError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
