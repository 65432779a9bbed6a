"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 backend failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import BackendError, ConfigError, GuidebenchError, MissingArtifactError
from .pipeline import STAGES, PipelineContext, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidebench",
        description=(
            "Batch pipeline for benchmarking guideline-path predictors with "
            "proxy labels and a correctness meta-classifier."
        ),
    )
    sub = parser.add_subparsers(dest="stage", required=True, metavar="|".join(STAGES))
    for stage in STAGES:
        stage_parser = sub.add_parser(stage, help=f"run the {stage} stage")
        stage_parser.add_argument("--config", required=True, help="TOML config file")
        stage_parser.add_argument("--out", required=True, help="output artifact directory")
        stage_parser.add_argument("--seed", type=int, default=None, help="root seed override")
        stage_parser.add_argument(
            "--backend",
            choices=["remote", "replay", "simulated"],
            default=None,
            help="force every roster model onto this backend",
        )
        stage_parser.add_argument("--k", type=int, default=None, help="rollouts per patient")
        stage_parser.add_argument(
            "--delta", type=float, default=None, help="self-consistency acceptance threshold"
        )
        stage_parser.add_argument(
            "--feature-set", dest="feature_set", default=None, help="classifier feature set"
        )
        stage_parser.add_argument(
            "--models",
            default=None,
            help="comma-separated subset of roster model ids",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "backend": args.backend,
        "k": args.k,
        "delta": args.delta,
        "feature_set": args.feature_set,
        "models": args.models.split(",") if args.models else None,
    }
    try:
        config = load_config(args.config, overrides)
        ctx = PipelineContext(config=config, out_dir=args.out)
        executed = run_stage(ctx, args.stage)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 3
    except BackendError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return 4
    except GuidebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if executed:
        print(f"{args.stage}: done (run {ctx.manifest.run_id})")
    else:
        print(f"{args.stage}: up to date, skipped (run {ctx.manifest.run_id})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
