#!/usr/bin/env python3
"""
Neural process-tomography benchmark - command-line entry point

Usage:
    python main.py gen-data  --config experiment.json [--seed N] [--out DIR] [--k 0.1,0.5,1] [--workers N]
    python main.py train     --config experiment.json [--method ff|ann-ff|all]
    python main.py evaluate  --config experiment.json [--method mf|ff|ann-ff|all] [--workers N]
    python main.py parasitic --config experiment.json [--method ...]
    python main.py report    [RUN_DIR] [--out DIR]

Exit codes:
    0 success, 2 configuration error, 3 data error, 4 training failure, 1 anything else

Directory Structure:
    quantum/    - channels, process matrices, simulated tomography
    nn/         - float64 network engine and model files
    estimators/ - MF, FF and ANN_FF parameter extraction
    dataset/    - dataset specs, generation and files
    config/     - settings and experiment config models
    utils/      - workflows, metrics, reports, exceptions
"""

import argparse
import logging
import sys
from typing import List, Optional

from config.experiment import ExperimentConfig
from config.settings import setup_logging
from utils.bench_workflow import (
    cmd_evaluate,
    cmd_gen_data,
    cmd_parasitic,
    cmd_report,
    cmd_train,
    resolve_methods,
)
from utils.exceptions import ConfigError, QTomoError

logger = logging.getLogger(__name__)

COMMANDS = ("gen-data", "train", "evaluate", "parasitic", "report")


def _k_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k expects comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("--k needs at least one value")
    return values


def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seed expects an integer, got {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("--seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtomo-bench", description="Neural process-tomography benchmark")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (UTF-8 JSON)")
    common.add_argument("--seed", type=_seed, help="master seed override")
    common.add_argument("--out", help="run directory override")
    common.add_argument("--method", choices=["mf", "ff", "ann-ff", "all"], help="estimators to use")
    common.add_argument("--k", type=_k_list, help="signal levels, e.g. 0.1,0.5,1")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--log-level", default=None, choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        command = sub.add_parser(name, parents=[common])
        if name == "report":
            command.add_argument("run_dir", nargs="?", help="run directory (defaults to the config's output_dir)")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with the CLI overrides applied"""
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.workers is not None and args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    return config.with_overrides(
        master_seed=args.seed,
        output_dir=args.out,
        k_factors=args.k,
        workers=args.workers,
        methods=resolve_methods(args.method),
    )


def run_command(args: argparse.Namespace) -> int:
    if args.command == "report" and args.run_dir and not args.config:
        cmd_report(args.run_dir)
        return 0

    config = load_config(args)
    if args.command == "gen-data":
        cmd_gen_data(config)
    elif args.command == "train":
        cmd_train(config)
    elif args.command == "evaluate":
        cmd_evaluate(config)
    elif args.command == "parasitic":
        cmd_parasitic(config)
    else:
        cmd_report(args.run_dir or config.output_dir)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return run_command(args)
    except QTomoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"\n❌ {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        return 130
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"\n❌ Unexpected error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
