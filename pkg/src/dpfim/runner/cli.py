"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 missing input,
4 privacy budget exhausted before the first step, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import BudgetExhaustedError, ConfigError, MissingInputError, NumericError
from . import commands
from .config import dump_toml, load_config

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_BUDGET = 4
EXIT_NUMERIC = 5

log = logging.getLogger("dpfim")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpfim",
        description=(
            "Train a fill-in-the-middle code model with and without DP-SGD, "
            "account the privacy budget, and audit with membership inference."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the run directory")
        return p

    common(sub.add_parser("prepare", help="ingest the corpus and write the splits"))

    p = common(sub.add_parser("train", help="fine-tune from the shared base checkpoint"))
    p.add_argument("--mode", choices=("baseline", "dp"), required=True)
    p.add_argument("--resume", action="store_true", help="continue from the saved state")

    p = common(sub.add_parser("attack", help="run membership-inference attacks"))
    p.add_argument("--target", required=True, help="checkpoint name (baseline|dp) or path")
    p.add_argument("--reference", default="base", help="reference checkpoint (default: base)")

    p = common(sub.add_parser("evaluate", help="greedy completions + utility metrics"))
    p.add_argument("--checkpoint", required=True, help="checkpoint name (base|baseline|dp) or path")

    common(sub.add_parser("report", help="emit SVG plots and the text summary"))

    common(sub.add_parser("print-config", help="print the effective configuration"))

    common(sub.add_parser("sweep", help="run the rank x epsilon budget grid"))

    p = common(sub.add_parser("synth-corpus", help="generate a synthetic Kotlin-like corpus"))
    p.add_argument("--n-docs", type=int, default=2000)
    p.add_argument("--target-bytes", type=int, default=200)
    p.add_argument("--dir", required=True, help="output directory for the .kt files")
    return parser


def _load(args) -> "commands.ExperimentConfig":
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output.dir"] = args.out
    return load_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _load(args)
        if args.command == "prepare":
            commands.cmd_prepare(cfg)
        elif args.command == "train":
            commands.cmd_train(cfg, args.mode, resume=args.resume)
        elif args.command == "attack":
            commands.cmd_attack(cfg, args.target, args.reference)
        elif args.command == "evaluate":
            commands.cmd_evaluate(cfg, args.checkpoint)
        elif args.command == "report":
            commands.cmd_report(cfg)
        elif args.command == "print-config":
            sys.stdout.write(dump_toml(cfg))
        elif args.command == "sweep":
            commands.cmd_sweep(cfg)
        elif args.command == "synth-corpus":
            from ..synth import write_corpus  # noqa: PLC0415

            total = write_corpus(args.dir, args.n_docs, cfg.seed, args.target_bytes)
            log.info("wrote %d synthetic files (%d bytes) to %s", args.n_docs, total, args.dir)
        else:  # pragma: no cover
            raise AssertionError(args.command)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except MissingInputError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except BudgetExhaustedError as exc:
        log.error("%s", exc)
        return EXIT_BUDGET
    except NumericError as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
