#!/usr/bin/env python3
"""Command line entry point.

    memformer verify
    memformer reproduce fig2a --steps 2000 --out-dir results
    memformer train --variant memformer_cgd --scalar-preconditioner
    memformer eval --checkpoint results/memformer_lfom.run0.json
    memformer baseline --baseline nag
    memformer list
"""

from __future__ import annotations

import logging
import sys

from memformer_lfom.config import ConfigManager
from memformer_lfom.config.experiment_model import EXPERIMENT_METADATA
from memformer_lfom.const import __version__
from memformer_lfom.exceptions import MemformerError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def list_experiments() -> list[str]:
    width = max(len(spec.figure_id) for spec in EXPERIMENT_METADATA)
    lines = [
        f"{spec.figure_id.ljust(width)}  {spec.description}"
        for spec in EXPERIMENT_METADATA
    ]
    lines.append(f"{'all'.ljust(width)}  every figure above")
    return lines


def dispatch(settings) -> int:
    from memformer_lfom import high_level

    command, *arguments = settings.basic.command
    if command == "list":
        for line in list_experiments():
            print(line)
        return EXIT_OK
    if command == "verify":
        summary = high_level.do_verify(settings)
        if not summary.passed:
            failed = [r.name for r in summary.reports if not r.passed]
            logger.error(f"Verification failed: {', '.join(failed)}")
            return EXIT_FAILURE
        logger.info("All equivalence checks passed")
        return EXIT_OK
    if command == "reproduce":
        for artifacts in high_level.do_reproduce(arguments[0], settings):
            logger.info(f"{artifacts.figure_id}: {artifacts.csv_path}")
        return EXIT_OK
    if command == "train":
        high_level.do_train(settings)
        return EXIT_OK
    if command == "eval":
        high_level.do_eval(settings)
        return EXIT_OK
    if command == "baseline":
        high_level.do_baseline(settings)
        return EXIT_OK
    raise ValueError(f"Unknown subcommand: {command}")


def main(args: list[str] | None = None) -> int:
    from rich.logging import RichHandler

    logging.basicConfig(level=logging.INFO, handlers=[RichHandler()])

    try:
        settings = ConfigManager().initialize_config(args)
    except ValueError as e:
        logger.error(f"Invalid arguments: {e}")
        return EXIT_USAGE

    if settings.basic.debug:
        logging.getLogger().setLevel(logging.DEBUG)

    # disable matplotlib font manager and peewee query logs
    logging.getLogger("matplotlib").setLevel("WARNING")
    logging.getLogger("peewee").setLevel("WARNING")

    if settings.basic.version:
        print(f"memformer-lfom version: {__version__}")
        return EXIT_OK

    if not settings.basic.command:
        logger.error("Missing subcommand: train | eval | baseline | verify | reproduce | list")
        return EXIT_USAGE

    logger.debug(f"settings: {settings.model_dump_json()}")
    try:
        return dispatch(settings)
    except MemformerError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_FAILURE


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
