"""
suv-plda: i-vector back-end with SUV-compensated GPLDA.

Usage:
    suv-plda <command> [--config run.json] [--seed N] [--workers N] ...

Every command writes its outputs atomically and appends to a run.log next
to them, starting with the resolved configuration as one JSON line.
"""
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from loguru import logger
from pydantic import ValidationError

from src.commands import data, experiment, scoring, training
from src.commands.common import config_overrides, create_common_parser
from src.config import load_run_config
from src.schemas.exceptions import BackendError
from src.tools.utils import configure_logging

RUN_LOG = "run.log"


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suv-plda",
        description="Speaker-verification back-end: LDA, SUV, GPLDA, enrollment, scoring and evaluation.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")
    common = create_common_parser()
    for group in (data, training, scoring, experiment):
        group.register(subparsers, common)
    return parser


def _validation_message(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return f"invalid configuration: {location}: {first['msg']}" if location else f"invalid configuration: {first['msg']}"


def _fail(message: str) -> int:
    logger.bind(run_log_only=True).error(message)
    sys.stderr.write(f"error: {message}\n")
    return 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = create_parser().parse_args(argv)
    configure_logging("INFO")

    try:
        cfg = load_run_config(args.config, **config_overrides(args))
        run_log: Path = args.log_dir(args) / RUN_LOG
        configure_logging(cfg.log_level, run_log)
        logger.bind(run_log_only=True).info(f"{args.command} config {cfg.to_json()}")

        args.handler(args, cfg)
        logger.bind(run_log_only=True).info(f"{args.command} finished")
        return 0

    except BackendError as e:
        return _fail(e.message)
    except ValidationError as e:
        return _fail(_validation_message(e))
    except Exception as e:
        logger.bind(run_log_only=True).exception(f"{args.command} failed")
        return _fail(f"unexpected failure: {e}")


if __name__ == "__main__":
    sys.exit(main())
