import argparse
import re
from pathlib import Path

from loguru import logger

from src.commands.common import config_flag
from src.config import RunConfig
from src.services.experiment import build_protocol
from src.services.synth import build_trials
from src.tools.vectorstore import write_enrol_map, write_ivectors, write_trials


def condition_slug(condition: str) -> str:
    """File-name form of a condition, e.g. "10sec(2)-10sec" -> "10sec_2-10sec"."""
    return re.sub(r"[^0-9A-Za-z.-]+", "_", condition).strip("_").replace("_-", "-")


def run_synth(args: argparse.Namespace, cfg: RunConfig) -> None:
    """
    Write one seed of the synthetic protocol:

        dev_full.ivec, dev_short.ivec    row-aligned full/short development pairs
        cohort.ivec                      S-norm cohort
        test_<sec>s.ivec                 test vectors per test duration
        enrol_<condition>.ivec           enrolled vectors (partitioned: averaged pieces)
        pieces_<condition>.ivec / .map   piece vectors and enrollment map, partitioned only
        trials_<condition>.txt           labelled trial list
    """
    out_dir: Path = args.out_dir
    protocol = build_protocol(cfg, cfg.seed)

    write_ivectors(protocol.dev_full, out_dir / "dev_full.ivec")
    write_ivectors(protocol.dev_short, out_dir / "dev_short.ivec")
    write_ivectors(protocol.cohort, out_dir / "cohort.ivec")
    for test_sec, test in protocol.tests.items():
        write_ivectors(test, out_dir / f"test_{test_sec:g}s.ivec")

    for text, enrolment in zip(cfg.experiment.conditions, protocol.enrolments):
        slug = condition_slug(text)
        write_ivectors(enrolment.enrolled, out_dir / f"enrol_{slug}.ivec")
        if enrolment.pieces is not None:
            write_ivectors(enrolment.pieces, out_dir / f"pieces_{slug}.ivec")
            write_enrol_map(enrolment.enrol_map, out_dir / f"pieces_{slug}.map")
        trials = build_trials(enrolment.enrolled, protocol.tests[enrolment.condition.test_sec])
        write_trials(trials, out_dir / f"trials_{slug}.txt")
        logger.info(f"Condition {text}: {len(enrolment.enrolled)} enrolled, {len(trials)} trials")

    logger.info(f"Synthetic corpus for seed {cfg.seed} written to {out_dir}")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "synth",
        parents=[common],
        help="Generate a seeded synthetic i-vector corpus with trial lists",
    )
    parser.add_argument("--out-dir", type=Path, required=True)
    config_flag(parser, "--dim", field="experiment.dim", type=int)
    config_flag(parser, "--short-sec", field="suv.short_sec", type=float, help="Short length of the development pairs")
    config_flag(
        parser, "--conditions", field="experiment.conditions",
        type=lambda text: [c.strip() for c in text.split(",") if c.strip()],
        help='Comma-separated, e.g. "10sec-10sec,10sec(2)-10sec"',
    )
    parser.set_defaults(handler=run_synth, log_dir=lambda args: args.out_dir)
