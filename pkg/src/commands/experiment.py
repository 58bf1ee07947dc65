import argparse
from pathlib import Path

from src.commands.common import config_flag
from src.config import RunConfig
from src.services.experiment import ExperimentService, format_table, write_experiment


def run_experiment(args: argparse.Namespace, cfg: RunConfig) -> None:
    service = ExperimentService(cfg, use_suv=args.suv, use_snorm=args.snorm)
    report = service.run()
    write_experiment(report, args.out_dir / "report.json", args.out_dir / "report.txt")
    print(format_table(report), end="")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser(
        "run-experiment",
        parents=[common],
        help="Compare GPLDA and SUV-GPLDA with and without partitioned enrollment on synthetic data",
    )
    parser.add_argument("--out-dir", type=Path, required=True)
    parser.add_argument("--suv", action=argparse.BooleanOptionalAction, default=True)
    parser.add_argument("--snorm", action=argparse.BooleanOptionalAction, default=None)
    config_flag(parser, "--n-seeds", field="experiment.n_seeds", type=int)
    config_flag(parser, "--copies", field="suv.copies", type=int)
    parser.set_defaults(handler=run_experiment, log_dir=lambda args: args.out_dir)
