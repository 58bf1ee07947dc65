import argparse
from pathlib import Path

import numpy as np
from loguru import logger

from src.commands.common import config_flag, load_lda, parent_dir, preprocess_set
from src.config import RunConfig
from src.schemas.vectors import IVectorSet, UtteranceMeta
from src.services.gplda import TrainConfig, train_gplda_arrays, write_gplda
from src.services.preprocess import project_rows, read_lda, train_lda, write_lda
from src.services.suv import augment_rows, estimate_suv, pairs_from_sets, read_suv, write_suv
from src.tools.vectorstore import read_ivectors, write_ivectors


def run_train_lda(args: argparse.Namespace, cfg: RunConfig) -> None:
    data = read_ivectors(args.ivectors)
    write_lda(train_lda(data, cfg.lda_dim), args.out)


def run_train_plda(args: argparse.Namespace, cfg: RunConfig) -> None:
    data = read_ivectors(args.ivectors)
    X = preprocess_set(data, load_lda(args.lda))
    train_cfg = TrainConfig(
        n1=cfg.n1,
        em_iterations=cfg.em_iterations,
        seed=cfg.seed,
        min_utts_per_speaker=cfg.min_utts_per_speaker,
    )
    model, history = train_gplda_arrays(X, data.speaker_ids, train_cfg)
    write_gplda(model, args.out)
    logger.info(f"EM log-likelihood per iteration: {', '.join(f'{ll:.3f}' for ll in history)}")


def run_estimate_suv(args: argparse.Namespace, cfg: RunConfig) -> None:
    pairs = pairs_from_sets(read_ivectors(args.full), read_ivectors(args.short))
    write_suv(estimate_suv(pairs, read_lda(args.lda)), args.out)


def run_augment(args: argparse.Namespace, cfg: RunConfig) -> None:
    """SUV-added copies of full-length vectors, written in LDA-projected space."""
    data = read_ivectors(args.ivectors)
    lda = read_lda(args.lda)
    model = read_suv(args.suv)
    copies = cfg.suv.copies

    augmented = augment_rows(
        project_rows(data.as_matrix(), lda), model, cfg.seed, copies, cfg.workers
    )
    metas = []
    for meta in data.metas:
        for copy in range(copies):
            suffix = f"_suv{copy}" if copies > 1 else ""
            metas.append(UtteranceMeta(
                utterance_id=f"{meta.utterance_id}{suffix}",
                speaker_id=meta.speaker_id,
                duration_sec=meta.duration_sec,
                channel_tag=meta.channel_tag,
            ))
    if not metas:
        write_ivectors(IVectorSet.empty(lda.d_out), args.out)
        return
    write_ivectors(IVectorSet(dim=lda.d_out, values=np.asarray(augmented), metas=tuple(metas)), args.out)
    logger.info(f"Wrote {len(metas)} SUV-added vectors ({copies} per input) to {args.out}")


def register(subparsers, common: argparse.ArgumentParser) -> None:
    log_dir = lambda args: parent_dir(args.out)

    parser = subparsers.add_parser("train-lda", parents=[common], help="Train an LDA projection")
    parser.add_argument("--ivectors", type=Path, required=True, help="Labelled development i-vectors")
    parser.add_argument("--out", type=Path, required=True)
    config_flag(parser, "--lda-dim", field="lda_dim", type=int)
    parser.set_defaults(handler=run_train_lda, log_dir=log_dir)

    parser = subparsers.add_parser(
        "train-plda",
        parents=[common],
        help="Train a length-normalized GPLDA model (LDA applied first when given)",
    )
    parser.add_argument("--ivectors", type=Path, required=True)
    parser.add_argument("--lda", type=Path, default=None, help="Omit for vectors already in LDA space")
    parser.add_argument("--out", type=Path, required=True)
    config_flag(parser, "--n1", field="n1", type=int, help="Number of eigenvoices")
    config_flag(parser, "--em-iterations", field="em_iterations", type=int)
    config_flag(parser, "--min-utts", field="min_utts_per_speaker", type=int)
    parser.set_defaults(handler=run_train_plda, log_dir=log_dir)

    parser = subparsers.add_parser(
        "estimate-suv",
        parents=[common],
        help="Estimate S_SUV from row-aligned full/short i-vector files",
    )
    parser.add_argument("--full", type=Path, required=True)
    parser.add_argument("--short", type=Path, required=True)
    parser.add_argument("--lda", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.set_defaults(handler=run_estimate_suv, log_dir=log_dir)

    parser = subparsers.add_parser(
        "augment",
        parents=[common],
        help="Write SUV-added development vectors (LDA-projected)",
    )
    parser.add_argument("--ivectors", type=Path, required=True)
    parser.add_argument("--lda", type=Path, required=True)
    parser.add_argument("--suv", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    config_flag(parser, "--copies", field="suv.copies", type=int)
    parser.set_defaults(handler=run_augment, log_dir=log_dir)
