import argparse
import json
from pathlib import Path
from typing import Optional

from loguru import logger

from src.commands.common import config_flag, load_lda, parent_dir, preprocess_set, preprocessed_map
from src.config import RunConfig
from src.schemas.exceptions import CohortError
from src.schemas.vectors import IVectorSet, ScoreSet
from src.services.enroll import enroll_from_pieces
from src.services.evaluation import det_points, evaluate, labelled_scores, write_det_points
from src.services.gplda import GpldaModel, cohort_scores, read_gplda, score_trials, snorm
from src.services.preprocess import LdaTransform
from src.tools.utils import atomic_write_text
from src.tools.vectorstore import (
    read_enrol_map,
    read_ivectors,
    read_scores,
    read_trials,
    write_ivectors,
    write_scores,
)


def run_enroll(args: argparse.Namespace, cfg: RunConfig) -> None:
    pieces = read_ivectors(args.pieces)
    enrol_map = read_enrol_map(args.enrol_map)
    write_ivectors(enroll_from_pieces(pieces, enrol_map, cfg.partitions), args.out)

# ──────────────────────────────────────────────
# S-normalization
# ──────────────────────────────────────────────

def _cohort_path(args: argparse.Namespace, cfg: RunConfig) -> Optional[Path]:
    return args.cohort if args.cohort is not None else cfg.snorm.cohort_path


def _apply_snorm(
    raw: ScoreSet,
    enrolled: IVectorSet,
    tests: IVectorSet,
    cohort_path: Path,
    lda: Optional[LdaTransform],
    model: GpldaModel,
    cohort_size: int,
) -> ScoreSet:
    cohort = read_ivectors(cohort_path)
    if len(cohort) < 2:
        raise CohortError(f"cohort {cohort_path} holds {len(cohort)} vector(s), need >= 2")
    cohort = cohort.subset(range(min(cohort_size, len(cohort))))
    cohort_matrix = preprocess_set(cohort, lda)

    def side(vectors: IVectorSet, ids: tuple[str, ...]) -> dict:
        wanted = set(ids)
        rows = [i for i, utt in enumerate(vectors.utterance_ids) if utt in wanted]
        subset = vectors.subset(rows)
        return cohort_scores(subset.utterance_ids, preprocess_set(subset, lda), cohort_matrix, model)

    logger.info(f"S-normalizing {len(raw)} scores against {len(cohort)} cohort vectors")
    return snorm(raw, side(enrolled, raw.enrol_ids), side(tests, raw.test_ids))


def run_score(args: argparse.Namespace, cfg: RunConfig) -> None:
    enrolled = read_ivectors(args.enrolled)
    tests = read_ivectors(args.test)
    trials = read_trials(args.trials)
    lda = load_lda(args.lda)
    model = read_gplda(args.plda)

    scores = score_trials(
        trials,
        preprocessed_map(enrolled, lda),
        preprocessed_map(tests, lda),
        model,
        workers=cfg.workers,
    )

    use_snorm = cfg.snorm.enabled if args.snorm is None else args.snorm
    cohort_path = _cohort_path(args, cfg)
    if use_snorm and cohort_path is None:
        if args.snorm:
            raise CohortError("--snorm needs a cohort (--cohort or snorm.cohort_path)")
        logger.info("No cohort configured; writing raw scores")
    elif use_snorm:
        scores = _apply_snorm(scores, enrolled, tests, cohort_path, lda, model, cfg.snorm.cohort_size)

    write_scores(scores, args.out)


def run_snorm(args: argparse.Namespace, cfg: RunConfig) -> None:
    cohort_path = _cohort_path(args, cfg)
    if cohort_path is None:
        raise CohortError("S-norm needs a cohort (--cohort or snorm.cohort_path)")
    raw = read_scores(args.scores)
    normalized = _apply_snorm(
        raw,
        read_ivectors(args.enrolled),
        read_ivectors(args.test),
        cohort_path,
        load_lda(args.lda),
        read_gplda(args.plda),
        cfg.snorm.cohort_size,
    )
    write_scores(normalized, args.out)

# ──────────────────────────────────────────────
# Evaluation
# ──────────────────────────────────────────────

def run_evaluate(args: argparse.Namespace, cfg: RunConfig) -> None:
    scores = read_scores(args.scores)
    trials = read_trials(args.trials)
    report = evaluate(scores, trials, cfg.cost)
    atomic_write_text(args.out, report.model_dump_json(indent=2) + "\n")

    if args.det is not None:
        values, labels = labelled_scores(scores, trials)
        write_det_points(det_points(values, labels), args.det)
    print(json.dumps({"eer": report.eer, "min_dcf": report.min_dcf}))


def register(subparsers, common: argparse.ArgumentParser) -> None:
    log_dir = lambda args: parent_dir(args.out)

    parser = subparsers.add_parser(
        "enroll",
        parents=[common],
        help="Average piece i-vectors into one enrolled vector per enrol id",
    )
    parser.add_argument("--pieces", type=Path, required=True, help="Piece i-vectors")
    parser.add_argument("--enrol-map", type=Path, required=True, help='Lines "enrol_id utt_id [utt_id ...]"')
    parser.add_argument("--out", type=Path, required=True)
    config_flag(parser, "--partitions", field="partitions", type=int, help="Pieces averaged per enrol id")
    parser.set_defaults(handler=run_enroll, log_dir=log_dir)

    parser = subparsers.add_parser("score", parents=[common], help="Score a trial list with GPLDA")
    parser.add_argument("--enrolled", type=Path, required=True)
    parser.add_argument("--test", type=Path, required=True)
    parser.add_argument("--trials", type=Path, required=True)
    parser.add_argument("--lda", type=Path, default=None)
    parser.add_argument("--plda", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--snorm", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--cohort", type=Path, default=None)
    config_flag(parser, "--cohort-size", field="snorm.cohort_size", type=int)
    parser.set_defaults(handler=run_score, log_dir=log_dir)

    parser = subparsers.add_parser("snorm", parents=[common], help="S-normalize an existing score file")
    parser.add_argument("--scores", type=Path, required=True)
    parser.add_argument("--enrolled", type=Path, required=True)
    parser.add_argument("--test", type=Path, required=True)
    parser.add_argument("--cohort", type=Path, default=None)
    parser.add_argument("--lda", type=Path, default=None)
    parser.add_argument("--plda", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    config_flag(parser, "--cohort-size", field="snorm.cohort_size", type=int)
    parser.set_defaults(handler=run_snorm, log_dir=log_dir)

    parser = subparsers.add_parser("evaluate", parents=[common], help="EER and minDCF of a score file")
    parser.add_argument("--scores", type=Path, required=True)
    parser.add_argument("--trials", type=Path, required=True, help="Labelled trial list")
    parser.add_argument("--out", type=Path, required=True, help="JSON report")
    parser.add_argument("--det", type=Path, default=None, help="Optional DET points CSV")
    config_flag(parser, "--c-miss", field="cost.c_miss", type=float)
    config_flag(parser, "--c-fa", field="cost.c_fa", type=float)
    config_flag(parser, "--p-target", field="cost.p_target", type=float)
    parser.set_defaults(handler=run_evaluate, log_dir=log_dir)
