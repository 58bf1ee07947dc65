"""
Synthetic reproduction of the GPLDA / SUV-GPLDA comparison with and without
utterance-partitioning enrollment.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from src.config import RunConfig
from src.core.dependencies import map_ordered
from src.schemas.reports import ConditionResult, EvalReport, ExperimentReport, SystemName
from src.schemas.vectors import IVectorSet
from src.services.enroll import enroll_from_pieces
from src.services.evaluation import evaluate_arrays, relative_improvement
from src.services.gplda import GpldaModel, TrainConfig, score_matrix, snorm_matrix, train_gplda_arrays
from src.services.preprocess import LdaTransform, length_normalize_rows, preprocess_rows, project_rows, train_lda
from src.services.suv import augment_rows, estimate_suv_arrays
from src.services.synth import (
    Condition,
    SynthConfig,
    generate_corpus,
    make_full_short_sets,
    make_partition_pieces,
    parse_condition,
    trial_masks,
)
from src.tools.utils import atomic_write_text


@dataclass(eq=False)
class Enrolment:
    condition: Condition
    enrolled: IVectorSet
    pieces: Optional[IVectorSet] = None
    enrol_map: dict[str, list[str]] = field(default_factory=dict)


@dataclass(eq=False)
class SynthProtocol:
    """Every synthetic set one seed of the experiment needs."""
    seed: int
    dev_full: IVectorSet
    dev_short: IVectorSet
    cohort: IVectorSet
    tests: dict[float, IVectorSet]
    enrolments: list[Enrolment]


def build_protocol(cfg: RunConfig, seed: int) -> SynthProtocol:
    """
    Development speakers (full/short pairs), evaluation speakers (enrollment
    and test vectors per condition) and cohort speakers, as three disjoint
    populations drawn from one seed.
    """
    exp = cfg.experiment
    conditions = [parse_condition(text) for text in exp.conditions]
    base = SynthConfig(
        seed=seed,
        dim=exp.dim,
        speaker_var=exp.speaker_var,
        session_var=exp.session_var,
        utterance_var_per_sec=exp.utterance_var_per_sec,
        utterance_anisotropy=exp.utterance_anisotropy,
    )

    dev_cfg = base.model_copy(update={
        "n_speakers": exp.dev_speakers,
        "sessions_per_speaker": exp.dev_sessions,
    })
    dev_full, dev_short = make_full_short_sets(dev_cfg, exp.full_sec, cfg.suv.short_sec)

    eval_cfg = base.model_copy(update={
        "n_speakers": exp.eval_speakers,
        "sessions_per_speaker": exp.eval_sessions,
        "speaker_offset": exp.dev_speakers,
    })
    tests = {
        test_sec: generate_corpus(eval_cfg.model_copy(update={"durations_sec": [test_sec]}), role="test")
        for test_sec in sorted({c.test_sec for c in conditions})
    }

    enrolments = []
    for condition in conditions:
        if condition.partitioned:
            pieces, enrol_map = make_partition_pieces(eval_cfg, condition.enrol_sec, condition.parts)
            enrolled = enroll_from_pieces(pieces, enrol_map, condition.parts)
            enrolments.append(Enrolment(condition, enrolled, pieces, enrol_map))
        else:
            enrolled = generate_corpus(
                eval_cfg.model_copy(update={"durations_sec": [condition.enrol_sec]}), role="enrol"
            )
            enrolments.append(Enrolment(condition, enrolled))

    cohort_cfg = base.model_copy(update={
        "n_speakers": exp.cohort_speakers,
        "sessions_per_speaker": 1,
        "speaker_offset": exp.dev_speakers + exp.eval_speakers,
        "durations_sec": [min(c.test_sec for c in conditions)],
    })
    cohort = generate_corpus(cohort_cfg, role="cohort")

    return SynthProtocol(
        seed=seed,
        dev_full=dev_full,
        dev_short=dev_short,
        cohort=cohort,
        tests=tests,
        enrolments=enrolments,
    )


class ExperimentService:
    """Runs the comparison over several seeds and assembles the report."""

    def __init__(self, cfg: RunConfig, use_suv: bool = True, use_snorm: Optional[bool] = None):
        self.cfg = cfg
        self.use_suv = use_suv
        self.use_snorm = cfg.snorm.enabled if use_snorm is None else use_snorm
        self.conditions = list(cfg.experiment.conditions)
        self.seeds = [cfg.seed + i for i in range(cfg.experiment.n_seeds)]

    # ──────────────────────────────────────────────
    # Training
    # ──────────────────────────────────────────────

    def _train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            n1=self.cfg.experiment.n1,
            em_iterations=self.cfg.em_iterations,
            seed=seed,
            min_utts_per_speaker=self.cfg.min_utts_per_speaker,
        )

    def train_systems(self, protocol: SynthProtocol) -> tuple[LdaTransform, dict[SystemName, GpldaModel]]:
        """LDA on the full-length development set, then one GPLDA per system."""
        seed = protocol.seed
        lda = train_lda(protocol.dev_full, self.cfg.experiment.lda_dim)
        dev_projected = project_rows(protocol.dev_full.as_matrix(), lda)
        labels = protocol.dev_full.speaker_ids

        models = {}
        models[SystemName.GPLDA], _ = train_gplda_arrays(
            length_normalize_rows(dev_projected), labels, self._train_config(seed)
        )

        if self.use_suv:
            suv = estimate_suv_arrays(protocol.dev_full.as_matrix(), protocol.dev_short.as_matrix(), lda)
            copies = self.cfg.suv.copies
            augmented = augment_rows(dev_projected, suv, seed, copies)
            augmented_labels = [label for label in labels for _ in range(copies)]
            models[SystemName.SUV_GPLDA], _ = train_gplda_arrays(
                length_normalize_rows(augmented), augmented_labels, self._train_config(seed)
            )
        return lda, models

    # ──────────────────────────────────────────────
    # Scoring
    # ──────────────────────────────────────────────

    def run_seed(self, seed: int) -> dict[tuple[SystemName, str], EvalReport]:
        logger.info(f"Seed {seed}: building synthetic protocol")
        protocol = build_protocol(self.cfg, seed)
        lda, models = self.train_systems(protocol)

        cohort = preprocess_rows(protocol.cohort.as_matrix(), lda)
        tests = {sec: preprocess_rows(test.as_matrix(), lda) for sec, test in protocol.tests.items()}

        results = {}
        for system, model in models.items():
            test_cohort = {
                sec: score_matrix(T, cohort, model) for sec, T in tests.items()
            } if self.use_snorm else {}

            for text, enrolment in zip(self.conditions, protocol.enrolments):
                test_set = protocol.tests[enrolment.condition.test_sec]
                E = preprocess_rows(enrolment.enrolled.as_matrix(), lda)
                T = tests[enrolment.condition.test_sec]

                scores = score_matrix(E, T, model)
                if self.use_snorm:
                    scores = snorm_matrix(
                        scores, score_matrix(E, cohort, model), test_cohort[enrolment.condition.test_sec]
                    )

                valid, target = trial_masks(enrolment.enrolled, test_set)
                report = evaluate_arrays(scores[target], scores[valid & ~target], self.cfg.cost)
                results[(system, text)] = report
                logger.info(
                    f"Seed {seed} {system.value:<9} {text:<16} "
                    f"EER {100 * report.eer:6.2f}%  minDCF {report.min_dcf:.4f}"
                )
        return results

    def run(self) -> ExperimentReport:
        logger.info(
            f"Running experiment: seeds {self.seeds}, SUV {'on' if self.use_suv else 'off'}, "
            f"S-norm {'on' if self.use_snorm else 'off'}, workers {self.cfg.workers}"
        )
        per_seed = map_ordered(self.run_seed, self.seeds, self.cfg.workers)

        systems = [SystemName.GPLDA] + ([SystemName.SUV_GPLDA] if self.use_suv else [])
        baseline_key = (SystemName.GPLDA, self.conditions[0])
        baseline_eer = float(np.mean([result[baseline_key].eer for result in per_seed]))

        rows = []
        for system in systems:
            for text in self.conditions:
                eers = [result[(system, text)].eer for result in per_seed]
                dcfs = [result[(system, text)].min_dcf for result in per_seed]
                eer = float(np.mean(eers))
                rows.append(ConditionResult(
                    system=system,
                    partitioned=parse_condition(text).partitioned,
                    condition=text,
                    eer=eer,
                    min_dcf=float(np.mean(dcfs)),
                    eer_per_seed=eers,
                    min_dcf_per_seed=dcfs,
                    relative_eer_improvement=relative_improvement(baseline_eer, eer),
                ))

        first = per_seed[0][baseline_key]
        return ExperimentReport(
            seeds=self.seeds,
            snorm=self.use_snorm,
            n_target=first.n_target,
            n_nontarget=first.n_nontarget,
            rows=rows,
        )

# ──────────────────────────────────────────────
# Output
# ──────────────────────────────────────────────

def format_table(report: ExperimentReport) -> str:
    header = ("System", "Condition", "EER (%)", "minDCF", "Rel. EER gain (%)")
    lines = [
        (
            row.system.value,
            row.condition,
            f"{100 * row.eer:.2f}",
            f"{row.min_dcf:.4f}",
            "-" if row.relative_eer_improvement is None else f"{100 * row.relative_eer_improvement:.1f}",
        )
        for row in report.rows
    ]
    widths = [max(len(line[i]) for line in [header, *lines]) for i in range(len(header))]

    def render(cells: tuple[str, ...]) -> str:
        left = [cells[i].ljust(widths[i]) for i in range(2)]
        right = [cells[i].rjust(widths[i]) for i in range(2, len(cells))]
        return "  ".join(left + right).rstrip()

    rule = "-" * len(render(header))
    footer = (
        f"seeds: {', '.join(str(s) for s in report.seeds)}; S-norm: {'on' if report.snorm else 'off'}; "
        f"{report.n_target} target / {report.n_nontarget} nontarget trials per condition"
    )
    return "\n".join([render(header), rule, *(render(line) for line in lines), rule, footer]) + "\n"


def report_json(report: ExperimentReport) -> str:
    return report.model_dump_json(indent=2) + "\n"


def write_experiment(report: ExperimentReport, json_path: Path, table_path: Optional[Path] = None) -> None:
    atomic_write_text(json_path, report_json(report))
    if table_path is not None:
        atomic_write_text(table_path, format_table(report))
