import numpy as np
import pytest

from src.config import load_run_config
from src.schemas.reports import SystemName
from src.services.experiment import (
    ExperimentService,
    build_protocol,
    format_table,
    report_json,
    write_experiment,
)

BASE, PARTITIONED = "10sec-10sec", "10sec(2)-10sec"

SMALL = {
    "em_iterations": 5,
    "suv": {"short_sec": 10.0, "full_sec": 60.0},
    "snorm": {"cohort_size": 10},
    "experiment": {
        "dim": 10,
        "dev_speakers": 30,
        "dev_sessions": 3,
        "eval_speakers": 10,
        "eval_sessions": 3,
        "cohort_speakers": 10,
        "lda_dim": 8,
        "n1": 4,
        "n_seeds": 2,
        "full_sec": 60.0,
        "conditions": [BASE, "20sec-10sec", PARTITIONED],
    },
}


def small_config(**overrides):
    return load_run_config(**{**SMALL, **overrides})


class TestProtocol:

    def test_populations_are_disjoint(self):
        protocol = build_protocol(small_config(), seed=0)
        dev = set(protocol.dev_full.speaker_ids)
        evaluation = set(protocol.tests[10.0].speaker_ids)
        cohort = set(protocol.cohort.speaker_ids)
        assert len(dev) == 30 and len(evaluation) == 10 and len(cohort) == 10
        assert not dev & evaluation and not dev & cohort and not evaluation & cohort

    def test_enrolments_per_condition(self):
        protocol = build_protocol(small_config(), seed=0)
        assert [e.condition.name for e in protocol.enrolments] == [BASE, "20sec-10sec", PARTITIONED]
        partitioned = protocol.enrolments[2]
        assert partitioned.pieces is not None and len(partitioned.pieces) == 2 * 10 * 3
        assert len(partitioned.enrolled) == 10 * 3
        assert partitioned.enrolled.metas[0].duration_sec == 20.0

    def test_dev_pairs_row_aligned(self):
        protocol = build_protocol(small_config(), seed=0)
        assert protocol.dev_full.speaker_ids == protocol.dev_short.speaker_ids
        assert protocol.dev_full.metas[0].duration_sec == 60.0
        assert protocol.dev_short.metas[0].duration_sec == 10.0


class TestExperimentService:

    def test_report_layout(self, tmp_path):
        report = ExperimentService(small_config()).run()
        assert report.seeds == [0, 1]
        assert [(r.system, r.condition) for r in report.rows] == [
            (system, condition)
            for system in (SystemName.GPLDA, SystemName.SUV_GPLDA)
            for condition in (BASE, "20sec-10sec", PARTITIONED)
        ]
        baseline = report.row(SystemName.GPLDA, BASE)
        assert baseline.relative_eer_improvement == pytest.approx(0.0)
        assert len(baseline.eer_per_seed) == 2
        assert baseline.eer == pytest.approx(np.mean(baseline.eer_per_seed))
        assert report.row(SystemName.SUV_GPLDA, PARTITIONED).partitioned
        assert report.n_target == 10 * 3 * 2
        assert report.n_nontarget == 10 * 3 * 9 * 3

        write_experiment(report, tmp_path / "report.json", tmp_path / "report.txt")
        assert (tmp_path / "report.json").read_text() == report_json(report)
        table = (tmp_path / "report.txt").read_text()
        assert table.splitlines()[0].startswith("System")
        assert "SUV-GPLDA" in table and PARTITIONED in table

    def test_without_suv_or_snorm(self):
        report = ExperimentService(small_config(), use_suv=False, use_snorm=False).run()
        assert {r.system for r in report.rows} == {SystemName.GPLDA}
        assert not report.snorm
        assert "S-norm: off" in format_table(report)

    def test_byte_identical_reruns(self):
        first = report_json(ExperimentService(small_config()).run())
        second = report_json(ExperimentService(small_config()).run())
        assert first == second

    def test_independent_of_workers(self):
        one = report_json(ExperimentService(small_config(workers=1)).run())
        four = report_json(ExperimentService(small_config(workers=4)).run())
        assert one == four


@pytest.fixture(scope="module")
def default_report():
    return ExperimentService(load_run_config(workers=4)).run()


@pytest.fixture(scope="module")
def anisotropic_report():
    return ExperimentService(
        load_run_config(workers=4, experiment={"utterance_anisotropy": 3.0})
    ).run()


@pytest.mark.slow
class TestDefaultProtocol:
    """Directional comparison on the default isotropic protocol."""

    def test_partitioning_helps_gplda(self, default_report):
        base = default_report.row(SystemName.GPLDA, BASE).eer
        partitioned = default_report.row(SystemName.GPLDA, PARTITIONED).eer
        assert partitioned < base
        assert (base - partitioned) / base >= 0.05


@pytest.mark.slow
class TestAnisotropicProtocol:
    """Utterance noise concentrated in a few LDA directions, where S_SUV has structure to model."""

    def test_partitioning_helps_gplda(self, anisotropic_report):
        base = anisotropic_report.row(SystemName.GPLDA, BASE).eer
        partitioned = anisotropic_report.row(SystemName.GPLDA, PARTITIONED).eer
        assert partitioned < base

    def test_suv_helps_gplda(self, anisotropic_report):
        base = anisotropic_report.row(SystemName.GPLDA, BASE).eer
        suv = anisotropic_report.row(SystemName.SUV_GPLDA, BASE).eer
        assert suv < base
        assert (base - suv) / base >= 0.03

    def test_combined_system_is_best(self, anisotropic_report):
        candidates = [
            (SystemName.GPLDA, BASE),
            (SystemName.GPLDA, PARTITIONED),
            (SystemName.SUV_GPLDA, BASE),
            (SystemName.SUV_GPLDA, PARTITIONED),
        ]
        per_seed = np.array([anisotropic_report.row(*key).eer_per_seed for key in candidates])
        wins = int(np.sum(np.argmin(per_seed, axis=0) == 3))
        assert wins >= 4
