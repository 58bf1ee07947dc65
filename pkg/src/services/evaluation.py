"""
Detection metrics: equal error rate, normalized minimum detection cost and
DET operating points.

Every metric is read off the same staircase of operating points: one per
distinct score t (accept iff score >= t) plus a final reject-all point.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.schemas.exceptions import InvalidInputError, LabelError, UnknownIdError
from src.schemas.reports import CostParams, EvalReport
from src.schemas.vectors import ScoreSet, Trial, TrialLabel
from src.tools.utils import atomic_write_text


def _as_target_mask(labels: Sequence) -> np.ndarray:
    mask = []
    for label in labels:
        if isinstance(label, (bool, np.bool_)):
            mask.append(bool(label))
            continue
        try:
            label = TrialLabel(label)
        except ValueError:
            raise LabelError(f"unknown trial label '{label}'")
        if label == TrialLabel.UNKNOWN:
            raise LabelError("trial without a target/nontarget label")
        mask.append(label == TrialLabel.TARGET)
    return np.array(mask, dtype=bool)


def _require_finite(values: np.ndarray) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise InvalidInputError(f"{int(bad.sum())} non-finite score(s), first at index {int(np.argmax(bad))}")


def split_scores(scores: ScoreSet | Sequence[float], labels: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Target and nontarget score arrays from scores and aligned labels."""
    values = scores.scores if isinstance(scores, ScoreSet) else np.asarray(scores, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if len(labels) != values.shape[0]:
        raise LabelError(f"{values.shape[0]} scores but {len(labels)} labels")
    _require_finite(values)
    mask = _as_target_mask(labels)
    target, nontarget = values[mask], values[~mask]
    if target.size == 0:
        raise LabelError("no target trials")
    if nontarget.size == 0:
        raise LabelError("no nontarget trials")
    return target, nontarget


def operating_points(target: np.ndarray, nontarget: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (thresholds, p_miss, p_fa) at every distinct score and at the reject-all
    threshold just above the largest score. Thresholds ascend, so p_miss is
    nondecreasing and p_fa nonincreasing.
    """
    distinct = np.unique(np.concatenate([target, nontarget]))
    thresholds = np.append(distinct, np.nextafter(distinct[-1], np.inf))

    target_sorted = np.sort(target)
    nontarget_sorted = np.sort(nontarget)
    p_miss = np.searchsorted(target_sorted, thresholds, side="left") / target.size
    p_fa = (nontarget.size - np.searchsorted(nontarget_sorted, thresholds, side="left")) / nontarget.size
    return thresholds, p_miss, p_fa


def _eer_from_points(thresholds: np.ndarray, p_miss: np.ndarray, p_fa: np.ndarray) -> tuple[float, float]:
    diff = p_miss - p_fa
    j = int(np.argmax(diff >= 0.0))  # the reject-all point always has diff = 1
    if diff[j] == 0.0 or j == 0:
        return float(p_miss[j]), float(thresholds[j])

    # Linear interpolation between the bracketing operating points
    alpha = -diff[j - 1] / (diff[j] - diff[j - 1])
    eer = p_miss[j - 1] + alpha * (p_miss[j] - p_miss[j - 1])
    threshold = thresholds[j - 1] + alpha * (thresholds[j] - thresholds[j - 1])
    return float(eer), float(threshold)


def compute_eer(scores: ScoreSet | Sequence[float], labels: Sequence) -> tuple[float, float]:
    """Returns (eer, threshold)."""
    target, nontarget = split_scores(scores, labels)
    return _eer_from_points(*operating_points(target, nontarget))


def _min_dcf_from_points(
    thresholds: np.ndarray,
    p_miss: np.ndarray,
    p_fa: np.ndarray,
    params: CostParams,
) -> tuple[float, float]:
    costs = params.c_miss * params.p_target * p_miss + params.c_fa * (1.0 - params.p_target) * p_fa
    best = int(np.argmin(costs))  # first minimum, i.e. the lowest threshold
    return float(costs[best] / params.default_cost), float(thresholds[best])


def compute_min_dcf(
    scores: ScoreSet | Sequence[float],
    labels: Sequence,
    params: Optional[CostParams] = None,
) -> tuple[float, float]:
    """Returns (normalized min DCF, threshold)."""
    target, nontarget = split_scores(scores, labels)
    return _min_dcf_from_points(*operating_points(target, nontarget), params or CostParams())


def det_points(scores: ScoreSet | Sequence[float], labels: Sequence) -> list[tuple[float, float]]:
    """Distinct (p_fa, p_miss) pairs in order of rising threshold."""
    target, nontarget = split_scores(scores, labels)
    _, p_miss, p_fa = operating_points(target, nontarget)
    points: list[tuple[float, float]] = []
    for fa, miss in zip(p_fa, p_miss):
        point = (float(fa), float(miss))
        if not points or points[-1] != point:
            points.append(point)
    return points


def evaluate_arrays(target: np.ndarray, nontarget: np.ndarray, params: Optional[CostParams] = None) -> EvalReport:
    params = params or CostParams()
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    nontarget = np.asarray(nontarget, dtype=np.float64).reshape(-1)
    if target.size == 0 or nontarget.size == 0:
        raise LabelError("evaluation needs at least one target and one nontarget trial")
    _require_finite(target)
    _require_finite(nontarget)

    points = operating_points(target, nontarget)
    eer, eer_threshold = _eer_from_points(*points)
    min_dcf, dcf_threshold = _min_dcf_from_points(*points, params)
    return EvalReport(
        eer=eer,
        eer_threshold=eer_threshold,
        min_dcf=min_dcf,
        min_dcf_threshold=dcf_threshold,
        n_target=target.size,
        n_nontarget=nontarget.size,
        cost=params,
    )


def labelled_scores(scores: ScoreSet, trials: Sequence[Trial]) -> tuple[np.ndarray, list[TrialLabel]]:
    """Scores reordered to follow the trial list, with the trial labels."""
    lookup = {key: float(value) for key, value in zip(scores.keys(), scores.scores)}
    values, labels = [], []
    for trial in trials:
        key = (trial.enrol_id, trial.test_id)
        if key not in lookup:
            raise UnknownIdError(f"no score for trial '{trial.enrol_id} {trial.test_id}'")
        values.append(lookup[key])
        labels.append(trial.label)
    if len(lookup) > len(trials):
        logger.debug(f"Ignoring {len(lookup) - len(trials)} score(s) with no trial")
    return np.asarray(values, dtype=np.float64), labels


def evaluate(scores: ScoreSet, trials: Sequence[Trial], params: Optional[CostParams] = None) -> EvalReport:
    values, labels = labelled_scores(scores, trials)
    target, nontarget = split_scores(values, labels)
    report = evaluate_arrays(target, nontarget, params)
    logger.info(
        f"Evaluated {report.n_target} target / {report.n_nontarget} nontarget trials: "
        f"EER {100 * report.eer:.2f}%, minDCF {report.min_dcf:.4f}"
    )
    return report


def relative_improvement(baseline: float, value: float) -> Optional[float]:
    """(baseline - value) / baseline; None when the baseline is zero."""
    if baseline == 0.0:
        return None
    return (baseline - value) / baseline


def format_det_points(points: Sequence[tuple[float, float]]) -> str:
    return "p_fa,p_miss\n" + "".join(f"{fa:.10g},{miss:.10g}\n" for fa, miss in points)


def write_det_points(points: Sequence[tuple[float, float]], destination: Path | str) -> None:
    atomic_write_text(destination, format_det_points(points))
