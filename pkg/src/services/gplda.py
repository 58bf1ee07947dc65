"""
Length-normalized Gaussian PLDA.

Model: w = mean + U1 x1 + eps, x1 ~ N(0, I), eps ~ N(0, Lambda^-1), with a
full-rank precision Lambda. Trained by EM (speaker posteriors over x1 from
all of a speaker's sessions, then closed-form U1 / Lambda updates) and scored
with the batch likelihood ratio between same- and different-speaker
hypotheses of a joint Gaussian.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from src.core.dependencies import chunk_ranges, create_rng, map_ordered
from src.core.validator import ArrayValidator
from src.schemas.exceptions import (
    CohortError,
    DimensionMismatchError,
    InsufficientDataError,
    InvalidInputError,
    UnknownIdError,
)
from src.schemas.vectors import IVectorSet, ScoreSet, Trial
from src.services.preprocess import group_by_speaker, scatter_matrices
from src.tools.containers import read_matrices, write_matrices

# Ridge for a singular within-speaker covariance, relative to trace / k
COV_RIDGE = 1e-6
# Trials scored per task when scoring in parallel
SCORE_CHUNK = 16384
_LOG_2PI = np.log(2.0 * np.pi)


class TrainConfig(BaseModel):
    n1: int = Field(120, ge=1, description="Number of eigenvoices")
    em_iterations: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    min_utts_per_speaker: int = Field(2, ge=1)


@dataclass(frozen=True, eq=False)
class ScoringKernel:
    """score(x, y) = x'Qx/2 + y'Qy/2 + x'Py + const on mean-centred vectors."""
    Q: np.ndarray
    P: np.ndarray
    const: float


@dataclass(frozen=True, eq=False)
class GpldaModel:
    mean: np.ndarray
    u1: np.ndarray
    lam: np.ndarray
    n1: int = field(init=False)

    def __post_init__(self):
        mean = ArrayValidator.finite(self.mean, "PLDA mean")
        if mean.ndim != 1:
            raise DimensionMismatchError(f"PLDA mean must be a vector, got shape {mean.shape}")
        k = mean.shape[0]
        u1 = ArrayValidator.finite(self.u1, "eigenvoice matrix")
        if u1.ndim != 2 or u1.shape[0] != k or not 1 <= u1.shape[1] <= k:
            raise DimensionMismatchError(f"U1 must be ({k}, N1<= {k}), got shape {u1.shape}")
        lam = ArrayValidator.symmetric(self.lam, "precision matrix")
        if lam.shape != (k, k):
            raise DimensionMismatchError(f"Lambda must be ({k}, {k}), got shape {lam.shape}")
        lam = 0.5 * (lam + lam.T)
        try:
            cho_factor(lam, lower=True)
        except LinAlgError:
            raise InvalidInputError("precision matrix Lambda is not positive definite")

        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "n1", u1.shape[1])

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def within_cov(self) -> np.ndarray:
        return _spd_inverse(self.lam)

    @cached_property
    def across_cov(self) -> np.ndarray:
        return self.u1 @ self.u1.T

    @cached_property
    def kernel(self) -> ScoringKernel:
        across = self.across_cov
        total = across + self.within_cov
        total_inv = _spd_inverse(total)
        schur = total - across @ total_inv @ across
        schur = 0.5 * (schur + schur.T)
        schur_inv = _spd_inverse(schur)

        Q = total_inv - schur_inv
        P = total_inv @ across @ schur_inv
        const = -0.5 * (_logdet(schur) - _logdet(total))
        return ScoringKernel(Q=0.5 * (Q + Q.T), P=0.5 * (P + P.T), const=float(const))


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    factor = cho_factor(matrix, lower=True)
    inverse = cho_solve(factor, np.eye(matrix.shape[0]))
    return 0.5 * (inverse + inverse.T)


def _logdet(matrix: np.ndarray) -> float:
    factor, _ = cho_factor(matrix, lower=True)
    return float(2.0 * np.sum(np.log(np.diag(factor))))


def _regularized_inverse(cov: np.ndarray, what: str) -> np.ndarray:
    try:
        return _spd_inverse(cov)
    except LinAlgError:
        ridge = COV_RIDGE * np.trace(cov) / cov.shape[0]
        ridge = ridge if ridge > 0 else COV_RIDGE
        logger.warning(f"{what} is singular; adding ridge {ridge:.3e}")
        return _spd_inverse(cov + ridge * np.eye(cov.shape[0]))

# ──────────────────────────────────────────────
# EM training
# ──────────────────────────────────────────────

@dataclass(eq=False)
class _SpeakerStats:
    sums: np.ndarray     # (S, k) per-speaker sums of centred vectors
    counts: np.ndarray   # (S,) sessions per speaker
    scatter: np.ndarray  # (k, k) sum of y y'
    total: int


def _e_step(u1: np.ndarray, lam: np.ndarray, stats: _SpeakerStats) -> tuple[np.ndarray, np.ndarray, float]:
    """
    Posterior means of x1 per speaker, the count-weighted sum of second
    moments, and the marginal log-likelihood of the data.
    """
    n_speakers, k = stats.sums.shape
    n1 = u1.shape[1]
    ut_lam = u1.T @ lam
    ut_lam_u = ut_lam @ u1
    linear = stats.sums @ ut_lam.T          # (S, N1)

    means = np.empty((n_speakers, n1))
    second = np.zeros((n1, n1))
    loglik = 0.5 * stats.total * (_logdet(lam) - k * _LOG_2PI)
    loglik -= 0.5 * float(np.sum(lam * stats.scatter))

    for count in np.unique(stats.counts):
        rows = np.flatnonzero(stats.counts == count)
        precision = np.eye(n1) + count * ut_lam_u
        factor = cho_factor(precision, lower=True)
        cov = cho_solve(factor, np.eye(n1))
        block = cho_solve(factor, linear[rows].T).T
        means[rows] = block

        second += count * (len(rows) * cov + block.T @ block)
        loglik += -0.5 * len(rows) * 2.0 * np.sum(np.log(np.diag(factor[0])))
        loglik += 0.5 * float(np.sum(linear[rows] * block))

    return means, second, float(loglik)


def _initial_parameters(
    X: np.ndarray,
    labels: Sequence[str],
    n1: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    k = X.shape[1]
    s_b, s_w = scatter_matrices(X, labels)

    eigvals, eigvecs = eigh(s_b)
    order = np.argsort(-eigvals, kind="stable")[:n1]
    top = np.clip(eigvals[order], 0.0, None)
    u1 = eigvecs[:, order] * np.sqrt(top)

    usable = int(np.sum(top > 1e-12 * max(top.max(), 0.0))) if top.max() > 0 else 0
    if usable < n1:
        scale = np.sqrt(max(np.trace(s_b), np.trace(s_w)) / k) * 1e-2
        rng = create_rng(seed)
        u1[:, usable:] = rng.standard_normal((k, n1 - usable)) * scale
        logger.warning(
            f"Between-speaker scatter has rank {usable} < N1={n1}; "
            f"seeded {n1 - usable} eigenvoice column(s) from seed {seed}"
        )

    lam = _regularized_inverse(s_w, "Within-speaker covariance")
    return u1, lam


def train_gplda_arrays(
    X: np.ndarray,
    labels: Sequence[str],
    cfg: TrainConfig,
) -> tuple[GpldaModel, list[float]]:
    """
    Fit (mean, U1, Lambda) by EM.

    The mean is taken over every input vector. Speakers with fewer than
    `min_utts_per_speaker` vectors are then dropped from the EM statistics.

    Returns the model and the log-likelihood before each M-step plus after
    the last one (em_iterations + 1 values, nondecreasing up to round-off).
    """
    X = ArrayValidator.finite(X, "PLDA training data")
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionMismatchError(f"{len(labels)} labels for training data of shape {X.shape}")
    k = X.shape[1]
    if cfg.n1 > k:
        raise InvalidInputError(f"N1={cfg.n1} exceeds vector dimension {k}")

    groups = group_by_speaker(labels)
    kept = {spk: rows for spk, rows in groups.items() if len(rows) >= cfg.min_utts_per_speaker}
    if len(kept) < len(groups):
        logger.warning(
            f"Dropping {len(groups) - len(kept)} speaker(s) with fewer than "
            f"{cfg.min_utts_per_speaker} utterances"
        )
    if len(kept) < 2:
        raise InsufficientDataError(
            f"PLDA needs at least 2 speakers with >= {cfg.min_utts_per_speaker} utterances, "
            f"got {len(kept)}"
        )

    mean = X.mean(axis=0)
    rows = [row for spk_rows in kept.values() for row in spk_rows]
    X = X[rows]
    labels = [labels[row] for row in rows]
    Y = X - mean

    stats = _SpeakerStats(
        sums=_speaker_sums(Y, labels),
        counts=np.array([len(spk_rows) for spk_rows in kept.values()]),
        scatter=Y.T @ Y,
        total=Y.shape[0],
    )

    u1, lam = _initial_parameters(X, labels, cfg.n1, cfg.seed)
    logger.info(
        f"Training GPLDA: {Y.shape[0]} vectors, {len(kept)} speakers, k={k}, "
        f"N1={cfg.n1}, {cfg.em_iterations} EM iterations"
    )

    history: list[float] = []
    for iteration in range(cfg.em_iterations):
        means, second, loglik = _e_step(u1, lam, stats)
        history.append(loglik)
        logger.debug(f"EM iteration {iteration + 1}: log-likelihood {loglik:.6f}")

        cross = stats.sums.T @ means                     # sum_s s_s E[x_s]'
        u1 = np.linalg.solve(second, cross.T).T
        within = (stats.scatter - u1 @ cross.T) / stats.total
        within = 0.5 * (within + within.T)
        lam = _regularized_inverse(within, "Within-speaker covariance")

    _, _, final = _e_step(u1, lam, stats)
    history.append(final)
    logger.info(f"GPLDA trained: log-likelihood {history[0]:.3f} -> {final:.3f}")
    return GpldaModel(mean=mean, u1=u1, lam=lam), history


def _speaker_sums(Y: np.ndarray, labels: Sequence[str]) -> np.ndarray:
    groups = group_by_speaker(labels)
    return np.vstack([Y[rows].sum(axis=0) for rows in groups.values()])


def train_gplda(data: IVectorSet, cfg: TrainConfig) -> GpldaModel:
    """Train on preprocessed (LDA-projected, length-normalized) vectors."""
    model, _ = train_gplda_arrays(data.as_matrix(), data.speaker_ids, cfg)
    return model

# ──────────────────────────────────────────────
# Scoring
# ──────────────────────────────────────────────

def _quadratic(centred: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return 0.5 * np.sum((centred @ Q) * centred, axis=1)


def score_pairs(E: np.ndarray, T: np.ndarray, model: GpldaModel) -> np.ndarray:
    """Log-likelihood ratios for row-aligned (enrol, test) pairs."""
    E = ArrayValidator.rows(E, model.dim, "enrollment vectors") - model.mean
    T = ArrayValidator.rows(T, model.dim, "test vectors") - model.mean
    if E.shape != T.shape:
        raise DimensionMismatchError(f"{E.shape[0]} enrollment rows but {T.shape[0]} test rows")
    kernel = model.kernel
    return (
        _quadratic(E, kernel.Q)
        + _quadratic(T, kernel.Q)
        + np.sum((E @ kernel.P) * T, axis=1)
        + kernel.const
    )


def score(w_target: np.ndarray, w_test: np.ndarray, model: GpldaModel) -> float:
    w_target = ArrayValidator.vector(w_target, model.dim, "target i-vector")
    w_test = ArrayValidator.vector(w_test, model.dim, "test i-vector")
    return float(score_pairs(w_target[None, :], w_test[None, :], model)[0])


def score_matrix(E: np.ndarray, T: np.ndarray, model: GpldaModel) -> np.ndarray:
    """All-pairs scores, shape (len(E), len(T))."""
    E = ArrayValidator.rows(E, model.dim, "enrollment vectors") - model.mean
    T = ArrayValidator.rows(T, model.dim, "test vectors") - model.mean
    kernel = model.kernel
    return (
        _quadratic(E, kernel.Q)[:, None]
        + _quadratic(T, kernel.Q)[None, :]
        + (E @ kernel.P) @ T.T
        + kernel.const
    )


def _stack_ids(ids: list[str], vectors: Mapping[str, np.ndarray], side: str) -> np.ndarray:
    rows = []
    for utt in ids:
        if utt not in vectors:
            raise UnknownIdError(f"unknown {side} id '{utt}'")
        rows.append(np.asarray(vectors[utt], dtype=np.float64))
    return np.vstack(rows)


def score_trials(
    trials: Sequence[Trial],
    enrolled: Mapping[str, np.ndarray],
    tests: Mapping[str, np.ndarray],
    model: GpldaModel,
    workers: int = 1,
) -> ScoreSet:
    """One score per trial, in trial order; chunks may be scored in parallel."""
    if not trials:
        return ScoreSet.from_entries([])

    enrol_ids = list(dict.fromkeys(t.enrol_id for t in trials))
    test_ids = list(dict.fromkeys(t.test_id for t in trials))
    E = ArrayValidator.rows(_stack_ids(enrol_ids, enrolled, "enrol"), model.dim, "enrolled vectors")
    T = ArrayValidator.rows(_stack_ids(test_ids, tests, "test"), model.dim, "test vectors")

    kernel = model.kernel
    E = E - model.mean
    T = T - model.mean
    EP = E @ kernel.P
    q_enrol = _quadratic(E, kernel.Q)
    q_test = _quadratic(T, kernel.Q)

    enrol_pos = {utt: i for i, utt in enumerate(enrol_ids)}
    test_pos = {utt: i for i, utt in enumerate(test_ids)}
    ie = np.array([enrol_pos[t.enrol_id] for t in trials])
    it = np.array([test_pos[t.test_id] for t in trials])

    def score_chunk(bounds: tuple[int, int]) -> np.ndarray:
        lo, hi = bounds
        a, b = ie[lo:hi], it[lo:hi]
        return q_enrol[a] + q_test[b] + np.sum(EP[a] * T[b], axis=1) + kernel.const

    chunks = map_ordered(score_chunk, chunk_ranges(len(trials), SCORE_CHUNK), workers)
    logger.info(f"Scored {len(trials)} trials ({len(enrol_ids)} enrol x {len(test_ids)} test ids)")
    return ScoreSet(
        enrol_ids=tuple(t.enrol_id for t in trials),
        test_ids=tuple(t.test_id for t in trials),
        scores=np.concatenate(chunks),
    )

# ──────────────────────────────────────────────
# S-normalization
# ──────────────────────────────────────────────

def cohort_scores(
    ids: Sequence[str],
    vectors: np.ndarray,
    cohort: np.ndarray,
    model: GpldaModel,
) -> dict[str, np.ndarray]:
    """Score every vector against the whole cohort; one score list per id."""
    if len(ids) != len(vectors):
        raise DimensionMismatchError(f"{len(ids)} ids for {len(vectors)} vectors")
    if len(cohort) < 2:
        raise CohortError(f"cohort needs at least 2 vectors, got {len(cohort)}")
    matrix = score_matrix(vectors, cohort, model)
    return {utt: matrix[i] for i, utt in enumerate(ids)}


def _cohort_stats(ids: Sequence[str], cohort: Mapping[str, Sequence[float]], side: str) -> tuple[np.ndarray, np.ndarray]:
    stats: dict[str, tuple[float, float]] = {}
    for utt in dict.fromkeys(ids):
        if utt not in cohort:
            raise CohortError(f"no cohort scores for {side} id '{utt}'")
        values = np.asarray(cohort[utt], dtype=np.float64)
        if values.size < 2:
            raise CohortError(f"{side} id '{utt}' has {values.size} cohort score(s), need >= 2")
        std = float(np.std(values))
        if std == 0.0:
            raise CohortError(f"cohort scores for {side} id '{utt}' have zero deviation")
        stats[utt] = (float(np.mean(values)), std)
    mu = np.array([stats[utt][0] for utt in ids])
    sigma = np.array([stats[utt][1] for utt in ids])
    return mu, sigma


def snorm(
    raw: ScoreSet,
    enrol_cohort_scores: Mapping[str, Sequence[float]],
    test_cohort_scores: Mapping[str, Sequence[float]],
) -> ScoreSet:
    """s' = ((s - mu_e)/sigma_e + (s - mu_t)/sigma_t) / 2 with population deviations."""
    if len(raw) == 0:
        return raw
    mu_e, sigma_e = _cohort_stats(raw.enrol_ids, enrol_cohort_scores, "enrol")
    mu_t, sigma_t = _cohort_stats(raw.test_ids, test_cohort_scores, "test")
    s = raw.scores
    return raw.with_scores(0.5 * ((s - mu_e) / sigma_e + (s - mu_t) / sigma_t))


def snorm_matrix(
    raw: np.ndarray,
    enrol_cohort: np.ndarray,
    test_cohort: np.ndarray,
) -> np.ndarray:
    """S-norm for an all-pairs score matrix given cohort score matrices per side."""
    mu_e, sigma_e = enrol_cohort.mean(axis=1), enrol_cohort.std(axis=1)
    mu_t, sigma_t = test_cohort.mean(axis=1), test_cohort.std(axis=1)
    if np.any(sigma_e == 0.0) or np.any(sigma_t == 0.0):
        raise CohortError("cohort scores with zero deviation")
    return 0.5 * (
        (raw - mu_e[:, None]) / sigma_e[:, None]
        + (raw - mu_t[None, :]) / sigma_t[None, :]
    )

# ──────────────────────────────────────────────
# Persistence
# ──────────────────────────────────────────────

def write_gplda(model: GpldaModel, destination: Path | str) -> None:
    write_matrices(destination, {"mean": model.mean, "U1": model.u1, "Lambda": model.lam})


def read_gplda(source: Path | str) -> GpldaModel:
    sections = read_matrices(source, required=("mean", "U1", "Lambda"))
    return GpldaModel(mean=sections["mean"], u1=sections["U1"], lam=sections["Lambda"])
