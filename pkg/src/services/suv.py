"""
Short utterance variance (SUV) modelling.

S_SUV is the mean outer product of LDA-projected differences between the
full- and short-length i-vectors of the same recording. Its Cholesky factor
D (D D' = S_SUV) colours standard normal draws, and w_full + D d gives an
SUV-added development vector whose added covariance is exactly S_SUV.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger

from src.core.dependencies import create_rng, map_ordered
from src.core.validator import ArrayValidator
from src.schemas.exceptions import (
    DecompositionError,
    DimensionMismatchError,
    InsufficientDataError,
    InvalidInputError,
)
from src.schemas.vectors import IVector, IVectorSet
from src.services.preprocess import LdaTransform
from src.tools.containers import read_matrices, write_matrices

# Ridge ladder, relative to trace(S) / k
RIDGE_STEPS = (1e-12, 1e-10, 1e-8, 1e-6)
# Eigenvalues below this fraction of the largest count as zero when reporting rank
PD_RTOL = 1e-12
# Negative eigenvalue allowed in S_SUV, relative to the largest magnitude
PSD_RTOL = 1e-10
# Allowed mismatch between D D' and S_SUV + ridge I, relative to the largest entry
FACTOR_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class SuvModel:
    s_suv: np.ndarray
    d_factor: np.ndarray
    ridge_used: float = 0.0

    def __post_init__(self):
        s_suv = ArrayValidator.symmetric(self.s_suv, "S_SUV")
        d_factor = ArrayValidator.square(self.d_factor, "D")
        if d_factor.shape != s_suv.shape:
            raise DimensionMismatchError(
                f"D has shape {d_factor.shape} but S_SUV has shape {s_suv.shape}"
            )
        ridge = float(self.ridge_used)
        if not np.isfinite(ridge) or ridge < 0:
            raise InvalidInputError(f"ridge_used must be finite and nonnegative, got {self.ridge_used}")

        if s_suv.size:
            eigvals = np.linalg.eigvalsh(0.5 * (s_suv + s_suv.T))
            if eigvals[0] < -PSD_RTOL * max(abs(eigvals[-1]), abs(eigvals[0])):
                raise InvalidInputError(
                    f"S_SUV is not positive semidefinite (smallest eigenvalue {eigvals[0]:.3e})"
                )
            target = s_suv + ridge * np.eye(s_suv.shape[0])
            error = np.max(np.abs(d_factor @ d_factor.T - target))
            if error > FACTOR_RTOL * max(np.max(np.abs(target)), np.finfo(np.float64).tiny):
                raise InvalidInputError(
                    f"D D' differs from S_SUV + ridge I by {error:.3e}"
                )

        object.__setattr__(self, "s_suv", s_suv)
        object.__setattr__(self, "d_factor", d_factor)
        object.__setattr__(self, "ridge_used", ridge)

    @property
    def dim(self) -> int:
        return self.s_suv.shape[0]


@dataclass(frozen=True, eq=False)
class UtterancePair:
    w_full: IVector
    w_short: IVector

    def __post_init__(self):
        if self.w_full.speaker_id != self.w_short.speaker_id:
            raise InvalidInputError(
                f"pair mixes speakers '{self.w_full.speaker_id}' and '{self.w_short.speaker_id}'"
            )
        if not self.w_short.duration_sec < self.w_full.duration_sec:
            raise InvalidInputError(
                f"short utterance '{self.w_short.utterance_id}' ({self.w_short.duration_sec}s) "
                f"is not shorter than '{self.w_full.utterance_id}' ({self.w_full.duration_sec}s)"
            )


def pairs_from_sets(full: IVectorSet, short: IVectorSet) -> list[UtterancePair]:
    """Pair two row-aligned sets (row i of `short` is cut from row i of `full`)."""
    if len(full) != len(short):
        raise DimensionMismatchError(
            f"{len(full)} full-length but {len(short)} short-length i-vectors"
        )
    if full.dim != short.dim:
        raise DimensionMismatchError(f"full dim {full.dim} != short dim {short.dim}")
    return [UtterancePair(w_full=f, w_short=s) for f, s in zip(full, short)]


def decorrelate(s: np.ndarray) -> tuple[np.ndarray, float]:
    """
    Lower-triangular D with D D' = s + ridge I. The plain Cholesky factor is
    tried first, so ridge is 0 whenever s factorizes as given, however badly
    conditioned. Only a failed factorization climbs the ridge ladder.
    """
    s = ArrayValidator.symmetric(s, "S_SUV")
    k = s.shape[0]
    s = 0.5 * (s + s.T)

    if not np.any(s):
        return np.zeros_like(s), 0.0

    try:
        return np.linalg.cholesky(s), 0.0
    except np.linalg.LinAlgError:
        pass

    eigvals = np.linalg.eigvalsh(s)
    rank = int(np.sum(eigvals > PD_RTOL * max(eigvals[-1], 0.0)))
    scale = np.trace(s) / k
    for step in RIDGE_STEPS:
        ridge = step * scale
        try:
            factor = np.linalg.cholesky(s + ridge * np.eye(k))
        except np.linalg.LinAlgError:
            continue
        logger.warning(
            f"S_SUV has numerical rank {rank} of {k} (smallest eigenvalue {eigvals[0]:.3e}); "
            f"factorized with ridge {ridge:.3e}"
        )
        return factor, float(ridge)

    raise DecompositionError(
        f"Cholesky factorization of S_SUV failed even with ridge {RIDGE_STEPS[-1] * scale:.3e} "
        f"(smallest eigenvalue {eigvals[0]:.3e})"
    )


def estimate_suv_arrays(full: np.ndarray, short: np.ndarray, lda: LdaTransform) -> SuvModel:
    full = ArrayValidator.rows(full, lda.d_in, "full-length i-vectors")
    short = ArrayValidator.rows(short, lda.d_in, "short-length i-vectors")
    if full.shape != short.shape:
        raise DimensionMismatchError(
            f"full {full.shape} and short {short.shape} i-vector blocks differ"
        )
    if full.shape[0] == 0:
        raise InsufficientDataError("SUV estimation needs at least one full/short pair")

    diffs = (full - short) @ lda.A
    s_suv = diffs.T @ diffs / diffs.shape[0]
    s_suv = 0.5 * (s_suv + s_suv.T)
    d_factor, ridge = decorrelate(s_suv)

    logger.info(
        f"Estimated S_SUV from {diffs.shape[0]} pairs (k={lda.d_out}, trace={np.trace(s_suv):.4f})"
    )
    return SuvModel(s_suv=s_suv, d_factor=d_factor, ridge_used=ridge)


def estimate_suv(pairs: Sequence[UtterancePair], lda: LdaTransform) -> SuvModel:
    if not pairs:
        raise InsufficientDataError("SUV estimation needs at least one full/short pair")
    full = np.vstack([np.asarray(p.w_full.values, dtype=np.float64) for p in pairs])
    short = np.vstack([np.asarray(p.w_short.values, dtype=np.float64) for p in pairs])
    return estimate_suv_arrays(full, short, lda)


def _augment_keyed(w_full: np.ndarray, d_factor: np.ndarray, key: tuple[int, ...], copies: int) -> np.ndarray:
    out = np.empty((copies, w_full.shape[0]))
    for copy in range(copies):
        draw = create_rng(*key, copy).standard_normal(w_full.shape[0])
        out[copy] = w_full + d_factor @ draw
    return out


def augment(
    w_full: np.ndarray,
    model: SuvModel,
    rng_seed: int,
    copies: int = 1,
) -> list[np.ndarray]:
    """SUV-added copies of one LDA-projected vector; copy c draws from key (seed, c)."""
    w_full = ArrayValidator.vector(w_full, model.dim, "full-length i-vector")
    rng_seed = ArrayValidator.seed(rng_seed, "rng_seed")
    copies = ArrayValidator.positive_int(copies, "copies")
    return list(_augment_keyed(w_full, model.d_factor, (rng_seed,), copies))


def augment_rows(
    X: np.ndarray,
    model: SuvModel,
    rng_seed: int,
    copies: int = 1,
    workers: int = 1,
) -> np.ndarray:
    """
    SUV-added copies of every row. Output row r*copies + c is row r with the
    draw keyed (seed, r, c), so the result does not depend on `workers`.
    """
    X = ArrayValidator.rows(X, model.dim, "full-length i-vectors")
    rng_seed = ArrayValidator.seed(rng_seed, "rng_seed")
    copies = ArrayValidator.positive_int(copies, "copies")
    if X.shape[0] == 0:
        return X.copy()

    blocks = map_ordered(
        lambda r: _augment_keyed(X[r], model.d_factor, (rng_seed, r), copies),
        range(X.shape[0]),
        workers,
    )
    return np.vstack(blocks)


def write_suv(model: SuvModel, destination: Path | str) -> None:
    write_matrices(
        destination,
        {"S_SUV": model.s_suv, "D": model.d_factor, "ridge": np.float64(model.ridge_used)},
    )


def read_suv(source: Path | str) -> SuvModel:
    sections = read_matrices(source, required=("S_SUV", "D", "ridge"))
    return SuvModel(
        s_suv=sections["S_SUV"],
        d_factor=sections["D"],
        ridge_used=float(sections["ridge"]),
    )
