"""Session compensation before PLDA: LDA projection and length normalization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.linalg import LinAlgError, cholesky, eigh

from src.core.validator import ArrayValidator
from src.schemas.exceptions import (
    DimensionMismatchError,
    InsufficientDataError,
    InvalidInputError,
)
from src.schemas.vectors import IVectorSet
from src.tools.containers import read_matrices, write_matrices

# Ridge added to a singular within-class scatter, relative to trace / d_in
SW_RIDGE = 1e-6


@dataclass(frozen=True, eq=False)
class LdaTransform:
    A: np.ndarray  # (d_in, d_out)

    def __post_init__(self):
        A = ArrayValidator.finite(self.A, "LDA matrix")
        if A.ndim != 2 or A.shape[1] == 0 or A.shape[1] > A.shape[0]:
            raise DimensionMismatchError(f"LDA matrix must be (d_in, d_out<=d_in), got {A.shape}")
        object.__setattr__(self, "A", A)

    @property
    def d_in(self) -> int:
        return self.A.shape[0]

    @property
    def d_out(self) -> int:
        return self.A.shape[1]


def group_by_speaker(labels: Sequence[str]) -> dict[str, list[int]]:
    """Row indices per speaker, speakers in order of first appearance."""
    groups: dict[str, list[int]] = {}
    for row, label in enumerate(labels):
        groups.setdefault(label, []).append(row)
    return groups


def scatter_matrices(X: np.ndarray, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """
    Between-class scatter over equally weighted speaker means and pooled
    within-class scatter (per utterance).
    """
    groups = group_by_speaker(labels)
    means = np.vstack([X[rows].mean(axis=0) for rows in groups.values()])
    centred_means = means - means.mean(axis=0)
    s_b = centred_means.T @ centred_means / len(groups)

    residuals = np.empty_like(X)
    for mean, rows in zip(means, groups.values()):
        residuals[rows] = X[rows] - mean
    s_w = residuals.T @ residuals / X.shape[0]
    return s_b, s_w


def _canonical_sign(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its first nonzero coordinate is positive."""
    out = vectors.copy()
    for j in range(out.shape[1]):
        column = out[:, j]
        nonzero = np.flatnonzero(np.abs(column) > 1e-12 * np.max(np.abs(column)))
        if nonzero.size and column[nonzero[0]] < 0:
            out[:, j] = -column
    return out


def train_lda_arrays(X: np.ndarray, labels: Sequence[str], d_out: int) -> LdaTransform:
    X = ArrayValidator.finite(X, "LDA training data")
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimensionMismatchError(
            f"{len(labels)} labels for training data of shape {X.shape}"
        )
    d_out = ArrayValidator.positive_int(d_out, "d_out")
    d_in = X.shape[1]
    n_speakers = len(group_by_speaker(labels))

    if n_speakers < 2:
        raise InsufficientDataError(f"LDA needs at least 2 speakers, got {n_speakers}")
    if d_out > d_in:
        raise InvalidInputError(f"d_out={d_out} exceeds input dimension {d_in}")
    if d_out > n_speakers - 1:
        raise InvalidInputError(
            f"d_out={d_out} exceeds number of speakers - 1 ({n_speakers - 1})"
        )

    s_b, s_w = scatter_matrices(X, labels)
    try:
        cholesky(s_w, lower=True)
    except LinAlgError:
        ridge = SW_RIDGE * np.trace(s_w) / d_in
        if ridge <= 0:
            ridge = SW_RIDGE
        logger.warning(f"Within-class scatter is singular; adding ridge {ridge:.3e}")
        s_w = s_w + ridge * np.eye(d_in)

    eigvals, eigvecs = eigh(s_b, s_w)
    order = np.argsort(-eigvals, kind="stable")[:d_out]
    A = eigvecs[:, order]
    A = A / np.linalg.norm(A, axis=0, keepdims=True)
    A = _canonical_sign(A)

    logger.info(
        f"Trained LDA {d_in} -> {d_out} on {X.shape[0]} vectors from {n_speakers} speakers "
        f"(top eigenvalue {eigvals[order[0]]:.4f})"
    )
    return LdaTransform(A=A)


def train_lda(data: IVectorSet, d_out: int) -> LdaTransform:
    return train_lda_arrays(data.as_matrix(), data.speaker_ids, d_out)


def project(w: np.ndarray, lda: LdaTransform) -> np.ndarray:
    w = ArrayValidator.vector(w, lda.d_in, "i-vector")
    return lda.A.T @ w


def project_rows(X: np.ndarray, lda: LdaTransform) -> np.ndarray:
    X = ArrayValidator.rows(X, lda.d_in, "i-vectors")
    return X @ lda.A


def length_normalize(w: np.ndarray) -> np.ndarray:
    w = ArrayValidator.finite(w, "i-vector")
    norm = np.linalg.norm(w)
    if norm == 0.0:
        raise InvalidInputError("cannot length-normalize a zero vector")
    return w / norm


def length_normalize_rows(X: np.ndarray) -> np.ndarray:
    X = ArrayValidator.finite(X, "i-vectors")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        row = int(np.flatnonzero(norms[:, 0] == 0.0)[0])
        raise InvalidInputError(f"cannot length-normalize zero vector at row {row}")
    return X / norms


def preprocess_rows(X: np.ndarray, lda: LdaTransform | None) -> np.ndarray:
    """LDA projection (when given) followed by length normalization."""
    if lda is not None:
        X = project_rows(X, lda)
    return length_normalize_rows(X)


def write_lda(lda: LdaTransform, destination: Path | str) -> None:
    write_matrices(destination, {"A": lda.A})


def read_lda(source: Path | str) -> LdaTransform:
    return LdaTransform(A=read_matrices(source, required=("A",))["A"])
