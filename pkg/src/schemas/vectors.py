from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.schemas.exceptions import DimensionMismatchError, InvalidInputError


class UtteranceMeta(BaseModel):
    """Per-utterance metadata stored in the IVEC JSON manifest."""
    model_config = ConfigDict(frozen=True)

    utterance_id: str = Field(..., min_length=1)
    speaker_id: str
    duration_sec: float = Field(..., ge=0.0)
    channel_tag: Optional[str] = None

    @field_validator("duration_sec")
    @classmethod
    def _finite_duration(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("duration_sec must be finite")
        return value


class TrialLabel(str, Enum):
    TARGET = "target"
    NONTARGET = "nontarget"
    UNKNOWN = "unknown"


class Trial(BaseModel):
    model_config = ConfigDict(frozen=True)

    enrol_id: str = Field(..., min_length=1)
    test_id: str = Field(..., min_length=1)
    label: TrialLabel = TrialLabel.UNKNOWN


@dataclass(frozen=True, eq=False)
class IVector:
    """A single i-vector with its utterance metadata."""
    values: np.ndarray
    meta: UtteranceMeta

    @property
    def utterance_id(self) -> str:
        return self.meta.utterance_id

    @property
    def speaker_id(self) -> str:
        return self.meta.speaker_id

    @property
    def duration_sec(self) -> float:
        return self.meta.duration_sec

    @property
    def channel_tag(self) -> Optional[str]:
        return self.meta.channel_tag


@dataclass(frozen=True, eq=False)
class IVectorSet:
    """
    Ordered, fixed-dimension collection of i-vectors.

    Values are held as a read-only float32 matrix (count x dim), the same
    precision the IVEC container stores, so a set written and read back
    compares equal bit for bit.
    """
    dim: int
    values: np.ndarray
    metas: tuple[UtteranceMeta, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.dim <= 0:
            raise InvalidInputError(f"dim must be positive, got {self.dim}")

        values = np.asarray(self.values, dtype=np.float32)
        if values.size == 0:
            values = values.reshape(0, self.dim)
        if values.ndim != 2 or values.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"values of shape {values.shape} do not match dim={self.dim}"
            )
        if values.shape[0] != len(self.metas):
            raise DimensionMismatchError(
                f"{values.shape[0]} vectors but {len(self.metas)} metadata entries"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("i-vector values must be finite")

        counts = Counter(meta.utterance_id for meta in self.metas)
        duplicates = [utt for utt, n in counts.items() if n > 1]
        if duplicates:
            raise InvalidInputError(f"duplicate utterance_id '{duplicates[0]}'")

        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metas", tuple(self.metas))

    # ── Construction ──

    @classmethod
    def empty(cls, dim: int) -> IVectorSet:
        return cls(dim=dim, values=np.zeros((0, dim), dtype=np.float32), metas=())

    @classmethod
    def from_vectors(cls, vectors: list[IVector], dim: Optional[int] = None) -> IVectorSet:
        if not vectors:
            if dim is None:
                raise InvalidInputError("dim is required for an empty set")
            return cls.empty(dim)
        dims = {np.asarray(v.values).shape[-1] for v in vectors}
        if len(dims) != 1 or (dim is not None and dims != {dim}):
            raise DimensionMismatchError(f"inconsistent vector dimensions: {sorted(dims)}")
        matrix = np.stack([np.asarray(v.values, dtype=np.float32) for v in vectors])
        return cls(dim=matrix.shape[1], values=matrix, metas=tuple(v.meta for v in vectors))

    def with_values(self, values: np.ndarray) -> IVectorSet:
        """Same metadata, new (possibly re-dimensioned) values."""
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[0] != len(self):
            raise DimensionMismatchError(
                f"replacement values of shape {values.shape} do not cover {len(self)} entries"
            )
        return IVectorSet(dim=values.shape[1], values=values, metas=self.metas)

    def subset(self, indices) -> IVectorSet:
        indices = list(indices)
        return IVectorSet(
            dim=self.dim,
            values=self.values[indices] if indices else np.zeros((0, self.dim)),
            metas=tuple(self.metas[i] for i in indices),
        )

    # ── Access ──

    def __len__(self) -> int:
        return len(self.metas)

    def __iter__(self) -> Iterator[IVector]:
        for row, meta in zip(self.values, self.metas):
            yield IVector(values=row, meta=meta)

    def __getitem__(self, index: int) -> IVector:
        return IVector(values=self.values[index], meta=self.metas[index])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IVectorSet):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.metas == other.metas
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )

    @property
    def utterance_ids(self) -> list[str]:
        return [meta.utterance_id for meta in self.metas]

    @property
    def speaker_ids(self) -> list[str]:
        return [meta.speaker_id for meta in self.metas]

    def as_matrix(self) -> np.ndarray:
        """float64 copy for numerical work."""
        return self.values.astype(np.float64)

    def index(self) -> dict[str, int]:
        return {meta.utterance_id: i for i, meta in enumerate(self.metas)}

    def vector_map(self) -> dict[str, np.ndarray]:
        matrix = self.as_matrix()
        return {meta.utterance_id: matrix[i] for i, meta in enumerate(self.metas)}


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Per-trial scores, ordered, keyed by (enrol_id, test_id)."""
    enrol_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if not (len(self.enrol_ids) == len(self.test_ids) == scores.shape[0]):
            raise DimensionMismatchError(
                f"score set columns disagree: {len(self.enrol_ids)} enrol ids, "
                f"{len(self.test_ids)} test ids, {scores.shape[0]} scores"
            )
        if not np.all(np.isfinite(scores)):
            raise InvalidInputError("scores must be finite")
        keys = list(zip(self.enrol_ids, self.test_ids))
        if len(set(keys)) != len(keys):
            raise InvalidInputError("duplicate (enrol_id, test_id) pair in score set")

        scores = scores.copy()
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "enrol_ids", tuple(self.enrol_ids))
        object.__setattr__(self, "test_ids", tuple(self.test_ids))

    @classmethod
    def from_entries(cls, entries: list[tuple[str, str, float]]) -> ScoreSet:
        if not entries:
            return cls(enrol_ids=(), test_ids=(), scores=np.zeros(0))
        enrol, test, values = zip(*entries)
        return cls(enrol_ids=enrol, test_ids=test, scores=np.asarray(values, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.enrol_ids)

    def entries(self) -> list[tuple[str, str, float]]:
        return [
            (e, t, float(s))
            for e, t, s in zip(self.enrol_ids, self.test_ids, self.scores)
        ]

    def keys(self) -> list[tuple[str, str]]:
        return list(zip(self.enrol_ids, self.test_ids))

    def with_scores(self, scores: np.ndarray) -> ScoreSet:
        return ScoreSet(enrol_ids=self.enrol_ids, test_ids=self.test_ids, scores=scores)
