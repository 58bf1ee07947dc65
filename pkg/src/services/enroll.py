"""
Utterance-partitioning enrollment.

A long enrollment recording is cut into `parts` contiguous pieces, one
i-vector is extracted per piece and the piece i-vectors are averaged into
the enrolled vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.core.validator import ArrayValidator
from src.schemas.exceptions import (
    DimensionMismatchError,
    InsufficientDataError,
    InvalidInputError,
    UnknownIdError,
)
from src.schemas.vectors import IVectorSet, UtteranceMeta
from src.services.tv_space import BaumWelchStats, TVModel, extract_ivector


class PartitionSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    parts: int = Field(1, ge=1, description="Number of contiguous pieces")
    discard_head_sec: float = Field(0.0, ge=0.0, description="Leading speech dropped before splitting")


@dataclass(frozen=True, eq=False)
class FrameStats:
    """Per-frame statistic contributions: occupancies (T, C) and first-order terms (T, C, F)."""
    gamma: np.ndarray
    first: np.ndarray

    def __post_init__(self):
        gamma = ArrayValidator.finite(self.gamma, "frame occupancies")
        first = ArrayValidator.finite(self.first, "frame first-order statistics")
        if gamma.ndim != 2 or first.ndim != 3 or first.shape[:2] != gamma.shape:
            raise DimensionMismatchError(
                f"frame statistics disagree: gamma {gamma.shape}, first {first.shape}"
            )
        if np.any(gamma < 0):
            raise InvalidInputError("frame occupancies must be nonnegative")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "first", first)

    def __len__(self) -> int:
        return self.gamma.shape[0]

    def slice(self, start: int, stop: int) -> FrameStats:
        return FrameStats(gamma=self.gamma[start:stop], first=self.first[start:stop])

    def total(self) -> BaumWelchStats:
        return BaumWelchStats(n=self.gamma.sum(axis=0), f=self.first.sum(axis=0))


def chunk_lengths(n_frames: int, parts: int) -> list[int]:
    """Equal chunk sizes; remainder frames go one each to the earliest chunks."""
    base, remainder = divmod(n_frames, parts)
    return [base + 1 if i < remainder else base for i in range(parts)]


def split_stats(frame_stats: FrameStats, parts: int) -> list[BaumWelchStats]:
    parts = ArrayValidator.positive_int(parts, "parts")
    if len(frame_stats) < parts:
        raise InsufficientDataError(
            f"cannot split {len(frame_stats)} frames into {parts} parts"
        )
    chunks = []
    start = 0
    for length in chunk_lengths(len(frame_stats), parts):
        chunks.append(frame_stats.slice(start, start + length).total())
        start += length
    return chunks


def apply_partition(
    frame_stats: FrameStats,
    spec: PartitionSpec,
    frames_per_sec: float = 100.0,
) -> list[BaumWelchStats]:
    """Drop `discard_head_sec` of leading frames, then split into `spec.parts` pieces."""
    if frames_per_sec <= 0:
        raise InvalidInputError(f"frames_per_sec must be positive, got {frames_per_sec}")
    head = int(round(spec.discard_head_sec * frames_per_sec))
    if head >= len(frame_stats) and head > 0:
        raise InsufficientDataError(
            f"discarding {spec.discard_head_sec}s ({head} frames) leaves nothing of a "
            f"{len(frame_stats)}-frame utterance"
        )
    return split_stats(frame_stats.slice(head, len(frame_stats)), spec.parts)


def average_ivectors(vs: Sequence[np.ndarray]) -> np.ndarray:
    if len(vs) == 0:
        raise InsufficientDataError("cannot average an empty list of i-vectors")
    dims = {np.shape(v) for v in vs}
    if len(dims) != 1 or len(next(iter(dims))) != 1:
        raise DimensionMismatchError(f"i-vectors to average have shapes {sorted(dims)}")
    stacked = ArrayValidator.finite(np.vstack(vs), "i-vectors to average")
    return stacked.mean(axis=0)


def enroll_from_stats(
    frame_stats: FrameStats,
    tv: TVModel,
    spec: PartitionSpec,
    frames_per_sec: float = 100.0,
) -> np.ndarray:
    """Split, extract one i-vector per piece and average them."""
    pieces = apply_partition(frame_stats, spec, frames_per_sec)
    return average_ivectors([extract_ivector(stats, tv) for stats in pieces])


def enroll_from_pieces(
    pieces: IVectorSet,
    enrol_map: Mapping[str, Sequence[str]],
    partitions: int,
) -> IVectorSet:
    """
    One enrolled vector per enrol id: the average of its first `partitions`
    piece i-vectors. Output metadata takes the speaker of the pieces and the
    summed duration of the pieces used.
    """
    partitions = ArrayValidator.positive_int(partitions, "partitions")
    index = pieces.index()
    matrix = pieces.as_matrix()

    rows, metas = [], []
    for enrol_id, utt_ids in enrol_map.items():
        if len(utt_ids) < partitions:
            raise InsufficientDataError(
                f"enrol id '{enrol_id}' lists {len(utt_ids)} piece(s), {partitions} required"
            )
        used = list(utt_ids[:partitions])
        missing = [utt for utt in used if utt not in index]
        if missing:
            raise UnknownIdError(f"unknown piece id '{missing[0]}' for enrol id '{enrol_id}'")

        speakers = {pieces.metas[index[utt]].speaker_id for utt in used}
        if len(speakers) != 1:
            raise InvalidInputError(f"pieces of enrol id '{enrol_id}' mix speakers {sorted(speakers)}")

        rows.append(average_ivectors([matrix[index[utt]] for utt in used]))
        metas.append(
            UtteranceMeta(
                utterance_id=enrol_id,
                speaker_id=speakers.pop(),
                duration_sec=sum(pieces.metas[index[utt]].duration_sec for utt in used),
                channel_tag=pieces.metas[index[used[0]]].channel_tag,
            )
        )

    logger.info(f"Enrolled {len(rows)} id(s) from {partitions} piece(s) each")
    if not rows:
        return IVectorSet.empty(pieces.dim)
    return IVectorSet(dim=pieces.dim, values=np.vstack(rows), metas=tuple(metas))
