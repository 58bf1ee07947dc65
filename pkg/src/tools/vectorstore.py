"""
File formats for i-vectors, trial lists, score files and enrollment maps.

IVEC container (integers u32 little-endian):

    magic "IVEC" | version=1 | dim | count |
    count x dim float32 little-endian, row-major |
    manifest byte length | UTF-8 JSON manifest

The manifest is an array of {utterance_id, speaker_id, duration_sec,
channel_tag?} in row order.
"""
import json
import struct
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from src.schemas.exceptions import (
    EnrolMapError,
    InvalidInputError,
    IVectorFormatError,
    TrialParseError,
    TruncatedPayloadError,
)
from src.schemas.vectors import IVectorSet, ScoreSet, Trial, TrialLabel, UtteranceMeta
from src.tools.utils import atomic_write_text, atomic_write_bytes, read_bytes, read_text

MAGIC = b"IVEC"
VERSION = 1
_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")

# ──────────────────────────────────────────────
# IVEC container
# ──────────────────────────────────────────────

def encode_ivectors(ivectors: IVectorSet) -> bytes:
    manifest = json.dumps(
        [meta.model_dump(exclude_none=True) for meta in ivectors.metas],
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    payload = np.ascontiguousarray(ivectors.values, dtype="<f4").tobytes()
    return b"".join([
        _HEADER.pack(MAGIC, VERSION, ivectors.dim, len(ivectors)),
        payload,
        _U32.pack(len(manifest)),
        manifest,
    ])


def decode_ivectors(data: bytes, source: str = "<bytes>") -> IVectorSet:
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(f"{source}: file shorter than the IVEC header")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise IVectorFormatError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise IVectorFormatError(f"{source}: unsupported IVEC version {version}")
    if dim == 0:
        raise IVectorFormatError(f"{source}: declared dim is 0")

    offset = _HEADER.size
    payload_len = count * dim * 4
    if len(data) < offset + payload_len:
        raise TruncatedPayloadError(
            f"{source}: payload has {len(data) - offset} bytes, "
            f"header declares {count}x{dim} float32 ({payload_len} bytes)"
        )
    values = np.frombuffer(data, dtype="<f4", count=count * dim, offset=offset)
    values = values.reshape(count, dim).astype(np.float32)
    offset += payload_len

    if len(data) < offset + _U32.size:
        raise TruncatedPayloadError(f"{source}: missing manifest length")
    (manifest_len,) = _U32.unpack_from(data, offset)
    offset += _U32.size
    if len(data) < offset + manifest_len:
        raise TruncatedPayloadError(f"{source}: manifest truncated")
    if len(data) != offset + manifest_len:
        raise IVectorFormatError(
            f"{source}: {len(data) - offset - manifest_len} bytes beyond the declared "
            f"{count}x{dim} payload and manifest"
        )

    if not np.all(np.isfinite(values)):
        bad_row = int(np.argwhere(~np.isfinite(values))[0][0])
        raise IVectorFormatError(f"{source}: non-finite value in row {bad_row}")

    try:
        entries = json.loads(data[offset:offset + manifest_len].decode("utf-8"))
        metas = tuple(UtteranceMeta.model_validate(entry) for entry in entries)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as e:
        raise IVectorFormatError(f"{source}: unreadable manifest: {e}")
    except ValidationError as e:
        raise IVectorFormatError(f"{source}: invalid manifest entry: {e.errors()[0]['msg']}")
    if len(metas) != count:
        raise IVectorFormatError(
            f"{source}: manifest lists {len(metas)} utterances, header declares {count}"
        )

    try:
        return IVectorSet(dim=dim, values=values, metas=metas)
    except InvalidInputError as e:
        raise IVectorFormatError(f"{source}: {e.message}")


def write_ivectors(ivectors: IVectorSet, destination: Path | str) -> None:
    atomic_write_bytes(destination, encode_ivectors(ivectors))
    logger.debug(f"Wrote {len(ivectors)} i-vectors (dim={ivectors.dim}) to {destination}")


def read_ivectors(source: Path | str) -> IVectorSet:
    ivectors = decode_ivectors(read_bytes(source, "i-vector file"), source=str(source))
    logger.debug(f"Read {len(ivectors)} i-vectors (dim={ivectors.dim}) from {source}")
    return ivectors

# ──────────────────────────────────────────────
# Trial lists
# ──────────────────────────────────────────────

def parse_trials(text: str) -> list[Trial]:
    trials = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise TrialParseError(
                f"expected 'enrol_id test_id [target|nontarget]', got '{line.strip()}'",
                line_number,
            )
        if len(tokens) > 3:
            raise TrialParseError(f"too many fields ({len(tokens)})", line_number)
        label = TrialLabel.UNKNOWN
        if len(tokens) == 3:
            try:
                label = TrialLabel(tokens[2].lower())
            except ValueError:
                raise TrialParseError(f"unknown label '{tokens[2]}'", line_number)
        trials.append(Trial(enrol_id=tokens[0], test_id=tokens[1], label=label))
    return trials


def read_trials(source: Path | str) -> list[Trial]:
    return parse_trials(read_text(source, "trial list"))


def format_trials(trials: list[Trial]) -> str:
    lines = []
    for trial in trials:
        if trial.label == TrialLabel.UNKNOWN:
            lines.append(f"{trial.enrol_id} {trial.test_id}")
        else:
            lines.append(f"{trial.enrol_id} {trial.test_id} {trial.label.value}")
    return "".join(f"{line}\n" for line in lines)


def write_trials(trials: list[Trial], destination: Path | str) -> None:
    atomic_write_text(destination, format_trials(trials))

# ──────────────────────────────────────────────
# Score files
# ──────────────────────────────────────────────

def format_scores(scores: ScoreSet) -> str:
    return "".join(
        f"{enrol} {test} {score:.6f}\n" for enrol, test, score in scores.entries()
    )


def write_scores(scores: ScoreSet, destination: Path | str) -> None:
    atomic_write_text(destination, format_scores(scores))


def read_scores(source: Path | str) -> ScoreSet:
    entries = []
    for line_number, line in enumerate(read_text(source, "score file").splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise TrialParseError("expected 'enrol_id test_id score'", line_number)
        try:
            entries.append((tokens[0], tokens[1], float(tokens[2])))
        except ValueError:
            raise TrialParseError(f"score '{tokens[2]}' is not a number", line_number)
    try:
        return ScoreSet.from_entries(entries)
    except InvalidInputError as e:
        raise IVectorFormatError(f"{source}: {e.message}")

# ──────────────────────────────────────────────
# Enrollment maps (enrol_id -> piece utterance ids)
# ──────────────────────────────────────────────

def read_enrol_map(source: Path | str) -> dict[str, list[str]]:
    enrol_map: dict[str, list[str]] = {}
    for line_number, line in enumerate(read_text(source, "enrollment map").splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) < 2:
            raise EnrolMapError("expected 'enrol_id utt_id [utt_id ...]'", line_number)
        if tokens[0] in enrol_map:
            raise EnrolMapError(f"enrol_id '{tokens[0]}' listed twice", line_number)
        enrol_map[tokens[0]] = tokens[1:]
    return enrol_map


def write_enrol_map(enrol_map: dict[str, list[str]], destination: Path | str) -> None:
    atomic_write_text(
        destination,
        "".join(f"{enrol} {' '.join(utts)}\n" for enrol, utts in enrol_map.items()),
    )
