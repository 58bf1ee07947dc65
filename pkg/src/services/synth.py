"""
Seeded synthetic i-vector corpora.

Every vector is speaker + session + utterance variation:

    w = mu_s + eps_se + delta,   mu_s ~ N(0, speaker_var I),
                                 eps_se ~ N(0, session_var I),
                                 delta ~ N(0, (utterance_var_per_sec / tau) P)

with tau the utterance duration and P a diagonal utterance-noise profile
(identity unless `utterance_anisotropy` > 0). Draws are keyed on
(seed, source, speaker, session, ...) rather than taken from one shared
stream, so any subset of speakers can be regenerated on its own and the
speaker and session terms are shared between every role drawn from the
same config.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.core.dependencies import create_rng
from src.schemas.exceptions import InvalidInputError
from src.schemas.vectors import IVectorSet, Trial, TrialLabel, UtteranceMeta
from src.services.suv import UtterancePair, pairs_from_sets

# Key prefixes separating the three variation sources
_SPEAKER, _SESSION, _UTTERANCE = 0, 1, 2

# Independent utterance draws per role; the same (speaker, session) gets
# different delta terms for its enrollment, test, pair and piece utterances
ROLE_STREAMS = {
    "utt": 0,
    "enrol": 1,
    "test": 2,
    "full": 3,
    "short": 4,
    "piece": 5,
    "cohort": 6,
}

_CONDITION = re.compile(r"^(\d+(?:\.\d+)?)sec(?:\s*\((\d+)\))?-(\d+(?:\.\d+)?)sec$")


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0)
    dim: int = Field(50, gt=0)
    n_speakers: int = Field(100, gt=0)
    sessions_per_speaker: int = Field(4, gt=0)
    speaker_var: float = Field(1.0, gt=0.0)
    session_var: float = Field(0.5, gt=0.0)
    utterance_var_per_sec: float = Field(15.0, gt=0.0, description="Utterance variance is this / duration")
    durations_sec: list[float] = Field(default_factory=lambda: [10.0])
    utterance_anisotropy: float = Field(0.0, ge=0.0, description="0 gives isotropic utterance noise")
    speaker_offset: int = Field(0, ge=0, description="Index of the first speaker, for disjoint populations")

    @field_validator("durations_sec")
    @classmethod
    def _positive_durations(cls, value: list[float]) -> list[float]:
        if not value:
            raise ValueError("durations_sec must not be empty")
        if any(not np.isfinite(tau) or tau <= 0 for tau in value):
            raise ValueError("durations must be positive and finite")
        return value


def utterance_profile(dim: int, anisotropy: float) -> np.ndarray:
    """Per-dimension utterance-noise weights exp(a t), t evenly spaced in [-1, 1], mean 1."""
    if anisotropy == 0.0 or dim == 1:
        return np.ones(dim)
    profile = np.exp(anisotropy * np.linspace(-1.0, 1.0, dim))
    return profile / profile.mean()


def speaker_label(index: int) -> str:
    return f"spk{index:06d}"


def session_tag(session: int) -> str:
    return f"ses{session:02d}"


def _stream(role: str) -> int:
    if role not in ROLE_STREAMS:
        raise InvalidInputError(f"unknown synthetic role '{role}'")
    return ROLE_STREAMS[role]


@dataclass(eq=False)
class _Generator:
    cfg: SynthConfig
    profile: np.ndarray = field(init=False)

    def __post_init__(self):
        self.profile = utterance_profile(self.cfg.dim, self.cfg.utterance_anisotropy)

    def speaker(self, g: int) -> np.ndarray:
        rng = create_rng(self.cfg.seed, _SPEAKER, g)
        return rng.standard_normal(self.cfg.dim) * np.sqrt(self.cfg.speaker_var)

    def session(self, g: int, e: int) -> np.ndarray:
        rng = create_rng(self.cfg.seed, _SESSION, g, e)
        return rng.standard_normal(self.cfg.dim) * np.sqrt(self.cfg.session_var)

    def utterance(self, g: int, e: int, stream: int, j: int, tau: float) -> np.ndarray:
        rng = create_rng(self.cfg.seed, _UTTERANCE, g, e, stream, j)
        scale = np.sqrt(self.cfg.utterance_var_per_sec / tau * self.profile)
        return rng.standard_normal(self.cfg.dim) * scale

    def sessions(self):
        """(global speaker index, session index, mu_s + eps) in speaker-major order."""
        for s in range(self.cfg.n_speakers):
            g = self.cfg.speaker_offset + s
            mu = self.speaker(g)
            for e in range(self.cfg.sessions_per_speaker):
                yield g, e, mu + self.session(g, e)


def _build_set(dim: int, rows: list[np.ndarray], metas: list[UtteranceMeta]) -> IVectorSet:
    if not rows:
        return IVectorSet.empty(dim)
    return IVectorSet(dim=dim, values=np.vstack(rows), metas=tuple(metas))


def generate_corpus(cfg: SynthConfig, role: str = "utt") -> IVectorSet:
    """
    One utterance per (speaker, session, duration), in that nesting order.

    Utterance ids read "<speaker>_<session>_<role><duration>s".
    """
    stream = _stream(role)
    gen = _Generator(cfg)
    rows, metas = [], []
    for g, e, base in gen.sessions():
        spk = speaker_label(g)
        for j, tau in enumerate(cfg.durations_sec):
            rows.append(base + gen.utterance(g, e, stream, j, tau))
            metas.append(
                UtteranceMeta(
                    utterance_id=f"{spk}_{session_tag(e)}_{role}{tau:g}s",
                    speaker_id=spk,
                    duration_sec=tau,
                    channel_tag=session_tag(e),
                )
            )
    logger.debug(
        f"Generated {len(rows)} '{role}' vectors for speakers "
        f"{cfg.speaker_offset}..{cfg.speaker_offset + cfg.n_speakers - 1}"
    )
    return _build_set(cfg.dim, rows, metas)


def make_full_short_sets(cfg: SynthConfig, full_sec: float, short_sec: float) -> tuple[IVectorSet, IVectorSet]:
    """Row-aligned full- and short-duration vectors sharing speaker and session terms."""
    if not (0 < short_sec < full_sec):
        raise InvalidInputError(
            f"need 0 < short_sec < full_sec, got short={short_sec}, full={full_sec}"
        )
    full = generate_corpus(cfg.model_copy(update={"durations_sec": [full_sec]}), role="full")
    short = generate_corpus(cfg.model_copy(update={"durations_sec": [short_sec]}), role="short")
    return full, short


def make_full_short_pairs(cfg: SynthConfig, full_sec: float, short_sec: float) -> list[UtterancePair]:
    return pairs_from_sets(*make_full_short_sets(cfg, full_sec, short_sec))


def make_partition_pieces(
    cfg: SynthConfig,
    piece_sec: float,
    parts: int,
) -> tuple[IVectorSet, dict[str, list[str]]]:
    """
    `parts` piece vectors of `piece_sec` each per (speaker, session) plus the
    enrollment map grouping them under one enrol id.
    """
    if parts < 1:
        raise InvalidInputError(f"parts must be positive, got {parts}")
    if not (np.isfinite(piece_sec) and piece_sec > 0):
        raise InvalidInputError(f"piece_sec must be positive, got {piece_sec}")

    stream = _stream("piece")
    gen = _Generator(cfg)
    rows, metas = [], []
    enrol_map: dict[str, list[str]] = {}
    for g, e, base in gen.sessions():
        spk = speaker_label(g)
        prefix = f"{spk}_{session_tag(e)}"
        enrol_id = f"{prefix}_enrol{piece_sec:g}sx{parts}"
        enrol_map[enrol_id] = []
        for j in range(parts):
            utt = f"{prefix}_piece{piece_sec:g}s_p{j}"
            rows.append(base + gen.utterance(g, e, stream, j, piece_sec))
            metas.append(
                UtteranceMeta(
                    utterance_id=utt,
                    speaker_id=spk,
                    duration_sec=piece_sec,
                    channel_tag=session_tag(e),
                )
            )
            enrol_map[enrol_id].append(utt)
    return _build_set(cfg.dim, rows, metas), enrol_map

# ──────────────────────────────────────────────
# Evaluation conditions and trial lists
# ──────────────────────────────────────────────

class Condition(BaseModel):
    """Enrollment/test durations, e.g. "10sec(2)-10sec" = two 10 s pieces against 10 s tests."""
    model_config = ConfigDict(frozen=True)

    enrol_sec: float = Field(..., gt=0.0)
    parts: int = Field(1, ge=1)
    test_sec: float = Field(..., gt=0.0)

    @property
    def name(self) -> str:
        parts = f"({self.parts})" if self.parts > 1 else ""
        return f"{self.enrol_sec:g}sec{parts}-{self.test_sec:g}sec"

    @property
    def partitioned(self) -> bool:
        return self.parts > 1


def parse_condition(text: str) -> Condition:
    match = _CONDITION.match(text.strip())
    if match is None:
        raise InvalidInputError(
            f"cannot parse condition '{text}'; expected e.g. '10sec-10sec' or '10sec(2)-10sec'"
        )
    enrol, parts, test = match.groups()
    return Condition(enrol_sec=float(enrol), parts=int(parts) if parts else 1, test_sec=float(test))


def trial_masks(enrol: IVectorSet, test: IVectorSet) -> tuple[np.ndarray, np.ndarray]:
    """
    (valid, target) boolean matrices of shape (len(enrol), len(test)). Pairs
    from the same speaker and session are not valid trials.
    """
    enrol_spk = np.array(enrol.speaker_ids, dtype=object)
    test_spk = np.array(test.speaker_ids, dtype=object)
    enrol_ses = np.array([m.channel_tag for m in enrol.metas], dtype=object)
    test_ses = np.array([m.channel_tag for m in test.metas], dtype=object)

    same_speaker = enrol_spk[:, None] == test_spk[None, :]
    same_session = same_speaker & (enrol_ses[:, None] == test_ses[None, :])
    return ~same_session, same_speaker & ~same_session


def build_trials(enrol: IVectorSet, test: IVectorSet) -> list[Trial]:
    """All enrol x test pairs except same (speaker, session), enrol-major."""
    valid, target = trial_masks(enrol, test)
    trials = []
    for i, enrol_id in enumerate(enrol.utterance_ids):
        for j, test_id in enumerate(test.utterance_ids):
            if valid[i, j]:
                label = TrialLabel.TARGET if target[i, j] else TrialLabel.NONTARGET
                trials.append(Trial(enrol_id=enrol_id, test_id=test_id, label=label))
    return trials
