import numpy as np
import pytest

from src.schemas.vectors import IVectorSet, UtteranceMeta


def make_set(values, speakers=None, durations=None, sessions=None, prefix="u") -> IVectorSet:
    """IVectorSet from a matrix, one utterance per row."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = values.shape[0]
    speakers = speakers if speakers is not None else [f"s{i}" for i in range(n)]
    durations = durations if durations is not None else [10.0] * n
    metas = tuple(
        UtteranceMeta(
            utterance_id=f"{prefix}{i}",
            speaker_id=speakers[i],
            duration_sec=durations[i],
            channel_tag=None if sessions is None else sessions[i],
        )
        for i in range(n)
    )
    return IVectorSet(dim=values.shape[1], values=values, metas=metas)


def sample_plda_data(rng, n_speakers, sessions, u1, within_cov, mean=None):
    """Vectors drawn from mean + U1 x + eps, speaker-major, with labels."""
    k = u1.shape[0]
    mean = np.zeros(k) if mean is None else mean
    chol = np.linalg.cholesky(within_cov)
    rows, labels = [], []
    for s in range(n_speakers):
        x = rng.standard_normal(u1.shape[1])
        for _ in range(sessions):
            rows.append(mean + u1 @ x + chol @ rng.standard_normal(k))
            labels.append(f"spk{s}")
    return np.array(rows), labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
