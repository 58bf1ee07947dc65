"""
i-vector extraction from Baum-Welch statistics.

Given a total-variability model (m, T, Sigma), the i-vector is the MAP
posterior mean of w in mu = m + T w:

    w = (I + T' Sigma^-1 N T)^-1 T' Sigma^-1 f~

with N the occupancies expanded per feature dimension and f~ the
first-order statistics centred on the UBM means.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.linalg import cho_factor, cho_solve

from src.core.dependencies import map_ordered
from src.core.validator import ArrayValidator
from src.schemas.exceptions import DimensionMismatchError, InvalidInputError
from src.tools.containers import read_matrices, write_matrices

# Relative singular-value tolerance for the full-column-rank check on T
RANK_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class TVModel:
    m: np.ndarray       # (C*F,)
    T: np.ndarray       # (C*F, R_w)
    sigma: np.ndarray   # (C, F) diagonal covariances

    def __post_init__(self):
        sigma = ArrayValidator.finite(self.sigma, "sigma")
        if sigma.ndim != 2 or min(sigma.shape) == 0:
            raise DimensionMismatchError(f"sigma must be (C, F), got shape {sigma.shape}")
        if np.any(sigma <= 0):
            raise InvalidInputError("sigma entries must be strictly positive")
        n_rows = sigma.size

        m = ArrayValidator.vector(self.m, n_rows, "m")
        T = ArrayValidator.finite(self.T, "T")
        if T.ndim != 2 or T.shape[0] != n_rows or T.shape[1] == 0:
            raise DimensionMismatchError(
                f"T has shape {T.shape}, expected ({n_rows}, R_w) with R_w > 0"
            )
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "sigma", sigma)

    @property
    def n_components(self) -> int:
        return self.sigma.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.sigma.shape[1]

    @property
    def rank(self) -> int:
        return self.T.shape[1]

    def check_rank(self) -> None:
        """Reject a T without full column rank."""
        singular = np.linalg.svd(self.T, compute_uv=False)
        numeric_rank = int(np.sum(singular > RANK_RTOL * singular.max())) if singular.max() > 0 else 0
        if numeric_rank < self.rank:
            raise InvalidInputError(
                f"T has numerical rank {numeric_rank}, expected full column rank {self.rank}"
            )


@dataclass(frozen=True, eq=False)
class BaumWelchStats:
    n: np.ndarray   # (C,) zeroth order
    f: np.ndarray   # (C, F) first order

    def __post_init__(self):
        n = ArrayValidator.finite(self.n, "zeroth-order statistics")
        f = ArrayValidator.finite(self.f, "first-order statistics")
        if n.ndim != 1 or f.ndim != 2 or f.shape[0] != n.shape[0]:
            raise DimensionMismatchError(
                f"statistics shapes disagree: n {n.shape}, f {f.shape}"
            )
        if np.any(n < 0):
            raise InvalidInputError("occupancies must be nonnegative")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "f", f)

    @classmethod
    def zeros(cls, n_components: int, feat_dim: int) -> BaumWelchStats:
        return cls(n=np.zeros(n_components), f=np.zeros((n_components, feat_dim)))

    def __add__(self, other: BaumWelchStats) -> BaumWelchStats:
        if self.f.shape != other.f.shape:
            raise DimensionMismatchError(
                f"cannot add statistics of shapes {self.f.shape} and {other.f.shape}"
            )
        return BaumWelchStats(n=self.n + other.n, f=self.f + other.f)


def extract_ivector(stats: BaumWelchStats, tv: TVModel) -> np.ndarray:
    if stats.f.shape != tv.sigma.shape:
        raise DimensionMismatchError(
            f"statistics for {stats.f.shape} (C, F) but model expects {tv.sigma.shape}"
        )
    n_feat = tv.feat_dim

    centred = (stats.f - stats.n[:, None] * tv.m.reshape(tv.sigma.shape)).reshape(-1)
    precision = 1.0 / tv.sigma.reshape(-1)
    occupancy = np.repeat(stats.n, n_feat)

    t_prec = tv.T.T * precision                        # T' Sigma^-1
    posterior_prec = np.eye(tv.rank) + (t_prec * occupancy) @ tv.T
    linear = t_prec @ centred

    w = cho_solve(cho_factor(posterior_prec, lower=True), linear)
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("i-vector extraction produced non-finite values")
    return w


def extract_ivectors(
    stats_list: Sequence[BaumWelchStats],
    tv: TVModel,
    workers: int = 1,
) -> np.ndarray:
    """Extract one i-vector per utterance; rows follow the input order."""
    if not stats_list:
        return np.zeros((0, tv.rank))
    logger.info(f"Extracting {len(stats_list)} i-vectors (R_w={tv.rank}, workers={workers})")
    return np.vstack(map_ordered(lambda s: extract_ivector(s, tv), stats_list, workers))


def write_tv_model(tv: TVModel, destination: Path | str) -> None:
    write_matrices(destination, {"m": tv.m, "T": tv.T, "sigma": tv.sigma})


def read_tv_model(source: Path | str) -> TVModel:
    sections = read_matrices(source, required=("m", "T", "sigma"))
    tv = TVModel(m=sections["m"], T=sections["T"], sigma=sections["sigma"])
    tv.check_rank()
    logger.info(
        f"Loaded TV model: C={tv.n_components}, F={tv.feat_dim}, R_w={tv.rank}"
    )
    return tv
