"""Small shared linear algebra helpers."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import SingularDesign

RCOND = 1e-10


class OlsFit(NamedTuple):
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    rank: int
    rss: float


def ols(X: np.ndarray, y: np.ndarray, require_full_rank: bool = True) -> OlsFit:
    """Least squares of y on the columns of X.

    Rank is judged against singular values below RCOND times the largest;
    a deficient design raises SingularDesign unless require_full_rank is
    False, in which case the minimum-norm solution is returned.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=RCOND)
    if require_full_rank and rank < X.shape[1]:
        raise SingularDesign(
            f"design is rank {rank} with {X.shape[1]} columns"
        )
    fitted = X @ beta
    resid = y - fitted
    return OlsFit(beta, fitted, resid, int(rank), float(np.sum(resid * resid)))
