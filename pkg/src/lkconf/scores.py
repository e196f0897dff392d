"""Nonconformity scores with interval-shaped sublevel sets.

Every score here has the form ``s(x, y) = max(lo(x) - y, y - hi(x), 0)`` for a
fitted band ``lo <= hi``, so ``{y : s(x, y) <= t} = [lo(x) - t, hi(x) + t]``.
The absolute residual score is the special case ``lo = hi = mu_hat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dgp import LabeledDataset


class ScoreError(ValueError):
    pass


class RankDeficientError(ScoreError):
    def __init__(self, columns):
        super().__init__(f"design matrix is rank deficient; dependent columns: {list(columns)}")
        self.columns = list(columns)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __contains__(self, y) -> bool:
        return self.lower <= y <= self.upper


class ScoreModel:
    """Fitted score; subclasses provide ``band``."""

    kind: str = ""
    dim: int = 0

    def band(self, x: np.ndarray):
        raise NotImplementedError

    def _rows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.dim == 1 else x.reshape(1, -1)
        if x.shape[1] != self.dim:
            raise ScoreError(f"expected {self.dim} features, got {x.shape[1]}")
        return x

    def scores(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Vectorized score over rows of ``x`` and entries of ``y``."""
        lo, hi = self.band(self._rows(x))
        y = np.asarray(y, dtype=float)
        return np.maximum(np.maximum(lo - y, y - hi), 0.0)

    def intervals(self, x: np.ndarray, t: float):
        """Lower and upper endpoints of the prediction sets at rows of ``x``."""
        lo, hi = self.band(self._rows(x))
        if math.isinf(t):
            return np.full_like(lo, -np.inf), np.full_like(hi, np.inf)
        return lo - t, hi + t


def score(model: ScoreModel, x, y: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != model.dim:
        raise ScoreError(f"expected {model.dim} features, got {x.shape[0]}")
    return float(model.scores(x.reshape(1, -1), np.array([y]))[0])


def set_interval(model: ScoreModel, x, t: float) -> Interval:
    if t < 0:
        raise ScoreError("threshold must be nonnegative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != model.dim:
        raise ScoreError(f"expected {model.dim} features, got {x.shape[0]}")
    lo, hi = model.intervals(x.reshape(1, -1), t)
    return Interval(float(lo[0]), float(hi[0]))


class LinearResidualModel(ScoreModel):
    kind = "linear-residual"

    def __init__(self, intercept: float, coef: np.ndarray):
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.dim = self.coef.shape[0]

    def predict(self, x):
        return self.intercept + self._rows(x) @ self.coef

    def band(self, x):
        mu = self.intercept + x @ self.coef
        return mu, mu


def fit_linear_residual(train: LabeledDataset) -> LinearResidualModel:
    """Ordinary least squares with an intercept; score ``|y - mu_hat(x)|``."""
    x, y = train.features, train.outcomes
    n, p = x.shape
    if n < p + 1:
        raise ScoreError(f"need at least {p + 1} rows for {p} features, got {n}")
    design = np.column_stack([np.ones(n), x])
    rank = np.linalg.matrix_rank(design)
    if rank < p + 1:
        # greedily find columns that add nothing to the span of earlier ones
        dependent, kept = [], []
        for j in range(p + 1):
            if np.linalg.matrix_rank(design[:, kept + [j]]) == len(kept) + 1:
                kept.append(j)
            else:
                dependent.append("intercept" if j == 0 else f"x{j - 1}")
        raise RankDeficientError(dependent)
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearResidualModel(beta[0], beta[1:])


def _quantile_index(q: float, k: int) -> int:
    # 0-based position of the ceil(q k)-th order statistic
    return min(k, max(1, math.ceil(q * k - 1e-9))) - 1


class KNNQuantileModel(ScoreModel):
    kind = "knn-quantile"

    def __init__(self, train_x, train_y, alpha: float, k_neighbors: int, chunk: int = 2048):
        self.train_x = np.asarray(train_x, dtype=float)
        self.train_y = np.asarray(train_y, dtype=float)
        self.alpha = float(alpha)
        self.k_neighbors = int(k_neighbors)
        self.dim = self.train_x.shape[1]
        self.chunk = chunk
        self._lo_idx = _quantile_index(alpha / 2, self.k_neighbors)
        self._hi_idx = _quantile_index(1 - alpha / 2, self.k_neighbors)

    def neighbors(self, x: np.ndarray) -> np.ndarray:
        """Indices of the k nearest training rows; ties go to the lower index."""
        k = self.k_neighbors
        out = np.empty((x.shape[0], k), dtype=np.intp)
        sq = np.sum(self.train_x**2, axis=1)
        for a in range(0, x.shape[0], self.chunk):
            xb = x[a:a + self.chunk]
            if self.dim == 1:
                d = np.abs(xb - self.train_x[:, 0])
            else:
                d = np.sum(xb**2, axis=1)[:, None] - 2.0 * xb @ self.train_x.T + sq
            out[a:a + self.chunk] = np.argsort(d, axis=1, kind="stable")[:, :k]
        return out

    def band(self, x):
        ys = np.sort(self.train_y[self.neighbors(x)], axis=1)
        return ys[:, self._lo_idx], ys[:, self._hi_idx]


def fit_knn_quantile(train: LabeledDataset, alpha: float, k_neighbors: int = 50) -> KNNQuantileModel:
    """Empirical ``alpha/2`` and ``1 - alpha/2`` quantiles over k nearest neighbours."""
    if not 0 < alpha < 1:
        raise ScoreError("alpha must lie in (0, 1)")
    if not 1 <= k_neighbors <= len(train):
        raise ScoreError(f"k_neighbors={k_neighbors} must be in [1, {len(train)}]")
    return KNNQuantileModel(train.features, train.outcomes, alpha, k_neighbors)
