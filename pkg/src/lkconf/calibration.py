"""Threshold selection rules.

Every rule here picks the smallest ``t >= 0`` for which a ratio of the form

    (sum_terms w * 1{level > t} + extra) / denominator  <=  alpha^k

holds, where each term is one product of normalized weights over a group of
calibration points and ``level`` is the smallest score in that group (the
product of indicators ``1{s_j > t}`` is 1 exactly when ``t < min_j s_j``).
The left side is piecewise constant and non-increasing in ``t`` with jumps at
score values only, so the minimum is attained on ``{0} U {scores}`` and can be
found by binary search.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .dgp import LabeledDataset
from .functions import (
    NormalizedFunction,
    WeightFunction,
    assigned_weights,
    gamma_values,
)

INF = math.inf


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    weight_sum: float
    ratio_at_threshold: float
    variant: str
    used_pair_count: int


@dataclass(frozen=True, eq=False)
class PairedCalibration:
    """Assignment of calibration rows to sampled functions.

    ``index[i]`` holds the ``r`` calibration rows given to function ``i`` and
    ``weights[i, j]`` the normalized value ``f_i(X_index[i,j]) / gamma(f_i)``.
    ``extra_gamma`` is ``gamma`` of the additional independent draw ``f``,
    and ``k`` the exponent used in all normalizers.
    """

    index: np.ndarray
    weights: np.ndarray
    gammas: np.ndarray
    extra_gamma: float
    bound: float = 1.0
    k: int = 2
    functions: Optional[list] = field(default=None, repr=False)
    extra: Optional[NormalizedFunction] = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.index.shape[0]

    @property
    def r(self) -> int:
        return self.index.shape[1]


def pair_calibration(cal: LabeledDataset, functions: Sequence[WeightFunction], extra_f: WeightFunction,
                     r: int, train_features: np.ndarray, k: int, seed) -> PairedCalibration:
    """Shuffle calibration rows once and hand consecutive blocks of ``r`` to the functions."""
    if r < 2:
        raise CalibrationError("group size r must be at least 2")
    n = len(cal)
    m = n // r
    if len(functions) != m:
        raise CalibrationError(f"expected {m} = floor({n}/{r}) functions, got {len(functions)}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(n)
    index = perm[: m * r].reshape(m, r)
    gammas = gamma_values(list(functions) + [extra_f], train_features, k)
    raw = assigned_weights(functions, cal.features, index) if m else np.empty((0, r))
    bounds = {f.bound for f in functions} | {extra_f.bound}
    return PairedCalibration(
        index=index,
        weights=raw / gammas[:m, None],
        gammas=gammas[:m],
        extra_gamma=float(gammas[m]),
        bound=max(bounds),
        k=k,
        functions=list(functions),
        extra=NormalizedFunction(extra_f, float(gammas[m])),
    )


# ---------------------------------------------------------------------------
# Search


def candidate_grid(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    return np.unique(np.concatenate([[0.0], s[s >= 0]]))


def min_threshold(condition: Callable[[float], bool], candidates) -> float:
    """Smallest value of ``{0} U candidates`` at which a monotone ``condition`` holds.

    ``condition`` must stay true once it becomes true as ``t`` grows.
    Returns ``inf`` if it fails at every candidate.
    """
    grid = np.asarray(candidates, dtype=float)
    if grid.size == 0 or grid[0] != 0.0:
        grid = np.concatenate([[0.0], grid])
    if not condition(grid[-1]):
        return INF
    lo, hi = 0, grid.size - 1  # condition(grid[hi]) holds
    while lo < hi:
        mid = (lo + hi) // 2
        if condition(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(grid[lo])


class _Tail:
    """``S(t) = sum of weights whose level exceeds t`` via one sort."""

    def __init__(self, weights, levels):
        order = np.argsort(levels, kind="stable")
        self.levels = np.asarray(levels, dtype=float)[order]
        w = np.asarray(weights, dtype=float)[order]
        self.suffix = np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]])

    def __call__(self, t: float) -> float:
        return float(self.suffix[np.searchsorted(self.levels, t, side="right")])


def _solve(weights, levels, extra: float, alpha_pow: float, scores, variant: str,
           m: int, denominator: Optional[float] = None) -> CalibrationResult:
    weights = np.asarray(weights, dtype=float)
    weight_sum = float(weights.sum())
    denom = weight_sum if denominator is None else float(denominator)
    if denom <= 0:
        return CalibrationResult(INF, weight_sum, INF, variant, m)
    tail = _Tail(weights, levels)

    def ratio(t):
        return (tail(t) + extra) / denom

    t_hat = min_threshold(lambda t: ratio(t) <= alpha_pow, candidate_grid(scores))
    at = ratio(t_hat) if math.isfinite(t_hat) else ratio(float(np.max(scores, initial=0.0)))
    return CalibrationResult(t_hat, weight_sum, at, variant, m)


def _product_terms(pc: PairedCalibration, scores):
    s = np.asarray(scores, dtype=float)
    if pc.m == 0:
        return np.empty(0), np.empty(0)
    return pc.weights.prod(axis=1), s[pc.index].min(axis=1)


def _pairwise_terms(pc: PairedCalibration, scores):
    s = np.asarray(scores, dtype=float)
    pairs = list(combinations(range(pc.r), 2))
    if pc.m == 0:
        return np.empty(0), np.empty(0)
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    w = pc.weights[:, a] * pc.weights[:, b] / len(pairs)
    lv = np.minimum(s[pc.index[:, a]], s[pc.index[:, b]])
    return w.ravel(), lv.ravel()


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise CalibrationError(f"alpha must lie in (0, 1), got {alpha}")


def _check_pairs(pc: PairedCalibration):
    if pc.r != 2 or pc.k != 2:
        raise CalibrationError(f"L2 rule needs pairs normalized with k=2 (got r={pc.r}, k={pc.k})")


def calibrate_l2(pc: PairedCalibration, scores, alpha: float) -> CalibrationResult:
    """Main L2 rule: pair products over their sum, plus ``b^2 / gamma(f)^2``."""
    _check_alpha(alpha)
    _check_pairs(pc)
    w, lv = _product_terms(pc, scores)
    extra = pc.bound**2 / pc.extra_gamma**2
    return _solve(w, lv, extra, alpha**2, scores, "l2", pc.m)


def calibrate_l2_alt(pc: PairedCalibration, scores, alpha: float) -> CalibrationResult:
    """L2 rule with the fixed denominator ``m + 1`` in place of the weight sum."""
    _check_alpha(alpha)
    _check_pairs(pc)
    w, lv = _product_terms(pc, scores)
    extra = pc.bound**2 / pc.extra_gamma**2
    return _solve(w, lv, extra, alpha**2, scores, "l2_alt", pc.m, denominator=pc.m + 1)


def calibrate_l2_conservative(pc: PairedCalibration, scores, alpha: float,
                              gamma_min: float) -> CalibrationResult:
    """L2 rule that does not depend on the extra draw ``f``.

    ``gamma(f)`` is replaced by a lower bound ``gamma_min`` over the class,
    so the threshold is never smaller than that of :func:`calibrate_l2`.
    """
    _check_alpha(alpha)
    _check_pairs(pc)
    if not gamma_min > 0:
        raise CalibrationError("gamma_min must be positive")
    w, lv = _product_terms(pc, scores)
    extra = pc.bound**2 / gamma_min**2
    return _solve(w, lv, extra, alpha**2, scores, "l2_conservative", pc.m)


def calibrate_l2_grouped(pc: PairedCalibration, scores, alpha: float) -> CalibrationResult:
    """Groups of ``r >= 2`` points per function, averaging over the ``r choose 2`` pairs."""
    _check_alpha(alpha)
    if pc.r < 2 or pc.k != 2:
        raise CalibrationError("grouped rule needs r >= 2 and k=2 normalizers")
    w, lv = _pairwise_terms(pc, scores)
    extra = pc.bound**2 / pc.extra_gamma**2
    return _solve(w, lv, extra, alpha**2, scores, "l2_grouped", pc.m)


def calibrate_lk_paired(pc: PairedCalibration, scores, alpha: float) -> CalibrationResult:
    """L^k rule on an assignment with groups of ``k`` points and k-th power normalizers.

    The ratio is of order ``1/m`` even when every score is small, so unless
    ``m`` is large compared to ``alpha^-k`` the threshold is infinite.
    """
    _check_alpha(alpha)
    k = pc.k
    if k < 2 or pc.r != k:
        raise CalibrationError(f"L^k rule needs k >= 2 and groups of size k (got r={pc.r}, k={k})")
    w, lv = _product_terms(pc, scores)
    extra = pc.bound**k / pc.extra_gamma**k
    if extra > alpha**k * float(w.sum()):
        warnings.warn(f"L^{k} rule: extra term alone exceeds alpha^k times the weight sum "
                      f"(m={pc.m}); threshold is infinite", RuntimeWarning, stacklevel=2)
    return _solve(w, lv, extra, alpha**k, scores, f"l{k}", pc.m)


def calibrate_lk(cal: LabeledDataset, functions, extra_f, k: int, scores, alpha: float,
                 train_features, seed) -> CalibrationResult:
    if k < 2:
        raise CalibrationError("k must be at least 2")
    pc = pair_calibration(cal, functions, extra_f, k, train_features, k, seed)
    return calibrate_lk_paired(pc, scores, alpha)


def split_conformal_rank(n: int, alpha: float) -> int:
    return math.ceil((n + 1) * (1 - alpha) - 1e-9)


def calibrate_split_conformal(scores, alpha: float) -> CalibrationResult:
    """The ``ceil((n+1)(1-alpha))``-th smallest score, or ``inf`` past ``n``."""
    _check_alpha(alpha)
    s = np.sort(np.asarray(scores, dtype=float))
    n = s.shape[0]
    if n < 1:
        raise CalibrationError("need at least one calibration score")
    rank = split_conformal_rank(n, alpha)
    t = INF if rank > n else float(s[max(rank, 1) - 1])
    return CalibrationResult(t, float(n), float(np.mean(s > t)), "split", n)


VARIANTS = ("l2", "l2_alt", "l2_conservative", "l2_grouped", "lk", "split")
