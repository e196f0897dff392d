"""Conditional and function-weighted miscoverage, norms and empirical estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .dgp import DGPOracle, LabeledDataset
from .functions import WeightFunction
from .scores import ScoreModel


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionRule:
    """``C(x) = {y : score(x, y) <= threshold}``."""

    model: ScoreModel
    threshold: float

    def intervals(self, x):
        return self.model.intervals(x, self.threshold)

    def covers(self, x, y) -> np.ndarray:
        return self.model.scores(x, y) <= self.threshold


def _gaussian_miss(lo, hi, mu, sd) -> np.ndarray:
    # 1 - P(lo <= Y <= hi); ndtr(+-inf) is exact
    return np.clip(1.0 - (ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd)), 0.0, 1.0)


def conditional_miscoverage(oracle: DGPOracle, rule: PredictionRule, x):
    """``P(Y not in C(x) | X = x, data)`` under the oracle's Gaussian law.

    Accepts one feature vector (returns a float) or an ``(n, p)`` array.
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1 and (arr.size == rule.model.dim)
    rows = arr.reshape(-1, rule.model.dim)
    lo, hi = rule.intervals(rows)
    out = _gaussian_miss(lo, hi, oracle.mean_fn(rows), oracle.sd_fn(rows))
    return float(out[0]) if single else out


class WeightedMiscoverage(NamedTuple):
    value: float
    defined: bool


def weighted_miscoverage(f_values, miss_values, gamma: Optional[float] = None) -> WeightedMiscoverage:
    """Average of ``f * alpha_D`` over feature draws, divided by the mean of ``f``
    (exact mode, ``gamma=None``) or by ``gamma``.

    Exact mode with zero total weight is undefined.
    """
    f_values = np.asarray(f_values, dtype=float)
    num = float(np.mean(f_values * np.asarray(miss_values, dtype=float)))
    if gamma is not None:
        if not gamma > 0:
            raise EvaluationError("gamma must be positive")
        return WeightedMiscoverage(num / gamma, True)
    den = float(np.mean(f_values))
    if den <= 0:
        return WeightedMiscoverage(math.nan, False)
    # ratio of sums so a constant miscoverage comes back exactly
    return WeightedMiscoverage(float(np.sum(f_values * miss_values) / np.sum(f_values)), True)


def f_weighted_miscoverage(oracle: DGPOracle, rule: PredictionRule, f: WeightFunction,
                           normalization: str = "exact", n_mc: int = 50_000, seed=0,
                           gamma: Optional[float] = None) -> WeightedMiscoverage:
    """Monte Carlo estimate of the f-weighted conditional miscoverage.

    ``normalization="exact"`` divides by the Monte Carlo mean of ``f``;
    ``"data-driven"`` divides by the supplied ``gamma``.
    """
    if n_mc < 1:
        raise EvaluationError("n_mc must be positive")
    if normalization not in ("exact", "data-driven"):
        raise EvaluationError(f"unknown normalization {normalization!r}")
    if normalization == "data-driven" and gamma is None:
        raise EvaluationError("data-driven normalization needs gamma")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    xs = oracle.feature_law.sample(n_mc, rng)
    miss = conditional_miscoverage(oracle, rule, xs)
    return weighted_miscoverage(f(xs), miss, gamma if normalization == "data-driven" else None)


def lk_norm(values: Sequence[float], k: float) -> float:
    """Empirical ``(mean |v|^k)^(1/k)``."""
    v = np.abs(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EvaluationError("lk_norm of an empty list")
    if k < 1:
        raise EvaluationError("k must be at least 1")
    top = float(v.max())
    if top == 0.0:
        return 0.0
    # scale out the max to keep high powers finite
    return top * float(np.mean((v / top) ** k)) ** (1.0 / k)


class TailCheck(NamedTuple):
    frequency: float
    bound: float
    trivial: bool


def tail_bound_check(values, alpha: float, epsilon: float, k: float) -> TailCheck:
    """Empirical frequency of ``value >= epsilon`` next to the bound ``(alpha/epsilon)^k``."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EvaluationError("no values")
    if not 0 < epsilon < 1 or not 0 < alpha < 1:
        raise EvaluationError("alpha and epsilon must lie in (0, 1)")
    bound = (alpha / epsilon) ** k
    return TailCheck(float(np.mean(v >= epsilon)), bound, epsilon <= alpha)


def markov_slack(bound: float, trials: int) -> float:
    b = min(bound, 1.0)
    return b + 3.0 * math.sqrt(b * (1 - b) / trials)


def empirical_f_miscoverage(test: LabeledDataset, f: WeightFunction, gamma_or_mean: float,
                            rule: PredictionRule) -> float:
    """Test-set average of ``f(x) / gamma_or_mean * 1{y not in C(x)}``."""
    if len(test) == 0:
        raise EvaluationError("empty test set")
    if not gamma_or_mean > 0:
        raise EvaluationError("normalizer must be positive")
    miss = ~rule.covers(test.features, test.outcomes)
    return float(np.mean(f(test.features) / gamma_or_mean * miss))


def empirical_local_miscoverage(test: LabeledDataset, center, radius: float,
                                rule: PredictionRule) -> Optional[float]:
    """Miss rate among test rows within ``radius`` of ``center``; ``None`` if there are none."""
    if not radius > 0:
        raise EvaluationError("radius must be positive")
    c = np.atleast_1d(np.asarray(center, dtype=float))
    near = np.sum((test.features - c) ** 2, axis=1) <= radius**2
    if not near.any():
        return None
    miss = ~rule.covers(test.features[near], test.outcomes[near])
    return float(np.mean(miss))


def width_at(rule: PredictionRule, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    if math.isinf(rule.threshold):
        return math.inf
    lo, hi = rule.intervals(x)
    return float(hi[0] - lo[0])


class MonteCarloPanel:
    """Fixed feature draws with the oracle law and score band cached.

    Lets many thresholds and weight functions be evaluated against the same
    draws without refitting or resampling.
    """

    def __init__(self, oracle: DGPOracle, model: ScoreModel, n_mc: int, seed):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.x = oracle.feature_law.sample(n_mc, rng)
        self.mu = oracle.mean_fn(self.x)
        self.sd = oracle.sd_fn(self.x)
        self.lo, self.hi = model.band(self.x)

    def miss(self, t: float) -> np.ndarray:
        if math.isinf(t):
            return np.zeros_like(self.mu)
        return _gaussian_miss(self.lo - t, self.hi + t, self.mu, self.sd)
