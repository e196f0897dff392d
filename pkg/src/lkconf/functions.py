"""Weight functions, their sampling distributions and the normalizer gamma(f).

For a function ``f`` bounded by ``b`` and training features grouped into
consecutive k-tuples ``(X'_1..X'_k), (X'_{k+1}..X'_{2k}), ...``::

    gamma(f)^k = (sum_l prod_j f(X'_{(l-1)k+j}) + b^k) / (m_train + 1)

with ``m_train = n_train // k``; trailing rows are ignored.  ``gamma(f)^2``
tracks ``E[f(X)]^2``, and the ``b^k`` term keeps it strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .dgp import FeatureLaw

KINDS = ("gaussian", "ball", "constant")


class FunctionSpaceError(ValueError):
    pass


def _sqdist(centers: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pairwise squared distances, shape ``(len(centers), len(x))``."""
    if centers.shape[1] == 1:
        return (centers[:, :1] - x[:, 0]) ** 2
    d = (np.sum(centers**2, axis=1)[:, None] - 2.0 * centers @ x.T
         + np.sum(x**2, axis=1)[None, :])
    return np.maximum(d, 0.0)


def _profile(kind: str, sq: np.ndarray, scale) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-0.5 * sq / np.square(scale))
    if kind == "constant":
        return np.ones_like(sq)
    return (sq <= np.square(scale)).astype(float)


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """``f(x) = bound * K(||x - center|| / scale)`` for a Gaussian, ball or constant profile."""

    kind: str
    center: np.ndarray
    scale: float
    bound: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FunctionSpaceError(f"unknown kernel kind {self.kind!r}")
        if not self.scale > 0:
            raise FunctionSpaceError("bandwidth/radius must be positive")
        if not self.bound > 0:
            raise FunctionSpaceError("bound must be positive")
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            x = x.reshape(-1, self.center.shape[0])
        if self.kind == "ball":
            # exact distance so boundary points are not lost to rounding
            sq = np.sum((x - self.center) ** 2, axis=1)
        else:
            sq = _sqdist(self.center[None, :], x)[0]
        return self.bound * _profile(self.kind, sq, self.scale)

    def scaled(self, c: float) -> "WeightFunction":
        return WeightFunction(self.kind, self.center, self.scale, self.bound * c)


def gaussian_kernel(center, h: float) -> WeightFunction:
    """``f(x) = exp(-||x - center||^2 / (2 h^2))``."""
    if not h > 0:
        raise FunctionSpaceError("bandwidth h must be positive")
    return WeightFunction("gaussian", center, h)


def ball_indicator(center, r: float) -> WeightFunction:
    """Indicator of the closed ball of radius ``r`` around ``center``."""
    if not r > 0:
        raise FunctionSpaceError("radius r must be positive")
    return WeightFunction("ball", center, r)


def constant_function(dim: int = 1, bound: float = 1.0) -> WeightFunction:
    """``f(x) = bound`` everywhere; handy for degenerate and hand-checked cases."""
    return WeightFunction("constant", np.zeros(dim), 1.0, bound)


def weight_matrix(functions: Sequence[WeightFunction], x: np.ndarray) -> np.ndarray:
    """Values ``f_i(x_j)`` as an ``(len(functions), len(x))`` array."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    out = np.empty((len(functions), x.shape[0]))
    groups: dict = {}
    for i, f in enumerate(functions):
        groups.setdefault((f.kind, f.scale), []).append(i)
    for (kind, scale), idx in groups.items():
        if kind == "ball":
            for i in idx:
                out[i] = functions[i](x)
            continue
        centers = np.stack([functions[i].center for i in idx])
        bounds = np.array([functions[i].bound for i in idx])
        out[idx] = bounds[:, None] * _profile(kind, _sqdist(centers, x), scale)
    return out


def assigned_weights(functions: Sequence[WeightFunction], x: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``f_i(x[idx[i, j]])`` for an ``(m, r)`` index array, one row per function."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    idx = np.asarray(idx)
    out = np.empty(idx.shape)
    groups: dict = {}
    for i, f in enumerate(functions):
        groups.setdefault((f.kind, f.scale), []).append(i)
    for (kind, scale), rows in groups.items():
        centers = np.stack([functions[i].center for i in rows])
        bounds = np.array([functions[i].bound for i in rows])
        pts = x[idx[rows]]  # (len(rows), r, p)
        sq = np.sum((pts - centers[:, None, :]) ** 2, axis=2)
        out[rows] = bounds[:, None] * _profile(kind, sq, scale)
    return out


# ---------------------------------------------------------------------------
# Sampling


@dataclass(frozen=True)
class KernelComponent:
    kind: str
    scale: float
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class FunctionSampler:
    """Distribution over weight functions.

    Centers come either from ``law`` (a :class:`FeatureLaw`) or from the rows
    of ``pool``.  With several ``components`` each draw first picks a kernel
    kind and scale with probability proportional to the component weight.
    """

    components: tuple
    law: Optional[FeatureLaw] = None
    pool: Optional[np.ndarray] = None
    replace: bool = True

    def __post_init__(self):
        if (self.law is None) == (self.pool is None):
            raise FunctionSpaceError("exactly one of law and pool must be given")
        if not self.components:
            raise FunctionSpaceError("sampler needs at least one kernel component")
        if self.pool is not None:
            pool = np.asarray(self.pool, dtype=float)
            if pool.ndim == 1:
                pool = pool.reshape(-1, 1)
            if pool.shape[0] == 0:
                raise FunctionSpaceError("empty center pool")
            object.__setattr__(self, "pool", pool)

    @classmethod
    def single(cls, kind: str, scale: float, **kw) -> "FunctionSampler":
        return cls((KernelComponent(kind, scale),), **kw)

    @property
    def bound(self) -> float:
        return 1.0

    def sample_centers(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.law is not None:
            return self.law.sample(count, rng)
        if not self.replace and count > self.pool.shape[0]:
            raise FunctionSpaceError(
                f"pool of {self.pool.shape[0]} rows cannot supply {count} draws without replacement")
        rows = (rng.integers(0, self.pool.shape[0], size=count) if self.replace
                else rng.permutation(self.pool.shape[0])[:count])
        return self.pool[rows]

    def sample(self, count: int, rng: np.random.Generator) -> list:
        centers = self.sample_centers(count, rng)
        if len(self.components) == 1:
            comp = [self.components[0]] * count
        else:
            w = np.array([c.weight for c in self.components], dtype=float)
            pick = rng.choice(len(self.components), size=count, p=w / w.sum())
            comp = [self.components[j] for j in pick]
        return [WeightFunction(c.kind, z, c.scale) for c, z in zip(comp, centers)]


def sample_functions(sampler: FunctionSampler, count: int, seed) -> list:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return sampler.sample(count, rng)


# ---------------------------------------------------------------------------
# Normalization


@dataclass(frozen=True)
class NormalizedFunction:
    f: WeightFunction
    gamma: float

    def __call__(self, x):
        return self.f(x) / self.gamma


def gamma_values(functions: Sequence[WeightFunction], train_features: np.ndarray, k: int) -> np.ndarray:
    """Vectorized ``gamma(f)`` for a list of functions and one grouping order."""
    if k < 1:
        raise FunctionSpaceError("k must be positive")
    x = np.asarray(train_features, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    m_train = x.shape[0] // k
    if m_train < 1:
        raise FunctionSpaceError(f"need at least k={k} training rows, got {x.shape[0]}")
    vals = weight_matrix(functions, x[: m_train * k])
    prods = vals.reshape(len(functions), m_train, k).prod(axis=2).sum(axis=1)
    bk = np.array([f.bound for f in functions]) ** k
    return ((prods + bk) / (m_train + 1)) ** (1.0 / k)


def normalize(f: WeightFunction, train_features: np.ndarray, k: int = 2) -> NormalizedFunction:
    return NormalizedFunction(f, float(gamma_values([f], train_features, k)[0]))


def approximate_gamma_min(sampler: FunctionSampler, train_features, k: int,
                          draws: int = 10_000, seed=0) -> float:
    """Smallest ``gamma`` over a large sample of functions, as a proxy for the infimum over F."""
    fs = sample_functions(sampler, draws, seed)
    return float(np.min(gamma_values(fs, train_features, k)))


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float

    def __float__(self):
        return self.value


def expected_weight_oracle(f: WeightFunction, law: FeatureLaw, n_mc: int, seed) -> MonteCarloEstimate:
    """Monte Carlo estimate of ``E[f(X)]`` with its standard error."""
    if n_mc < 1:
        raise FunctionSpaceError("n_mc must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    v = f(law.sample(n_mc, rng))
    se = float(v.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("nan")
    return MonteCarloEstimate(float(v.mean()), se)
