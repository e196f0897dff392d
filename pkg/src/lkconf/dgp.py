"""Synthetic data-generating processes, CSV ingestion and dataset splitting.

The two one-dimensional settings share the feature law ``Unif([0, 10])`` and
the conditional mean ``0.5 x + 0.1 x^2``; setting 1 has constant noise sd 3,
setting 2 has sd 1 on ``x <= 8`` and sd 5 on ``x > 8``.  The multivariate
process draws features from a normal law truncated to ``[0, 5]^10``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np


class DataError(ValueError):
    """Base class for dataset construction and ingestion errors."""


class EmptyFileError(DataError):
    pass


class MissingColumnError(DataError):
    def __init__(self, column: str):
        super().__init__(f"missing column {column!r}")
        self.column = column


class NonNumericCellError(DataError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"non-numeric cell at row {row}, column {column!r}: {value!r}")
        self.row = row
        self.column = column
        self.value = value


class BoxMassError(DataError):
    """Raised when a truncation box has (numerically) no probability mass."""


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.outcomes, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise DataError("features must be a 2-D array")
        if x.shape[0] != y.shape[0]:
            raise DataError(f"{x.shape[0]} feature rows but {y.shape[0]} outcomes")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("dataset contains non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "outcomes", y)

    def __len__(self) -> int:
        return self.outcomes.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.outcomes[idx])


# ---------------------------------------------------------------------------
# Feature laws and oracles


@dataclass(frozen=True)
class FeatureLaw:
    """Feature distribution: ``uniform-box`` or ``truncated-normal``.

    Both carry the box ``[low, high]``; the truncated normal also carries the
    untruncated mean and covariance.
    """

    kind: str
    low: np.ndarray
    high: np.ndarray
    mean: Optional[np.ndarray] = None
    cov: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("uniform-box", "truncated-normal"):
            raise DataError(f"unknown feature law {self.kind!r}")
        object.__setattr__(self, "low", np.atleast_1d(np.asarray(self.low, dtype=float)))
        object.__setattr__(self, "high", np.atleast_1d(np.asarray(self.high, dtype=float)))
        if self.kind == "truncated-normal" and (self.mean is None or self.cov is None):
            raise DataError("truncated-normal law needs mean and cov")

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform-box":
            return self.low + (self.high - self.low) * rng.random((n, self.dim))
        return sample_truncated_normal(self.mean, self.cov, (self.low, self.high), n, rng)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "low": self.low.tolist(), "high": self.high.tolist()}
        if self.kind == "truncated-normal":
            d["mean"] = np.asarray(self.mean).tolist()
            d["cov"] = np.asarray(self.cov).tolist()
        return d


@dataclass(frozen=True)
class DGPOracle:
    """Known Gaussian conditional law ``Y | X=x ~ N(mean_fn(x), sd_fn(x)^2)``.

    ``mean_fn`` and ``sd_fn`` act row-wise on an ``(n, p)`` array.
    """

    mean_fn: Callable[[np.ndarray], np.ndarray]
    sd_fn: Callable[[np.ndarray], np.ndarray]
    feature_law: FeatureLaw
    name: str = ""
    params: dict = field(default_factory=dict)

    def sample_outcomes(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.mean_fn(x) + self.sd_fn(x) * rng.standard_normal(x.shape[0])

    def sample(self, n: int, rng: np.random.Generator) -> LabeledDataset:
        x = self.feature_law.sample(n, rng)
        return LabeledDataset(x, self.sample_outcomes(x, rng))


def _setting_mean(x):
    x0 = x[:, 0]
    return 0.5 * x0 + 0.1 * x0**2


def _sd_setting1(x):
    return np.full(x.shape[0], 3.0)


def _sd_setting2(x):
    return np.where(x[:, 0] <= 8.0, 1.0, 5.0)


UNIT_INTERVAL_LAW = FeatureLaw("uniform-box", [0.0], [10.0])
SETTING1 = DGPOracle(_setting_mean, _sd_setting1, UNIT_INTERVAL_LAW, name="setting1")
SETTING2 = DGPOracle(_setting_mean, _sd_setting2, UNIT_INTERVAL_LAW, name="setting2")


def gen_setting1(n: int, seed: int) -> LabeledDataset:
    """Setting 1: X ~ Unif([0,10]), Y | X ~ N(0.5X + 0.1X^2, 3^2)."""
    return SETTING1.sample(n, np.random.default_rng(seed))


def gen_setting2(n: int, seed: int) -> LabeledDataset:
    """Setting 2: as setting 1 but with sd 1 for X <= 8 and 5 for X > 8."""
    return SETTING2.sample(n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Multivariate process

MULTIVARIATE_DIM = 10
MULTIVARIATE_BETA_SEED = 20250101


def default_betas(seed: int = MULTIVARIATE_BETA_SEED, dim: int = MULTIVARIATE_DIM) -> np.ndarray:
    """The four coefficient vectors, as rows of a ``(4, dim)`` array."""
    return np.random.default_rng(seed).standard_normal((4, dim))


def multivariate_law(dim: int = MULTIVARIATE_DIM) -> FeatureLaw:
    mean = np.full(dim, 2.0)
    cov = np.ones((dim, dim)) + 2.0 * np.eye(dim)
    return FeatureLaw("truncated-normal", np.zeros(dim), np.full(dim, 5.0), mean, cov)


_LOG_GUARD = 1e-12


class _MultivariateOracle(DGPOracle):
    def sample(self, n: int, rng: np.random.Generator) -> LabeledDataset:
        b3 = self.params["betas"][2]
        x = self.feature_law.sample(n, rng)
        bad = np.abs(x @ b3) < _LOG_GUARD
        while np.any(bad):
            x[bad] = self.feature_law.sample(int(bad.sum()), rng)
            bad = np.abs(x @ b3) < _LOG_GUARD
        return LabeledDataset(x, self.sample_outcomes(x, rng))


def multivariate_oracle(betas: Optional[np.ndarray] = None) -> DGPOracle:
    betas = default_betas() if betas is None else np.asarray(betas, dtype=float)
    b1, b2, b3, b4 = betas

    def mean_fn(x):
        # |b3.x| is bounded away from 0 on sampled rows; guard for evaluation grids
        return x @ b1 + (x @ b2) ** 2 + np.log(np.maximum(np.abs(x @ b3), _LOG_GUARD))

    def sd_fn(x):
        return 1.0 + np.exp(x @ b4)

    law = multivariate_law(betas.shape[1])
    return _MultivariateOracle(mean_fn, sd_fn, law, name="multivariate", params={"betas": betas})


def gen_multivariate(n: int, seed: int, betas: Optional[np.ndarray] = None) -> LabeledDataset:
    return multivariate_oracle(betas).sample(n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# Truncated normal

_MIN_ACCEPTANCE = 1e-6
_PROBE = 100_000


def sample_truncated_normal(mu, sigma, box, n: int, seed) -> np.ndarray:
    """Draw ``n`` rows from ``N(mu, sigma)`` conditioned on an axis-aligned box.

    Plain rejection from the unconstrained normal.  ``box`` is a pair
    ``(low, high)`` of vectors.  ``seed`` may be an int or a Generator.

    Raises
    ------
    BoxMassError
        If the box has an empty interior, or fewer than one draw in a million
        lands inside it.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    low, high = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
    p = mu.shape[0]
    if sigma.shape != (p, p) or low.shape != (p,) or high.shape != (p,):
        raise DataError("dimension mismatch between mu, sigma and box")
    if np.any(high <= low):
        raise BoxMassError("truncation box has an empty interior")
    chol = np.linalg.cholesky(sigma)

    out = np.empty((n, p))
    filled = drawn = accepted = 0
    batch = min(_PROBE, max(1024, 2 * n))
    while filled < n:
        z = mu + rng.standard_normal((batch, p)) @ chol.T
        ok = np.all((z >= low) & (z <= high), axis=1)
        drawn += batch
        hits = z[ok]
        accepted += hits.shape[0]
        if drawn >= 10 * _PROBE and accepted / drawn < _MIN_ACCEPTANCE:
            raise BoxMassError(
                f"acceptance rate {accepted / drawn:.2e} below {_MIN_ACCEPTANCE:.0e}; box mass too small"
            )
        take = min(n - filled, hits.shape[0])
        out[filled:filled + take] = hits[:take]
        filled += take
        rate = max(accepted / drawn, 1.0 / drawn)
        batch = int(min(10 * _PROBE, max(1024, 1.2 * (n - filled) / rate)))
    return out


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CSVSchema:
    """Column layout of a labeled CSV file.

    ``categorical`` maps a feature column to a code table; any other feature
    column must parse as a float.  Header names are matched after
    lower-casing and collapsing spaces/underscores.
    """

    features: tuple
    outcome: str
    categorical: dict = field(default_factory=dict)


ABALONE_SCHEMA = CSVSchema(
    features=("sex", "length", "diameter", "height",
              "shucked_weight", "viscera_weight", "shell_weight"),
    outcome="rings",
    categorical={"sex": {"M": 1.0, "F": -1.0, "I": 0.0}},
)


def _canon(name: str) -> str:
    return "_".join(name.strip().lower().replace("_", " ").split())


def load_csv(path, schema: CSVSchema = ABALONE_SCHEMA) -> LabeledDataset:
    """Read a comma-separated file with a header row into a dataset.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise EmptyFileError(f"{path}: empty file")
        pos = {_canon(h): i for i, h in enumerate(header)}
        cols = [_canon(c) for c in schema.features] + [_canon(schema.outcome)]
        for c in cols:
            if c not in pos:
                raise MissingColumnError(c)
        codes = {_canon(k): v for k, v in schema.categorical.items()}
        rows = []
        for rownum, raw in enumerate(reader, start=1):
            if not raw or all(not v.strip() for v in raw):
                continue
            vals = []
            for c in cols:
                i = pos[c]
                cell = raw[i].strip() if i < len(raw) else ""
                if c in codes:
                    if cell not in codes[c]:
                        raise NonNumericCellError(rownum, c, cell)
                    vals.append(codes[c][cell])
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCellError(rownum, c, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCellError(rownum, c, cell)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    return LabeledDataset(arr[:, :-1], arr[:, -1])


# ---------------------------------------------------------------------------
# Splitting and scaling


@dataclass(frozen=True)
class SplitSpec:
    sizes: tuple
    seed: int = 0


def split(data: LabeledDataset, spec: SplitSpec) -> list:
    """Permute rows with a seeded generator and cut consecutive blocks."""
    sizes = [int(s) for s in spec.sizes]
    if any(s < 0 for s in sizes):
        raise DataError("split sizes must be nonnegative")
    if sum(sizes) > len(data):
        raise DataError(f"split sizes sum to {sum(sizes)} > {len(data)} rows")
    perm = np.random.default_rng(spec.seed).permutation(len(data))
    bounds = np.cumsum([0] + sizes)
    return [data.take(perm[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass(frozen=True)
class Scaling:
    """Column shifts and scales; ``constant`` flags columns left unscaled."""

    mean: np.ndarray
    sd: np.ndarray
    constant: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.mean.shape[0]:
            raise DataError(f"expected {self.mean.shape[0]} columns, got {x.shape[-1]}")
        return np.where(self.constant, x, (x - self.mean) / self.sd)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist(),
                "constant": self.constant.tolist(), "ddof": 0}


def fit_scaling(reference: LabeledDataset) -> Scaling:
    if len(reference) == 0:
        raise DataError("reference dataset is empty")
    x = reference.features
    mean = x.mean(axis=0)
    sd = x.std(axis=0)  # population sd
    constant = sd == 0
    return Scaling(mean, np.where(constant, 1.0, sd), constant)


def standardize(data: LabeledDataset, reference: LabeledDataset):
    """Return ``(scaled data, scaling)`` using the reference column moments."""
    if data.dim != reference.dim:
        raise DataError(f"dimension mismatch: {data.dim} vs {reference.dim}")
    scaling = fit_scaling(reference)
    return LabeledDataset(scaling.apply(data.features), data.outcomes), scaling


ABALONE_HEADER = ("Sex", "Length", "Diameter", "Height", "Whole weight", "Shucked weight",
                  "Viscera weight", "Shell weight", "Rings")


def write_synthetic_abalone(path, n: int = 4177, seed: int = 0) -> Path:
    """Write an Abalone-shaped CSV with plausible allometric structure.

    Stand-in for the public file when it is not at hand: same header, sex
    codes and ranges, ring counts rising with shell weight and noisier for
    adults.
    """
    rng = np.random.default_rng(seed)
    sex = rng.choice(["M", "F", "I"], size=n, p=[0.37, 0.31, 0.32])
    length = np.clip(rng.normal(0.52, 0.12, n) - 0.08 * (sex == "I"), 0.075, 0.815)
    diameter = np.clip(0.81 * length + rng.normal(0, 0.015, n), 0.055, 0.65)
    height = np.clip(0.34 * length + rng.normal(0, 0.012, n), 0.01, 0.5)
    whole = np.clip(2.4 * length**3 * (1 + rng.normal(0, 0.1, n)), 0.002, 2.8)
    shucked = whole * rng.uniform(0.38, 0.48, n)
    viscera = whole * rng.uniform(0.19, 0.24, n)
    shell = whole * rng.uniform(0.26, 0.32, n)
    sd = np.where(sex == "I", 1.5, 3.0)
    rings = np.clip(np.rint(4 + 20 * shell + rng.normal(0, 1, n) * sd), 1, 29).astype(int)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ABALONE_HEADER)
        for row in zip(sex, length, diameter, height, whole, shucked, viscera, shell, rings):
            w.writerow([row[0], *(f"{v:.4f}" for v in row[1:8]), row[8]])
    return path
