"""Experiment configuration and seed derivation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

MASK64 = (1 << 64) - 1

SCENARIOS = ("setting1", "setting2", "multivariate", "csv")
SCORES = ("linear-residual", "knn-quantile")
VARIANTS = ("l2", "l2_alt", "l2_conservative", "l2_grouped", "lk", "split")
SAMPLERS = ("feature-law", "uniform-box", "pool")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def splitmix64(x: int) -> int:
    """One step of the SplitMix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """``splitmix64(splitmix64(base_seed) XOR index)``.

    Trial ``i`` uses ``index = i``; experiment-wide streams use the indices in
    :data:`STREAMS`, which sit above any realistic trial count.
    """
    return splitmix64(splitmix64(base_seed & MASK64) ^ (index & MASK64))


STREAMS = {"train": 1 << 40, "shuffle": (1 << 40) + 1, "panel": (1 << 40) + 2,
           "gamma_min": (1 << 40) + 3, "split": (1 << 40) + 4, "functions": (1 << 40) + 5}


@dataclass
class ExperimentConfig:
    """Knobs for one experiment.  Defaults reproduce the one-dimensional study."""

    scenario: str = "setting1"
    score: str = "linear-residual"
    k_neighbors: int = 50
    variants: list = field(default_factory=lambda: ["l2", "split"])
    r: int = 2
    k: int = 2
    gamma_min_draws: int = 10_000
    alphas: list = field(default_factory=lambda: [0.2])
    kernel: str = "gaussian"
    bandwidths: list = field(default_factory=lambda: [math.sqrt(2)])
    sampler: str = "feature-law"
    pool_size: int = 0
    with_replacement: bool = True
    test_source: str = "feature-law"
    n_train: int = 500
    n: int = 2000
    n_test: int = 1
    trials: int = 500
    n_mc: int = 50_000
    base_seed: int = 0
    beta_seed: int = 20250101
    tail_epsilons: list = field(default_factory=lambda: [0.3, 0.4])
    split_sizes: list = field(default_factory=lambda: [676, 2000, 1001, 500])
    local_radius: float = 1.0
    csv_path: str = ""
    output: str = "out"
    format: str = "json"

    def validate(self) -> "ExperimentConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"must be one of {SCENARIOS}")
        if self.score not in SCORES:
            raise ConfigError("score", f"must be one of {SCORES}")
        if not self.variants or any(v not in VARIANTS for v in self.variants):
            raise ConfigError("variants", f"each must be one of {VARIANTS}")
        if self.r < 2:
            raise ConfigError("r", "must be at least 2")
        if self.k < 2:
            raise ConfigError("k", "must be at least 2")
        if not self.alphas or any(not 0 < a < 1 for a in self.alphas):
            raise ConfigError("alphas", "values must lie in (0, 1)")
        if self.kernel not in ("gaussian", "ball"):
            raise ConfigError("kernel", "must be gaussian or ball")
        if not self.bandwidths or any(not h > 0 for h in self.bandwidths):
            raise ConfigError("bandwidths", "values must be positive")
        if self.sampler not in SAMPLERS:
            raise ConfigError("sampler", f"must be one of {SAMPLERS}")
        if self.test_source not in ("feature-law", "sampler"):
            raise ConfigError("test_source", "must be feature-law or sampler")
        for name in ("n_train", "n", "n_test", "trials", "n_mc", "k_neighbors", "gamma_min_draws"):
            if getattr(self, name) < 1:
                raise ConfigError(name, "must be positive")
        if self.sampler == "pool" and self.pool_size < 1:
            raise ConfigError("pool_size", "must be positive for the pool sampler")
        if self.score == "knn-quantile" and self.k_neighbors > self.n_train:
            raise ConfigError("k_neighbors", "exceeds n_train")
        if len(self.split_sizes) != 4 or any(s < 0 for s in self.split_sizes):
            raise ConfigError("split_sizes", "needs four nonnegative sizes")
        if self.split_sizes[3] < 1:
            raise ConfigError("split_sizes", "test split must be nonempty")
        if not self.local_radius > 0:
            raise ConfigError("local_radius", "must be positive")
        if self.format not in ("csv", "json"):
            raise ConfigError("format", "must be csv or json")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def preset(name: str) -> ExperimentConfig:
    """Named configurations matching the reproduced studies."""
    sqrt2 = math.sqrt(2)
    presets = {
        "setting1": ExperimentConfig(scenario="setting1", bandwidths=[sqrt2]),
        "setting2": ExperimentConfig(scenario="setting2", bandwidths=[sqrt2]),
        "setting1-quantile": ExperimentConfig(scenario="setting1", score="knn-quantile"),
        "setting2-quantile": ExperimentConfig(scenario="setting2", score="knn-quantile"),
        "multivariate-tn": ExperimentConfig(
            scenario="multivariate", variants=["l2"], bandwidths=[5.0, 10.0, 15.0],
            alphas=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3]),
        "multivariate-uniform": ExperimentConfig(
            scenario="multivariate", variants=["l2"], bandwidths=[5.0, 10.0, 15.0],
            alphas=[0.05, 0.1, 0.15, 0.2, 0.25, 0.3], sampler="uniform-box", test_source="sampler"),
        "abalone": ExperimentConfig(scenario="csv", bandwidths=[3.0], alphas=[0.1, 0.2]),
    }
    if name not in presets:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {sorted(presets)}")
    return presets[name]
