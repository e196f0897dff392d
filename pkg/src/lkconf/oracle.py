"""Brute-force reference for the calibration rules.

Everything is recomputed from definitions with plain Python loops: the
normalizers, the weights at the assigned points and the indicators
``Z_i^t = 1{s_i > t}``, then a linear scan over ``{0} U sorted(scores)``.
Shares nothing with :mod:`lkconf.calibration` beyond the input objects.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import calibration as cal_mod
from .dgp import LabeledDataset
from .functions import WeightFunction


def brute_gamma(f: WeightFunction, train_features, k: int) -> float:
    x = np.asarray(train_features, dtype=float).reshape(len(train_features), -1)
    m_train = x.shape[0] // k
    total = 0.0
    for l in range(m_train):
        prod = 1.0
        for j in range(k):
            prod *= float(f(x[l * k + j])[0])
        total += prod
    return ((total + f.bound**k) / (m_train + 1)) ** (1.0 / k)


def brute_threshold(variant: str, x, scores, functions, extra_f, index, train_features,
                    alpha: float, k: int = 2, gamma_min: float | None = None) -> float:
    """Linear-scan threshold for one rule.

    ``index`` is the ``(m, r)`` assignment of calibration rows to functions.
    """
    x = np.asarray(x, dtype=float).reshape(len(scores), -1)
    s = [float(v) for v in scores]
    index = [list(map(int, row)) for row in np.asarray(index)]
    power = k if variant == "lk" else 2
    g = [brute_gamma(f, train_features, power) for f in functions]
    g_extra = brute_gamma(extra_f, train_features, power)
    b = max([f.bound for f in functions] + [extra_f.bound])
    ft = [[float(functions[i](x[j])[0]) / g[i] for j in row] for i, row in enumerate(index)]
    m = len(index)
    if variant == "l2_conservative":
        extra = b**2 / gamma_min**2
    else:
        extra = b**power / g_extra**power

    def terms(t):
        """(weight, active) pairs at threshold t."""
        out = []
        for i, row in enumerate(index):
            z = [1.0 if s[j] > t else 0.0 for j in row]
            if variant == "l2_grouped":
                pairs = list(combinations(range(len(row)), 2))
                for a, c in pairs:
                    out.append((ft[i][a] * ft[i][c] / len(pairs), z[a] * z[c]))
            else:
                w, zz = 1.0, 1.0
                for a in range(len(row)):
                    w *= ft[i][a]
                    zz *= z[a]
                out.append((w, zz))
        return out

    grid = sorted(set([0.0] + s))
    for t in grid:
        tt = terms(t)
        num = sum(w * z for w, z in tt) + extra
        if variant == "l2_alt":
            den = m + 1
        else:
            den = sum(w for w, _ in tt)
        if den <= 0:
            return math.inf
        if num / den <= alpha**power:
            return t
    return math.inf


@dataclass
class RandomInstance:
    x: np.ndarray
    scores: np.ndarray
    train: np.ndarray
    functions: list
    extra: WeightFunction
    r: int
    k: int
    alpha: float
    seed: int


def random_instance(rng: np.random.Generator, r: int = 2, k: int = 2, max_n: int = 12,
                    max_m: int = 6) -> RandomInstance:
    """Small 1-D instance with ball or Gaussian weights and tie-prone scores."""
    n = int(rng.integers(r, max_n + 1))
    n = min(n, max_m * r + (n % r))
    m = n // r
    x = rng.uniform(0, 4, size=(n, 1))
    scores = rng.integers(0, 6, size=n).astype(float) * rng.choice([0.5, 1.0, 1.7])
    train = rng.uniform(0, 4, size=(int(rng.integers(k, 20)), 1))
    kind = rng.choice(["ball", "gaussian"])
    scale = float(rng.uniform(0.5, 3.0))
    centers = rng.uniform(0, 4, size=m + 1)
    fs = [WeightFunction(str(kind), [c], scale) for c in centers]
    alpha = float(rng.uniform(0.3, 0.99))
    return RandomInstance(x, scores, train, fs[:m], fs[m], r, k, alpha, int(rng.integers(2**31)))


def run_oracle_check(instances: int = 200, seed: int = 0) -> dict:
    """Compare every rule with the linear scan on random instances.

    Returns a dict of ``variant -> number of mismatches`` plus the runtime.
    """
    rng = np.random.default_rng(seed)
    bad = {v: 0 for v in ("l2", "l2_alt", "l2_conservative", "l2_grouped", "lk", "split")}
    start = time.perf_counter()
    for _ in range(instances):
        inst = random_instance(rng)
        data = LabeledDataset(inst.x, np.zeros(len(inst.scores)))
        pc = cal_mod.pair_calibration(data, inst.functions, inst.extra, 2, inst.train, 2, inst.seed)
        gmin = pc.extra_gamma * float(rng.uniform(0.3, 1.0))
        fast = {
            "l2": cal_mod.calibrate_l2(pc, inst.scores, inst.alpha).threshold,
            "l2_alt": cal_mod.calibrate_l2_alt(pc, inst.scores, inst.alpha).threshold,
            "l2_conservative": cal_mod.calibrate_l2_conservative(pc, inst.scores, inst.alpha, gmin).threshold,
        }
        for v, t in fast.items():
            ref = brute_threshold(v, inst.x, inst.scores, inst.functions, inst.extra, pc.index,
                                  inst.train, inst.alpha, gamma_min=gmin)
            bad[v] += t != ref

        r = int(rng.integers(2, 5))
        g = random_instance(rng, r=r)
        pcg = cal_mod.pair_calibration(LabeledDataset(g.x, np.zeros(len(g.scores))),
                                       g.functions, g.extra, r, g.train, 2, g.seed)
        ref = brute_threshold("l2_grouped", g.x, g.scores, g.functions, g.extra, pcg.index, g.train, g.alpha)
        bad["l2_grouped"] += cal_mod.calibrate_l2_grouped(pcg, g.scores, g.alpha).threshold != ref

        k = int(rng.integers(2, 5))
        h = random_instance(rng, r=k, k=k)
        h.alpha = float(rng.uniform(0.7, 0.999))
        pck = cal_mod.pair_calibration(LabeledDataset(h.x, np.zeros(len(h.scores))),
                                       h.functions, h.extra, k, h.train, k, h.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t = cal_mod.calibrate_lk_paired(pck, h.scores, h.alpha).threshold
        ref = brute_threshold("lk", h.x, h.scores, h.functions, h.extra, pck.index, h.train, h.alpha, k=k)
        bad["lk"] += t != ref

        n = len(inst.scores)
        srt = sorted(inst.scores)
        rank = math.ceil((n + 1) * (1 - inst.alpha) - 1e-9)
        ref = math.inf if rank > n else srt[rank - 1]
        bad["split"] += cal_mod.calibrate_split_conformal(inst.scores, inst.alpha).threshold != ref
    return {"mismatches": {v: int(c) for v, c in bad.items()}, "instances": instances, "seconds": time.perf_counter() - start}
