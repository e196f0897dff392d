"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Runs the full-size protocols (500 trials each); expect several minutes on a
single core.  The summary lines are also repeated at the end of the pytest
run by the hook in ``conftest.py``.
"""

import math
import time
import warnings

import numpy as np
import pytest

from lkconf.calibration import calibrate_l2, calibrate_l2_grouped, calibrate_lk, pair_calibration
from lkconf.config import ExperimentConfig, preset
from lkconf.dgp import LabeledDataset
from lkconf.evaluation import lk_norm, markov_slack, tail_bound_check
from lkconf.experiments import run_simulation
from lkconf.oracle import random_instance, run_oracle_check
from lkconf.report import to_csv

RESULTS = []


def verdict(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def _values(records, metric, **match):
    return np.array([r[metric] for r in records
                     if all(r[k] == v for k, v in match.items()) and not math.isnan(r[metric])])


@pytest.fixture(scope="module")
def guarantee_run():
    cfg = ExperimentConfig(scenario="setting2", alphas=[0.1, 0.2], variants=["l2", "split"])
    start = time.perf_counter()
    rep = run_simulation(cfg)
    return rep, time.perf_counter() - start


@pytest.fixture(scope="module")
def quantile_runs():
    return {name: run_simulation(preset(name)) for name in ("setting1-quantile", "setting2-quantile")}


@pytest.fixture(scope="module")
def multivariate_runs():
    start = time.perf_counter()
    runs = {name: run_simulation(preset(name)) for name in ("multivariate-tn", "multivariate-uniform")}
    return runs, time.perf_counter() - start


def test_c01_oracle_equivalence():
    res = run_oracle_check(200, seed=0)
    bad = sum(res["mismatches"].values())
    ok = bad == 0 and res["seconds"] < 5
    assert verdict(1, ok, f"mismatches={res['mismatches']} runtime={res['seconds']:.2f}s (<5s)")


@pytest.mark.parametrize("alpha", [0.1, 0.2])
def test_c02_l2_guarantee(guarantee_run, alpha):
    rep, seconds = guarantee_run
    vals = _values(rep.records, "alpha_tilde_f", variant="l2", alpha=alpha)
    norm2 = lk_norm(vals, 2)
    upper, lower = norm2 <= alpha + 0.015, norm2 >= alpha - 0.05
    n_inf = int(sum(math.isinf(r["threshold"]) for r in rep.records
                    if r["variant"] == "l2" and r["alpha"] == alpha))
    ok = upper and lower and len(vals) == 500 and seconds < 600
    assert verdict(2, ok, f"alpha={alpha}: ||alpha_tilde||_2={norm2:.4f} in [{alpha - 0.05:.3f}, "
                          f"{alpha + 0.015:.3f}] upper={'ok' if upper else 'VIOLATED'} "
                          f"lower={'ok' if lower else 'VIOLATED'} infinite_thresholds={n_inf}/500 "
                          f"runtime={seconds:.0f}s")


@pytest.mark.parametrize("alpha", [0.1, 0.2])
def test_c03_split_marginal(guarantee_run, alpha):
    rep, _ = guarantee_run
    vals = _values(rep.records, "marginal_miscoverage", variant="split", alpha=alpha)
    mean = float(vals.mean())
    ok = abs(mean - alpha) <= 0.02 and len(vals) == 500
    assert verdict(3, ok, f"alpha={alpha}: mean marginal miscoverage={mean:.4f} (target {alpha}±0.02)")


def test_c04_width_similarity(quantile_runs):
    details, ok = [], True
    for name, rep in quantile_runs.items():
        w = {}
        for r in rep.records:
            w.setdefault(r["trial"], {})[r["variant"]] = r["width_at_test"]
        ratio = np.array([d["l2"] / d["split"] for d in w.values()])
        med = float(np.median(ratio))
        ok &= 0.90 <= med <= 1.35 and len(ratio) == 500
        details.append(f"{name} median ratio={med:.3f}")
    assert verdict(4, ok, "; ".join(details) + " (band [0.90, 1.35])")


def test_c05_bad_score_contrast(guarantee_run):
    rep, _ = guarantee_run
    hi_x = {v: _values([r for r in rep.records if r["test_x0"] > 8], "alpha_D_at_test",
                       variant=v, alpha=0.2) for v in ("split", "l2")}
    split_mean, prop_mean = float(hi_x["split"].mean()), float(hi_x["l2"].mean())
    ok = split_mean > 0.30 and prop_mean < 0.25
    assert verdict(5, ok, f"x>8 ({len(hi_x['l2'])} test points): split mean alpha_D={split_mean:.3f} "
                          f"(need >0.30), proposed mean alpha_D={prop_mean:.3f} (need <0.25)")


@pytest.mark.parametrize("eps", [0.3, 0.4])
def test_c06_tail_bound(guarantee_run, eps):
    rep, _ = guarantee_run
    vals = _values(rep.records, "alpha_tilde_f", variant="l2", alpha=0.2)
    tc = tail_bound_check(vals, 0.2, eps, 2)
    limit = markov_slack(tc.bound, len(vals))
    ok = tc.frequency <= limit
    assert verdict(6, ok, f"eps={eps}: frequency={tc.frequency:.4f} <= {limit:.4f} "
                          f"(bound {(0.2 / eps) ** 2:.4f} + slack)")


def test_c07_norm_ordering(guarantee_run, quantile_runs, multivariate_runs):
    reports = [guarantee_run[0], *quantile_runs.values(), *multivariate_runs[0].values()]
    lists = bad = 0
    for rep in reports:
        cells = {}
        for r in rep.records:
            cells.setdefault((r["variant"], r["alpha"], r["bandwidth"]), []).append(r)
        for recs in cells.values():
            for metric in rep.metrics:
                v = np.array([r[metric] for r in recs], dtype=float)
                v = v[~np.isnan(v)]
                if v.size == 0:
                    continue
                lists += 1
                n1, n2, n4 = (lk_norm(v, k) for k in (1, 2, 4))
                ordered = n1 <= n2 + 1e-12 and n2 <= n4 + 1e-12
                constant = bool(np.all(v == v[0]))
                equal = abs(n1 - n2) <= 1e-12 and abs(n2 - n4) <= 1e-12
                bad += (not ordered) or (equal != constant)
    assert verdict(7, bad == 0, f"{lists} record lists checked, {bad} violations")


def test_c08_rule_reductions():
    lk_bad = grouped_bad = 0
    for seed in range(100):
        inst = random_instance(np.random.default_rng(10_000 + seed))
        data = LabeledDataset(inst.x, np.zeros(len(inst.scores)))
        pc = pair_calibration(data, inst.functions, inst.extra, 2, inst.train, 2, inst.seed)
        t_l2 = calibrate_l2(pc, inst.scores, inst.alpha).threshold
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            t_lk = calibrate_lk(data, inst.functions, inst.extra, 2, inst.scores, inst.alpha,
                                inst.train, inst.seed).threshold
        lk_bad += t_lk != t_l2
        grouped_bad += calibrate_l2_grouped(pc, inst.scores, inst.alpha).threshold != t_l2
    ok = lk_bad == 0 and grouped_bad == 0
    assert verdict(8, ok, f"lk(k=2) mismatches={lk_bad}/100, grouped(r=2) mismatches={grouped_bad}/100")


def test_c09_multivariate(multivariate_runs):
    runs, seconds = multivariate_runs
    fails, cells = [], 0
    for name, rep in runs.items():
        for h in (5.0, 10.0, 15.0):
            for alpha in (0.05, 0.1, 0.15, 0.2, 0.25, 0.3):
                match = dict(variant="l2", alpha=alpha, bandwidth=h)
                vals = _values(rep.records, "alpha_bar_f", **match)
                n2 = lk_norm(vals, 2)
                cells += 1
                if not (alpha - 0.05 <= n2 <= alpha + 0.02 and len(vals) == 500):
                    fails.append(f"{name} h={h} a={alpha}: {n2:.4f} (n={len(vals)})")
    ok = not fails and seconds < 1800
    assert verdict(9, ok, f"{cells - len(fails)}/{cells} cells in [alpha-0.05, alpha+0.02], "
                          f"runtime={seconds:.0f}s" + (f"; out: {fails}" if fails else ""))


def test_c10_determinism(guarantee_run):
    rep, _ = guarantee_run
    cfg = ExperimentConfig.from_dict(rep.provenance["config"])
    again = run_simulation(cfg, threads=2)
    fields = list(rep.records[0])
    a, b = to_csv(rep.records, fields), to_csv(again.records, fields)
    ok = a.encode() == b.encode()
    assert verdict(10, ok, f"records file {len(a.encode())} bytes, byte-identical={ok}")
