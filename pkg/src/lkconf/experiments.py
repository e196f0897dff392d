"""Simulation and real-data experiment runners."""

from __future__ import annotations

import datetime as _dt
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import calibration as cal
from .config import STREAMS, ConfigError, ExperimentConfig, derive_seed
from .dgp import (SETTING1, SETTING2, FeatureLaw, LabeledDataset, SplitSpec, default_betas,
                  fit_scaling, load_csv, multivariate_oracle, split)
from .evaluation import (MonteCarloPanel, PredictionRule, _gaussian_miss, empirical_f_miscoverage,
                         empirical_local_miscoverage, lk_norm, tail_bound_check,
                         weighted_miscoverage)
from .functions import (FunctionSampler, KernelComponent, WeightFunction, approximate_gamma_min,
                        gamma_values)
from .scores import fit_knn_quantile, fit_linear_residual

log = logging.getLogger(__name__)

SIM_METRICS = ("alpha_tilde_f", "alpha_bar_f", "alpha_D_at_test", "marginal_miscoverage")
REAL_METRICS = ("alpha_hat_f", "alpha_local")
NORM_ORDERS = (1, 2, 4)


@dataclass
class Report:
    kind: str
    records: list
    aggregates: list
    provenance: dict = field(default_factory=dict)

    @property
    def metrics(self):
        return SIM_METRICS if self.kind == "simulation" else REAL_METRICS


def resolve_threads(threads=None) -> int:
    if threads:
        return max(1, int(threads))
    env = os.environ.get("LKCONF_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _group_size(variant: str, cfg: ExperimentConfig) -> int:
    return {"l2_grouped": cfg.r, "lk": cfg.k}.get(variant, 2)


def _norm_power(variant: str, cfg: ExperimentConfig) -> int:
    return cfg.k if variant == "lk" else 2


def _calibrate(variant, pc, scores, alpha, gamma_min):
    if variant == "l2":
        return cal.calibrate_l2(pc, scores, alpha)
    if variant == "l2_alt":
        return cal.calibrate_l2_alt(pc, scores, alpha)
    if variant == "l2_conservative":
        return cal.calibrate_l2_conservative(pc, scores, alpha, gamma_min)
    if variant == "l2_grouped":
        return cal.calibrate_l2_grouped(pc, scores, alpha)
    if variant == "lk":
        return cal.calibrate_lk_paired(pc, scores, alpha)
    return cal.calibrate_split_conformal(scores, alpha)


def scenario_oracle(cfg: ExperimentConfig):
    if cfg.scenario == "setting1":
        return SETTING1
    if cfg.scenario == "setting2":
        return SETTING2
    if cfg.scenario == "multivariate":
        return multivariate_oracle(default_betas(cfg.beta_seed))
    raise ConfigError("scenario", f"{cfg.scenario!r} is not a simulation scenario")


def _fit_scores(cfg: ExperimentConfig, train: LabeledDataset) -> dict:
    if cfg.score == "linear-residual":
        model = fit_linear_residual(train)
        return {a: model for a in cfg.alphas}
    return {a: fit_knn_quantile(train, a, cfg.k_neighbors) for a in cfg.alphas}


def _provenance(cfg: ExperimentConfig, extra: dict) -> dict:
    prov = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seed_derivation": "trial i: splitmix64(splitmix64(base_seed) ^ i); "
                           "experiment streams: same with index 2**40 + tag",
        "stream_indices": dict(STREAMS),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    prov.update(extra)
    return prov


# ---------------------------------------------------------------------------
# Simulation


class _SimContext:
    """Everything fixed across trials: training fit, panels, normalizer rows."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.oracle = scenario_oracle(cfg)
        law = self.oracle.feature_law
        train = self.oracle.sample(cfg.n_train, np.random.default_rng(derive_seed(cfg.base_seed, STREAMS["train"])))
        self.models = _fit_scores(cfg, train)
        shuffle = np.random.default_rng(derive_seed(cfg.base_seed, STREAMS["shuffle"]))
        self.train_x = train.features[shuffle.permutation(len(train))]
        if cfg.sampler == "uniform-box":
            self.center_law = FeatureLaw("uniform-box", law.low, law.high)
        else:
            self.center_law = law
        panel_seed = derive_seed(cfg.base_seed, STREAMS["panel"])
        self.panels = {}
        for a, model in self.models.items():
            key = id(model)
            if key not in self.panels:
                self.panels[key] = MonteCarloPanel(self.oracle, model, cfg.n_mc, panel_seed)
        self.gamma_min = {}
        if "l2_conservative" in cfg.variants:
            for h in cfg.bandwidths:
                sampler = FunctionSampler.single(cfg.kernel, h, law=law)
                self.gamma_min[h] = approximate_gamma_min(
                    sampler, self.train_x, 2, cfg.gamma_min_draws,
                    derive_seed(cfg.base_seed, STREAMS["gamma_min"]))
        self.m_max = max(cfg.n // _group_size(v, cfg) for v in cfg.variants)

    def trial(self, i: int) -> list:
        cfg = self.cfg
        seed = derive_seed(cfg.base_seed, i)
        rng = np.random.default_rng(seed)
        caldata = self.oracle.sample(cfg.n, rng)
        if cfg.sampler == "pool":
            pool = self.oracle.feature_law.sample(cfg.pool_size, rng)
            sampler = FunctionSampler((KernelComponent(cfg.kernel, 1.0),), pool=pool,
                                      replace=cfg.with_replacement)
            centers = sampler.sample_centers(self.m_max + 1, rng)
        else:
            centers = self.center_law.sample(self.m_max + 1, rng)
        test_law = self.center_law if cfg.test_source == "sampler" else self.oracle.feature_law
        test_x = test_law.sample(cfg.n_test, rng)
        test_mu = self.oracle.mean_fn(test_x)
        test_sd = self.oracle.sd_fn(test_x)
        pair_seed = int(rng.integers(2**63))

        score_cache = {}
        for model in self.models.values():
            if id(model) not in score_cache:
                score_cache[id(model)] = model.scores(caldata.features, caldata.outcomes)

        records = []
        for h in cfg.bandwidths:
            fs = [WeightFunction(cfg.kernel, c, h) for c in centers]
            extra_f = fs[-1]
            pcs = {}
            for v in cfg.variants:
                key = (_group_size(v, cfg), _norm_power(v, cfg))
                if key not in pcs:
                    m = cfg.n // key[0]
                    pcs[key] = cal.pair_calibration(caldata, fs[:m], extra_f, key[0], self.train_x,
                                                    key[1], pair_seed)
            extra_gamma2 = float(gamma_values([extra_f], self.train_x, 2)[0])
            panel_f = {}
            for alpha in cfg.alphas:
                model = self.models[alpha]
                panel = self.panels[id(model)]
                if id(panel) not in panel_f:
                    panel_f[id(panel)] = extra_f(panel.x)
                fv = panel_f[id(panel)]
                scores = score_cache[id(model)]
                lo_t, hi_t = model.band(test_x)
                for v in cfg.variants:
                    key = (_group_size(v, cfg), _norm_power(v, cfg))
                    pc = pcs[key]
                    res = _calibrate(v, pc, scores, alpha, self.gamma_min.get(h))
                    t = res.threshold
                    miss = panel.miss(t)
                    bar = weighted_miscoverage(fv, miss)
                    gamma = extra_gamma2 if v == "split" else pc.extra_gamma
                    tilde = weighted_miscoverage(fv, miss, gamma).value
                    if math.isinf(t):
                        at_test = np.zeros(cfg.n_test)
                        widths = np.full(cfg.n_test, math.inf)
                    else:
                        at_test = _gaussian_miss(lo_t - t, hi_t + t, test_mu, test_sd)
                        widths = (hi_t - lo_t) + 2 * t
                    marginal = float(np.mean(miss))
                    for j in range(cfg.n_test):
                        records.append({
                            "trial": i, "seed": seed, "test_index": j,
                            "test_x0": float(test_x[j, 0]),
                            "variant": v, "alpha": float(alpha), "bandwidth": float(h),
                            "threshold": float(t),
                            "alpha_D_at_test": float(at_test[j]),
                            "alpha_bar_f": bar.value if bar.defined else math.nan,
                            "alpha_tilde_f": float(tilde),
                            "width_at_test": float(widths[j]),
                            "marginal_miscoverage": marginal,
                            "gamma_f": float(gamma),
                        })
        return records


def run_simulation(cfg: ExperimentConfig, threads=None) -> Report:
    """Train once, then run ``cfg.trials`` independent calibration trials.

    Trial ``i`` draws everything from its own seed, so the result does not
    depend on the number of worker threads or their scheduling.
    """
    cfg.validate()
    ctx = _SimContext(cfg)
    nthreads = resolve_threads(threads)
    log.info("simulate %s: %d trials on %d threads", cfg.scenario, cfg.trials, nthreads)
    if nthreads == 1:
        per_trial = [ctx.trial(i) for i in range(cfg.trials)]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            per_trial = list(pool.map(ctx.trial, range(cfg.trials)))
    records = [r for rs in per_trial for r in rs]
    extra = {}
    if cfg.scenario == "multivariate":
        extra["betas"] = ctx.oracle.params["betas"].tolist()
    if ctx.gamma_min:
        extra["gamma_min"] = {repr(h): g for h, g in ctx.gamma_min.items()}
    report = Report("simulation", records, [], _provenance(cfg, extra))
    report.aggregates = aggregate(report)
    return report


# ---------------------------------------------------------------------------
# Real data


def run_real_data(cfg: ExperimentConfig, path=None, threads=None) -> Report:
    """Four-way split protocol on a labeled CSV file (Abalone schema by default).

    Features are standardized against the function-construction split; the
    functions are Gaussian kernels centered at rows of that split, used once
    each.  Every test row serves as a kernel center for the empirical
    f-weighted and local miscoverage estimates.
    """
    cfg.validate()
    path = path or cfg.csv_path
    if not path:
        raise ConfigError("csv_path", "no CSV file given")
    data = load_csv(path)
    sizes = list(cfg.split_sizes)
    if sum(sizes) > len(data):
        raise ConfigError("split_sizes", f"sum {sum(sizes)} exceeds {len(data)} rows")
    train, caldata, fpool, test = split(data, SplitSpec(tuple(sizes), derive_seed(cfg.base_seed, STREAMS["split"])))
    scaling = fit_scaling(fpool)
    rescale = lambda d: LabeledDataset(scaling.apply(d.features), d.outcomes)
    train, caldata, fpool, test = map(rescale, (train, caldata, fpool, test))

    variants = list(cfg.variants)
    models = _fit_scores(cfg, train)
    shuffle = np.random.default_rng(derive_seed(cfg.base_seed, STREAMS["shuffle"]))
    train_x = train.features[shuffle.permutation(len(train))]
    fn_rng = np.random.default_rng(derive_seed(cfg.base_seed, STREAMS["functions"]))
    m_max = max(len(caldata) // _group_size(v, cfg) for v in variants)
    if len(fpool) < m_max + 1:
        raise ConfigError("split_sizes", f"function split has {len(fpool)} rows, needs {m_max + 1}")
    centers = fpool.features[fn_rng.permutation(len(fpool))[: m_max + 1]]
    pair_seed = derive_seed(cfg.base_seed, STREAMS["functions"] + 1)
    gamma_min = {}
    if "l2_conservative" in variants:
        for h in cfg.bandwidths:
            sampler = FunctionSampler.single(cfg.kernel, h, pool=fpool.features)
            gamma_min[h] = approximate_gamma_min(sampler, train_x, 2, cfg.gamma_min_draws,
                                                 derive_seed(cfg.base_seed, STREAMS["gamma_min"]))

    def run_bandwidth(h):
        fs = [WeightFunction(cfg.kernel, c, h) for c in centers]
        probes = [WeightFunction(cfg.kernel, x, h) for x in test.features]
        probe_gamma = gamma_values(probes, train_x, 2)
        out = []
        pcs = {}
        for alpha in cfg.alphas:
            model = models[alpha]
            scores = model.scores(caldata.features, caldata.outcomes)
            for v in variants:
                key = (_group_size(v, cfg), _norm_power(v, cfg))
                if key not in pcs:
                    m = len(caldata) // key[0]
                    pcs[key] = cal.pair_calibration(caldata, fs[:m], fs[m_max], key[0], train_x, key[1], pair_seed)
                res = _calibrate(v, pcs[key], scores, alpha, gamma_min.get(h))
                rule = PredictionRule(model, res.threshold)
                for j, (f, g) in enumerate(zip(probes, probe_gamma)):
                    local = empirical_local_miscoverage(test, test.features[j], cfg.local_radius, rule)
                    out.append({
                        "test_index": j, "variant": v, "alpha": float(alpha), "bandwidth": float(h),
                        "threshold": float(res.threshold),
                        "alpha_hat_f": empirical_f_miscoverage(test, f, float(g), rule),
                        "alpha_local": math.nan if local is None else local,
                        "gamma_f": float(g),
                    })
        return out

    nthreads = resolve_threads(threads)
    if nthreads == 1:
        chunks = [run_bandwidth(h) for h in cfg.bandwidths]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            chunks = list(pool.map(run_bandwidth, cfg.bandwidths))
    records = [r for c in chunks for r in c]
    extra = {"scaling": scaling.to_dict(), "rows": len(data),
             "function_split": f"{m_max} calibration functions + 1 extra from {len(fpool)} rows "
                               "(extra function assumed to come from the same split)"}
    if gamma_min:
        extra["gamma_min"] = {repr(h): g for h, g in gamma_min.items()}
    report = Report("real-data", records, [], _provenance(cfg, extra))
    report.aggregates = aggregate(report)
    return report


# ---------------------------------------------------------------------------
# Aggregation


def aggregate(report: Report) -> list:
    """Long-format summary rows keyed by (variant, alpha, bandwidth, metric, stat, param)."""
    eps = report.provenance.get("config", {}).get("tail_epsilons", [])
    cells: dict = {}
    for rec in report.records:
        cells.setdefault((rec["variant"], rec["alpha"], rec["bandwidth"]), []).append(rec)
    rows = []
    for (v, a, h), recs in sorted(cells.items()):
        def row(metric, stat, param, value):
            rows.append({"variant": v, "alpha": a, "bandwidth": h, "metric": metric,
                         "stat": stat, "param": float(param), "value": float(value)})

        for metric in report.metrics:
            vals = np.array([r[metric] for r in recs], dtype=float)
            ok = vals[~np.isnan(vals)]
            row(metric, "count", 0, ok.size)
            row(metric, "undefined", 0, vals.size - ok.size)
            if ok.size == 0:
                continue
            row(metric, "mean", 0, float(np.mean(ok)))
            for k in NORM_ORDERS:
                row(metric, "lk_norm", k, lk_norm(ok, k))
            if metric in ("alpha_tilde_f", "alpha_bar_f", "alpha_hat_f"):
                for e in eps:
                    if e >= a:
                        tc = tail_bound_check(ok, a, e, 2)
                        row(metric, "tail_frequency", e, tc.frequency)
                        row(metric, "tail_bound", e, tc.bound)
        if "width_at_test" in recs[0]:
            w = np.array([r["width_at_test"] for r in recs], dtype=float)
            row("width_at_test", "median", 0, float(np.median(w)))
    return rows
