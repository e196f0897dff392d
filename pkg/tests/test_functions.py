import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from lkconf.dgp import UNIT_INTERVAL_LAW
from lkconf.functions import (FunctionSampler, FunctionSpaceError, KernelComponent,
                              approximate_gamma_min, assigned_weights, ball_indicator,
                              constant_function, expected_weight_oracle, gamma_values,
                              gaussian_kernel, normalize, sample_functions, weight_matrix)

SQRT2 = math.sqrt(2)


class TestKernels:
    def test_gaussian_center(self):
        assert gaussian_kernel([3.0, 1.0], 2.0)([3.0, 1.0])[0] == 1.0

    def test_gaussian_sqrt2(self):
        f = gaussian_kernel([4.0], SQRT2)
        assert f([[2.0], [6.0]]) == pytest.approx([math.exp(-1)] * 2, abs=1e-15)
        assert math.exp(-1) == pytest.approx(0.367879, abs=1e-6)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2), st.floats(0.01, 100))
    def test_gaussian_range(self, x, h):
        v = gaussian_kernel([0.0, 0.0], h)(np.array([x]))[0]
        assert 0.0 <= v <= 1.0

    def test_bad_bandwidth(self):
        with pytest.raises(FunctionSpaceError):
            gaussian_kernel([0.0], 0.0)
        with pytest.raises(FunctionSpaceError):
            ball_indicator([0.0], -1.0)

    def test_ball(self):
        f = ball_indicator([1.0, 1.0], 0.5)
        assert f([1.0, 1.0])[0] == 1.0
        assert f([1.0, 1.5])[0] == 1.0
        assert f([1.0, 1.5 + 1e-9])[0] == 0.0

    def test_ball_boundary_3_4_5(self):
        assert ball_indicator([0.0, 0.0], 5.0)([3.0, 4.0])[0] == 1.0

    def test_weight_matrix_matches_calls(self, rng):
        fs = [gaussian_kernel(rng.normal(size=3), 1.5) for _ in range(4)]
        fs += [ball_indicator(rng.normal(size=3), 1.0) for _ in range(3)]
        x = rng.normal(size=(25, 3))
        mat = weight_matrix(fs, x)
        ref = np.stack([f(x) for f in fs])
        assert np.allclose(mat, ref, atol=1e-12)
        idx = rng.integers(0, 25, size=(7, 2))
        aw = assigned_weights(fs, x, idx)
        assert np.allclose(aw, np.take_along_axis(ref, idx, axis=1), atol=1e-12)


class TestSampling:
    def test_pool_without_replacement(self, rng):
        pool = rng.normal(size=(12, 2))
        s = FunctionSampler.single("gaussian", 1.0, pool=pool, replace=False)
        fs = sample_functions(s, 12, 3)
        centers = np.stack([f.center for f in fs])
        assert sorted(map(tuple, centers)) == sorted(map(tuple, pool))

    def test_pool_too_small(self, rng):
        s = FunctionSampler.single("gaussian", 1.0, pool=rng.normal(size=(3, 1)), replace=False)
        with pytest.raises(FunctionSpaceError):
            sample_functions(s, 4, 0)

    def test_empty_pool(self):
        with pytest.raises(FunctionSpaceError):
            FunctionSampler.single("gaussian", 1.0, pool=np.empty((0, 1)))

    def test_feature_law_centers(self):
        s = FunctionSampler.single("gaussian", SQRT2, law=UNIT_INTERVAL_LAW)
        fs = sample_functions(s, 500, 1)
        c = np.array([f.center[0] for f in fs])
        assert c.min() >= 0 and c.max() <= 10

    def test_deterministic(self):
        s = FunctionSampler.single("gaussian", SQRT2, law=UNIT_INTERVAL_LAW)
        a, b = sample_functions(s, 20, 9), sample_functions(s, 20, 9)
        assert all(np.array_equal(f.center, g.center) for f, g in zip(a, b))

    def test_mixture(self):
        comps = (KernelComponent("gaussian", 1.0, 3.0), KernelComponent("ball", 2.0, 1.0))
        s = FunctionSampler(comps, law=UNIT_INTERVAL_LAW)
        fs = sample_functions(s, 4000, 2)
        share = np.mean([f.kind == "gaussian" for f in fs])
        assert abs(share - 0.75) < 3 * math.sqrt(0.75 * 0.25 / 4000)

    @given(st.integers(1, 30), st.integers(0, 10_000), st.booleans())
    def test_pool_membership(self, count, seed, replace):
        pool = np.random.default_rng(seed).normal(size=(30, 2))
        s = FunctionSampler.single("ball", 1.0, pool=pool, replace=replace)
        rows = {tuple(r) for r in pool}
        assert all(tuple(f.center) in rows for f in sample_functions(s, count, seed))


class TestGamma:
    def test_constant(self, rng):
        x = rng.uniform(size=(11, 1))
        for k in (2, 3, 4):
            assert normalize(constant_function(), x, k).gamma == pytest.approx(1.0, abs=1e-15)

    def test_hand_case(self):
        g = normalize(ball_indicator([2.0], 1.0), np.array([[1.0], [2.0], [3.0], [4.0]]), 2).gamma
        assert g**2 == pytest.approx(2 / 3, abs=1e-15)

    def test_too_few_rows(self):
        with pytest.raises(FunctionSpaceError):
            normalize(constant_function(), np.array([[1.0]]), 2)

    @given(st.integers(0, 10_000), st.integers(2, 4), st.integers(4, 40))
    def test_lower_bound(self, seed, k, n):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 10, size=(n, 1))
        f = ball_indicator([rng.uniform(-20, 30)], rng.uniform(0.1, 2))
        g = normalize(f, x, k).gamma
        assert g > 0
        assert g**k >= 1.0 / (n // k + 1) - 1e-15

    @given(st.integers(0, 10_000), st.floats(0.01, 100))
    def test_scale_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 10, size=(30, 1))
        f = gaussian_kernel([rng.uniform(0, 10)], rng.uniform(0.3, 3))
        pts = rng.uniform(0, 10, size=(15, 1))
        a = normalize(f, x, 2)
        b = normalize(f.scaled(c), x, 2)
        assert np.allclose(a(pts), b(pts), rtol=1e-12, atol=1e-15)

    def test_gamma_squared_tracks_mean_squared(self):
        n_train, h, center = 5000, SQRT2, 5.0
        f = gaussian_kernel([center], h)
        x = UNIT_INTERVAL_LAW.sample(n_train, np.random.default_rng(31))
        g2 = normalize(f, x, 2).gamma ** 2
        exact = h * math.sqrt(2 * math.pi) / 10 * (norm.cdf(5 / h) - norm.cdf(-5 / h))
        prods = f(x[0::2]) * f(x[1::2])
        m = prods.size
        se = prods.std(ddof=1) / math.sqrt(m)
        bias = (1 - exact**2) / (m + 1)
        assert abs(g2 - exact**2 - bias) <= 3 * se

    def test_gamma_min(self):
        x = UNIT_INTERVAL_LAW.sample(100, np.random.default_rng(0))
        s = FunctionSampler.single("gaussian", SQRT2, law=UNIT_INTERVAL_LAW)
        gmin = approximate_gamma_min(s, x, 2, draws=500, seed=1)
        fs = sample_functions(s, 500, 1)
        assert gmin == pytest.approx(gamma_values(fs, x, 2).min(), abs=0)


class TestExpectedWeight:
    def test_constant(self):
        est = expected_weight_oracle(constant_function(), UNIT_INTERVAL_LAW, 100, 0)
        assert est.value == 1.0

    def test_gaussian_closed_form(self):
        h = SQRT2
        exact = h * math.sqrt(2 * math.pi) / 10 * (norm.cdf(5 / h) - norm.cdf(-5 / h))
        assert exact == pytest.approx(0.354346, abs=1e-6)
        est = expected_weight_oracle(gaussian_kernel([5.0], h), UNIT_INTERVAL_LAW, 1_000_000, 4)
        assert abs(est.value - exact) <= 3 * est.stderr

    def test_ball(self):
        est = expected_weight_oracle(ball_indicator([5.0], 1.0), UNIT_INTERVAL_LAW, 1_000_000, 5)
        assert abs(est.value - 0.2) <= 3 * est.stderr
