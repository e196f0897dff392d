import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lkconf.dgp import LabeledDataset, gen_setting2
from lkconf.scores import (Interval, LinearResidualModel, RankDeficientError, ScoreError,
                           fit_knn_quantile, fit_linear_residual, score, set_interval)


def _line():
    return fit_linear_residual(LabeledDataset(np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 1.0, 2.0])))


class TestLinearResidual:
    def test_collinear_points(self):
        m = _line()
        assert m.intercept == pytest.approx(0, abs=1e-12)
        assert m.coef[0] == pytest.approx(1, abs=1e-12)
        assert score(m, [1.5], 2.0) == pytest.approx(0.5, abs=1e-12)

    def test_zero_at_prediction(self, rng):
        m = fit_linear_residual(gen_setting2(100, 0))
        x = rng.uniform(0, 10, size=(20, 1))
        assert np.allclose(m.scores(x, m.predict(x)), 0.0)

    def test_duplicate_rows(self):
        d = gen_setting2(50, 3)
        dd = LabeledDataset(np.vstack([d.features, d.features]), np.concatenate([d.outcomes, d.outcomes]))
        a, b = fit_linear_residual(d), fit_linear_residual(dd)
        assert a.intercept == pytest.approx(b.intercept, rel=1e-10)
        assert np.allclose(a.coef, b.coef, rtol=1e-10)

    def test_rank_deficient_names_columns(self, rng):
        x = rng.normal(size=(20, 3))
        x[:, 2] = 2 * x[:, 0]
        with pytest.raises(RankDeficientError) as exc:
            fit_linear_residual(LabeledDataset(x, rng.normal(size=20)))
        assert exc.value.columns == ["x2"]

    def test_too_few_rows(self):
        with pytest.raises(ScoreError):
            fit_linear_residual(LabeledDataset(np.zeros((2, 2)), np.zeros(2)))

    def test_known_values(self):
        m = LinearResidualModel(1.0, np.array([0.0]))
        assert score(m, [3.0], 4.0) == 3.0
        assert score(m, [3.0], 1.0) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(ScoreError):
            score(_line(), [1.0, 2.0], 0.0)


class TestKNNQuantile:
    def _model(self, alpha=0.2, k=50):
        return fit_knn_quantile(gen_setting2(300, 1), alpha, k)

    def test_inside_band_is_zero(self):
        m = self._model()
        lo, hi = m.band(np.array([[4.0]]))
        assert score(m, [4.0], 0.5 * (lo[0] + hi[0])) == 0.0
        assert score(m, [4.0], lo[0]) == 0.0 and score(m, [4.0], hi[0]) == 0.0

    def test_above_band(self):
        m = self._model()
        _, hi = m.band(np.array([[4.0]]))
        assert score(m, [4.0], hi[0] + 2) == pytest.approx(2.0, abs=1e-12)

    def test_all_neighbors_is_global_quantile(self):
        d = gen_setting2(101, 4)
        alpha = 0.1
        m = fit_knn_quantile(d, alpha, len(d))
        ys = sorted(d.outcomes.tolist())
        n = len(ys)
        lo_rank = max(1, math.ceil(alpha / 2 * n))
        hi_rank = max(1, math.ceil((1 - alpha / 2) * n))
        lo, hi = m.band(np.array([[3.0], [9.5]]))
        assert lo.tolist() == [ys[lo_rank - 1]] * 2
        assert hi.tolist() == [ys[hi_rank - 1]] * 2

    def test_tie_break_lowest_index(self):
        x = np.array([[0.0], [2.0], [1.0], [3.0]])
        y = np.array([10.0, 20.0, 30.0, 40.0])
        m = fit_knn_quantile(LabeledDataset(x, y), 0.5, 2)
        # rows 0 and 1 are both at distance 1 from x=1 behind row 2
        assert sorted(m.neighbors(np.array([[1.0]]))[0].tolist()) == [0, 2]

    def test_too_many_neighbors(self):
        with pytest.raises(ScoreError):
            fit_knn_quantile(gen_setting2(10, 0), 0.2, 11)


class TestSetInterval:
    def test_residual(self):
        m = LinearResidualModel(2.0, np.array([0.0]))
        assert set_interval(m, [7.0], 1.0) == Interval(1.0, 3.0)

    def test_infinite(self):
        iv = set_interval(_line(), [1.0], math.inf)
        assert iv.lower == -math.inf and iv.upper == math.inf
        assert 1e300 in iv

    def test_negative_threshold(self):
        with pytest.raises(ScoreError):
            set_interval(_line(), [1.0], -0.1)

    def test_duality_random(self, rng):
        models = [fit_linear_residual(gen_setting2(200, 0)), fit_knn_quantile(gen_setting2(200, 0), 0.2, 30)]
        for m in models:
            x = rng.uniform(0, 10, size=(10_000, 1))
            y = rng.normal(5, 8, size=10_000)
            t = rng.exponential(3, size=10_000)
            lo, hi = m.band(x)
            inside = (lo - t <= y) & (y <= hi + t)
            assert np.array_equal(inside, m.scores(x, y) <= t)


@st.composite
def _knn_case(draw):
    n = draw(st.integers(5, 30))
    seed = draw(st.integers(0, 2**31))
    k = draw(st.integers(1, n))
    alpha = draw(st.floats(0.02, 0.98))
    return gen_setting2(n, seed), k, alpha


@given(_knn_case(), st.floats(0, 10), st.floats(-30, 30), st.floats(0, 20), st.floats(0, 20))
def test_nonnegative_and_nested(case, x, y, t1, t2):
    d, k, alpha = case
    for m in (fit_linear_residual(d), fit_knn_quantile(d, alpha, k)):
        s = score(m, [x], y)
        assert s >= 0
        a, b = sorted((t1, t2))
        ia, ib = set_interval(m, [x], a), set_interval(m, [x], b)
        assert ib.lower <= ia.lower <= ia.upper <= ib.upper
        assert (y in ia) == (s <= a)


@given(st.floats(-50, 50), st.floats(0.01, 5))
def test_piecewise_linear_in_y(y, step):
    m = fit_knn_quantile(gen_setting2(60, 0), 0.2, 20)
    lo, hi = m.band(np.array([[5.0]]))
    s0, s1 = score(m, [5.0], y), score(m, [5.0], y + step)
    if y >= hi[0]:
        assert s1 - s0 == pytest.approx(step, abs=1e-9)
    elif y + step <= lo[0]:
        assert s0 - s1 == pytest.approx(step, abs=1e-9)
    else:
        assert abs(s1 - s0) <= step + 1e-9
