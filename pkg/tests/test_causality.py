import math
from datetime import date

import numpy as np
import pytest
from scipy.stats import spearmanr

from invherd.causality import (CAUSALITY_LAGS, autocorrelation, causality_lags, integrated_causality,
                               lagged_correlation_columns,
                               integrated_causality_panel, lagged_cross_correlation)
from invherd.errors import DataError, ZeroVarianceError
from invherd.market_data import IntervalGrid
from invherd.synthgen import GroupSpec, SynthConfig, generate_panel


def _grid15(days):
    return IntervalGrid.build(IntervalGrid.business_days(date(2001, 1, 2), days), "15m")


def test_iid_acf_small(rng):
    x = rng.standard_normal(10000)
    (k, a1), *_ = autocorrelation(x, 3)
    assert k == 1 and abs(a1) < 4 / math.sqrt(10000)


def test_ar1_acf(rng):
    e = rng.standard_normal(20000)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, len(e)):
        x[t] = 0.5 * x[t - 1] + e[t]
    acf = dict(autocorrelation(x, 2))
    assert acf[1] == pytest.approx(0.5, abs=0.05)
    assert acf[2] == pytest.approx(0.25, abs=0.05)


def test_alternating_acf():
    x = np.tile([1.0, -1.0], 50)
    acf = dict(autocorrelation(x, 2))
    assert acf[1] == pytest.approx(-1.0)
    assert acf[2] == pytest.approx(1.0)


def test_acf_errors():
    with pytest.raises(ZeroVarianceError):
        autocorrelation(np.ones(50), 3)
    with pytest.raises(DataError):
        autocorrelation(np.arange(5.0), 3)


def test_acf_skips_overnight_pairs():
    grid = _grid15(2)
    x = np.r_[np.zeros(33), 1.0, 1.0, np.zeros(33)]  # the only adjacent 1,1 pair straddles the night
    with_night = dict(autocorrelation(x, 1, grid, exclude_overnight=False))[1]
    without = dict(autocorrelation(x, 1, grid))[1]
    assert with_night > 0 > without


def test_xcorr_peak_at_minus_one(rng):
    r = rng.standard_normal(10000)
    v = np.r_[0.0, r[:-1]]  # v(t) = r(t-1)
    lc = lagged_cross_correlation(v, r, 3)
    assert lc.at(-1) == pytest.approx(1.0)
    others = [lc.at(k) for k in (-3, -2, 0, 1, 2, 3)]
    assert max(abs(x) for x in others) < 4 / math.sqrt(10000)
    assert lc.n_pairs.tolist() == [9997, 9998, 9999, 10000, 9999, 9998, 9997]
    np.testing.assert_allclose(lc.sigma, 1 / np.sqrt(lc.n_pairs))


def test_xcorr_symmetry(rng):
    v, r = rng.standard_normal(500), rng.standard_normal(500)
    a = lagged_cross_correlation(v, r, 4)
    b = lagged_cross_correlation(r, v, 4)
    np.testing.assert_allclose(a.values, b.values[::-1], atol=1e-14)
    assert a.at(0) == pytest.approx(np.corrcoef(v, r)[0, 1])


def test_xcorr_independent(rng):
    lc = lagged_cross_correlation(rng.standard_normal(10000), rng.standard_normal(10000), 10)
    assert np.max(np.abs(lc.values)) < 4 / math.sqrt(10000)


def test_xcorr_flags_constant_window():
    v = np.r_[np.ones(10), np.arange(10.0)]
    r = np.arange(20.0) ** 2
    lc = lagged_cross_correlation(v, r, [-9, 0])
    # lag -9 overlaps v[9:], which is non-constant; lag +9 would use v[:11]
    lc2 = lagged_cross_correlation(v, r, [9])
    assert lc.flagged == []
    assert lc2.flagged == [] and not math.isnan(lc2.values[0])
    lc3 = lagged_cross_correlation(np.r_[np.ones(12), np.arange(8.0)], r, [8])
    assert lc3.flagged == [8] and math.isnan(lc3.values[0])


def test_lag_too_large():
    with pytest.raises(DataError):
        lagged_cross_correlation(np.arange(10.0), np.arange(10.0) ** 2, [5])


def test_integrated_responder(rng):
    grid = _grid15(250)
    r = rng.standard_normal(len(grid))
    v = sum(np.r_[np.zeros(k), r[: len(r) - k]] for k in range(1, 6))  # moving sum of the past five returns
    ic = integrated_causality(v, r, grid, "X")
    assert ic.past_sum > 10 * ic.past_sigma
    assert abs(ic.future_sum) < 3 * ic.future_sigma
    assert ic.past_sum == pytest.approx(5 / math.sqrt(5), abs=0.1)
    # pairs per lag k: (34 - k) same-session pairs on each of 250 days; v has acf (5 - s)/5
    n = np.array([(34 - k) * 250 for k in range(1, 11)], dtype=float)
    acf = np.clip(5 - np.arange(10), 0, None) / 5
    cov = acf[np.abs(np.subtract.outer(np.arange(10), np.arange(10)))]
    expected = math.sqrt((1 / np.sqrt(n)) @ cov @ (1 / np.sqrt(n)))
    assert ic.future_sigma == pytest.approx(expected, rel=0.05)
    assert ic.past_sigma == pytest.approx(expected, rel=0.05)
    assert ic.sync_sigma == pytest.approx(1 / math.sqrt(8500))


def test_sum_sigma_independent_limit(rng):
    v, r = rng.standard_normal(8500), rng.standard_normal(8500)
    ic = integrated_causality(v, r)
    n = 8500 - np.arange(1, 11)
    assert ic.future_sigma == pytest.approx(math.sqrt(np.sum(1 / n)), rel=0.1)


def test_persistent_null_coverage():
    # inventories with strong autocorrelation but no link to future returns
    rng = np.random.default_rng(3)
    n, firms = 3400, 400
    grid = _grid15(100)
    r = rng.standard_normal(n)
    e = rng.standard_normal((n + 5, firms))
    v = sum(e[5 - j: 5 - j + n] for j in range(6))
    _, _, _, summ = integrated_causality_panel(v, r, [str(i) for i in range(firms)], grid)
    inside = np.mean([abs(s.future_sum) < 2 * s.future_sigma for s in summ])
    naive = math.sqrt(np.sum(1 / ((34 - np.arange(1, 11)) * 100)))
    assert all(s.future_sigma > 1.5 * naive for s in summ)
    assert 0.92 <= inside <= 0.98


def test_integrated_null_and_negation(rng):
    n = 8500
    v, r = rng.standard_normal(n), rng.standard_normal(n)
    ic = integrated_causality(v, r)
    bound = 4 * math.sqrt(10) / math.sqrt(n)
    assert abs(ic.past_sum) < bound and abs(ic.future_sum) < bound
    neg = integrated_causality(-v, r)
    assert neg.past_sum == pytest.approx(-ic.past_sum, abs=1e-14)
    assert neg.future_sum == pytest.approx(-ic.future_sum, abs=1e-14)
    assert neg.sync == pytest.approx(-ic.sync, abs=1e-15)


def test_causality_requires_15m_grid():
    with pytest.raises(DataError):
        causality_lags(IntervalGrid.build(IntervalGrid.business_days(date(2001, 1, 2), 30), "1d"))
    assert causality_lags(None).tolist() == list(range(-CAUSALITY_LAGS, CAUSALITY_LAGS + 1))
    with pytest.raises(DataError):
        integrated_causality(np.arange(15.0), np.arange(15.0) ** 2)


def test_panel_matches_single_firm(rng):
    grid = _grid15(20)
    v = rng.standard_normal((len(grid), 3))
    r = rng.standard_normal(len(grid))
    lags, prof, n_pairs, summaries = integrated_causality_panel(v, r, ["a", "b", "c"], grid)
    for j, s in enumerate(summaries):
        single = integrated_causality(v[:, j], r, grid, s.firm)
        assert s.firm == single.firm
        for name in ("sync", "past_sum", "future_sum", "past_sigma", "future_sigma", "sync_sigma"):
            assert getattr(s, name) == pytest.approx(getattr(single, name), abs=1e-14)


def test_synthetic_responders_rank_association():
    rhos = np.linspace(0.2, 0.5, 7)
    groups = [GroupSpec(1 / 14, float(x), 1e5) for x in rhos] + [GroupSpec(1 / 14, -float(x), 1e5) for x in rhos]
    cfg = SynthConfig(n_firms=70, n_intervals=34 * 100, groups=groups, horizon="15m", response_span=6, seed=1)
    panel, ret, truth = generate_panel(cfg)
    _, _, _, summ = integrated_causality_panel(panel.values, ret.values, panel.firms, panel.grid)
    sync = [s.sync for s in summ]
    past = [s.past_sum for s in summ]
    assert spearmanr(sync, past)[0] >= 0.9
    assert all(np.sign(s.sync) == np.sign(s.past_sum) for s in summ)


def test_lag_sums_match_direct_masked_pearson(rng):
    grid = _grid15(12)
    T = len(grid)
    v = rng.standard_normal((T, 3)) + 5.0
    r = rng.standard_normal(T)
    lags = [-7, -1, 0, 2, 9]
    values, n_pairs = lagged_correlation_columns(v, r, lags, grid)
    for i, lag in enumerate(lags):
        k = abs(lag)
        mask = grid.same_session(k) if k else np.ones(T, bool)
        for j in range(3):
            a, b = (v[: T - k, j], r[k:]) if lag >= 0 else (v[k:, j], r[: T - k])
            assert values[i, j] == pytest.approx(np.corrcoef(a[mask], b[mask])[0, 1], abs=1e-12)
        assert n_pairs[i] == mask.sum()


def test_paired_return_matrix_matches_columns(rng):
    grid = _grid15(10)
    v = rng.standard_normal((len(grid), 4))
    r = rng.standard_normal((len(grid), 4))
    joint, _ = lagged_correlation_columns(v, r, [-3, 0, 3], grid)
    for j in range(4):
        single, _ = lagged_correlation_columns(v[:, j], r[:, j], [-3, 0, 3], grid)
        np.testing.assert_allclose(joint[:, j], single[:, 0], atol=1e-14)
    with pytest.raises(DataError):
        lagged_correlation_columns(v, r[:, :2], [0], grid)
