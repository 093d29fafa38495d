import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invherd.classify import (GroupLabel, census, classify_firms, classify_rho, fit_one_factor, significance_sigma,
                              size_proxies, size_proxy, transition_matrix)
from invherd.errors import DataError, UnknownFirmError
from invherd.market_data import IntervalGrid, InventoryPanel, ReturnSeries
from invherd.synthgen import GroupSpec, generate_panel

from conftest import mixed_config, trade

R, U, T, E = GroupLabel.REVERSING, GroupLabel.UNCATEGORIZED, GroupLabel.TRENDING, GroupLabel.EXITED


def _pair(v, r):
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    grid = IntervalGrid.build(IntervalGrid.business_days(date(2001, 1, 2), len(r)), "1d")
    panel = InventoryPanel(grid, [f"F{i}" for i in range(v.shape[1])], v, v != 0)
    returns = ReturnSeries(grid, np.asarray(r, float), np.ones(len(r)), np.zeros(len(r), bool))
    return panel, returns


def test_noiseless_fit(rng):
    r = rng.normal(0, 0.02, 300)
    (fit,) = fit_one_factor(*_pair(2 * r, r))
    assert fit.gamma == pytest.approx(2.0)
    assert fit.rho == pytest.approx(1.0)
    assert fit.residual_std == pytest.approx(0.0, abs=1e-15)


def test_null_fit_small_rho(rng):
    (fit,) = fit_one_factor(*_pair(rng.standard_normal(10000), rng.standard_normal(10000)))
    assert abs(fit.rho) < 4 / math.sqrt(10000)


def test_equal_noise_gives_minus_inverse_sqrt2(rng):
    r = rng.standard_normal(200000)
    (fit,) = fit_one_factor(*_pair(-r + rng.standard_normal(len(r)), r))
    assert fit.rho == pytest.approx(-1 / math.sqrt(2), abs=0.01)


def test_residuals_orthogonal_to_returns(rng):
    r = rng.standard_normal(500)
    v = 3 * r[:, None] + rng.standard_normal((500, 3))
    for fit, col in zip(fit_one_factor(*_pair(v, r)), v.T):
        resid = col - fit.gamma * r
        assert abs(np.corrcoef(resid, r)[0, 1]) <= 1e-10
        assert np.sign(fit.gamma) == np.sign(fit.rho)


def test_degenerate_returns():
    with pytest.raises(DataError):
        fit_one_factor(*_pair(np.arange(5.0), np.zeros(5)))


def test_threshold_examples():
    s = significance_sigma(250)
    assert 2 * s == pytest.approx(0.1265, abs=1e-4)
    assert classify_rho(0.20, s) is T
    assert classify_rho(-0.10, s) is U
    assert classify_rho(-0.20, s) is R


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e6), st.floats(-1.5, 1.5))
def test_scale_and_sign_invariance(seed, c, beta):
    r_ = np.random.default_rng(seed)
    r = r_.standard_normal(250)
    v = beta * r + r_.standard_normal(250)
    (f0,) = fit_one_factor(*_pair(v, r))
    (fc,) = fit_one_factor(*_pair(c * v, r))
    (fn,) = fit_one_factor(*_pair(-v, r))
    assert fc.rho == pytest.approx(f0.rho, abs=1e-12)
    assert fc.gamma == pytest.approx(c * f0.gamma, rel=1e-9)
    assert fn.rho == pytest.approx(-f0.rho, abs=1e-15)
    s = significance_sigma(250)
    swap = {R: T, T: R, U: U}
    assert classify_rho(fc.rho, s) is classify_rho(f0.rho, s)
    assert classify_rho(fn.rho, s) is swap[classify_rho(f0.rho, s)]


def test_classify_firms_requires_common_T(rng):
    fits = fit_one_factor(*_pair(rng.standard_normal((100, 2)), rng.standard_normal(100)))
    fits2 = fit_one_factor(*_pair(rng.standard_normal((50, 1)), rng.standard_normal(50)))
    assert set(classify_firms(fits)) == {"F0", "F1"}
    with pytest.raises(DataError):
        classify_firms(fits + [fits2[0].__class__("X", 0.1, 1.0, 1.0, 50)])


def test_mixed_panel_recovery_single_replicate():
    panel, ret, truth = generate_panel(mixed_config(seed=3))
    labels = classify_firms(fit_one_factor(panel, ret))
    hits = [labels[f] is g for f, g in zip(truth.firms, truth.groups) if g is not U]
    assert np.mean(hits) >= 0.9
    c = census(labels)
    assert c["total"] == 70
    assert sum(c[g.value]["count"] for g in (R, U, T)) == 70
    assert sum(c[g.value]["percent"] for g in (R, U, T)) == pytest.approx(100.0)


def test_moment_targeting():
    means = {-0.3: [], 0.0: [], 0.4: []}
    reps = 20
    for seed in range(reps):
        panel, ret, truth = generate_panel(mixed_config(seed=seed, n_intervals=250))
        fits = fit_one_factor(panel, ret)
        for target in means:
            means[target] += [f.rho for f, t in zip(fits, truth.rho) if t == target]
    for target, vals in means.items():
        n = len(vals)
        assert abs(np.mean(vals) - target) <= 3 * (1 / math.sqrt(250)) / math.sqrt(n)


def test_transition_example():
    tm = transition_matrix({2001: ({"A", "B", "C"}, {"A": R, "B": R, "C": T}),
                            2002: ({"A", "C"}, {"A": R, "C": U})})
    assert tm.p(R, R) == 0.5
    assert tm.p(E, R) == 0.5
    assert tm.p(U, T) == 1.0
    assert tm.undefined_rows == [U]
    assert np.all(np.isnan(tm.probabilities[1]))
    d = tm.to_dict()
    assert d["undefined_rows"] == ["U"]
    assert d["probabilities"][1] == [None] * 4


def test_transition_identity():
    labels = {"A": R, "B": U, "C": T, "D": R}
    tm = transition_matrix({2001: (set(labels), labels), 2002: (set(labels), labels)})
    np.testing.assert_array_equal(tm.probabilities[:, :3], np.eye(3))
    assert tm.undefined_rows == []


def test_transition_pools_counts():
    y = {2001: ({"A", "B"}, {"A": R, "B": R}),
         2002: ({"A", "B"}, {"A": R, "B": U}),
         2003: ({"A"}, {"A": R})}
    tm = transition_matrix(y)
    # pairs: (R->R, R->U) then (R->R, U->E): pooled R row = 2/3 R, 1/3 U
    assert tm.counts[0].tolist() == [2, 1, 0, 0]
    assert tm.p(R, R) == pytest.approx(2 / 3)
    assert tm.p(E, U) == 1.0
    assert tm.year_pairs == [(2001, 2002), (2002, 2003)]


def test_transition_needs_two_years():
    with pytest.raises(DataError):
        transition_matrix({2001: ({"A"}, {"A": R})})


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_transition_row_stochastic(seed):
    r_ = np.random.default_rng(seed)
    firms = [f"F{i}" for i in range(20)]
    years = {}
    for y in range(2001, 2005):
        active = {f for f in firms if r_.random() < 0.7}
        years[y] = (active, {f: (R, U, T)[r_.integers(3)] for f in active})
    try:
        tm = transition_matrix(years)
    except DataError:
        return
    for i, row in enumerate(tm.probabilities):
        if not np.isnan(row).any():
            assert abs(row.sum() - 1) <= 1e-12
            assert np.all((row >= 0) & (row <= 1))
    assert np.all(tm.counts >= 0)


def test_size_proxy_examples():
    assert size_proxy([trade("2001-01-02T10:00:00", "A", "B", 10, 1000)], "A").avg_daily_value == 10000
    tr = [trade("2001-01-02T10:00:00", "A", "B", 10, 1000),
          trade("2001-01-03T10:00:00", "A", "B", 10, 3000)]
    assert size_proxy(tr, "A").avg_daily_value == 20000
    tr = [trade("2001-01-02T10:00:00", "A", "B", 10, 1000),
          trade("2001-01-02T11:00:00", "B", "A", 10, 500)]
    assert size_proxy(tr, "A").avg_daily_value == 15000
    out = size_proxies(tr)
    assert out["B"].avg_daily_value == 15000


def test_size_proxy_unknown_firm():
    with pytest.raises(UnknownFirmError):
        size_proxy([trade("2001-01-02T10:00:00", "A", "B", 10, 1000)], "Z")


def test_label_codes():
    assert [g.code for g in (R, U, T, E)] == ["R", "U", "T", "E"]
    assert GroupLabel.from_code("T") is T
    assert GroupLabel.from_code("Reversing") is R
    with pytest.raises(ValueError):
        GroupLabel.from_code("Q")
