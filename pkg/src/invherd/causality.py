"""Autocorrelation and lagged inventory/return cross-correlation.

Lags are counted in grid steps. With an intraday grid, pairs of intervals
that fall on different trading days are left out of every lagged overlap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, ZeroVarianceError
from .market_data import FirmId, IntervalGrid

CAUSALITY_STEP_MINUTES = 15
CAUSALITY_LAGS = 10  # 15 .. 150 minutes


@dataclass(eq=False)
class LaggedCorrelation:
    lags: np.ndarray  # signed, in grid steps
    values: np.ndarray  # rho[v(t), r(t+lag)]; NaN where flagged
    sigma: np.ndarray  # 1/sqrt(pairs) per lag
    n_pairs: np.ndarray
    flagged: list[int] = field(default_factory=list)
    step_minutes: int | None = None

    def at(self, lag: int) -> float:
        return float(self.values[list(self.lags).index(lag)])


@dataclass(frozen=True)
class IntegratedCausality:
    firm: FirmId
    sync: float
    past_sum: float  # lags -150 .. -15 minutes
    future_sum: float  # lags +15 .. +150 minutes
    past_sigma: float  # null std of past_sum, see integrate_profile
    future_sigma: float
    sync_sigma: float


def _pair_mask(n: int, lag: int, grid: IntervalGrid | None, exclude_overnight: bool) -> np.ndarray:
    """Mask over the earlier index t of pairs (t, t+|lag|)."""
    k = abs(lag)
    if grid is not None and exclude_overnight and grid.horizon.intraday and k > 0:
        if len(grid) != n:
            raise DataError("series length does not match grid")
        return grid.same_session(k)
    return np.ones(n - k, dtype=bool)


class _LagSums:
    """Pearson over lagged pair sets from prefix sums, so no lag copies the data.

    Columns are centred once; a lag then needs one cross product over row
    views plus corrections for the few excluded (overnight) pairs.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        self.x = x - x.mean(axis=0)
        self.y = y - y.mean(axis=0)
        self.paired = y.ndim == 2
        self.cx = self._prefix(self.x)
        self.cxx = self._prefix(self.x * self.x)
        self.cy = self._prefix(self.y)
        self.cyy = self._prefix(self.y * self.y)

    @staticmethod
    def _prefix(a: np.ndarray) -> np.ndarray:
        out = np.zeros((len(a) + 1,) + a.shape[1:])
        np.cumsum(a, axis=0, out=out[1:])
        return out

    def _cross(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("ij,ij->j", a, b) if self.paired else b @ a

    def corr(self, k: int, mask: np.ndarray, x_first: bool = True) -> np.ndarray:
        """Pearson of x(t) with y(t+k) (``x_first``) or of x(t+k) with y(t), over t where mask holds."""
        T = len(self.x)
        xs, ys = (0, k) if x_first else (k, 0)
        a, b = self.x[xs: xs + T - k], self.y[ys: ys + T - k]
        ex = np.flatnonzero(~mask)
        n = len(a) - len(ex)
        if n < 2:
            return np.full(self.x.shape[1], np.nan)
        ae, be = a[ex], b[ex]
        sa = self.cx[xs + T - k] - self.cx[xs] - ae.sum(axis=0)
        sb = self.cy[ys + T - k] - self.cy[ys] - be.sum(axis=0)
        saa = self.cxx[xs + T - k] - self.cxx[xs] - (ae * ae).sum(axis=0)
        sbb = self.cyy[ys + T - k] - self.cyy[ys] - (be * be).sum(axis=0)
        sab = self._cross(a, b) - self._cross(ae, be)
        va = saa - sa * sa / n
        vb = sbb - sb * sb / n
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (sab - sa * sb / n) / np.sqrt(va * vb)
        bad = (va <= 1e-12 * saa) | (vb <= 1e-12 * sbb)
        out = np.clip(out, -1.0, 1.0)
        out[np.broadcast_to(bad, out.shape)] = np.nan
        return out


def lagged_correlation_columns(v: np.ndarray, r: np.ndarray, lags: Sequence[int],
                               grid: IntervalGrid | None = None, exclude_overnight: bool = True
                               ) -> tuple[np.ndarray, np.ndarray]:
    """rho[v_j(t), r(t+lag)] for every column j of ``v`` (T x N) and every lag.

    ``r`` is a single return series or a T x N matrix paired column by column
    with ``v`` (firms on different stocks). Returns ``(values, n_pairs)``
    with values shaped ``(len(lags), N)``.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    r = np.asarray(r, dtype=float)
    T = len(r)
    if v.shape[0] != T or (r.ndim == 2 and r.shape != v.shape):
        raise DataError("inventory and return series have different shapes")
    for lag in lags:
        if 2 * abs(lag) >= T:
            raise DataError(f"lag {lag} too large for {T} samples")
    sums = _LagSums(v, r)
    out = np.empty((len(lags), v.shape[1]))
    n_pairs = np.empty(len(lags), dtype=np.int64)
    for i, lag in enumerate(lags):
        k = abs(int(lag))
        mask = _pair_mask(T, k, grid, exclude_overnight)
        n_pairs[i] = int(mask.sum())
        out[i] = sums.corr(k, mask, x_first=lag >= 0)
    return out, n_pairs


def autocorrelation(series: Sequence[float], max_lag: int, grid: IntervalGrid | None = None,
                    exclude_overnight: bool = True) -> list[tuple[int, float]]:
    """Pearson correlation of x(t) with x(t+k) over the valid pairs, k = 1..max_lag."""
    x = np.asarray(series, dtype=float)
    if len(x) <= max_lag + 2:
        raise DataError(f"series of length {len(x)} too short for max_lag {max_lag}")
    if np.ptp(x) == 0:
        raise ZeroVarianceError("series", "constant series")
    sums = _LagSums(x[:, None], x[:, None])
    return [(k, float(sums.corr(k, _pair_mask(len(x), k, grid, exclude_overnight))[0]))
            for k in range(1, max_lag + 1)]


def lagged_cross_correlation(v_series: Sequence[float], r_series: Sequence[float], lag_range: Sequence[int] | int,
                             grid: IntervalGrid | None = None, exclude_overnight: bool = True) -> LaggedCorrelation:
    """rho[v(t), r(t+lag)] per lag; negative lags pair inventory with past returns.

    ``lag_range`` is a list of signed lags or an int ``L`` meaning ``-L..L``.
    Lags whose overlap has zero variance are flagged and left as NaN.
    """
    lags = np.arange(-lag_range, lag_range + 1) if isinstance(lag_range, (int, np.integer)) else \
        np.asarray(list(lag_range), dtype=np.int64)
    values, n_pairs = lagged_correlation_columns(v_series, r_series, lags, grid, exclude_overnight)
    values = values[:, 0]
    flagged = [int(lag) for lag, x in zip(lags, values) if math.isnan(x)]
    sigma = 1.0 / np.sqrt(np.maximum(n_pairs, 1))
    step = grid.horizon.minutes if grid is not None and grid.horizon.intraday else None
    return LaggedCorrelation(lags, values, sigma, n_pairs, flagged, step)


def causality_lags(grid: IntervalGrid | None) -> np.ndarray:
    """Signed lag steps -10..10 on a 15-minute grid."""
    if grid is not None and (not grid.horizon.intraday or grid.horizon.minutes != CAUSALITY_STEP_MINUTES):
        raise DataError(f"integrated causality needs a {CAUSALITY_STEP_MINUTES}m grid, got {grid.horizon}")
    return np.arange(-CAUSALITY_LAGS, CAUSALITY_LAGS + 1)


def column_autocorrelation(v: np.ndarray, max_lag: int, grid: IntervalGrid | None = None,
                           exclude_overnight: bool = True) -> np.ndarray:
    """acf of every column of ``v`` at lags 0..max_lag, shape ``(max_lag + 1, N)``; NaN for constant windows."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    T = v.shape[0]
    sums = _LagSums(v, v)
    out = np.ones((max_lag + 1, v.shape[1]))
    for k in range(1, max_lag + 1):
        out[k] = sums.corr(k, _pair_mask(T, k, grid, exclude_overnight))
    return out


def _sum_sigma(n_pairs: np.ndarray, acf: np.ndarray | None) -> float:
    """Null std of a sum of lagged correlations with serially uncorrelated returns.

    Two lag estimates k, k' then covary as acf_v(|k - k'|) / sqrt(n_k n_k');
    without an acf the lags are treated as independent.
    """
    w = 1.0 / np.sqrt(np.maximum(n_pairs, 1).astype(float))
    if acf is None:
        return math.sqrt(float(w @ w))
    m = len(w)
    rho = np.nan_to_num(np.asarray(acf, dtype=float)[:m], nan=0.0)
    cov = rho[np.abs(np.subtract.outer(np.arange(m), np.arange(m)))]
    var = float(w @ cov @ w)
    return math.sqrt(var if var > 0 else float(w @ w))


def integrate_profile(firm: FirmId, lags: np.ndarray, values: np.ndarray, n_pairs: np.ndarray,
                      acf: np.ndarray | None = None) -> IntegratedCausality:
    """Past and future sums of a lag profile with their null standard deviations.

    ``acf`` is the inventory autocorrelation at lags 0..L-1; it widens the
    null band for persistent inventories (Bartlett). Omitted, each lag
    contributes an independent ``1/n_pairs``.
    """
    past = (lags < 0) & (lags >= -CAUSALITY_LAGS)
    future = (lags > 0) & (lags <= CAUSALITY_LAGS)
    sync = float(values[lags == 0][0])
    return IntegratedCausality(firm, sync, float(np.sum(values[past])), float(np.sum(values[future])),
                               _sum_sigma(n_pairs[past][np.argsort(-lags[past])], acf),
                               _sum_sigma(n_pairs[future][np.argsort(lags[future])], acf),
                               1.0 / math.sqrt(max(int(n_pairs[lags == 0][0]), 1)))


def integrated_causality(v_series: Sequence[float], r_series: Sequence[float], grid: IntervalGrid | None = None,
                         firm: FirmId = "", exclude_overnight: bool = True) -> IntegratedCausality:
    """Sums of rho[v(t), r(t+tau)] over tau in -150..-15 and +15..+150 minutes.

    The reported sigmas are null standard deviations of the sums that allow
    for autocorrelation of v (returns taken as serially uncorrelated).

    Without a grid the series are taken to be on a contiguous 15-minute grid.
    """
    lags = causality_lags(grid)
    if len(r_series) * CAUSALITY_STEP_MINUTES < 300:
        raise DataError("integrated causality needs at least 300 minutes of data")
    lc = lagged_cross_correlation(v_series, r_series, lags, grid, exclude_overnight)
    acf = column_autocorrelation(v_series, CAUSALITY_LAGS - 1, grid, exclude_overnight)[:, 0]
    return integrate_profile(firm, lc.lags, lc.values, lc.n_pairs, acf)


def integrated_causality_panel(values: np.ndarray, r: np.ndarray, firms: Sequence[FirmId],
                               grid: IntervalGrid | None = None, exclude_overnight: bool = True
                               ) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[IntegratedCausality]]:
    """Lag profiles and integrated sums for every column of an inventory panel.

    ``r`` may also be a matrix of per-column returns, see
    :func:`lagged_correlation_columns`. Returns ``(lags, profile (L x N), n_pairs, summaries)``.
    """
    lags = causality_lags(grid)
    prof, n_pairs = lagged_correlation_columns(values, r, lags, grid, exclude_overnight)
    acf = column_autocorrelation(values, CAUSALITY_LAGS - 1, grid, exclude_overnight)
    summaries = [integrate_profile(f, lags, prof[:, j], n_pairs, acf[:, j]) for j, f in enumerate(firms)]
    return lags, prof, n_pairs, summaries
