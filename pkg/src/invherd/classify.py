"""One-factor fits of firm inventories on returns, strategy labels, and year-to-year transitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, UnknownFirmError, ZeroVarianceError
from .market_data import FirmId, InventoryPanel, ReturnSeries, TradeRecord, TradeTable, as_table


class GroupLabel(str, Enum):
    REVERSING = "Reversing"
    UNCATEGORIZED = "Uncategorized"
    TRENDING = "Trending"
    EXITED = "Exited"

    @property
    def code(self) -> str:
        return self.value[0]

    @classmethod
    def from_code(cls, code: str) -> "GroupLabel":
        for g in cls:
            if g.code == code or g.value == code:
                return g
        raise ValueError(f"unknown group {code!r}")


STRATEGY_GROUPS = (GroupLabel.REVERSING, GroupLabel.UNCATEGORIZED, GroupLabel.TRENDING)
TRANSITION_TARGETS = STRATEGY_GROUPS + (GroupLabel.EXITED,)


@dataclass(frozen=True)
class FirmFactorFit:
    firm: FirmId
    rho: float
    gamma: float  # euros per unit log-return
    residual_std: float
    T: int


@dataclass(frozen=True)
class SizeProxy:
    firm: FirmId
    avg_daily_value: float


@dataclass(eq=False)
class TransitionMatrix:
    counts: np.ndarray  # 3 x 4 int, rows R,U,T; columns R,U,T,E
    probabilities: np.ndarray  # NaN rows where the source group never occurs
    undefined_rows: list[GroupLabel] = field(default_factory=list)
    year_pairs: list[tuple[int, int]] = field(default_factory=list)

    def p(self, target: GroupLabel | str, source: GroupLabel | str) -> float:
        """P(target | source)."""
        src = STRATEGY_GROUPS.index(_as_label(source))
        dst = TRANSITION_TARGETS.index(_as_label(target))
        return float(self.probabilities[src, dst])

    def to_dict(self) -> dict:
        rows = [g.code for g in STRATEGY_GROUPS]
        cols = [g.code for g in TRANSITION_TARGETS]
        return {
            "rows": rows,
            "columns": cols,
            "counts": self.counts.tolist(),
            "probabilities": [[None if math.isnan(x) else x for x in row] for row in self.probabilities.tolist()],
            "undefined_rows": [g.code for g in self.undefined_rows],
            "year_pairs": [list(p) for p in self.year_pairs],
            "pooling": "counts summed over year pairs, then row-normalised",
        }


def _as_label(x: GroupLabel | str) -> GroupLabel:
    return x if isinstance(x, GroupLabel) else GroupLabel.from_code(x)


def significance_sigma(T: int) -> float:
    """Asymptotic null standard deviation of a Pearson coefficient over T samples."""
    return 1.0 / math.sqrt(T)


def fit_one_factor(panel: InventoryPanel, returns: ReturnSeries) -> list[FirmFactorFit]:
    """OLS fit ``v_i(t) = gamma_i r(t) + eps_i(t)`` for every firm of the panel."""
    if panel.grid != returns.grid or panel.values.shape[0] != len(returns.values):
        raise DataError("panel and return series are on different grids")
    r = np.asarray(returns.values, dtype=float)
    T = len(r)
    rc = r - r.mean()
    var_r = float(rc @ rc) / T
    if not var_r > 0:
        raise DataError("degenerate returns: zero variance")
    sd_r = math.sqrt(var_r)
    fits = []
    for j, firm in enumerate(panel.firms):
        v = panel.values[:, j]
        vc = v - v.mean()
        var_v = float(vc @ vc) / T
        if not var_v > 0:
            raise ZeroVarianceError(firm, "zero-variance inventory for firm")
        cov = float(vc @ rc) / T
        gamma = cov / var_r
        rho = max(-1.0, min(1.0, cov / (math.sqrt(var_v) * sd_r)))
        resid = vc - gamma * rc
        fits.append(FirmFactorFit(firm, rho, gamma, math.sqrt(float(resid @ resid) / T), T))
    return fits


def classify_rho(rho: float, sigma: float) -> GroupLabel:
    if rho > 2 * sigma:
        return GroupLabel.TRENDING
    if rho < -2 * sigma:
        return GroupLabel.REVERSING
    return GroupLabel.UNCATEGORIZED


def classify_firms(fits: Sequence[FirmFactorFit], sigma: float | None = None) -> dict[FirmId, GroupLabel]:
    """Two-sided 2-sigma rule on each firm's return correlation.

    ``sigma`` defaults to ``1/sqrt(T)`` with the common sample size of the fits.
    """
    if sigma is None:
        sizes = {f.T for f in fits}
        if len(sizes) > 1:
            raise DataError(f"fits have differing sample sizes {sorted(sizes)}; pass sigma explicitly")
        if not sizes:
            return {}
        sigma = significance_sigma(sizes.pop())
    return {f.firm: classify_rho(f.rho, sigma) for f in fits}


def census(labels: Mapping[FirmId, GroupLabel]) -> dict:
    """Group counts and percentages of a classification."""
    total = len(labels)
    out = {"total": total}
    for g in STRATEGY_GROUPS:
        n = sum(1 for x in labels.values() if x == g)
        out[g.value] = {"count": n, "percent": 100.0 * n / total if total else float("nan")}
    return out


def transition_matrix(labels_by_year: Mapping[int, tuple[Iterable[FirmId], Mapping[FirmId, GroupLabel]]]
                      ) -> TransitionMatrix:
    """Pooled year-to-year transition counts P(Y|X), Y including exit from the active set.

    ``labels_by_year`` maps a year to ``(active firms, labels)``; labels are
    only read for active firms.
    """
    years = sorted(labels_by_year)
    pairs = [(y, y + 1) for y in years if y + 1 in labels_by_year]
    if not pairs:
        raise DataError("need at least two consecutive years")
    counts = np.zeros((3, 4), dtype=np.int64)
    for y0, y1 in pairs:
        active0, labels0 = labels_by_year[y0]
        active1, labels1 = labels_by_year[y1]
        active1 = set(active1)
        for firm in sorted(set(active0)):
            src = _as_label(labels0[firm])
            dst = _as_label(labels1[firm]) if firm in active1 else GroupLabel.EXITED
            counts[STRATEGY_GROUPS.index(src), TRANSITION_TARGETS.index(dst)] += 1
    totals = counts.sum(axis=1)
    probs = np.full((3, 4), np.nan)
    undefined = []
    for i, g in enumerate(STRATEGY_GROUPS):
        if totals[i] == 0:
            undefined.append(g)
        else:
            probs[i] = counts[i] / totals[i]
    return TransitionMatrix(counts, probs, undefined, pairs)


def size_proxies(trades: Sequence[TradeRecord] | TradeTable, firms: Sequence[FirmId] | None = None
                 ) -> dict[FirmId, SizeProxy]:
    """Average daily euro value traded (buys plus sells) over each firm's active days."""
    t = as_table(trades)
    n = len(t.firm_ids)
    day = t.timestamps.astype("datetime64[D]").astype(np.int64)
    value = t.value
    codes = np.concatenate([t.buyer, t.seller])
    days = np.concatenate([day, day])
    key = codes * (1 << 32) + (days - (days.min() if len(days) else 0))
    uniq, inv = np.unique(key, return_inverse=True)
    per_day = np.bincount(inv, weights=np.concatenate([value, value]))
    firm_of = uniq >> 32
    totals = np.bincount(firm_of, weights=per_day, minlength=n)
    n_days = np.bincount(firm_of, minlength=n)
    wanted = t.firm_ids if firms is None else list(firms)
    code = {f: i for i, f in enumerate(t.firm_ids)}
    out = {}
    for f in wanted:
        if f not in code or n_days[code[f]] == 0:
            raise UnknownFirmError(f)
        out[f] = SizeProxy(f, float(totals[code[f]] / n_days[code[f]]))
    return out


def size_proxy(trades: Sequence[TradeRecord] | TradeTable, firm: FirmId) -> SizeProxy:
    return size_proxies(trades, [firm])[firm]
