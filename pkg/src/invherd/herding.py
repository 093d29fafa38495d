"""Group herding: count indicator with an exact binomial test, buy ratio, effective number.

Each (interval, group) pair gets one ledger record. Summaries reproduce the
unconditional / buy-herding / sell-herding breakdown and compare them with
Welch t-tests.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .classify import STRATEGY_GROUPS, GroupLabel
from .errors import ConfigError, DegenerateSampleError
from .market_data import FirmId, InventoryPanel, ReturnSeries

log = logging.getLogger(__name__)


class HerdingLabel(str, Enum):
    BUY = "BuyHerd"
    SELL = "SellHerd"
    NONE = "NoHerd"
    INACTIVE = "Inactive"


# ---------------------------------------------------------------------------
# per-interval measures
# ---------------------------------------------------------------------------

def herding_indicator(n_buy: int, n_sell: int) -> float:
    """Fraction of active group members that are net buyers; NaN for an inactive interval."""
    n = n_buy + n_sell
    return n_buy / n if n > 0 else math.nan


def log_binomial_tail(n: int, k: int, p: float = 0.5) -> float:
    """log P[Bin(n, p) >= k], summed exactly in the log domain."""
    if k <= 0:
        return 0.0
    if k > n:
        return -math.inf
    j = np.arange(k, n + 1, dtype=float)
    log_comb = special.gammaln(n + 1) - special.gammaln(j + 1) - special.gammaln(n - j + 1)
    terms = log_comb + j * math.log(p) + (n - j) * math.log1p(-p)
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum()))


def binomial_upper_tail(n: int, k: int, p: float = 0.5) -> float:
    return math.exp(log_binomial_tail(n, k, p))


def _check_test_args(p: float, alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not 0.0 < p < 1.0:
        raise ConfigError(f"null probability must lie in (0, 1), got {p}")


@lru_cache(maxsize=None)
def critical_count(n: int, p: float = 0.5, alpha: float = 0.05) -> int:
    """Smallest k with P[Bin(n, p) >= k] < alpha (``n + 1`` if none)."""
    log_alpha = math.log(alpha)
    lo, hi = 0, n + 1  # tail is non-increasing in k
    while lo < hi:
        mid = (lo + hi) // 2
        if log_binomial_tail(n, mid, p) < log_alpha:
            hi = mid
        else:
            lo = mid + 1
    return lo


def binomial_herding_test(n_buy: int, n_sell: int, p: float = 0.5, alpha: float = 0.05) -> HerdingLabel:
    """Buy (sell) herding when observing at least this many buyers (sellers) has null probability < alpha.

    ``p`` is the null probability that an active firm is a net buyer; the
    seller count is tested against ``1 - p``.
    """
    _check_test_args(p, alpha)
    if n_buy < 0 or n_sell < 0:
        raise ValueError("counts must be non-negative")
    n = n_buy + n_sell
    if n == 0:
        return HerdingLabel.INACTIVE
    if n_buy >= critical_count(n, p, alpha):
        return HerdingLabel.BUY
    if n_sell >= critical_count(n, 1.0 - p, alpha):
        return HerdingLabel.SELL
    return HerdingLabel.NONE


def type_one_rate(n: int, p: float = 0.5, alpha: float = 0.05) -> float:
    """Exact probability that a null interval with n active firms is labelled as herding."""
    if n == 0:
        return 0.0
    kb = critical_count(n, p, alpha)
    ks = critical_count(n, 1.0 - p, alpha)
    buy = math.exp(log_binomial_tail(n, kb, p))
    sell = math.exp(log_binomial_tail(n, ks, 1.0 - p))
    if kb + ks <= n:  # both can't hold at once for alpha < 1/2, but be exact
        overlap = sum(math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(kb, n - ks + 1))
        return buy + sell - overlap
    return buy + sell


def _nonzero(values: Sequence[float]) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if not np.any(v != 0):
        return np.empty(0)
    return v


def buy_ratio(values: Sequence[float]) -> float:
    """Euro-weighted share of buying: sum of positive v over sum of |v|; NaN if all zero."""
    v = _nonzero(values)
    if not len(v):
        return math.nan
    buys = v[v > 0].sum()
    sells = -v[v < 0].sum()
    return float(buys / (buys + sells))


def effective_number(values: Sequence[float]) -> float:
    """Inverse sum of squared weights v_i / sum|v|; NaN if all zero."""
    v = _nonzero(values)
    if not len(v):
        return math.nan
    a = np.abs(v) / np.abs(v).max()  # (sum|v|)^2 / sum v^2, rescaled against overflow
    return float(a.sum() ** 2 / np.sum(a * a))


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupActivity:
    interval: int
    group: GroupLabel
    n_buy: int
    n_sell: int
    n_active: int  # firms that traded, including zero net change
    group_size: int
    values: tuple[float, ...]


@dataclass(frozen=True)
class HerdingRecord:
    activity: GroupActivity
    interval_start: str
    h: float
    label: HerdingLabel
    b: float
    n_eff: float

    @property
    def group(self) -> GroupLabel:
        return self.activity.group

    @property
    def n_eff_ratio(self) -> float:
        return self.n_eff / self.activity.group_size


@dataclass(eq=False)
class HerdingLedger:
    records: list[HerdingRecord]
    horizon: str
    alpha: float
    p: float = 0.5

    def for_group(self, group: GroupLabel) -> list[HerdingRecord]:
        return [r for r in self.records if r.group == group]

    def groups(self) -> list[GroupLabel]:
        seen = {r.group for r in self.records}
        return [g for g in STRATEGY_GROUPS if g in seen] + sorted(seen - set(STRATEGY_GROUPS))


def herding_scan(panel: InventoryPanel, groups: Mapping[FirmId, GroupLabel], horizon: str | None = None,
                 alpha: float = 0.05, p: float = 0.5) -> HerdingLedger:
    """One ledger record per (interval, group) of the panel.

    Firms with zero net change are neither buyers nor sellers. ``groups``
    maps firms to labels; firms missing from the panel are ignored.
    """
    _check_test_args(p, alpha)
    if horizon is not None and str(panel.grid.horizon) != str(horizon):
        raise ConfigError(f"panel horizon {panel.grid.horizon} does not match requested {horizon}")
    starts = [str(s) for s in panel.grid.starts]
    by_group: dict[GroupLabel, list[int]] = {}
    for j, firm in enumerate(panel.firms):
        g = groups.get(firm)
        if g is not None:
            by_group.setdefault(g, []).append(j)

    records = []
    for g in STRATEGY_GROUPS:
        cols = by_group.get(g, [])
        if not cols:
            log.warning("group %s has no firms in the panel; skipped", g.value)
            continue
        v = panel.values[:, cols]
        size = len(cols)
        n_buy = (v > 0).sum(axis=1)
        n_sell = (v < 0).sum(axis=1)
        n_active = panel.activity[:, cols].sum(axis=1)
        for t in range(v.shape[0]):
            row = v[t]
            nb, ns = int(n_buy[t]), int(n_sell[t])
            act = GroupActivity(t, g, nb, ns, int(n_active[t]), size, tuple(row.tolist()))
            records.append(HerdingRecord(act, starts[t], herding_indicator(nb, ns),
                                         binomial_herding_test(nb, ns, p, alpha), buy_ratio(row),
                                         effective_number(row)))
    records.sort(key=lambda r: (r.activity.interval, STRATEGY_GROUPS.index(r.group)))
    return HerdingLedger(records, str(panel.grid.horizon), alpha, p)


# ---------------------------------------------------------------------------
# summaries and t-tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: float
    p_value: float
    confidence: float

    @property
    def distinct(self) -> bool:
        return self.p_value < 1.0 - self.confidence

    @property
    def verdict(self) -> str:
        return "distinct" if self.distinct else "not-distinct"

    def to_dict(self) -> dict:
        return {"t": self.t, "dof": self.dof, "p_value": self.p_value, "confidence": self.confidence,
                "verdict": self.verdict}


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float], confidence: float = 0.99,
                 names: tuple[str, str] = ("a", "b")) -> TTestResult:
    """Two-sided unequal-variance t-test; distinct when p < 1 - confidence."""
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence}")
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    for name, x in zip(names, (a, b)):
        if len(x) < 2:
            raise DegenerateSampleError(name, f"need at least 2 observations, got {len(x)}")
        if not np.all(np.isfinite(x)):
            raise DegenerateSampleError(name, "non-finite values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    se2 = va + vb
    diff = a.mean() - b.mean()
    if se2 == 0:
        if diff == 0:
            return TTestResult(0.0, float(len(a) + len(b) - 2), 1.0, confidence)
        raise DegenerateSampleError(f"{names[0]}/{names[1]}", "both samples have zero variance")
    t = diff / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return TTestResult(float(t), float(dof), float(p), confidence)


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float  # population std (ddof=0)
    count: int

    @classmethod
    def of(cls, x: Sequence[float]) -> "MeanStd | None":
        x = np.asarray(x, dtype=float)
        if len(x) == 0:
            return None
        return cls(float(x.mean()), float(x.std()), len(x))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "count": self.count}


CONDITIONS = ("all", "BH", "SH")

# Markers used for the t-test verdicts: buy ratio vs BH / SH, N_eff/N vs BH / SH.
MARKERS = {"b_BH": "⊕", "b_SH": "△", "neff_BH": "□", "neff_SH": "◇"}


@dataclass(eq=False)
class GroupSummary:
    group: GroupLabel
    horizon: str
    n_intervals: int
    counts: dict[str, int]  # per HerdingLabel value
    b: dict[str, MeanStd | None]
    neff_ratio: dict[str, MeanStd | None]
    tests: dict[str, TTestResult | None] = field(default_factory=dict)

    def percent(self, label: HerdingLabel) -> float:
        return 100.0 * self.counts[label.value] / self.n_intervals if self.n_intervals else math.nan

    @property
    def pct_herding(self) -> float:
        return self.percent(HerdingLabel.BUY) + self.percent(HerdingLabel.SELL)

    @property
    def markers(self) -> list[str]:
        return [MARKERS[k] for k, r in self.tests.items() if r is not None and r.distinct]

    def to_dict(self) -> dict:
        return {
            "group": self.group.value,
            "horizon": self.horizon,
            "n_intervals": self.n_intervals,
            "counts": dict(self.counts),
            "percent": {"herding": self.pct_herding, **{lab.value: self.percent(lab) for lab in HerdingLabel}},
            "buy_ratio": {c: (m.to_dict() if m else None) for c, m in self.b.items()},
            "neff_over_n": {c: (m.to_dict() if m else None) for c, m in self.neff_ratio.items()},
            "t_tests": {k: (r.to_dict() if r else None) for k, r in self.tests.items()},
            "markers": self.markers,
        }


@dataclass(eq=False)
class HerdingSummary:
    horizon: str
    alpha: float
    groups: dict[GroupLabel, GroupSummary]

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "alpha": self.alpha,
                "groups": {g.value: s.to_dict() for g, s in self.groups.items()}}


def _maybe_test(x: Sequence[float], y: Sequence[float], confidence: float, names) -> TTestResult | None:
    try:
        return welch_t_test(x, y, confidence, names)
    except DegenerateSampleError:
        return None


def conditional_stats(ledger: HerdingLedger, confidence: float = 0.99) -> HerdingSummary:
    """Herding percentages and mean +- std of b and N_eff/N, overall and on BH / SH intervals."""
    if not ledger.records:
        raise ValueError("empty ledger")
    out = {}
    for g in ledger.groups():
        recs = ledger.for_group(g)
        counts = {lab.value: 0 for lab in HerdingLabel}
        for r in recs:
            counts[r.label.value] += 1
        active = [r for r in recs if r.label != HerdingLabel.INACTIVE]
        subsets = {
            "all": active,
            "BH": [r for r in active if r.label == HerdingLabel.BUY],
            "SH": [r for r in active if r.label == HerdingLabel.SELL],
        }
        b = {c: [r.b for r in rs] for c, rs in subsets.items()}
        ne = {c: [r.n_eff_ratio for r in rs] for c, rs in subsets.items()}
        tests = {
            "b_BH": _maybe_test(b["all"], b["BH"], confidence, ("b all", "b BH")),
            "b_SH": _maybe_test(b["all"], b["SH"], confidence, ("b all", "b SH")),
            "neff_BH": _maybe_test(ne["all"], ne["BH"], confidence, ("neff all", "neff BH")),
            "neff_SH": _maybe_test(ne["all"], ne["SH"], confidence, ("neff all", "neff SH")),
        }
        out[g] = GroupSummary(g, ledger.horizon, len(recs), counts,
                              {c: MeanStd.of(x) for c, x in b.items()},
                              {c: MeanStd.of(x) for c, x in ne.items()}, tests)
    return HerdingSummary(ledger.horizon, ledger.alpha, out)


def herding_timeline(ledger: HerdingLedger, returns: ReturnSeries) -> list[tuple[str, float, str, str]]:
    """Rows ``(date, close_price, group, label)`` for plotting herding intervals over the price path."""
    dates = [str(d) for d in returns.grid.starts.astype("datetime64[D]")]
    return [(dates[r.activity.interval], float(returns.prices[r.activity.interval]), r.group.value, r.label.value)
            for r in ledger.records]
