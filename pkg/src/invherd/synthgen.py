"""Synthetic one-factor market: inventories driven by a common return plus idiosyncratic noise.

``generate_panel`` draws a panel with known per-firm return correlations;
``generate_trade_table`` turns that same realisation into a trade tape in
which every analysed firm trades against a single counterparty pool, so the
ingestion path reproduces the panel.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import GroupLabel
from .errors import ConfigError
from .market_data import (Horizon, IntervalGrid, InventoryPanel, ReturnSeries, Session, TradeRecord,
                          TradeTable)

POOL_FIRM = "_POOL"


@dataclass(frozen=True)
class GroupSpec:
    fraction: float
    rho: float  # target population correlation with the return driver
    size_scale: float  # inventory standard deviation in euros


def _default_groups() -> list[GroupSpec]:
    return [GroupSpec(0.5, -0.3, 2.0e5), GroupSpec(0.4, 0.0, 1.0e5), GroupSpec(0.1, 0.4, 1.0e6)]


@dataclass
class SynthConfig:
    n_firms: int = 70
    n_intervals: int = 250
    groups: list[GroupSpec] = field(default_factory=_default_groups)
    return_std: float = 0.02
    residual_scale: float = 1.0  # multiplies sigma_v * sqrt(1 - rho^2); 0 gives a noiseless map
    size_dispersion: float = 0.5  # log-normal spread of firm sizes around the group scale
    responder_lag: int = 0  # v responds to r(t - lag) ...
    response_span: int = 1  # ... through r(t - lag - span + 1), equally weighted
    activity: float = 1.0  # probability that a firm trades in an interval
    horizon: str = "1d"
    start_date: str = "2001-01-02"
    session: tuple[str, str] = ("09:00", "17:30")
    initial_price: float = 20.0
    stock: str = "SYN"
    seed: int = 0

    def __post_init__(self):
        self.groups = [g if isinstance(g, GroupSpec) else GroupSpec(**g) for g in self.groups]
        self.session = tuple(self.session)

    def validate(self) -> None:
        if self.n_firms < 1 or self.n_intervals < 2:
            raise ConfigError("need n_firms >= 1 and n_intervals >= 2")
        if not self.groups:
            raise ConfigError("at least one group is required")
        if abs(sum(g.fraction for g in self.groups) - 1.0) > 1e-9 or any(g.fraction < 0 for g in self.groups):
            raise ConfigError("group fractions must be non-negative and sum to 1")
        for g in self.groups:
            if abs(g.rho) > 1.0:
                raise ConfigError(f"infeasible target rho {g.rho}: residual variance would be negative")
            if g.size_scale <= 0:
                raise ConfigError("size_scale must be positive")
        if self.return_std <= 0 or self.residual_scale < 0 or self.size_dispersion < 0:
            raise ConfigError("return_std must be > 0; residual_scale and size_dispersion >= 0")
        if self.responder_lag < 0 or self.response_span < 1:
            raise ConfigError("responder_lag must be >= 0 and response_span >= 1")
        if not 0.0 < self.activity <= 1.0:
            raise ConfigError("activity must lie in (0, 1]")
        if self.initial_price <= 0:
            raise ConfigError("initial_price must be positive")
        try:
            horizon = Horizon.parse(self.horizon)
            session = Session.parse(*self.session)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if horizon.intraday:
            per_day = math.ceil(session.minutes / horizon.minutes)
            if self.n_intervals % per_day:
                raise ConfigError(f"n_intervals must be a multiple of {per_day} intervals per day")
        elif horizon.days != 1:
            raise ConfigError("synthetic panels use intraday or 1d horizons")

    def grid(self) -> IntervalGrid:
        horizon = Horizon.parse(self.horizon)
        session = Session.parse(*self.session)
        per_day = math.ceil(session.minutes / horizon.minutes) if horizon.intraday else 1
        days = IntervalGrid.business_days(date.fromisoformat(self.start_date), self.n_intervals // per_day)
        return IntervalGrid.build(days, horizon, session)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["session"] = list(self.session)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad synth config {path}: {exc}") from exc


@dataclass(eq=False)
class GroundTruth:
    firms: list[str]
    groups: list[GroupLabel]
    gamma: np.ndarray
    rho: np.ndarray
    sigma_v: np.ndarray
    sigma_eps: np.ndarray
    returns: np.ndarray  # realised r(t), aligned with the panel

    def to_dict(self) -> dict:
        return {"firms": self.firms, "groups": [g.value for g in self.groups], "gamma": self.gamma.tolist(),
                "rho": self.rho.tolist(), "sigma_v": self.sigma_v.tolist(),
                "sigma_eps": self.sigma_eps.tolist(), "returns": self.returns.tolist()}


def true_label(rho: float) -> GroupLabel:
    if rho > 0:
        return GroupLabel.TRENDING
    if rho < 0:
        return GroupLabel.REVERSING
    return GroupLabel.UNCATEGORIZED


def _group_counts(fractions: list[float], n: int) -> list[int]:
    raw = [f * n for f in fractions]
    counts = [int(math.floor(x)) for x in raw]
    rest = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in rest[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _returns_and_driver(config: SynthConfig, rng: np.random.Generator, T: int, n_paths: int | None = None):
    """Return paths r and response drivers d, each (T,) or (T, n_paths)."""
    pre = config.responder_lag + config.response_span - 1
    shape = (T + pre,) if n_paths is None else (T + pre, n_paths)
    r_full = rng.normal(0.0, config.return_std, shape)
    driver = np.zeros(T if n_paths is None else (T, n_paths))
    for j in range(config.response_span):
        start = pre - config.responder_lag - j
        driver += r_full[start: start + T]
    driver /= math.sqrt(config.response_span)
    return r_full[pre:], driver


def generate_panel(config: SynthConfig) -> tuple[InventoryPanel, ReturnSeries, GroundTruth]:
    """Draw returns and inventories ``v_i(t) = gamma_i d(t) + eps_i(t)``.

    ``d(t)`` averages ``r(t - lag - j)`` for ``j < span`` (scaled to the
    variance of r); ``gamma_i = rho_i sigma_v,i / sigma_r`` so that the
    population correlation of ``v_i`` with ``d`` equals the group target.
    """
    config.validate()
    grid = config.grid()
    T, N = len(grid), config.n_firms
    ss_assign, ss_size, ss_ret, ss_eps, ss_act = np.random.SeedSequence(config.seed).spawn(5)

    counts = _group_counts([g.fraction for g in config.groups], N)
    spec_of_firm = np.repeat(np.arange(len(config.groups)), counts)
    spec_of_firm = np.random.default_rng(ss_assign).permutation(spec_of_firm)
    rho = np.array([config.groups[k].rho for k in spec_of_firm], dtype=float)
    scale = np.array([config.groups[k].size_scale for k in spec_of_firm], dtype=float)
    s = config.size_dispersion
    sigma_v = scale * np.exp(s * np.random.default_rng(ss_size).standard_normal(N) - 0.5 * s * s)

    sr = config.return_std
    r, driver = _returns_and_driver(config, np.random.default_rng(ss_ret), T)

    gamma = rho * sigma_v / sr
    sigma_eps = config.residual_scale * sigma_v * np.sqrt(1.0 - rho ** 2)
    eps = np.random.default_rng(ss_eps).standard_normal((T, N)) * sigma_eps
    values = driver[:, None] * gamma[None, :] + eps
    if config.activity < 1.0:
        active = np.random.default_rng(ss_act).random((T, N)) < config.activity
        values = np.where(active, values, 0.0)
    active = values != 0

    firms = [f"F{i + 1:03d}" for i in range(N)]
    panel = InventoryPanel(grid, firms, values, active, {"synthetic_seed": config.seed})
    prices = config.initial_price * np.exp(np.cumsum(r))
    returns = ReturnSeries(grid, r.copy(), prices, np.zeros(T, dtype=bool), {"synthetic_seed": config.seed})
    truth = GroundTruth(firms, [true_label(x) for x in rho], gamma, rho, sigma_v, sigma_eps, r.copy())
    return panel, returns, truth


def generate_independent_responders(config: SynthConfig, rho: Sequence[float]
                                    ) -> tuple[IntervalGrid, np.ndarray, np.ndarray]:
    """One unit-scale firm per independent market: column j has its own return path and target rho[j].

    Returns ``(grid, values, returns)`` with paired T x M columns; the firm
    model is the one of :func:`generate_panel`. Group specs are ignored.
    """
    config.validate()
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise ConfigError("infeasible target rho: residual variance would be negative")
    grid = config.grid()
    T, M = len(grid), len(rho)
    ss_ret, ss_eps = np.random.SeedSequence(config.seed).spawn(2)
    r, driver = _returns_and_driver(config, np.random.default_rng(ss_ret), T, M)
    gamma = rho / config.return_std
    eps = np.random.default_rng(ss_eps).standard_normal((T, M)) * (config.residual_scale * np.sqrt(1.0 - rho ** 2))
    return grid, driver * gamma + eps, r


def panel_to_trade_table(panel: InventoryPanel, prices: np.ndarray, trades_per_firm_interval: int = 1,
                         stock: str = "SYN") -> TradeTable:
    """Split each firm's v_i(t) into equal trades against the pool at the interval's price.

    Trades of interval t sit at evenly spaced whole seconds inside the interval.
    """
    k = int(trades_per_firm_interval)
    if k < 1:
        raise ConfigError("trades_per_firm_interval must be >= 1")
    grid = panel.grid
    T, N = panel.values.shape
    t_idx, f_idx = np.nonzero(panel.values)
    v = panel.values[t_idx, f_idx]
    order = np.lexsort((f_idx, t_idx))
    t_idx, f_idx, v = t_idx[order], f_idx[order], v[order]

    dur = (grid.ends - grid.starts).astype(np.int64)
    t_rep = np.repeat(t_idx, k)
    f_rep = np.repeat(f_idx, k)
    v_rep = np.repeat(v / k, k)
    j = np.tile(np.arange(k), len(t_idx))
    offsets = ((j + 1) * dur[t_rep]) // (k + 1)
    ts = grid.starts[t_rep] + offsets.astype("timedelta64[s]")

    firm_ids = sorted(panel.firms + [POOL_FIRM])
    code = {f: i for i, f in enumerate(firm_ids)}
    firm_code = np.array([code[f] for f in panel.firms], dtype=np.int64)[f_rep]
    pool = code[POOL_FIRM]
    buy = v_rep > 0
    price = np.asarray(prices, dtype=float)[t_rep]
    volume = np.abs(v_rep) / price
    order = np.argsort(ts, kind="stable")
    return TradeTable(
        timestamps=ts[order],
        stocks=np.full(len(ts), stock, dtype=object),
        firm_ids=firm_ids,
        buyer=np.where(buy, firm_code, pool)[order],
        seller=np.where(buy, pool, firm_code)[order],
        price=price[order],
        volume=volume[order],
    )


def generate_trade_table(config: SynthConfig, trades_per_firm_interval: int = 1
                         ) -> tuple[TradeTable, InventoryPanel, ReturnSeries, GroundTruth]:
    panel, returns, truth = generate_panel(config)
    table = panel_to_trade_table(panel, returns.prices, trades_per_firm_interval, config.stock)
    return table, panel, returns, truth


def generate_trade_tape(config: SynthConfig, trades_per_firm_interval: int = 1) -> list[TradeRecord]:
    """Trade records whose per-interval net values reproduce ``generate_panel(config)``."""
    return generate_trade_table(config, trades_per_firm_interval)[0].to_records()
