"""Report-producing stages shared by the command line subcommands.

Every stage takes a :class:`RunConfig`, writes plain CSV/JSON files into the
output directory, and returns the list of paths it wrote. Reports carry the
run configuration, the seed and the tool version; nothing time-dependent.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .causality import CAUSALITY_STEP_MINUTES, autocorrelation, integrated_causality_panel
from .classify import (GroupLabel, census, classify_firms, fit_one_factor, significance_sigma, size_proxies,
                       transition_matrix)
from .errors import ConfigError, DataError
from .herding import conditional_stats, herding_scan, herding_timeline
from .market_data import (Horizon, IntervalGrid, InventoryPanel, ReturnSeries, Session, TradeTable,
                          build_inventory_panel, build_return_series, is_reserved_firm, parse_trade_tape,
                          select_active_firms, write_panel, write_returns)
from .spectra import (correlation_matrix, eigendecompose, first_factor_series, rmt_bounds, shuffle_null_spectrum,
                      sort_matrix_by_rho)

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    stock: str | None = None
    years: list[int] = field(default_factory=list)
    horizon: str | None = None
    session: tuple[str, str] = ("09:00", "17:30")
    alpha: float = 0.05
    n_shuffles: int = 100
    seed: int = 0
    out: str = "."
    config: str | None = None
    min_days: int = 200
    min_transactions: int = 1000
    trades_per_interval: int = 1

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_shuffles < 1:
            raise ConfigError("--shuffles must be >= 1")
        if self.min_days < 0 or self.min_transactions < 0:
            raise ConfigError("activity thresholds must be non-negative")
        if self.trades_per_interval < 1:
            raise ConfigError("--trades-per-interval must be >= 1")
        try:
            self.session_obj()
            if self.horizon is not None:
                Horizon.parse(self.horizon)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def session_obj(self) -> Session:
        return Session.parse(*self.session)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["session"] = list(self.session)
        return d


def derive_seed(root: int, name: str) -> int:
    """Deterministic child seed for a named stage."""
    return int(np.random.SeedSequence([root, zlib.crc32(name.encode())]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(x) for x in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _num(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_num(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def metadata(cfg: RunConfig, **extra) -> dict:
    return {"config": cfg.to_dict(), "seed": cfg.seed, "tool": "invherd", "tool_version": __version__, **extra}


# ---------------------------------------------------------------------------
# data preparation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class StockYear:
    stock: str
    year: int
    trades: TradeTable
    firms: list[str]

    def grid(self, horizon: str, session: Session) -> IntervalGrid:
        return IntervalGrid.build(self.trades.trading_days(), Horizon.parse(horizon), session)

    def panel(self, horizon: str, session: Session) -> tuple[InventoryPanel, ReturnSeries]:
        grid = self.grid(horizon, session)
        return build_inventory_panel(self.trades, self.firms, grid), build_return_series(self.trades, grid)

    def tag(self, horizon: str) -> str:
        return f"{self.stock}_{self.year}_{horizon}"


def load_trades(paths: Sequence[str]) -> TradeTable:
    if not paths:
        raise ConfigError("--input is required")
    records = []
    for p in paths:
        log.info("parsing %s", p)
        records.extend(parse_trade_tape(p))
    records.sort(key=lambda r: r.timestamp)
    return TradeTable.from_records(records)


def resolve_stock(table: TradeTable, stock: str | None) -> str:
    stocks = sorted(set(table.stocks.tolist()))
    if stock is None:
        if len(stocks) != 1:
            raise ConfigError(f"tape holds stocks {stocks}; choose one with --stock")
        return stocks[0]
    if stock not in stocks:
        raise DataError(f"stock {stock!r} not found in tape (have {stocks})")
    return stock


def prepare(table: TradeTable, cfg: RunConfig, year: int) -> StockYear:
    stock = resolve_stock(table, cfg.stock)
    trades = table.select(stock, year)
    if len(trades) == 0:
        raise DataError(f"no trades for {stock} in {year}")
    firms = sorted(f for f in select_active_firms(trades, cfg.min_days, cfg.min_transactions)
                   if not is_reserved_firm(f))
    log.info("%s %d: %d trades, %d active firms", stock, year, len(trades), len(firms))
    return StockYear(stock, year, trades, firms)


def resolve_years(table: TradeTable, cfg: RunConfig) -> list[int]:
    have = table.years()
    if not cfg.years:
        return have
    missing = sorted(set(cfg.years) - set(have))
    if missing:
        raise DataError(f"years {missing} not present in tape (have {have})")
    return sorted(cfg.years)


def _require_firms(sy: StockYear, n: int = 2) -> None:
    if len(sy.firms) < n:
        raise DataError(f"{sy.stock} {sy.year}: {len(sy.firms)} active firm(s); need at least {n} "
                        "for a correlation matrix")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(sy: StockYear, cfg: RunConfig, horizon: str, out: Path) -> list[Path]:
    panel, returns = sy.panel(horizon, cfg.session_obj())
    tag = sy.tag(horizon)
    meta = metadata(cfg, stock=sy.stock, year=sy.year, horizon=horizon)
    pp, rp = out / f"panel_{tag}.csv", out / f"returns_{tag}.csv"
    write_panel(panel, pp, meta)
    write_returns(returns, rp, meta)
    return [pp, pp.with_suffix(".json"), rp, rp.with_suffix(".json")]


def stage_spectrum(sy: StockYear, cfg: RunConfig, horizon: str, out: Path) -> list[Path]:
    _require_firms(sy)
    session = cfg.session_obj()
    panel, returns = sy.panel(horizon, session)
    corr = correlation_matrix(panel)
    spec = eigendecompose(corr)
    seed = derive_seed(cfg.seed, f"shuffle/{sy.stock}/{sy.year}/{horizon}")
    null = shuffle_null_spectrum(sy.trades, sy.firms, panel.grid, cfg.n_shuffles, seed)
    factor = first_factor_series(panel, spec)
    fr = float(np.corrcoef(factor.values, returns.values)[0, 1])
    N, T = panel.shape[1], panel.shape[0]
    tag = sy.tag(horizon)
    report = {
        "metadata": metadata(cfg, stock=sy.stock, year=sy.year, horizon=horizon, shuffle_seed=seed),
        "firms": panel.firms,
        "n_firms": N,
        "n_intervals": T,
        "eigenvalues": spec.eigenvalues,
        "lambda1": spec.lambda1,
        "lambda2": spec.lambda2,
        "thresholds": null.to_dict(),
        "lambda1_above_rmt": bool(T > N and spec.lambda1 > null.rmt_lambda_max),
        "lambda1_above_shuffle": spec.lambda1 > null.shuffle_lambda_max,
        "lambda2_above_rmt": bool(T > N and spec.lambda2 > null.rmt_lambda_max),
        "lambda2_above_shuffle": spec.lambda2 > null.shuffle_lambda_max,
        "first_eigenvector": spec.eigenvectors[:, 0],
        "factor_return_correlation": fr,
    }
    paths = [write_json(out / f"spectrum_{tag}.json", report)]
    paths.append(write_csv(out / f"spectrum_{tag}_matrix.csv", ["firm", *panel.firms],
                           ([f, *row] for f, row in zip(panel.firms, corr.entries.tolist()))))
    paths.append(write_csv(out / f"spectrum_{tag}_factor.csv", ["interval_start", "factor", "return"],
                           ((str(s), float(f), float(r)) for s, f, r in
                            zip(panel.grid.starts, factor.values, returns.values))))
    return paths


def classify_year(sy: StockYear, cfg: RunConfig, horizon: str = "1d"):
    _require_firms(sy)
    panel, returns = sy.panel(horizon, cfg.session_obj())
    fits = fit_one_factor(panel, returns)
    labels = classify_firms(fits)
    return panel, returns, fits, labels


def stage_classify(sy: StockYear, cfg: RunConfig, horizon: str, out: Path) -> list[Path]:
    panel, returns, fits, labels = classify_year(sy, cfg, horizon)
    T = panel.shape[0]
    sigma = significance_sigma(T)
    sizes = size_proxies(sy.trades, sy.firms)
    tag = sy.tag(horizon)
    paths = [write_csv(out / f"classify_{tag}.csv",
                       ["firm", "rho", "gamma", "sigma", "threshold", "label", "size_proxy"],
                       ((f.firm, f.rho, f.gamma, sigma, 2 * sigma, labels[f.firm].value,
                         sizes[f.firm].avg_daily_value) for f in fits))]
    corr = correlation_matrix(panel)
    srt = sort_matrix_by_rho(corr, [f.rho for f in fits], sigma)
    paths.append(write_csv(out / f"classify_{tag}_sorted_matrix.csv", ["firm", "rho", *srt.matrix.firms],
                           ([f, rho, *row] for f, rho, row in
                            zip(srt.matrix.firms, srt.rho_sorted.tolist(), srt.matrix.entries.tolist()))))
    paths.append(write_json(out / f"classify_{tag}_summary.json", {
        "metadata": metadata(cfg, stock=sy.stock, year=sy.year, horizon=horizon),
        "n_intervals": T,
        "sigma": sigma,
        "census": census(labels),
        "sorted_order": srt.matrix.firms,
        "group_boundaries": list(srt.boundaries),
        "cell_significance_threshold": 2 * sigma,
    }))
    return paths


def stage_transitions(table: TradeTable, cfg: RunConfig, years: Sequence[int], out: Path) -> list[Path]:
    if len(years) < 2:
        raise DataError("transitions need at least two years")
    by_year = {}
    stock = None
    for y in years:
        sy = prepare(table, cfg, y)
        stock = sy.stock
        _, _, _, labels = classify_year(sy, cfg)
        by_year[y] = (set(sy.firms), labels)
    tm = transition_matrix(by_year)
    path = out / f"transitions_{stock}_{years[0]}-{years[-1]}.json"
    return [write_json(path, {"metadata": metadata(cfg, stock=stock, years=list(years)), **tm.to_dict(),
                              "census": {str(y): census(by_year[y][1]) for y in years}})]


def stage_causality(sy: StockYear, cfg: RunConfig, out: Path) -> list[Path]:
    horizon = f"{CAUSALITY_STEP_MINUTES}m"
    _require_firms(sy, 1)
    panel, returns = sy.panel(horizon, cfg.session_obj())
    lags, prof, n_pairs, summaries = integrated_causality_panel(panel.values, returns.values, panel.firms,
                                                                panel.grid)
    sigma = 1.0 / np.sqrt(np.maximum(n_pairs, 1))
    tag = sy.tag(horizon)
    step = CAUSALITY_STEP_MINUTES
    paths = [
        write_csv(out / f"causality_{tag}_lags.csv", ["firm", "lag_minutes", "rho", "sigma"],
                  ((f, int(lag) * step, float(prof[i, j]), float(sigma[i]))
                   for j, f in enumerate(panel.firms) for i, lag in enumerate(lags))),
        write_csv(out / f"causality_{tag}.csv", ["firm", "sync", "past_sum", "future_sum"],
                  ((s.firm, s.sync, s.past_sum, s.future_sum) for s in summaries)),
    ]
    acf_rows = []
    max_lag = 16
    for name, series in [("_RETURN", returns.values)] + list(zip(panel.firms, panel.values.T)):
        if np.ptp(series) == 0 or len(series) <= max_lag + 2:
            continue
        for k, a in autocorrelation(series, max_lag, panel.grid):
            acf_rows.append((name, k * step, a))
    paths.append(write_csv(out / f"causality_{tag}_acf.csv", ["series", "lag_minutes", "acf"], acf_rows))
    paths.append(write_json(out / f"causality_{tag}.json", {
        "metadata": metadata(cfg, stock=sy.stock, year=sy.year, horizon=horizon),
        "overnight_pairs": "excluded",
        "lags_minutes": (lags * step).tolist(),
        "n_pairs": n_pairs.tolist(),
        "past_window_minutes": [-10 * step, -step],
        "future_window_minutes": [step, 10 * step],
        "sum_sigma": "null std with inventory autocorrelation, returns serially uncorrelated",
        "summary": [{"firm": s.firm, "sync": s.sync, "past_sum": s.past_sum, "future_sum": s.future_sum,
                     "past_sigma": s.past_sigma, "future_sigma": s.future_sigma} for s in summaries],
    }))
    return paths


def stage_herd(sy: StockYear, cfg: RunConfig, horizon: str, out: Path,
               labels: dict[str, GroupLabel] | None = None) -> list[Path]:
    if labels is None:
        _, _, _, labels = classify_year(sy, cfg)
    panel, returns = sy.panel(horizon, cfg.session_obj())
    ledger = herding_scan(panel, labels, horizon, cfg.alpha)
    summary = conditional_stats(ledger)
    tag = sy.tag(horizon)
    return [
        write_csv(out / f"herding_ledger_{tag}.csv",
                  ["interval_start", "group", "n_buy", "n_sell", "h", "label", "b", "n_eff"],
                  ((r.interval_start, r.group.value, r.activity.n_buy, r.activity.n_sell, r.h, r.label.value,
                    r.b, r.n_eff) for r in ledger.records)),
        write_json(out / f"herding_summary_{tag}.json", {
            "metadata": metadata(cfg, stock=sy.stock, year=sy.year, horizon=horizon),
            "group_sizes": {g.value: sum(1 for x in labels.values() if x == g) for g in set(labels.values())},
            **summary.to_dict()}),
        write_csv(out / f"timeline_{tag}.csv", ["date", "close_price", "group", "label"],
                  herding_timeline(ledger, returns)),
    ]
