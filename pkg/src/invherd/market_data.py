"""Trade tape ingestion, activity filter, and interval panels.

A trade tape is a UTF-8 CSV with header ``timestamp,stock,buyer,seller,price,volume``.
Everything downstream works on a columnar :class:`TradeTable`; firms are
integer-coded so that shuffles and aggregations stay vectorised.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError, TapeParseError

TAPE_COLUMNS = ("timestamp", "stock", "buyer", "seller", "price", "volume")
RESERVED_PREFIX = "_"

FirmId = str


@dataclass(frozen=True)
class TradeRecord:
    timestamp: datetime
    stock: str
    buyer: FirmId
    seller: FirmId
    price: float
    volume: float

    @property
    def value(self) -> float:
        return self.price * self.volume


def is_reserved_firm(firm: FirmId) -> bool:
    """Synthetic bookkeeping firms (e.g. the counterparty pool) start with ``_``."""
    return firm.startswith(RESERVED_PREFIX)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_trade_tape(source: IO[bytes] | IO[str] | str | Path) -> list[TradeRecord]:
    """Parse a trade tape and return its records sorted by timestamp.

    ``source`` may be a path or an open (binary or text) stream. Malformed
    lines raise :class:`TapeParseError` carrying the 1-based line number.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return parse_trade_tape(fh)

    raw = source.read()
    text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return []
    header = [h.strip() for h in header]
    if sorted(header) != sorted(TAPE_COLUMNS):
        raise TapeParseError(1, f"expected columns {','.join(TAPE_COLUMNS)}, got {','.join(header)}")
    pos = {name: header.index(name) for name in TAPE_COLUMNS}

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TAPE_COLUMNS):
            raise TapeParseError(line_no, f"expected {len(TAPE_COLUMNS)} fields, got {len(row)}")
        try:
            ts = datetime.fromisoformat(row[pos["timestamp"]].strip())
        except ValueError:
            raise TapeParseError(line_no, f"bad timestamp {row[pos['timestamp']]!r}") from None
        stock = row[pos["stock"]].strip()
        buyer = row[pos["buyer"]].strip()
        seller = row[pos["seller"]].strip()
        if not stock or not buyer or not seller:
            raise TapeParseError(line_no, "empty stock or firm identifier")
        price = _positive(row[pos["price"]], "price", line_no)
        volume = _positive(row[pos["volume"]], "volume", line_no)
        records.append(TradeRecord(ts.replace(tzinfo=None, microsecond=0), stock, buyer, seller, price, volume))

    records.sort(key=lambda r: r.timestamp)
    return records


def _positive(text: str, name: str, line_no: int) -> float:
    try:
        x = float(text)
    except ValueError:
        raise TapeParseError(line_no, f"bad {name} {text!r}") from None
    if not math.isfinite(x) or x <= 0:
        raise TapeParseError(line_no, f"{name} must be > 0, got {text.strip()!r}")
    return x


def write_trade_tape(records: Iterable[TradeRecord], dest: IO[str] | str | Path) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            write_trade_tape(records, fh)
        return
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(TAPE_COLUMNS)
    for r in records:
        w.writerow([r.timestamp.isoformat(), r.stock, r.buyer, r.seller, repr(r.price), repr(r.volume)])


# ---------------------------------------------------------------------------
# columnar view
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TradeTable:
    """Columnar trades with integer-coded firms (codes index ``firm_ids``)."""

    timestamps: np.ndarray  # datetime64[s]
    stocks: np.ndarray  # object
    firm_ids: list[FirmId]
    buyer: np.ndarray  # int
    seller: np.ndarray  # int
    price: np.ndarray
    volume: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[TradeRecord]) -> "TradeTable":
        firms = sorted({r.buyer for r in records} | {r.seller for r in records})
        code = {f: i for i, f in enumerate(firms)}
        n = len(records)
        ts = np.array([r.timestamp for r in records], dtype="datetime64[s]") if n else np.array([], "datetime64[s]")
        return cls(
            timestamps=ts,
            stocks=np.array([r.stock for r in records], dtype=object),
            firm_ids=firms,
            buyer=np.fromiter((code[r.buyer] for r in records), dtype=np.int64, count=n),
            seller=np.fromiter((code[r.seller] for r in records), dtype=np.int64, count=n),
            price=np.fromiter((r.price for r in records), dtype=float, count=n),
            volume=np.fromiter((r.volume for r in records), dtype=float, count=n),
        )

    def __len__(self) -> int:
        return len(self.price)

    @property
    def value(self) -> np.ndarray:
        return self.price * self.volume

    def subset(self, mask: np.ndarray) -> "TradeTable":
        return TradeTable(self.timestamps[mask], self.stocks[mask], self.firm_ids,
                          self.buyer[mask], self.seller[mask], self.price[mask], self.volume[mask])

    def with_labels(self, buyer: np.ndarray, seller: np.ndarray) -> "TradeTable":
        return TradeTable(self.timestamps, self.stocks, self.firm_ids, buyer, seller, self.price, self.volume)

    def select(self, stock: str | None = None, year: int | None = None) -> "TradeTable":
        mask = np.ones(len(self), dtype=bool)
        if stock is not None:
            mask &= self.stocks == stock
        if year is not None:
            years = self.timestamps.astype("datetime64[Y]").astype(int) + 1970
            mask &= years == year
        return self.subset(mask)

    def years(self) -> list[int]:
        return sorted(set((self.timestamps.astype("datetime64[Y]").astype(int) + 1970).tolist()))

    def trading_days(self) -> list[date]:
        days = np.unique(self.timestamps.astype("datetime64[D]"))
        return [d.astype(object) for d in days]

    def to_records(self) -> list[TradeRecord]:
        ids = self.firm_ids
        return [TradeRecord(t.astype(datetime), s, ids[b], ids[q], float(p), float(v))
                for t, s, b, q, p, v in zip(self.timestamps, self.stocks, self.buyer, self.seller,
                                            self.price, self.volume)]


def as_table(trades: Sequence[TradeRecord] | TradeTable) -> TradeTable:
    return trades if isinstance(trades, TradeTable) else TradeTable.from_records(trades)


# ---------------------------------------------------------------------------
# interval grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Session:
    open: time = time(9, 0)
    close: time = time(17, 30)

    def __post_init__(self):
        if self.close <= self.open:
            raise ValueError("session close must be after open")

    @property
    def minutes(self) -> int:
        return (self.close.hour * 60 + self.close.minute) - (self.open.hour * 60 + self.open.minute)

    @classmethod
    def parse(cls, open_: str, close: str) -> "Session":
        return cls(time.fromisoformat(open_), time.fromisoformat(close))


_HORIZON_RE = re.compile(r"^\s*(\d+)\s*(m|min|h|d)\s*$")


@dataclass(frozen=True)
class Horizon:
    """Interval length: ``minutes`` for intraday horizons, ``days`` otherwise."""

    minutes: int = 0
    days: int = 0

    def __post_init__(self):
        if (self.minutes > 0) == (self.days > 0):
            raise ValueError("exactly one of minutes/days must be positive")

    @classmethod
    def parse(cls, text: str) -> "Horizon":
        m = _HORIZON_RE.match(text)
        if not m:
            raise ValueError(f"bad horizon {text!r} (expected e.g. 15m, 1h, 1d, 5d)")
        n, unit = int(m.group(1)), m.group(2)
        if n <= 0:
            raise ValueError(f"bad horizon {text!r}")
        if unit == "d":
            return cls(days=n)
        return cls(minutes=n * 60 if unit == "h" else n)

    @property
    def intraday(self) -> bool:
        return self.minutes > 0

    def __str__(self) -> str:
        return f"{self.days}d" if self.days else f"{self.minutes}m"


@dataclass(frozen=True, eq=False)
class IntervalGrid:
    """Ordered, disjoint ``[start, end)`` spans covering trading sessions only."""

    horizon: Horizon
    session: Session
    days: tuple[date, ...]
    starts: np.ndarray
    ends: np.ndarray
    day_index: np.ndarray  # index into ``days`` of each interval's first day

    @classmethod
    def build(cls, days: Iterable[date], horizon: Horizon | str, session: Session | None = None) -> "IntervalGrid":
        if isinstance(horizon, str):
            horizon = Horizon.parse(horizon)
        session = session or Session()
        days = tuple(sorted(set(days)))
        open_s = session.open.hour * 3600 + session.open.minute * 60 + session.open.second
        close_s = session.close.hour * 3600 + session.close.minute * 60 + session.close.second
        day0 = np.array(days, dtype="datetime64[D]").astype("datetime64[s]")
        if horizon.intraday:
            step = horizon.minutes * 60
            offsets = np.arange(open_s, close_s, step)
            per_day = len(offsets)
            starts = (day0[:, None] + offsets[None, :].astype("timedelta64[s]")).ravel()
            end_off = np.minimum(offsets + step, close_s)
            ends = (day0[:, None] + end_off[None, :].astype("timedelta64[s]")).ravel()
            day_index = np.repeat(np.arange(len(days)), per_day)
        else:
            k = horizon.days
            first = np.arange(0, len(days), k)
            last = np.minimum(first + k, len(days)) - 1
            starts = day0[first] + np.timedelta64(open_s, "s")
            ends = day0[last] + np.timedelta64(close_s, "s")
            day_index = first
        return cls(horizon, session, days, starts, ends, day_index)

    @classmethod
    def business_days(cls, start: date, n_days: int) -> list[date]:
        out, d = [], start
        while len(out) < n_days:
            if d.weekday() < 5:
                out.append(d)
            d += timedelta(days=1)
        return out

    def __len__(self) -> int:
        return len(self.starts)

    @property
    def intervals_per_day(self) -> int | None:
        if not self.horizon.intraday:
            return None
        return len(self) // max(len(self.days), 1)

    def locate(self, timestamps: np.ndarray) -> np.ndarray:
        """Interval index per timestamp, ``-1`` when outside every interval."""
        ts = np.asarray(timestamps, dtype="datetime64[s]")
        idx = np.searchsorted(self.starts, ts, side="right") - 1
        ok = idx >= 0
        ok[ok] &= ts[ok] < self.ends[idx[ok]]
        return np.where(ok, idx, -1)

    def same_session(self, lag: int) -> np.ndarray:
        """Mask over t in [0, T-lag): True when intervals t and t+lag share a trading day."""
        di = self.day_index
        return di[: len(di) - lag] == di[lag:]

    def to_meta(self) -> dict:
        return {
            "horizon": str(self.horizon),
            "session": [self.session.open.isoformat("minutes"), self.session.close.isoformat("minutes")],
            "days": [d.isoformat() for d in self.days],
            "n_intervals": len(self),
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "IntervalGrid":
        return cls.build([date.fromisoformat(d) for d in meta["days"]], Horizon.parse(meta["horizon"]),
                         Session.parse(*meta["session"]))

    def __eq__(self, other) -> bool:
        return (isinstance(other, IntervalGrid) and self.horizon == other.horizon
                and self.session == other.session and self.days == other.days)

    __hash__ = None


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class InventoryPanel:
    grid: IntervalGrid
    firms: list[FirmId]
    values: np.ndarray  # T x N euros
    activity: np.ndarray  # T x N bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, firm: FirmId) -> np.ndarray:
        return self.values[:, self.firms.index(firm)]

    def select(self, firms: Sequence[FirmId]) -> "InventoryPanel":
        cols = [self.firms.index(f) for f in firms]
        return InventoryPanel(self.grid, list(firms), self.values[:, cols], self.activity[:, cols],
                              dict(self.diagnostics))


@dataclass(eq=False)
class ReturnSeries:
    grid: IntervalGrid
    values: np.ndarray  # log-returns
    prices: np.ndarray  # last trade price, carried forward
    gaps: np.ndarray  # bool: interval had no trade
    diagnostics: dict = field(default_factory=dict)


def select_active_firms(trades: Sequence[TradeRecord] | TradeTable, min_days: int = 200,
                        min_transactions: int = 1000) -> set[FirmId]:
    """Firms trading on at least ``min_days`` distinct days and in at least ``min_transactions`` trades.

    Expects a single stock and calendar year. A self-crossed trade counts once.
    """
    t = as_table(trades)
    n_firms = len(t.firm_ids)
    if len(t) == 0:
        return set()
    self_cross = t.buyer == t.seller
    n_tx = np.bincount(t.buyer, minlength=n_firms) + np.bincount(t.seller[~self_cross], minlength=n_firms)
    day = t.timestamps.astype("datetime64[D]").astype(np.int64)
    pairs = np.unique(np.concatenate([
        np.stack([t.buyer, day], axis=1), np.stack([t.seller, day], axis=1)]), axis=0)
    n_days = np.bincount(pairs[:, 0], minlength=n_firms)
    keep = (n_days >= min_days) & (n_tx >= min_transactions)
    return {t.firm_ids[i] for i in np.flatnonzero(keep)}


def build_inventory_panel(trades: Sequence[TradeRecord] | TradeTable, firms: Sequence[FirmId],
                          grid: IntervalGrid) -> InventoryPanel:
    """Signed euro inventory change per interval and firm (bought minus sold).

    Trades falling outside the grid are dropped and counted in ``diagnostics``.
    """
    t = as_table(trades)
    firms = list(firms)
    n, T = len(firms), len(grid)
    col = firm_columns(t, firms)
    idx = grid.locate(t.timestamps)
    inside = idx >= 0
    vals, active = accumulate_panel(idx, t.value, col[t.buyer], col[t.seller], T, n)
    diagnostics = {"dropped_trades": int((~inside).sum()), "n_trades": len(t)}
    return InventoryPanel(grid, firms, vals, active, diagnostics)


def firm_columns(table: TradeTable, firms: Sequence[FirmId]) -> np.ndarray:
    """Map each firm code of ``table`` to its panel column (``-1`` if not analysed)."""
    col = np.full(len(table.firm_ids), -1, dtype=np.int64)
    code = {f: i for i, f in enumerate(table.firm_ids)}
    for j, f in enumerate(firms):
        if f in code:
            col[code[f]] = j
    return col


def accumulate_panel(idx: np.ndarray, value: np.ndarray, bcol: np.ndarray, scol: np.ndarray,
                     T: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sum signed trade values into a T x n grid; negative indices are skipped."""
    vals = np.zeros(T * n)
    counts = np.zeros(T * n, dtype=np.int64)
    if n and T:
        inside = idx >= 0
        for cols, sign in ((bcol, 1.0), (scol, -1.0)):
            m = inside & (cols >= 0)
            flat = idx[m] * n + cols[m]
            vals += np.bincount(flat, weights=sign * value[m], minlength=T * n)
            counts += np.bincount(flat, minlength=T * n)
    return vals.reshape(T, n), counts.reshape(T, n) > 0


def build_return_series(trades: Sequence[TradeRecord] | TradeTable, grid: IntervalGrid) -> ReturnSeries:
    """Log-returns of the last trade price per interval.

    Intervals without trades carry the previous price forward (return 0) and
    are flagged in ``gaps``; leading gaps take the first observed price. The
    first interval has no predecessor and gets return 0.
    """
    t = as_table(trades)
    T = len(grid)
    idx = grid.locate(t.timestamps)
    order = np.argsort(t.timestamps, kind="stable")
    last = np.full(T, -1, dtype=np.int64)
    inside = idx[order] >= 0
    np.maximum.at(last, idx[order][inside], np.arange(len(order))[inside])
    priced = last >= 0
    if priced.sum() < 2:
        raise InsufficientDataError(f"need at least 2 priced intervals, got {int(priced.sum())}")
    prices = np.full(T, np.nan)
    prices[priced] = t.price[order][last[priced]]
    # carry forward, then back-fill the leading gap
    fill = np.where(priced, np.arange(T), 0)
    np.maximum.accumulate(fill, out=fill)
    first = np.flatnonzero(priced)[0]
    fill[:first] = first
    prices = prices[fill]
    r = np.zeros(T)
    r[1:] = np.log(prices[1:] / prices[:-1])
    return ReturnSeries(grid, r, prices, ~priced, {"gap_intervals": int((~priced).sum()),
                                                   "dropped_trades": int((idx < 0).sum())})


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_panel(panel: InventoryPanel, path: str | Path, metadata: dict | None = None) -> None:
    """CSV (one row per interval, one column per firm) plus a JSON sidecar.

    Activity is implied by a nonzero value; the sidecar lists the rare cells
    that are active with zero net value (self-crossed trades).
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_start", *panel.firms])
        for s, row in zip(panel.grid.starts, panel.values):
            w.writerow([str(s), *map(repr, row.tolist())])
    zero_active = np.argwhere(panel.activity & (panel.values == 0)).tolist()
    _write_json(_sidecar(path), {"grid": panel.grid.to_meta(), "firms": panel.firms,
                                 "zero_active_cells": zero_active, "diagnostics": panel.diagnostics,
                                 "metadata": metadata or {}})


def read_panel(path: str | Path) -> InventoryPanel:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    grid = IntervalGrid.from_meta(meta["grid"])
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if rows[0][1:] != meta["firms"]:
        raise DataError(f"{path}: header does not match sidecar firm list")
    values = np.array([[float(x) for x in row[1:]] for row in rows[1:]], dtype=float).reshape(
        len(rows) - 1, len(meta["firms"]))
    if values.shape[0] != len(grid):
        raise DataError(f"{path}: {values.shape[0]} rows but grid has {len(grid)} intervals")
    activity = values != 0
    for t, i in meta["zero_active_cells"]:
        activity[t, i] = True
    return InventoryPanel(grid, list(meta["firms"]), values, activity, meta.get("diagnostics", {}))


def write_returns(series: ReturnSeries, path: str | Path, metadata: dict | None = None) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_start", "price", "return", "gap"])
        for s, p, r, g in zip(series.grid.starts, series.prices, series.values, series.gaps):
            w.writerow([str(s), repr(float(p)), repr(float(r)), int(g)])
    _write_json(_sidecar(path), {"grid": series.grid.to_meta(), "diagnostics": series.diagnostics,
                                 "metadata": metadata or {}})


def read_returns(path: str | Path) -> ReturnSeries:
    path = Path(path)
    meta = json.loads(_sidecar(path).read_text(encoding="utf-8"))
    grid = IntervalGrid.from_meta(meta["grid"])
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    prices = np.array([float(r[1]) for r in rows])
    values = np.array([float(r[2]) for r in rows])
    gaps = np.array([r[3] == "1" for r in rows], dtype=bool)
    return ReturnSeries(grid, values, prices, gaps, meta.get("diagnostics", {}))
