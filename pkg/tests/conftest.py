from datetime import date, datetime

import numpy as np
import pytest

from invherd.market_data import IntervalGrid, TradeRecord
from invherd.synthgen import GroupSpec, SynthConfig


def trade(ts: str, buyer: str, seller: str, price: float, volume: float, stock: str = "TEF") -> TradeRecord:
    return TradeRecord(datetime.fromisoformat(ts), stock, buyer, seller, price, volume)


@pytest.fixture
def day_grid():
    return IntervalGrid.build([date(2001, 1, 2), date(2001, 1, 3), date(2001, 1, 4)], "1d")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mixed_config(**kw) -> SynthConfig:
    base = dict(n_firms=70, n_intervals=250,
                groups=[GroupSpec(0.5, -0.3, 2e5), GroupSpec(0.4, 0.0, 1e5), GroupSpec(0.1, 0.4, 1e6)])
    base.update(kw)
    return SynthConfig(**base)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
