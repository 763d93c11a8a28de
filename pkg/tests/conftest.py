import datetime as dt

import numpy as np
import pytest

from t2vstock.ingest import EodBar

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_bar(date, o, h, lo, c, v, ticker="ACI"):
    return EodBar(ticker, date, float(o), float(h), float(lo), float(c), int(v))


def random_walk_ohlcv(n, rng, start=50.0):
    close = start + np.cumsum(rng.normal(0, 0.5, n))
    close = np.maximum(close, 1.0)
    open_ = close + rng.normal(0, 0.2, n)
    high = np.maximum(open_, close) + rng.uniform(0, 0.5, n)
    low = np.minimum(open_, close) - rng.uniform(0, 0.5, n)
    vol = rng.integers(1000, 100000, n).astype(float)
    return np.column_stack([open_, high, low, close, vol])


def calendar(start, n, rng=None, skip_prob=0.0):
    days, d = [], start
    while len(days) < n:
        if rng is None or rng.random() >= skip_prob:
            days.append(d)
        d += dt.timedelta(days=1)
    return days
