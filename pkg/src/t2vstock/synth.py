"""Seeded synthetic EOD data standing in for the proprietary exchange export."""

from __future__ import annotations

import datetime as dt

import numpy as np

from .ingest import EodBar, validate_bar

DEFAULT_TICKERS = (
    "1JANATAMF", "AAMRANET", "ABBANK", "ACI",
    "ACIFORMULA", "AGRANINS", "ALLTEX", "DELTALIFE",
)

# Sunday..Thursday sessions
TRADING_WEEKDAYS = frozenset({6, 0, 1, 2, 3})


def trading_days(start: dt.date, count: int) -> list[dt.date]:
    days = []
    d = start
    while len(days) < count:
        if d.weekday() in TRADING_WEEKDAYS:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def synth_close(n: int, rng: np.random.Generator) -> np.ndarray:
    """Trend plus two slow cycles plus noise; strictly positive."""
    t = np.arange(n, dtype=np.float64)
    base = rng.uniform(20.0, 120.0)
    trend = rng.uniform(-0.15, 0.35) * base * t / n
    p1, p2 = rng.uniform(40.0, 90.0), rng.uniform(120.0, 300.0)
    a1, a2 = base * rng.uniform(0.04, 0.08), base * rng.uniform(0.06, 0.12)
    cycles = a1 * np.sin(2 * np.pi * t / p1 + rng.uniform(0, 2 * np.pi)) \
        + a2 * np.sin(2 * np.pi * t / p2 + rng.uniform(0, 2 * np.pi))
    noise = rng.normal(0.0, base * 0.004, size=n)
    close = base + trend + cycles + noise
    return np.maximum(close, base * 0.05)


def synth_bars(ticker: str, days: list[dt.date], rng: np.random.Generator) -> list[EodBar]:
    n = len(days)
    close = np.round(synth_close(n, rng), 4)
    prev = np.concatenate([[close[0]], close[:-1]])
    opens = np.round(np.maximum(prev + rng.normal(0.0, 0.002, n) * prev, 0.01), 4)
    wick = np.abs(rng.normal(0.0, 0.004, (2, n))) * close
    high = np.round(np.maximum(opens, close) + wick[0], 4)
    low = np.round(np.maximum(np.minimum(opens, close) - wick[1], 0.0), 4)
    volume = np.round(rng.lognormal(np.log(2e5), 0.6, n)).astype(np.int64)
    return [
        validate_bar(EodBar(ticker, d, float(o), float(h), float(lo), float(c), int(v)))
        for d, o, h, lo, c, v in zip(days, opens, high, low, close, volume)
    ]


def generate(tickers=DEFAULT_TICKERS, n_days: int = 2000, seed: int = 7,
             start: dt.date = dt.date(2012, 10, 1)) -> list[EodBar]:
    """Bars for every ticker over the same calendar, ticker-major order."""
    days = trading_days(start, n_days)
    bars = []
    for i, ticker in enumerate(tickers):
        rng = np.random.default_rng([seed, i])
        bars.extend(synth_bars(ticker, days, rng))
    return bars
