"""EOD bar parsing, per-ticker extraction, weekly resampling and column statistics."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

FIELDS = ("trading_code", "date", "open", "high", "low", "close", "volume")
OHLCV = ("open", "high", "low", "close", "volume")

DEFAULT_SCHEMA = {name: name for name in FIELDS}

# Monday=0 ... Sunday=6, as in datetime.date.weekday()
WEEKDAYS = {
    "monday": 0, "tuesday": 1, "wednesday": 2, "thursday": 3,
    "friday": 4, "saturday": 5, "sunday": 6,
}


class IngestError(ValueError):
    """Base class; ``row`` is the 1-based line number in the source file when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class MissingColumn(IngestError):
    pass


class UnparseableDate(IngestError):
    pass


class UnparseableNumber(IngestError):
    pass


class NegativePrice(IngestError):
    pass


class NegativeVolume(IngestError):
    pass


class OhlcInconsistent(IngestError):
    pass


class DuplicateDate(IngestError):
    pass


class EmptySelection(IngestError):
    pass


class EmptyColumn(IngestError):
    pass


@dataclass(frozen=True)
class EodBar:
    ticker: str
    date: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int


@dataclass(frozen=True)
class DailySeries:
    ticker: str
    bars: tuple[EodBar, ...]

    def __len__(self) -> int:
        return len(self.bars)


@dataclass(frozen=True)
class WeeklyBar:
    week_start: dt.date
    open: float
    high: float
    low: float
    close: float
    volume: int

    @property
    def date(self) -> dt.date:
        return self.week_start


@dataclass(frozen=True)
class SeriesStats:
    min: float
    max: float
    mean: float
    std: float


def validate_bar(bar: EodBar, row: int | None = None) -> EodBar:
    for name in ("open", "high", "low", "close"):
        value = getattr(bar, name)
        if not math.isfinite(value):
            raise UnparseableNumber(f"{name} is not finite", row)
        if value < 0:
            raise NegativePrice(f"{name} is negative ({value})", row)
    if bar.volume < 0:
        raise NegativeVolume(f"volume is negative ({bar.volume})", row)
    if bar.high < bar.low:
        raise OhlcInconsistent(f"high {bar.high} < low {bar.low}", row)
    if not bar.low <= bar.open <= bar.high:
        raise OhlcInconsistent(f"open {bar.open} outside [low {bar.low}, high {bar.high}]", row)
    if not bar.low <= bar.close <= bar.high:
        raise OhlcInconsistent(f"close {bar.close} outside [low {bar.low}, high {bar.high}]", row)
    return bar


def _resolve_columns(header: Sequence[str], schema: Mapping[str, str]) -> dict[str, int]:
    folded = {h.strip().lower(): i for i, h in enumerate(header)}
    out = {}
    for logical in FIELDS:
        column = schema.get(logical, logical)
        idx = folded.get(column.strip().lower())
        if idx is None:
            raise MissingColumn(f"column {column!r} (for {logical}) not in header {list(header)}", 1)
        out[logical] = idx
    return out


def _parse_volume(text: str, row: int) -> int:
    try:
        value = float(text)
    except ValueError:
        raise UnparseableNumber(f"volume {text!r} is not a number", row) from None
    if not value.is_integer():
        raise UnparseableNumber(f"volume {text!r} is not an integer", row)
    return int(value)


def parse_eod_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> list[EodBar]:
    """Read every row of an EOD export, validating each bar.

    ``schema`` maps logical field names (see ``FIELDS``) to header names;
    header matching ignores case and surrounding whitespace.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    bars = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise MissingColumn("file has no header row", 1)
        cols = _resolve_columns(header, schema)
        for row, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) < len(header):
                raise MissingColumn(f"expected {len(header)} fields, got {len(record)}", row)
            raw_date = record[cols["date"]].strip()
            try:
                date = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise UnparseableDate(f"date {raw_date!r} is not YYYY-MM-DD", row) from None
            prices = {}
            for name in ("open", "high", "low", "close"):
                text = record[cols[name]].strip()
                try:
                    prices[name] = float(text)
                except ValueError:
                    raise UnparseableNumber(f"{name} {text!r} is not a number", row) from None
            bar = EodBar(
                ticker=record[cols["trading_code"]].strip(),
                date=date,
                volume=_parse_volume(record[cols["volume"]].strip(), row),
                **prices,
            )
            bars.append(validate_bar(bar, row))
    return bars


def write_eod_csv(bars: Iterable[EodBar], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELDS)
        for b in bars:
            w.writerow([b.ticker, b.date.isoformat(), repr(b.open), repr(b.high),
                        repr(b.low), repr(b.close), b.volume])


def tickers(bars: Iterable[EodBar]) -> list[str]:
    """Distinct trading codes in first-appearance order."""
    return list(dict.fromkeys(b.ticker for b in bars))


def extract_ticker(bars: Iterable[EodBar], ticker: str) -> DailySeries:
    if not ticker:
        raise ValueError("ticker must be non-empty")
    if isinstance(bars, DailySeries):
        bars = bars.bars
    selected = sorted((b for b in bars if b.ticker == ticker), key=lambda b: b.date)
    if not selected:
        raise EmptySelection(f"no bars for ticker {ticker!r}")
    for prev, cur in zip(selected, selected[1:]):
        if prev.date == cur.date:
            raise DuplicateDate(f"{ticker} has two bars dated {cur.date.isoformat()}")
    return DailySeries(ticker, tuple(selected))


def week_key(date: dt.date, week_start_day: int = WEEKDAYS["sunday"]) -> dt.date:
    """Calendar date on which the week containing ``date`` begins."""
    return date - dt.timedelta(days=(date.weekday() - week_start_day) % 7)


def resample_weekly(series: DailySeries, week_start_day: int | str = "sunday") -> list[WeeklyBar]:
    if isinstance(week_start_day, str):
        week_start_day = WEEKDAYS[week_start_day.lower()]
    bars = series.bars if isinstance(series, DailySeries) else tuple(series)
    if not bars:
        raise ValueError("cannot resample an empty series")
    out = []
    group: list[EodBar] = []
    current = None
    for bar in bars:
        key = week_key(bar.date, week_start_day)
        if group and key != current:
            out.append(_fold_week(group))
            group = []
        current = key
        group.append(bar)
    out.append(_fold_week(group))
    return out


def _fold_week(group: Sequence[EodBar]) -> WeeklyBar:
    return WeeklyBar(
        week_start=group[0].date,
        open=group[0].open,
        high=max(b.high for b in group),
        low=min(b.low for b in group),
        close=group[-1].close,
        volume=sum(b.volume for b in group),
    )


def to_matrix(bars) -> tuple[list[dt.date], np.ndarray]:
    """Dates and the n x 5 OHLCV matrix for daily or weekly bars."""
    if isinstance(bars, DailySeries):
        bars = bars.bars
    dates = [b.date for b in bars]
    matrix = np.array([[b.open, b.high, b.low, b.close, float(b.volume)] for b in bars],
                      dtype=np.float64).reshape(-1, 5)
    return dates, matrix


def summarize(values: Iterable[float]) -> SeriesStats:
    x = np.asarray(list(values), dtype=np.float64)
    if x.size == 0:
        raise EmptyColumn("cannot summarize an empty column")
    mean = float(x.mean())
    # float rounding can push the mean a hair outside [min, max] on constant columns
    lo, hi = float(x.min()), float(x.max())
    mean = min(max(mean, lo), hi)
    std = 0.0 if lo == hi else float(x.std(ddof=0))
    return SeriesStats(min=lo, max=hi, mean=mean, std=std)


def summarize_bars(bars) -> dict[str, SeriesStats]:
    _, m = to_matrix(bars)
    return {name: summarize(m[:, i]) for i, name in enumerate(OHLCV)}


def write_stats_csv(stats: Mapping[str, SeriesStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["column_name", "min", "max", "mean", "std"])
        for name, s in stats.items():
            w.writerow([name, repr(s.min), repr(s.max), repr(s.mean), repr(s.std)])
