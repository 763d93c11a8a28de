"""Error metrics, price reconstruction for plotting, and report files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import ModelConfig, ModelParams, predict
from .pipeline import CLOSE, TransformPipeline, WindowedDataset, reconstruct_price

CHARTS = ("daily", "weekly")
SPLITS = ("training", "validation", "testing")
METRICS = ("RMSE", "MAE")
_SPLIT_KEYS = {"training": "train", "validation": "val", "testing": "test"}


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


def _pair(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64).reshape(-1)
    a = np.asarray(actual, dtype=np.float64).reshape(-1)
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} actual values")
    if p.size == 0:
        raise EmptyInput("no values to score")
    return p, a


def rmse(predicted, actual) -> float:
    p, a = _pair(predicted, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(predicted, actual) -> float:
    p, a = _pair(predicted, actual)
    return float(np.mean(np.abs(p - a)))


@dataclass(frozen=True)
class MetricsRow:
    chart_type: str
    split: str
    metric: str
    ticker: str
    value: float

    def sort_key(self):
        return (CHARTS.index(self.chart_type) if self.chart_type in CHARTS else len(CHARTS),
                SPLITS.index(self.split), METRICS.index(self.metric), self.ticker)


def score_rows(predictions: dict, dataset: WindowedDataset, ticker: str, chart: str) -> list[MetricsRow]:
    """RMSE and MAE rows for each split in ``predictions`` (keyed training/validation/testing)."""
    rows = []
    for split in SPLITS:
        if split not in predictions:
            continue
        _, y = dataset.split(split)
        p = predictions[split]
        rows.append(MetricsRow(chart, split, "RMSE", ticker, rmse(p, y)))
        rows.append(MetricsRow(chart, split, "MAE", ticker, mae(p, y)))
    return rows


def model_predictions(params: ModelParams, config: ModelConfig, dataset: WindowedDataset,
                      batch_size: int = 256) -> dict[str, np.ndarray]:
    return {s: predict(dataset.split(s)[0], params, config, batch_size) for s in SPLITS}


def persistence_predictions(dataset: WindowedDataset) -> dict[str, np.ndarray]:
    """Naive forecast: the next close return equals the last one in the window."""
    return {s: dataset.split(s)[0][:, -1, CLOSE].copy() for s in SPLITS}


def evaluate(params: ModelParams, config: ModelConfig, dataset: WindowedDataset,
             ticker: str, chart: str = "daily", batch_size: int = 256) -> list[MetricsRow]:
    """Normalized-return-space RMSE/MAE on all three splits."""
    return score_rows(model_predictions(params, config, dataset, batch_size), dataset, ticker, chart)


@dataclass
class PredictionSeries:
    dates: list
    actual: np.ndarray
    predicted: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        return self.actual - self.predicted

    def __len__(self) -> int:
        return len(self.actual)


def predict_series(predicted_returns, dataset: WindowedDataset, split: str,
                   pipeline: TransformPipeline, dates: Sequence | None = None,
                   anchor: float | None = None) -> PredictionSeries:
    """Reconstruct smoothed close prices for one split from normalized return predictions.

    The path starts from the smoothed close just before the split's first
    label (or ``anchor`` when given) and accumulates the denormalized
    predicted returns.
    """
    rows = dataset.label_rows[_SPLIT_KEYS.get(split, split)]
    if len(rows) == 0:
        raise EmptyInput(f"split {split!r} is empty")
    if anchor is None:
        anchor = pipeline.anchor(int(rows[0]))
    predicted = reconstruct_price(predicted_returns, pipeline, anchor)
    actual = pipeline.smoothed_close(rows)
    labels = pipeline.row_dates(dates, rows) if dates is not None else [int(r) for r in rows]
    return PredictionSeries(labels, actual, predicted)


def _format(value: float) -> str:
    return f"{value:.2E}"


def emit_report(rows: Iterable[MetricsRow], path: str | Path) -> None:
    """Table-style CSV, sorted by chart, split, metric, ticker; values to 3 significant digits."""
    rows = sorted(rows, key=MetricsRow.sort_key)
    if not rows:
        raise EmptyInput("refusing to write an empty report")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chart_type", "split", "metric", "ticker", "value"])
        for r in rows:
            w.writerow([r.chart_type, r.split, r.metric, r.ticker, _format(r.value)])


def read_report(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MetricsRow(r["chart_type"], r["split"], r["metric"], r["ticker"], float(r["value"]))
                for r in csv.DictReader(fh)]


def pivot_table(rows: Iterable[MetricsRow]) -> str:
    """Plain-text grid with one column per ticker, like the published error table."""
    rows = sorted(rows, key=MetricsRow.sort_key)
    names = sorted({r.ticker for r in rows})
    cells = {(r.chart_type, r.split, r.metric, r.ticker): r.value for r in rows}
    keys = list(dict.fromkeys((r.chart_type, r.split, r.metric) for r in rows))
    lines = ["  ".join(["chart ", "split     ", "metric"] + [f"{n:>10}" for n in names])]
    for chart, split, metric in keys:
        vals = [cells.get((chart, split, metric, n)) for n in names]
        lines.append("  ".join([f"{chart:<6}", f"{split:<10}", f"{metric:<6}"]
                               + [f"{_format(v) if v is not None else '-':>10}" for v in vals]))
    return "\n".join(lines)


def _date_label(d) -> str:
    return d.isoformat() if hasattr(d, "isoformat") else str(d)


def emit_plot_series(series: PredictionSeries, path: str | Path, svg_path: str | Path | None = None) -> None:
    if len(series) == 0:
        raise EmptyInput("empty prediction series")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "actual", "predicted", "residual"])
        for d, a, p, r in zip(series.dates, series.actual, series.predicted, series.residuals):
            w.writerow([_date_label(d), repr(float(a)), repr(float(p)), repr(float(r))])
    if svg_path is not None:
        _render_svg(series, svg_path)


def read_plot_series(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    return [r["date"] for r in rows], col("actual"), col("predicted"), col("residual")


def _render_svg(series: PredictionSeries, path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(10, 4))
    x = np.arange(len(series))
    ax.plot(x, series.actual, label="actual (smoothed)", linewidth=1.2)
    ax.plot(x, series.predicted, label="predicted", linewidth=1.0)
    step = max(1, len(series) // 8)
    ax.set_xticks(x[::step])
    ax.set_xticklabels([_date_label(d) for d in series.dates[::step]], rotation=30, fontsize=7)
    ax.set_ylabel("close")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def price_rows(series_by_split: dict[str, PredictionSeries], ticker: str, chart: str) -> list[MetricsRow]:
    """Price-space errors of reconstructed paths; secondary to the normalized metrics."""
    rows = []
    for split in SPLITS:
        s = series_by_split.get(split)
        if s is None:
            continue
        rows.append(MetricsRow(chart, split, "RMSE", ticker, rmse(s.predicted, s.actual)))
        rows.append(MetricsRow(chart, split, "MAE", ticker, mae(s.predicted, s.actual)))
    return rows


def all_finite(rows: Iterable[MetricsRow]) -> bool:
    return all(math.isfinite(r.value) for r in rows)
