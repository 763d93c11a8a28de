"""Smoothing, differencing, min-max scaling and windowing of OHLCV series.

Processing order for a raw ``n x 5`` matrix::

    trailing moving average (window w)  -> n - w + 1 smoothed rows
    first difference                    -> n - w return rows
    min-max scaling fitted on the rows the training split touches
    sliding windows of ``lookback`` rows, label = next close return
    chronological 8:1:1 split

Everything here is invertible except the moving average, so predictions are
mapped back onto the *smoothed* price path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

CLOSE = 3
FEATURES = ("open", "high", "low", "close", "volume")


class SeriesTooShort(ValueError):
    pass


class DegenerateFeature(ValueError):
    pass


class UnfittedScaler(RuntimeError):
    pass


class TooFewSamples(ValueError):
    pass


def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean; ``out[i] = mean(values[i:i + window])``. Works column-wise on 2-D input."""
    x = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if x.shape[0] < window:
        raise SeriesTooShort(f"need at least {window} values, got {x.shape[0]}")
    out = np.lib.stride_tricks.sliding_window_view(x, window, axis=0).mean(axis=-1)
    return out


def difference(values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if x.shape[0] < 2:
        raise SeriesTooShort(f"need at least 2 values, got {x.shape[0]}")
    return x[1:] - x[:-1]


def undifference(returns, anchor) -> np.ndarray:
    """``out[i] = anchor + sum(returns[:i + 1])``."""
    r = np.asarray(returns, dtype=np.float64)
    return anchor + np.cumsum(r, axis=0)


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Per-feature min-max scaling to [0, 1] that refuses constant features.

    Values outside the fitted range pass through unclipped.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_2d=True)
        lo, hi = X.min(axis=0), X.max(axis=0)
        flat = np.flatnonzero(hi <= lo)
        if flat.size:
            raise DegenerateFeature(f"feature(s) {flat.tolist()} are constant; min-max scaling undefined")
        self.data_min_ = lo
        self.data_max_ = hi
        return self

    def _check(self):
        if not hasattr(self, "data_min_"):
            raise UnfittedScaler("scaler used before fit")

    def transform(self, X):
        self._check()
        X = np.asarray(X, dtype=np.float64)
        return (X - self.data_min_) / (self.data_max_ - self.data_min_)

    def inverse_transform(self, X):
        self._check()
        X = np.asarray(X, dtype=np.float64)
        return X * (self.data_max_ - self.data_min_) + self.data_min_

    def transform_column(self, values, column: int):
        self._check()
        lo, hi = self.data_min_[column], self.data_max_[column]
        return (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)

    def inverse_transform_column(self, values, column: int):
        self._check()
        lo, hi = self.data_min_[column], self.data_max_[column]
        return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def fit_scaler(matrix) -> MinMaxScaler:
    return MinMaxScaler().fit(matrix)


def normalize(matrix, scaler: MinMaxScaler) -> np.ndarray:
    if scaler is None:
        raise UnfittedScaler("no scaler")
    return scaler.transform(matrix)


def denormalize(matrix, scaler: MinMaxScaler) -> np.ndarray:
    if scaler is None:
        raise UnfittedScaler("no scaler")
    return scaler.inverse_transform(matrix)


def make_windows(matrix, lookback: int, label_column: int = CLOSE):
    """Sliding windows: ``X[t] = rows t..t+lookback-1``, ``y[t] = matrix[t+lookback, label_column]``."""
    m = np.asarray(matrix, dtype=np.float64)
    n = m.shape[0]
    if lookback < 1:
        raise ValueError("lookback must be >= 1")
    if n < lookback + 1:
        raise SeriesTooShort(f"need at least {lookback + 1} rows for lookback {lookback}, got {n}")
    idx = np.arange(n - lookback)[:, None] + np.arange(lookback)[None, :]
    return m[idx], m[lookback:, label_column].copy()


def split_points(n: int, train_fraction: float = 0.8, val_fraction: float = 0.1) -> tuple[int, int]:
    # round-before-floor keeps 0.9 * 100 from landing on 89.99999
    a = math.floor(round(n * train_fraction, 9))
    b = math.floor(round(n * (train_fraction + val_fraction), 9))
    return a, b


@dataclass
class WindowedDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    lookback: int
    # return-row index of each sample's label, per split
    label_rows: dict = field(default_factory=dict)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        name = {"training": "train", "validation": "val", "testing": "test"}.get(name, name)
        return getattr(self, f"X_{name}"), getattr(self, f"y_{name}")

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.y_train), len(self.y_val), len(self.y_test)


def split(X, y, train_fraction: float = 0.8, val_fraction: float = 0.1, lookback: int | None = None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < 10:
        raise TooFewSamples(f"need at least 10 samples, got {n}")
    if not 0 < train_fraction < 1 or val_fraction < 0 or train_fraction + val_fraction > 1:
        raise ValueError("invalid split fractions")
    a, b = split_points(n, train_fraction, val_fraction)
    lookback = X.shape[1] if lookback is None else lookback
    rows = np.arange(n) + lookback
    return WindowedDataset(
        X[:a], y[:a], X[a:b], y[a:b], X[b:], y[b:], lookback,
        label_rows={"train": rows[:a], "val": rows[a:b], "test": rows[b:]},
    )


class TransformPipeline(TransformerMixin, BaseEstimator):
    """Smoothing, differencing and scaling as one fitted, invertible transformer.

    ``fit`` takes a raw ``n x 5`` OHLCV matrix and fits the scaler only on
    the return rows the training windows touch (features and labels), so the
    validation and test regions never influence it.
    """

    def __init__(self, ma_window: int = 10, lookback: int = 8,
                 train_fraction: float = 0.8, val_fraction: float = 0.1):
        self.ma_window = ma_window
        self.lookback = lookback
        self.train_fraction = train_fraction
        self.val_fraction = val_fraction

    def smooth(self, X) -> np.ndarray:
        return moving_average(X, self.ma_window)

    def returns(self, X) -> np.ndarray:
        return difference(self.smooth(X))

    def n_samples(self, n_raw: int) -> int:
        return n_raw - (self.ma_window - 1) - 1 - self.lookback

    def training_rows(self, n_raw: int) -> int:
        """Number of leading return rows the training split reads."""
        n = self.n_samples(n_raw)
        if n < 10:
            raise TooFewSamples(f"{n_raw} bars yield {n} samples; need at least 10")
        n_train, _ = split_points(n, self.train_fraction, self.val_fraction)
        return n_train + self.lookback

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 5:
            raise ValueError(f"expected 5 OHLCV columns, got {X.shape[1]}")
        r = self.returns(X)
        self.n_train_rows_ = self.training_rows(X.shape[0])
        self.scaler_ = fit_scaler(r[: self.n_train_rows_])
        self.smoothed_ = self.smooth(X)
        self.n_raw_ = X.shape[0]
        return self

    def transform(self, X):
        if not hasattr(self, "scaler_"):
            raise UnfittedScaler("pipeline used before fit")
        return self.scaler_.transform(self.returns(np.asarray(X, dtype=np.float64)))

    def inverse_transform(self, Z):
        if not hasattr(self, "scaler_"):
            raise UnfittedScaler("pipeline used before fit")
        return self.scaler_.inverse_transform(Z)

    def make_dataset(self, X) -> WindowedDataset:
        Z = self.transform(X)
        Xw, yw = make_windows(Z, self.lookback)
        return split(Xw, yw, self.train_fraction, self.val_fraction, self.lookback)

    def anchor(self, label_row: int) -> float:
        """Smoothed close level immediately before the return at ``label_row``."""
        check_is_fitted(self, "smoothed_")
        return float(self.smoothed_[label_row, CLOSE])

    def smoothed_close(self, label_rows) -> np.ndarray:
        """Smoothed close levels reached after each listed return row."""
        check_is_fitted(self, "smoothed_")
        return self.smoothed_[np.asarray(label_rows) + 1, CLOSE]

    def row_dates(self, dates, label_rows) -> list:
        """Bar date of the smoothed level reached after each return row."""
        return [dates[int(j) + self.ma_window] for j in label_rows]


def prepare(matrix, ma_window: int = 10, lookback: int = 8,
            train_fraction: float = 0.8, val_fraction: float = 0.1):
    """Fit a :class:`TransformPipeline` on ``matrix`` and return ``(dataset, pipeline)``."""
    pipe = TransformPipeline(ma_window, lookback, train_fraction, val_fraction)
    pipe.fit(matrix)
    return pipe.make_dataset(matrix), pipe


def reconstruct_price(predicted, pipeline: TransformPipeline, anchor: float) -> np.ndarray:
    """Normalized close-return predictions -> smoothed price path starting after ``anchor``."""
    scaler = getattr(pipeline, "scaler_", None)
    if scaler is None:
        raise UnfittedScaler("pipeline used before fit")
    returns = scaler.inverse_transform_column(predicted, CLOSE)
    return undifference(returns, anchor)


def write_dataset_csv(X, y, path: str | Path) -> None:
    """One sample per row: the lookback x 5 window flattened column-major, then the label."""
    X = np.asarray(X)
    lookback = X.shape[1]
    header = [f"{f}_{t}" for f in FEATURES for t in range(lookback)] + ["label"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for window, label in zip(X, y):
            w.writerow([repr(float(v)) for v in window.reshape(-1, order="F")] + [repr(float(label))])


def read_dataset_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader], dtype=np.float64)
    lookback = (len(header) - 1) // len(FEATURES)
    rows = rows.reshape(-1, len(header))
    X = rows[:, :-1].reshape(-1, lookback, len(FEATURES), order="F")
    return X, rows[:, -1].copy()
