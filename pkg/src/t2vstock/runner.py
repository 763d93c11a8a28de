"""Library-level orchestration of ingest -> prepare -> train -> evaluate for one model.

The command line is a thin layer over these functions. Each trained model
lives in ``<out>/<chart>/<ticker>/``::

    checkpoint.t2vt      binary parameters
    epoch_log.csv        per-epoch RMSE/MAE
    run_config.txt       key=value echo of the run configuration
    metrics.csv          normalized-return RMSE/MAE per split   (evaluate)
    baseline_metrics.csv same, for the persistence forecast      (evaluate)
    price_metrics.csv    errors of the reconstructed price paths (evaluate)
    predictions_<split>.csv [.svg]                               (evaluate)
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from . import evaluation as ev
from .ingest import WEEKDAYS, extract_ticker, resample_weekly, to_matrix
from .model import ModelConfig, check_params
from .pipeline import prepare, write_dataset_csv
from .train import TrainConfig, fit, load_checkpoint, save_checkpoint, write_epoch_log

log = logging.getLogger(__name__)

CHECKPOINT = "checkpoint.t2vt"
EPOCH_LOG = "epoch_log.csv"
RUN_CONFIG = "run_config.txt"

# knobs a saved model must agree on before it can be evaluated
MODEL_KEYS = ("lookback", "ma_window", "week_start", "split", "t2v_k", "d_model",
              "heads", "blocks", "ffn_width", "head_width")


class ArtifactMismatch(RuntimeError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    lookback: int = 8
    ma_window: int = 10
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    d_model: int = 32
    heads: int = 2
    blocks: int = 2
    t2v_k: int = 2
    ffn_width: int = 64
    head_width: int = 32
    dropout: float = 0.0
    week_start: str = "sunday"
    split: str = "8:1:1"

    def __post_init__(self):
        for f in dataclasses.fields(self):
            setattr(self, f.name, _cast(f.default, getattr(self, f.name)))
        if self.week_start.lower() not in WEEKDAYS:
            raise ValueError(f"unknown weekday {self.week_start!r}")
        self.week_start = self.week_start.lower()
        self.split_fractions()
        if self.ma_window < 1 or self.lookback < 1:
            raise ValueError("ma_window and lookback must be positive")
        # validate the rest through the typed configs
        self.model_config()
        self.train_config()

    def split_fractions(self) -> tuple[float, float]:
        parts = [float(p) for p in str(self.split).split(":")]
        if len(parts) != 3 or any(p < 0 for p in parts) or parts[0] <= 0:
            raise ValueError(f"split must look like 8:1:1, got {self.split!r}")
        total = sum(parts)
        return parts[0] / total, parts[1] / total

    def model_config(self) -> ModelConfig:
        return ModelConfig(lookback=self.lookback, input_features=5, t2v_k=self.t2v_k,
                           d_model=self.d_model, heads=self.heads, blocks=self.blocks,
                           ffn_width=self.ffn_width, head_width=self.head_width,
                           dropout=self.dropout, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                           learning_rate=self.learning_rate, seed=self.seed)

    def knobs(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def default_of(cls, key: str):
        return {f.name: f.default for f in dataclasses.fields(cls)}[key]


def _cast(default, value):
    if isinstance(default, bool):
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def read_key_values(path: str | Path) -> dict[str, str]:
    """Flat ``key=value`` text; blank lines and ``#`` comments ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_key_values(values: dict, path: str | Path) -> None:
    text = "".join(f"{k}={v}\n" for k, v in values.items())
    Path(path).write_text(text, encoding="utf-8")


def series_for(bars, ticker: str, chart: str, week_start: str = "sunday"):
    """Dates and raw OHLCV matrix for one ticker on the daily or weekly chart."""
    daily = extract_ticker(bars, ticker)
    if chart == "daily":
        return to_matrix(daily)
    if chart == "weekly":
        return to_matrix(resample_weekly(daily, week_start))
    raise ValueError(f"unknown chart {chart!r}")


def prepare_for(matrix, cfg: RunConfig):
    tf, vf = cfg.split_fractions()
    return prepare(matrix, cfg.ma_window, cfg.lookback, tf, vf)


def model_dir(out: str | Path, ticker: str, chart: str) -> Path:
    return Path(out) / chart / ticker


def write_prepared(dataset, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for split in ev.SPLITS:
        X, y = dataset.split(split)
        p = directory / f"dataset_{split}.csv"
        write_dataset_csv(X, y, p)
        paths.append(p)
    return paths


def train_model(dates, matrix, ticker: str, chart: str, cfg: RunConfig, out: str | Path) -> Path:
    """Train one model and write its checkpoint, epoch log and config echo.

    The epoch log is flushed after every epoch so a diverging run leaves its
    history behind before :class:`NonFiniteLoss` propagates.
    """
    directory = model_dir(out, ticker, chart)
    directory.mkdir(parents=True, exist_ok=True)
    write_key_values({"ticker": ticker, "chart": chart, **cfg.knobs()}, directory / RUN_CONFIG)
    dataset, _ = prepare_for(matrix, cfg)
    history = []

    def on_epoch(entry):
        history.append(entry)
        write_epoch_log(history, directory / EPOCH_LOG)

    params, _ = fit(dataset.X_train, dataset.y_train, dataset.X_val, dataset.y_val,
                    cfg.model_config(), cfg.train_config(), callback=on_epoch)
    save_checkpoint(params, directory / CHECKPOINT)
    log.info("%s/%s: trained %d epochs, final val_rmse %.4g", chart, ticker, len(history),
             history[-1].val_rmse)
    return directory


def load_saved_config(directory: str | Path, overrides: dict | None = None) -> RunConfig:
    """Saved run configuration, checked against any explicitly supplied knobs."""
    path = Path(directory) / RUN_CONFIG
    if not path.exists():
        raise ArtifactMismatch(f"{path} is missing")
    saved = read_key_values(path)
    knobs = {k: v for k, v in saved.items() if k in RunConfig.keys()}
    cfg = RunConfig(**knobs)
    for key, value in (overrides or {}).items():
        if key in MODEL_KEYS and key in knobs:
            supplied = _cast(RunConfig.default_of(key), value)
            if key == "week_start":
                supplied = str(supplied).lower()
            if supplied != getattr(cfg, key):
                raise ArtifactMismatch(
                    f"{directory}: model was trained with {key}={getattr(cfg, key)}, got {key}={value}")
    return cfg


def evaluate_model(dates, matrix, ticker: str, chart: str, cfg: RunConfig, out: str | Path,
                   svg: bool = False):
    """Score a saved model; returns ``(model_rows, baseline_rows)`` and writes per-model files."""
    directory = model_dir(out, ticker, chart)
    ckpt = directory / CHECKPOINT
    if not ckpt.exists():
        raise ArtifactMismatch(f"{ckpt} is missing")
    params = load_checkpoint(ckpt)
    mc = cfg.model_config()
    try:
        check_params(params, mc)
    except ValueError as exc:
        raise ArtifactMismatch(f"{ckpt}: {exc}") from None
    dataset, pipe = prepare_for(matrix, cfg)
    preds = ev.model_predictions(params, mc, dataset)
    rows = ev.score_rows(preds, dataset, ticker, chart)
    base = ev.score_rows(ev.persistence_predictions(dataset), dataset, ticker, chart)
    series = {}
    for split in ev.SPLITS:
        if len(preds[split]) == 0:
            continue
        s = ev.predict_series(preds[split], dataset, split, pipe, dates)
        series[split] = s
        ev.emit_plot_series(s, directory / f"predictions_{split}.csv",
                            directory / f"predictions_{split}.svg" if svg else None)
    ev.emit_report(rows, directory / "metrics.csv")
    ev.emit_report(base, directory / "baseline_metrics.csv")
    ev.emit_report(ev.price_rows(series, ticker, chart), directory / "price_metrics.csv")
    return rows, base


def collect_reports(out: str | Path, name: str = "metrics.csv") -> list:
    rows = []
    for path in sorted(Path(out).glob(f"*/*/{name}")):
        rows.extend(ev.read_report(path))
    return rows


def baseline_summary(rows, base) -> str:
    """One line per model: test RMSE of the model vs the persistence forecast."""
    pick = lambda rs: {(r.chart_type, r.ticker): r.value for r in rs  # noqa: E731
                       if r.split == "testing" and r.metric == "RMSE"}
    m, b = pick(rows), pick(base)
    lines = []
    for key in sorted(m, key=lambda k: (ev.CHARTS.index(k[0]) if k[0] in ev.CHARTS else 9, k[1])):
        if key in b:
            gain = 1.0 - m[key] / b[key] if b[key] > 0 else float("nan")
            lines.append(f"{key[0]:<6} {key[1]:<11} test RMSE model {m[key]:.2E}  "
                         f"persistence {b[key]:.2E}  improvement {gain:+.1%}")
    return "\n".join(lines)
