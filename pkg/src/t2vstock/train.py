"""Mini-batch Adam training, per-epoch metrics and the binary checkpoint format."""

from __future__ import annotations

import csv
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .model import ModelConfig, ModelParams, init_params, model_forward, predict
from .tensor import ShapeMismatch, Tensor

log = logging.getLogger(__name__)

MAGIC = b"T2VT"
VERSION = 1


class EmptyDataset(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


class CorruptCheckpoint(ValueError):
    pass


class NameCollision(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_rmse: float
    train_mae: float
    val_rmse: float
    val_mae: float
    seconds: float


def batch_iter(n_samples: int, batch_size: int, shuffle: bool = False,
               rng: np.random.Generator | int | None = None) -> Iterator[np.ndarray]:
    """Yield index arrays covering ``range(n_samples)`` once; the last batch may be short."""
    if n_samples < 1:
        raise EmptyDataset("no samples to batch")
    if shuffle:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        order = rng.permutation(n_samples)
    else:
        order = np.arange(n_samples)
    for start in range(0, n_samples, batch_size):
        yield order[start:start + batch_size]


def adam_step(params: ModelParams, grads: dict, state: OptimizerState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        p.data -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_epsilon)


def mse_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    return T.mean(T.square(pred - target))


def _metrics(pred: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    err = pred - target
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def fit(X_train, y_train, X_val, y_val, model_config: ModelConfig, train_config: TrainConfig,
        params: ModelParams | None = None, callback=None) -> tuple[ModelParams, list[EpochLog]]:
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if len(y_train) == 0:
        raise EmptyDataset("training split is empty")
    has_val = X_val is not None and len(y_val) > 0
    params = init_params(model_config) if params is None else params
    state = OptimizerState()
    rng = np.random.default_rng(train_config.seed)
    drop_rng = np.random.default_rng([train_config.seed, 1])
    logs = []
    for epoch in range(1, train_config.epochs + 1):
        t0 = time.perf_counter()
        for idx in batch_iter(len(y_train), train_config.batch_size, train_config.shuffle, rng):
            # overflow surfaces as a non-finite loss below; numpy's warnings add nothing
            with np.errstate(over="ignore", invalid="ignore"):
                pred = model_forward(X_train[idx], params, model_config, training=True, rng=drop_rng)
                loss = mse_loss(pred, y_train[idx])
            if not math.isfinite(loss.item()):
                raise NonFiniteLoss(f"loss became {loss.item()} at epoch {epoch}, step {state.step + 1}")
            loss.backward()
            grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
            adam_step(params, grads, state, train_config)
        tr = _metrics(predict(X_train, params, model_config), y_train)
        va = _metrics(predict(X_val, params, model_config), np.asarray(y_val)) if has_val else (math.nan, math.nan)
        entry = EpochLog(epoch, tr[0], tr[1], va[0], va[1], time.perf_counter() - t0)
        logs.append(entry)
        log.debug("epoch %d train_rmse=%.4g val_rmse=%.4g", epoch, tr[0], va[0])
        if callback is not None:
            callback(entry)
    return params, logs


def write_epoch_log(logs: Sequence[EpochLog], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_rmse", "train_mae", "val_rmse", "val_mae", "seconds"])
        for e in logs:
            w.writerow([e.epoch, repr(e.train_rmse), repr(e.train_mae), repr(e.val_rmse),
                        repr(e.val_mae), f"{e.seconds:.3f}"])


def read_epoch_log(path: str | Path) -> list[EpochLog]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EpochLog(int(r["epoch"]), float(r["train_rmse"]), float(r["train_mae"]),
                     float(r["val_rmse"]), float(r["val_mae"]), float(r["seconds"]))
            for r in csv.DictReader(fh)
        ]


# checkpoint format (little-endian):
#   b"T2VT" | u32 version | u32 count
#   count x ( u16 name_len | name utf-8 | u8 rank | rank x u64 dim | prod(dims) x f64 )

def dump_checkpoint(params: ModelParams) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, p in params.items():
        data = p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or data.ndim > 0xFF:
            raise ValueError(f"{name}: name or rank too large for the checkpoint format")
        chunks.append(struct.pack("<H", len(encoded)) + encoded)
        chunks.append(struct.pack(f"<B{data.ndim}Q", data.ndim, *data.shape))
        chunks.append(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return b"".join(chunks)


def save_checkpoint(params: ModelParams, path: str | Path) -> None:
    Path(path).write_bytes(dump_checkpoint(params))


def parse_checkpoint(blob: bytes) -> ModelParams:
    view = memoryview(blob)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CorruptCheckpoint(f"truncated while reading {what} at byte {pos}")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != MAGIC:
        raise CorruptCheckpoint("bad magic bytes")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CorruptCheckpoint(f"version mismatch: file has {version}, reader supports {VERSION}")
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = bytes(take(name_len, "name")).decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptCheckpoint("parameter name is not valid UTF-8") from None
        (rank,) = struct.unpack("<B", take(1, "rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * n, f"values of {name}"), dtype="<f8").astype(np.float64)
        if name in params:
            raise NameCollision(f"parameter {name!r} appears twice")
        params[name] = Tensor(data.reshape(dims), requires_grad=True, name=name)
    if pos != len(view):
        raise CorruptCheckpoint(f"{len(view) - pos} trailing bytes after last parameter")
    return params


def load_checkpoint(path: str | Path) -> ModelParams:
    return parse_checkpoint(Path(path).read_bytes())

