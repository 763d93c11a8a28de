"""Encoder-only transformer regressor with a time2vec position encoding.

Forward pass for a ``(batch, lookback, 5)`` feature tensor::

    time2vec(0..lookback-1)            -> (lookback, k+1), broadcast over batch
    concat with features, affine map   -> (batch, lookback, d_model)
    blocks x [MHA + residual + LN, FFN + residual + LN]
    mean over positions                -> (batch, d_model)
    dense + relu, dense                -> (batch, 1)

Parameters live in an ordered ``dict[str, Tensor]``; every function here is
stateless and takes that dict explicitly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import ShapeMismatch, Tensor

ModelParams = dict  # str -> Tensor, insertion-ordered


@dataclass(frozen=True)
class ModelConfig:
    lookback: int = 8
    input_features: int = 5
    t2v_k: int = 2
    d_model: int = 32
    heads: int = 2
    blocks: int = 2
    ffn_width: int = 64
    head_width: int = 32
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("lookback", "input_features", "d_model", "heads", "blocks", "ffn_width", "head_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.t2v_k < 0:
            raise ValueError("t2v_k must be non-negative")
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k in names:
                kw[k] = float(v) if k == "dropout" else int(v)
        return cls(**kw)


def param_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Name -> shape for every learnable tensor, in initialization order."""
    d, f = config.d_model, config.ffn_width
    shapes = {
        "t2v.omega": (config.t2v_k + 1,),
        "t2v.phi": (config.t2v_k + 1,),
        "embed.weight": (config.input_features + config.t2v_k + 1, d),
        "embed.bias": (d,),
    }
    for b in range(config.blocks):
        p = f"block{b}"
        for m in ("q", "k", "v", "o"):
            shapes[f"{p}.attn.w{m}"] = (d, d)
            shapes[f"{p}.attn.b{m}"] = (d,)
        shapes[f"{p}.ln1.gain"] = (d,)
        shapes[f"{p}.ln1.bias"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
        shapes[f"{p}.ln2.gain"] = (d,)
        shapes[f"{p}.ln2.bias"] = (d,)
    shapes["head.dense.weight"] = (d, config.head_width)
    shapes["head.dense.bias"] = (config.head_width,)
    shapes["head.out.weight"] = (config.head_width, 1)
    shapes["head.out.bias"] = (1,)
    return shapes


def init_params(config: ModelConfig, seed: int | None = None) -> ModelParams:
    """Glorot-uniform affine weights, zero biases, unit norm gains, omega ~ U[0, 1), zero phases."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if name == "t2v.omega":
            value = rng.uniform(0.0, 1.0, size=shape)
        elif name.endswith(".gain"):
            value = np.ones(shape)
        elif len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-limit, limit, size=shape)
        else:
            value = np.zeros(shape)
        params[name] = Tensor(value, requires_grad=True, name=name)
    return params


def copy_params(params: ModelParams) -> ModelParams:
    return {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in params.items()}


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return list(a) == list(b) and all(np.array_equal(a[k].data, b[k].data) for k in a)


def check_params(params: ModelParams, config: ModelConfig) -> None:
    expected = param_shapes(config)
    if list(params) != list(expected):
        missing = set(expected) - set(params)
        extra = set(params) - set(expected)
        raise ShapeMismatch(f"parameter names differ from config (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: expected {shape}, got {params[name].shape}")


def time2vec_forward(positions, omega: Tensor, phi: Tensor) -> Tensor:
    """``[w0*t + p0, sin(w1*t + p1), ..., sin(wk*t + pk)]`` for each position ``t``."""
    tau = Tensor(np.asarray(positions, dtype=np.float64).reshape(-1, 1))
    lin = T.matmul(tau, T.reshape(omega, (1, -1))) + phi
    k1 = omega.shape[0]
    linear_mask = np.zeros(k1)
    linear_mask[0] = 1.0
    return lin * linear_mask + T.sin(lin) * (1.0 - linear_mask)


def embed(features: Tensor, params: ModelParams) -> Tensor:
    batch, lookback, _ = features.shape
    t2v = time2vec_forward(np.arange(lookback), params["t2v.omega"], params["t2v.phi"])
    t2v = T.broadcast_to(t2v, (batch,) + t2v.shape)
    x = T.concat_lastdim(features, t2v)
    return x @ params["embed.weight"] + params["embed.bias"]


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """``softmax(q k^T / sqrt(d_k)) v`` over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeMismatch(f"query/key widths differ: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch(f"key/value position counts differ: {k.shape} vs {v.shape}")
    scores = T.matmul(q, T.swap_last(k)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = T.softmax_lastdim(scores)
    out = T.matmul(weights, v)
    return (out, weights) if return_weights else out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return T.transpose(T.reshape(x, (b, n, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dk = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, n, h * dk))


def multi_head_forward(x: Tensor, params: ModelParams, prefix: str, heads: int) -> Tensor:
    d = x.shape[-1]
    if d % heads:
        raise ShapeMismatch(f"width {d} not divisible by {heads} heads")
    q = _split_heads(x @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"], heads)
    k = _split_heads(x @ params[f"{prefix}.wk"] + params[f"{prefix}.bk"], heads)
    v = _split_heads(x @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"], heads)
    attended = _merge_heads(scaled_dot_product_attention(q, k, v))
    return attended @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def encoder_block(x: Tensor, params: ModelParams, prefix: str, config: ModelConfig,
                  training: bool = False, rng=None) -> Tensor:
    a = multi_head_forward(x, params, f"{prefix}.attn", config.heads)
    a = T.dropout(a, config.dropout, rng, training)
    h = T.layer_norm_lastdim(x + a, params[f"{prefix}.ln1.gain"], params[f"{prefix}.ln1.bias"])
    f = T.relu(h @ params[f"{prefix}.ffn.w1"] + params[f"{prefix}.ffn.b1"])
    f = f @ params[f"{prefix}.ffn.w2"] + params[f"{prefix}.ffn.b2"]
    f = T.dropout(f, config.dropout, rng, training)
    return T.layer_norm_lastdim(h + f, params[f"{prefix}.ln2.gain"], params[f"{prefix}.ln2.bias"])


def model_forward(features, params: ModelParams, config: ModelConfig,
                  training: bool = False, rng=None) -> Tensor:
    """Predictions of shape ``(batch, 1)``; ``training`` only switches dropout on."""
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.ndim != 3 or x.shape[2] != config.input_features:
        raise ShapeMismatch(f"expected (batch, lookback, {config.input_features}), got {x.shape}")
    h = embed(x, params)
    for b in range(config.blocks):
        h = encoder_block(h, params, f"block{b}", config, training, rng)
    pooled = T.mean(h, axis=1)
    hidden = T.relu(pooled @ params["head.dense.weight"] + params["head.dense.bias"])
    return hidden @ params["head.out.weight"] + params["head.out.bias"]


def predict(features, params: ModelParams, config: ModelConfig, batch_size: int = 256) -> np.ndarray:
    """Evaluation-mode predictions as a flat array."""
    X = np.asarray(features, dtype=np.float64)
    out = np.empty(len(X))
    with T.no_grad():
        for start in range(0, len(X), batch_size):
            chunk = X[start:start + batch_size]
            out[start:start + len(chunk)] = model_forward(chunk, params, config).data[:, 0]
    return out
