"""Independent reference computations shared by the module and acceptance tests."""

import math

import numpy as np

from t2vstock.model import ModelConfig, embed, encoder_block, init_params, scaled_dot_product_attention
from t2vstock.tensor import Tensor


def softmax_rows(s):
    out = np.empty_like(s)
    for idx in np.ndindex(s.shape[:-1]):
        row = s[idx]
        e = [math.exp(v - max(row)) for v in row]
        out[idx] = [v / sum(e) for v in e]
    return out


def single_head_attention(x, wq, bq, wk, bk, wv, bv, wo, bo):
    """Loop-free but op-independent single head: plain numpy, one sample at a time."""
    outs = []
    for xi in x:
        q, k, v = xi @ wq + bq, xi @ wk + bk, xi @ wv + bv
        w = softmax_rows(q @ k.T / math.sqrt(q.shape[-1]))
        outs.append(w @ v @ wo + bo)
    return np.stack(outs)


def encode(x, params, config):
    h = embed(Tensor(x), params)
    for b in range(config.blocks):
        h = encoder_block(h, params, f"block{b}", config)
    return h.data


def attention_case(seed):
    """Check every attention invariant for one random case; returns a dict of named booleans."""
    from t2vstock.model import multi_head_forward

    rng = np.random.default_rng(seed)
    b, n, d = int(rng.integers(1, 4)), int(rng.integers(2, 9)), int(rng.integers(1, 5)) * 2
    q, k, v = (Tensor(rng.normal(scale=2, size=(b, n, d))) for _ in range(3))
    out, w = scaled_dot_product_attention(q, k, v, return_weights=True)
    res = {}
    res["rows_sum_to_one"] = bool(np.abs(w.data.sum(-1) - 1).max() <= 1e-9)
    lo = v.data.min(axis=-2, keepdims=True) - 1e-12
    hi = v.data.max(axis=-2, keepdims=True) + 1e-12
    res["convex_bounds"] = bool(((out.data >= lo) & (out.data <= hi)).all())
    res["weights_match_oracle"] = bool(np.abs(
        w.data - softmax_rows(q.data @ np.swapaxes(k.data, -1, -2) / math.sqrt(d))).max() <= 1e-12)

    cfg = ModelConfig(d_model=d, heads=1, blocks=1, ffn_width=8, head_width=4, seed=seed)
    params = init_params(cfg)
    x = Tensor(rng.normal(size=(b, n, d)))
    got = multi_head_forward(x, params, "block0.attn", 1).data
    names = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
    want = single_head_attention(x.data, *(params[f"block0.attn.{m}"].data for m in names))
    res["single_head_matches"] = bool(np.abs(got - want).max() <= 1e-12)

    cfg = ModelConfig(lookback=n, d_model=8, heads=2, blocks=2, ffn_width=16, head_width=4, seed=seed)
    params = init_params(cfg)
    feats = rng.normal(size=(b, n, 5))
    perm = rng.permutation(n)
    while np.array_equal(perm, np.arange(n)):
        perm = rng.permutation(n)
    params["t2v.omega"].data[:] = 0.0
    params["t2v.phi"].data[:] = 0.0
    plain = encode(feats, params, cfg)
    res["equivariant_without_time"] = bool(
        np.abs(encode(feats[:, perm], params, cfg) - plain[:, perm]).max() <= 1e-10)
    params["t2v.omega"].data[:] = rng.uniform(0.5, 1.5, cfg.t2v_k + 1)
    timed = encode(feats, params, cfg)
    res["broken_with_time"] = bool(
        np.abs(encode(feats[:, perm], params, cfg) - timed[:, perm]).max() > 1e-6)
    return res

