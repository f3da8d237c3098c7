"""Neural layers expressed as compositions of tensor ops.

All layers take batched inputs (B, w, f) and return batched outputs, so a
single forward pass vectorizes across the minibatch.  Parameters live in a
flat dict name -> Tensor supplied by the caller.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor


def init_dense(rng: np.random.Generator, name: str, fan_in: int, fan_out: int) -> dict:
    w = Tensor(T.uniform_fan_init(rng, fan_in, fan_out, (fan_in, fan_out)), requires_grad=True, name=f"{name}.w")
    b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")
    return {f"{name}.w": w, f"{name}.b": b}


def dense(x: Tensor, params: dict, name: str) -> Tensor:
    return x @ params[f"{name}.w"] + params[f"{name}.b"]


def init_conv1d(rng: np.random.Generator, name: str, kernel: int, f_in: int, f_out: int) -> dict:
    fan_in = kernel * f_in
    w = Tensor(T.uniform_fan_init(rng, fan_in, f_out, (kernel * f_in, f_out)), requires_grad=True, name=f"{name}.w")
    b = Tensor(np.zeros(f_out), requires_grad=True, name=f"{name}.b")
    return {f"{name}.w": w, f"{name}.b": b}


def _conv_cols(x: Tensor, kernel: int, dilation: int, causal: bool) -> Tensor:
    """Gather the kernel taps as concatenated feature blocks.

    Same-length output: causal convs pad (kernel-1)*dilation on the left,
    centered convs pad symmetrically (kernel must be odd).
    """
    w = x.shape[1]
    span = (kernel - 1) * dilation
    if causal:
        left, right = span, 0
    else:
        left = span // 2
        right = span - left
    xp = T.pad_time(x, left, right, axis=1)
    taps = [xp[:, i * dilation : i * dilation + w, :] for i in range(kernel)]
    return T.concat(taps, axis=-1) if len(taps) > 1 else taps[0]


def conv1d(x: Tensor, params: dict, name: str, kernel: int, dilation: int = 1, causal: bool = False) -> Tensor:
    cols = _conv_cols(x, kernel, dilation, causal)
    return cols @ params[f"{name}.w"] + params[f"{name}.b"]


def init_layernorm(name: str, width: int) -> dict:
    g = Tensor(np.ones(width), requires_grad=True, name=f"{name}.gain")
    b = Tensor(np.zeros(width), requires_grad=True, name=f"{name}.bias")
    return {f"{name}.gain": g, f"{name}.bias": b}


def layernorm(x: Tensor, params: dict, name: str, eps: float = 1e-6) -> Tensor:
    mu = T.tmean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = T.tmean(xc * xc, axis=-1, keepdims=True)
    xn = xc / T.sqrt(var + eps)
    return xn * params[f"{name}.gain"] + params[f"{name}.bias"]


def init_attention(rng: np.random.Generator, name: str, model_size: int) -> dict:
    p = {}
    for proj in ("q", "k", "v", "o"):
        p.update(init_dense(rng, f"{name}.{proj}", model_size, model_size))
    return p


def multi_head_attention(
    x: Tensor,
    params: dict,
    name: str,
    heads: int,
    record: Optional[list] = None,
) -> Tensor:
    """Bidirectional multi-head self-attention over (B, w, M).

    When `record` is a list, the post-softmax weights (B, heads, w, w) are
    appended as a plain array (detached from the tape).
    """
    bsz, w, m = x.shape
    if m % heads != 0:
        raise ValueError(f"model size {m} not divisible by {heads} heads")
    dk = m // heads

    def split(t: Tensor) -> Tensor:
        # (B, w, M) -> (B, heads, w, dk)
        return T.swapaxes(T.reshape(t, (bsz, w, heads, dk)), 1, 2)

    q = split(dense(x, params, f"{name}.q"))
    k = split(dense(x, params, f"{name}.k"))
    v = split(dense(x, params, f"{name}.v"))
    scores = (q @ T.swapaxes(k, 2, 3)) * (1.0 / math.sqrt(dk))
    weights = T.softmax(scores, axis=-1)
    if record is not None:
        record.append(np.array(weights.data, copy=True))
    ctx = weights @ v  # (B, heads, w, dk)
    ctx = T.reshape(T.swapaxes(ctx, 1, 2), (bsz, w, m))
    return dense(ctx, params, f"{name}.o")


def attention_core(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention on per-head (w, dk) inputs."""
    dk = q.shape[-1]
    weights = T.softmax((q @ T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dk)), axis=-1)
    return weights, weights @ v


def positional_encoding(w: int, model_size: int) -> np.ndarray:
    """Sinusoidal position table of shape (w, model_size)."""
    pos = np.arange(w)[:, None]
    i = np.arange(model_size)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / model_size)
    pe = np.zeros((w, model_size))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


def init_lstm(rng: np.random.Generator, name: str, f_in: int, hidden: int) -> dict:
    # One fused weight matrix per gate block: [input, forget, cell, output].
    wx = Tensor(T.uniform_fan_init(rng, f_in, hidden, (f_in, 4 * hidden)), requires_grad=True, name=f"{name}.wx")
    wh = Tensor(T.uniform_fan_init(rng, hidden, hidden, (hidden, 4 * hidden)), requires_grad=True, name=f"{name}.wh")
    b = Tensor(np.zeros(4 * hidden), requires_grad=True, name=f"{name}.b")
    return {f"{name}.wx": wx, f"{name}.wh": wh, f"{name}.b": b}


def lstm_cell(x_t: Tensor, h: Tensor, c: Tensor, params: dict, name: str, hidden: int):
    z = x_t @ params[f"{name}.wx"] + h @ params[f"{name}.wh"] + params[f"{name}.b"]
    i = T.sigmoid(z[:, 0 * hidden : 1 * hidden])
    f = T.sigmoid(z[:, 1 * hidden : 2 * hidden])
    g = T.tanh(z[:, 2 * hidden : 3 * hidden])
    o = T.sigmoid(z[:, 3 * hidden : 4 * hidden])
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


def lstm(x: Tensor, params: dict, name: str, hidden: int) -> Tensor:
    """Single-direction LSTM; returns per-step hidden states (B, w, hidden)."""
    bsz, w, _ = x.shape
    h = Tensor(np.zeros((bsz, hidden)))
    c = Tensor(np.zeros((bsz, hidden)))
    steps = []
    for t in range(w):
        h, c = lstm_cell(x[:, t, :], h, c, params, name, hidden)
        steps.append(T.reshape(h, (bsz, 1, hidden)))
    return T.concat(steps, axis=1)


def max_over_time(x: Tensor) -> Tensor:
    """Max-pool (B, w, F) -> (B, F); ties resolve to the earliest step."""
    return T.tmax(x, axis=1)


def init_weightnorm_conv(rng: np.random.Generator, name: str, kernel: int, f_in: int, f_out: int) -> dict:
    fan_in = kernel * f_in
    v = T.uniform_fan_init(rng, fan_in, f_out, (kernel * f_in, f_out))
    g = np.linalg.norm(v, axis=0)
    return {
        f"{name}.v": Tensor(v, requires_grad=True, name=f"{name}.v"),
        f"{name}.g": Tensor(g, requires_grad=True, name=f"{name}.g"),
        f"{name}.b": Tensor(np.zeros(f_out), requires_grad=True, name=f"{name}.b"),
    }


def weightnorm_conv1d(x: Tensor, params: dict, name: str, kernel: int, dilation: int, causal: bool = True) -> Tensor:
    v = params[f"{name}.v"]
    g = params[f"{name}.g"]
    norm = T.sqrt(T.tsum(v * v, axis=0, keepdims=True) + 1e-12)
    w = v * (g / norm)
    cols = _conv_cols(x, kernel, dilation, causal)
    return cols @ w + params[f"{name}.b"]


def init_tcn_block(rng: np.random.Generator, name: str, f_in: int, filters: int, kernel: int) -> dict:
    p = {}
    p.update(init_weightnorm_conv(rng, f"{name}.conv1", kernel, f_in, filters))
    p.update(init_weightnorm_conv(rng, f"{name}.conv2", kernel, filters, filters))
    if f_in != filters:
        p.update(init_dense(rng, f"{name}.proj", f_in, filters))
    return p


def tcn_block(
    x: Tensor,
    params: dict,
    name: str,
    kernel: int,
    dilation: int,
    drop_rate: float,
    rng: Optional[np.random.Generator],
    training: bool,
) -> Tensor:
    """Residual block: two causal weight-normalized convolutions + ReLU."""
    y = T.relu(weightnorm_conv1d(x, params, f"{name}.conv1", kernel, dilation))
    y = T.dropout(y, drop_rate, rng, training) if rng is not None else y
    y = T.relu(weightnorm_conv1d(y, params, f"{name}.conv2", kernel, dilation))
    y = T.dropout(y, drop_rate, rng, training) if rng is not None else y
    if f"{name}.proj.w" in params:
        x = dense(x, params, f"{name}.proj")
    return T.relu(x + y)
