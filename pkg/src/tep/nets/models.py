"""Model builders and forward passes: TEP, TCN, LSTM, shallow NN, logistic.

Every model exposes a per-timestep representation (B, w, rep_width) and a
standalone 6-logit head (max-over-time pooling followed by a dense layer).
Parameters are flat name -> Tensor dicts so the training loop can freeze
or update arbitrary subsets by name prefix.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import HORIZONS
from ..tensorcore import layers as L
from ..tensorcore import tensor as T
from ..tensorcore.tensor import Tensor

N_LOGITS = len(HORIZONS)


@dataclass
class TepConfig:
    model_size: int = 72
    layers: int = 2
    heads: int = 4
    conv_kernel: int = 1
    dropout: float = 0.1
    positional_encoding: bool = True
    ff_mult: int = 4

    def __post_init__(self):
        if self.model_size % self.heads != 0:
            raise ValueError("model_size must be divisible by heads")
        if self.conv_kernel % 2 == 0:
            raise ValueError("conv_kernel must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def heads_from_layers(cls, model_size: int = 72, layers: int = 2, **kw) -> "TepConfig":
        """Preset where the head count is model_size / layers."""
        if model_size % layers != 0:
            raise ValueError("model_size must be divisible by layers for this preset")
        return cls(model_size=model_size, layers=layers, heads=model_size // layers, **kw)


@dataclass
class TcnConfig:
    filters: int = 32
    kernel_size: int = 3
    levels: int = 3
    dropout: float = 0.1

    def receptive_field(self) -> int:
        # two convs per block, dilation 2^i at level i
        return 1 + 2 * (self.kernel_size - 1) * (2 ** self.levels - 1)


@dataclass
class LstmConfig:
    hidden: int = 32
    dropout: float = 0.0


@dataclass
class NnConfig:
    hidden1: int = 100
    hidden2: int = 30
    dropout: float = 0.0


@dataclass
class LogisticConfig:
    pass


MODEL_KINDS = ("tep", "tcn", "lstm", "nn", "logistic")

_CONFIG_TYPES = {
    "tep": TepConfig,
    "tcn": TcnConfig,
    "lstm": LstmConfig,
    "nn": NnConfig,
    "logistic": LogisticConfig,
}


def default_config(kind: str):
    return _CONFIG_TYPES[kind]()


def config_from_dict(kind: str, d: dict):
    return _CONFIG_TYPES[kind](**d)


@dataclass
class ModelParams:
    """Named tensor map plus the model kind tag and a config snapshot."""

    kind: str
    config: object
    window: int
    n_features: int
    tensors: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def rep_width(self) -> int:
        if self.kind == "tep":
            return self.config.model_size
        if self.kind == "tcn":
            return self.config.filters
        if self.kind == "lstm":
            return self.config.hidden
        if self.kind == "nn":
            return self.config.hidden2
        return N_LOGITS  # logistic: the affine output doubles as representation

    def config_dict(self) -> dict:
        return asdict(self.config)


def build_model(kind: str, window: int, n_features: int, config, rng: np.random.Generator) -> ModelParams:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    p: Dict[str, Tensor] = {}
    if kind == "tep":
        m = config.model_size
        p.update(L.init_conv1d(rng, "embed", config.conv_kernel, n_features, m))
        for i in range(config.layers):
            p.update(L.init_attention(rng, f"enc{i}.attn", m))
            p.update(L.init_layernorm(f"enc{i}.ln1", m))
            p.update(L.init_dense(rng, f"enc{i}.ff1", m, config.ff_mult * m))
            p.update(L.init_dense(rng, f"enc{i}.ff2", config.ff_mult * m, m))
            p.update(L.init_layernorm(f"enc{i}.ln2", m))
        p.update(L.init_dense(rng, "head", m, N_LOGITS))
    elif kind == "tcn":
        f_in = n_features
        for i in range(config.levels):
            p.update(L.init_tcn_block(rng, f"block{i}", f_in, config.filters, config.kernel_size))
            f_in = config.filters
        p.update(L.init_dense(rng, "head", config.filters, N_LOGITS))
    elif kind == "lstm":
        p.update(L.init_lstm(rng, "rnn", n_features, config.hidden))
        p.update(L.init_dense(rng, "head", config.hidden, N_LOGITS))
    elif kind == "nn":
        flat = window * n_features
        p.update(L.init_dense(rng, "fc1", flat, config.hidden1))
        p.update(L.init_dense(rng, "fc2", config.hidden1, config.hidden2))
        p.update(L.init_dense(rng, "head", config.hidden2, N_LOGITS))
    else:  # logistic: one affine layer, six independent logits
        p.update(L.init_dense(rng, "head", window * n_features, N_LOGITS))
    return ModelParams(kind, config, window, n_features, p)


def model_forward(
    model: ModelParams,
    x: Tensor,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    record_attention: Optional[List[np.ndarray]] = None,
) -> Tuple[Tensor, Tensor]:
    """Run a batched panel (B, w, f) through the model.

    Returns (representation (B, w_rep, rep_width), logits (B, 6)).
    Dropout is active only in training mode with an RNG supplied.
    """
    if x.ndim == 2:
        x = T.reshape(x, (1,) + x.shape)
    bsz, w, f = x.shape
    if w != model.window or f != model.n_features:
        raise ValueError(
            f"input shape ({w}, {f}) does not match model ({model.window}, {model.n_features})"
        )
    p = model.tensors
    cfg = model.config
    drop = training and rng is not None and getattr(cfg, "dropout", 0.0) > 0.0

    def dp(t: Tensor) -> Tensor:
        return T.dropout(t, cfg.dropout, rng, True) if drop else t

    if model.kind == "tep":
        h = L.conv1d(x, p, "embed", kernel=cfg.conv_kernel)
        if cfg.positional_encoding:
            h = h + Tensor(L.positional_encoding(w, cfg.model_size))
        h = dp(h)
        for i in range(cfg.layers):
            attn = L.multi_head_attention(h, p, f"enc{i}.attn", cfg.heads, record=record_attention)
            h = L.layernorm(h + dp(attn), p, f"enc{i}.ln1")
            ff = L.dense(T.relu(L.dense(h, p, f"enc{i}.ff1")), p, f"enc{i}.ff2")
            h = L.layernorm(h + dp(ff), p, f"enc{i}.ln2")
        rep = h
    elif model.kind == "tcn":
        h = x
        for i in range(cfg.levels):
            h = L.tcn_block(
                h, p, f"block{i}", cfg.kernel_size, dilation=2 ** i,
                drop_rate=cfg.dropout if drop else 0.0, rng=rng, training=training,
            )
        rep = h
    elif model.kind == "lstm":
        rep = L.lstm(x, p, "rnn", cfg.hidden)
        rep = dp(rep)
    elif model.kind == "nn":
        flat = T.reshape(x, (bsz, w * f))
        h1 = T.relu(L.dense(flat, p, "fc1"))
        h2 = T.relu(L.dense(dp(h1), p, "fc2"))
        rep = T.reshape(dp(h2), (bsz, 1, cfg.hidden2))
    else:  # logistic
        flat = T.reshape(x, (bsz, w * f))
        out = L.dense(flat, p, "head")
        return T.reshape(out, (bsz, 1, N_LOGITS)), out

    logits = L.dense(L.max_over_time(rep), p, "head")
    return rep, logits


def attention(q: Tensor, k: Tensor, v: Tensor) -> Tuple[Tensor, Tensor]:
    """Scaled dot-product attention on per-head (w, d_k) inputs.

    Returns (row-stochastic weights (w, w), output (w, d_k)); attention is
    fully bidirectional, there is no causal mask.
    """
    return L.attention_core(q, k, v)
