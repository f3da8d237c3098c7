"""Finite-difference gradient checks for every layer kind used by the models."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import layers as L
from . import tensor as T
from .tensor import Tape, Tensor, tape_scope

LAYER_KINDS = ("dense", "conv1d", "attention", "layernorm", "lstm-cell", "tcn-block", "max-pool")


@dataclass
class GradCheckEntry:
    parameter: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    layer_kind: str
    tolerance: float
    entries: List[GradCheckEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)


def _build(layer_kind: str, input_shape, rng: np.random.Generator):
    """Return (params, forward) where forward(params) -> scalar Tensor."""
    bsz, w, f = input_shape
    x = Tensor(rng.normal(size=(bsz, w, f)))
    params: Dict[str, Tensor] = {}

    if layer_kind == "dense":
        params.update(L.init_dense(rng, "d", f, 7))
        out_shape = (bsz, w, 7)
        fwd: Callable = lambda p: L.dense(x, p, "d")
    elif layer_kind == "conv1d":
        params.update(L.init_conv1d(rng, "c", 3, f, 5))
        out_shape = (bsz, w, 5)
        fwd = lambda p: L.conv1d(x, p, "c", kernel=3)
    elif layer_kind == "attention":
        m = f
        heads = 2 if m % 2 == 0 else 1
        params.update(L.init_attention(rng, "a", m))
        out_shape = (bsz, w, m)
        fwd = lambda p: L.multi_head_attention(x, p, "a", heads)
    elif layer_kind == "layernorm":
        params.update(L.init_layernorm("ln", f))
        # randomize gain so the check is not at the trivial point
        params["ln.gain"].data = rng.normal(loc=1.0, scale=0.2, size=f)
        out_shape = (bsz, w, f)
        fwd = lambda p: L.layernorm(x, p, "ln")
    elif layer_kind == "lstm-cell":
        hidden = 6
        params.update(L.init_lstm(rng, "l", f, hidden))
        h0 = Tensor(rng.normal(size=(bsz, hidden)))
        c0 = Tensor(rng.normal(size=(bsz, hidden)))
        out_shape = (bsz, hidden)

        def fwd(p):
            h, c = L.lstm_cell(x[:, 0, :], h0, c0, p, "l", hidden)
            return h
    elif layer_kind == "tcn-block":
        filters = 5
        params.update(L.init_tcn_block(rng, "t", f, filters, kernel=3))
        out_shape = (bsz, w, filters)
        fwd = lambda p: L.tcn_block(x, p, "t", kernel=3, dilation=2, drop_rate=0.0, rng=None, training=False)
    elif layer_kind == "max-pool":
        # no parameters of its own; check the gradient through a dense input map
        params.update(L.init_dense(rng, "d", f, 5))
        out_shape = (bsz, 5)
        fwd = lambda p: L.max_over_time(L.dense(x, p, "d"))
    else:
        raise ValueError(f"unknown layer kind {layer_kind!r}")

    # zero-initialized biases can park ReLU pre-activations exactly on the
    # kink (e.g. all-padding conv windows), where finite differences and the
    # subgradient legitimately disagree; nudge them off it
    for p in params.values():
        if not p.data.any():
            p.data = rng.normal(scale=0.1, size=p.data.shape)

    # random projection makes the scalar loss sensitive to every output entry
    proj = rng.normal(size=out_shape)

    def loss_fn(p):
        return T.tsum(fwd(p) * Tensor(proj))

    return params, loss_fn


def grad_check(layer_kind: str, input_shape=(2, 5, 4), tolerance: float = 1e-4,
               seed: int = 0, h: float = 1e-5) -> GradCheckReport:
    """Compare autodiff gradients against central finite differences.

    Failures are reported, never raised; relative error uses a small absolute
    floor so near-zero gradients do not inflate the ratio.
    """
    rng = np.random.default_rng(seed)
    params, loss_fn = _build(layer_kind, input_shape, rng)

    with tape_scope() as tape:
        loss = loss_fn(params)
    grads = T.forward_backward(tape, loss, params)

    entries = []
    for name, p in params.items():
        num = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with tape_scope():
                lp = loss_fn(params).item()
            flat[i] = orig - h
            with tape_scope():
                lm = loss_fn(params).item()
            flat[i] = orig
            nflat[i] = (lp - lm) / (2.0 * h)
        # the absolute floor keeps finite-difference rounding noise on
        # exactly-zero gradients (e.g. attention key bias) from inflating
        # the ratio
        denom = np.maximum(np.abs(num) + np.abs(grads[name].data), 1e-5)
        rel = np.abs(grads[name].data - num) / denom
        err = float(rel.max())
        entries.append(GradCheckEntry(name, err, err < tolerance))
    return GradCheckReport(layer_kind, tolerance, entries)
