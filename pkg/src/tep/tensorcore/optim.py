"""First-order optimizers (Adam and plain SGD) over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators plus the shared step counter."""

    kind: str = "adam"  # "adam" | "sgd"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def optimizer_step(params: Dict[str, Tensor], grads: Dict[str, Tensor], state: OptimizerState,
                   only: Iterable[str] | None = None) -> OptimizerState:
    """Apply one update in place; `only` restricts the touched parameter names.

    Deterministic: repeated calls with equal inputs give bitwise-equal
    parameters.  Shapes of grads must match the parameters exactly.
    """
    names = list(params) if only is None else [n for n in params if n in set(only)]
    state.step += 1
    t = state.step
    for name in names:
        p = params[name]
        g = grads[name].data if isinstance(grads[name], Tensor) else np.asarray(grads[name])
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        if state.kind == "sgd":
            p.data = p.data - state.learning_rate * g
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state
