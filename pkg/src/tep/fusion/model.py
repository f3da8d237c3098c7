"""Multimodal architecture: per-channel models fused by max-pool + dense.

Channel representations are pooled over time, projected to a common width
H where needed, and fed to a fusion dense layer whose weight matrix is
partitioned per channel.  With a single active channel the fusion layer
reduces to that channel's block, so the same parameters serve solo and
multi-channel training stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import CHANNELS
from ..nets import ModelParams, N_LOGITS, build_model, model_forward
from ..tensorcore import layers as L
from ..tensorcore import tensor as T
from ..tensorcore.tensor import Tensor


@dataclass
class MultimodalModel:
    channels: Dict[str, ModelParams]
    rep_width: int
    fusion: Dict[str, Tensor] = field(default_factory=dict)
    projections: Dict[str, Dict[str, Tensor]] = field(default_factory=dict)

    def parameters(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {}
        for ch, m in self.channels.items():
            for name, t in m.tensors.items():
                out[f"{ch}.{name}"] = t
            for name, t in self.projections.get(ch, {}).items():
                out[name] = t
        out.update(self.fusion)
        return out

    def group_names(self, group: str) -> List[str]:
        """Parameter names belonging to a channel group or the fusion head."""
        if group == "fusion":
            return sorted(self.fusion)
        if group not in self.channels:
            raise KeyError(f"unknown parameter group {group!r}")
        names = [f"{group}.{n}" for n in self.channels[group].tensors]
        names += list(self.projections.get(group, {}))
        return sorted(names)

    @property
    def channel_order(self) -> List[str]:
        return [ch for ch in CHANNELS if ch in self.channels] + [
            ch for ch in self.channels if ch not in CHANNELS
        ]


def build_multimodal(
    channel_models: Dict[str, ModelParams], rep_width: int, rng: np.random.Generator
) -> MultimodalModel:
    model = MultimodalModel(dict(channel_models), rep_width)
    for ch in model.channel_order:
        m = model.channels[ch]
        if m.rep_width != rep_width:
            proj = L.init_dense(rng, f"proj.{ch}", m.rep_width, rep_width)
            model.projections[ch] = {
                name: Tensor(t.data, requires_grad=True, name=name) for name, t in proj.items()
            }
        w = Tensor(
            T.uniform_fan_init(rng, len(channel_models) * rep_width, N_LOGITS, (rep_width, N_LOGITS)),
            requires_grad=True,
            name=f"fusion.{ch}.w",
        )
        model.fusion[f"fusion.{ch}.w"] = w
    model.fusion["fusion.b"] = Tensor(np.zeros(N_LOGITS), requires_grad=True, name="fusion.b")
    return model


def channel_representation(
    model: MultimodalModel,
    channel: str,
    x: Tensor,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    record_attention: Optional[list] = None,
) -> Tensor:
    rep, _ = model_forward(model.channels[channel], x, training=training, rng=rng,
                           record_attention=record_attention)
    if channel in model.projections:
        w = model.projections[channel][f"proj.{channel}.w"]
        b = model.projections[channel][f"proj.{channel}.b"]
        rep = rep @ w + b
    return rep


def fuse(model: MultimodalModel, representations: Dict[str, Tensor]) -> Tensor:
    """Max-pool each channel representation over time, then the fusion dense.

    Pooling first keeps mixed-length channels (12 quarters vs 504 trading
    days) on an equal footing before concatenation.
    """
    logits: Optional[Tensor] = None
    for ch in model.channel_order:
        if ch not in representations:
            continue
        rep = representations[ch]
        if rep.shape[-1] != model.rep_width:
            raise ValueError(
                f"channel {ch!r} representation width {rep.shape[-1]} != {model.rep_width}"
            )
        pooled = L.max_over_time(rep) if rep.ndim == 3 else rep
        block = pooled @ model.fusion[f"fusion.{ch}.w"]
        logits = block if logits is None else logits + block
    if logits is None:
        raise ValueError("fuse called with no active channel representations")
    return logits + model.fusion["fusion.b"]


def multimodal_forward(
    model: MultimodalModel,
    inputs: Dict[str, Tensor],
    active: Sequence[str],
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
    record_attention: Optional[Dict[str, list]] = None,
) -> Tensor:
    reps = {}
    for ch in active:
        rec = record_attention.get(ch) if record_attention else None
        reps[ch] = channel_representation(model, ch, inputs[ch], training, rng, rec)
    return fuse(model, reps)


def isotonic_non_decreasing(pds: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto non-decreasing horizon PDs."""
    out = np.array(pds, dtype=np.float64, copy=True)
    for row in np.atleast_2d(out):
        blocks = [[row[0], 1]]
        for v in row[1:]:
            blocks.append([v, 1])
            while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
                v2, n2 = blocks.pop()
                v1, n1 = blocks.pop()
                blocks.append([(v1 * n1 + v2 * n2) / (n1 + n2), n1 + n2])
        i = 0
        for v, n in blocks:
            row[i : i + n] = v
            i += n
    return out
