"""Attention-weight extraction and defaulted vs. surviving heat maps.

A trained encoder's post-softmax attention weights are recorded during a
read-only forward pass, averaged element-wise within each firm group
(defaulted / non-defaulted at a chosen horizon), and exported as labeled
CSV matrices plus one composite SVG grid per group (encoder layers as
rows, heads as columns).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import HORIZONS
from .datapipe import apply_preprocess
from .fusion import Checkpoint, multimodal_forward
from .tensorcore import tape_scope
from .tensorcore.tensor import Tensor

log = logging.getLogger(__name__)

GROUP_TAGS = ("defaulted", "non-defaulted")


@dataclass
class AttentionMapSet:
    """Averaged attention maps for one firm group: (layer, head) -> (w, w)."""

    maps: Dict[Tuple[int, int], np.ndarray]
    group: str  # "defaulted" or "non-defaulted"
    horizon: str
    n_observations: int

    def __post_init__(self):
        if self.group not in GROUP_TAGS:
            raise ValueError(f"unknown group tag {self.group!r}")

    @property
    def layers(self) -> int:
        return 1 + max(l for l, _ in self.maps)

    @property
    def heads(self) -> int:
        return 1 + max(h for _, h in self.maps)

    @property
    def window(self) -> int:
        return next(iter(self.maps.values())).shape[0]


def extract_attention(
    checkpoint: Checkpoint,
    observations,
    channel: str = "fundamental",
    horizon: str = "3y",
    chunk: int = 256,
) -> Dict[str, Optional[AttentionMapSet]]:
    """Average recorded attention per firm group without touching predictions.

    Observations are partitioned on their label at `horizon`; each group's
    maps are the element-wise mean of that group's per-observation weights.
    A group with no observations maps to None (with a warning).
    """
    meta = checkpoint.model_meta["channels"]
    if channel not in meta:
        raise ValueError(f"checkpoint has no channel {channel!r}")
    if meta[channel]["kind"] != "tep":
        raise ValueError(
            f"attention extraction needs an encoder model; channel {channel!r} "
            f"is {meta[channel]['kind']!r}"
        )
    if horizon not in HORIZONS:
        raise ValueError(f"unknown horizon {horizon!r}")
    h_idx = HORIZONS.index(horizon)

    model = checkpoint.to_model()
    stats = checkpoint.preprocess_stats()
    channels = list(meta)
    active = tuple(model.channel_order)
    xs = {
        ch: np.stack([apply_preprocess(o.panels[ch], stats) for o in observations])
        for ch in channels
    }
    n = len(observations)
    layer_stacks: List[List[np.ndarray]] = []
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        inputs = {ch: Tensor(xs[ch][lo:hi]) for ch in channels}
        record = {channel: []}
        with tape_scope():
            multimodal_forward(model, inputs, active, training=False,
                               record_attention=record)
        for li, arr in enumerate(record[channel]):
            if li >= len(layer_stacks):
                layer_stacks.append([])
            layer_stacks[li].append(arr)  # (batch, heads, w, w)
    per_layer = [np.concatenate(stack, axis=0) for stack in layer_stacks]

    labels = np.array([o.target.y[h_idx] for o in observations])
    out: Dict[str, Optional[AttentionMapSet]] = {}
    for tag, wanted in (("defaulted", 1), ("non-defaulted", 0)):
        idx = np.flatnonzero(labels == wanted)
        if idx.size == 0:
            log.warning("no %s observations at horizon %s; group omitted", tag, horizon)
            out[tag] = None
            continue
        maps = {}
        for li, arr in enumerate(per_layer):
            group_mean = arr[idx].mean(axis=0)  # (heads, w, w)
            for hi_ in range(group_mean.shape[0]):
                maps[(li, hi_)] = group_mean[hi_]
        out[tag] = AttentionMapSet(maps, tag, horizon, int(idx.size))
    return out


def _time_labels(w: int) -> List[str]:
    return [f"t-{w - 1 - j}" if j < w - 1 else "t" for j in range(w)]


def export_heatmap(maps: AttentionMapSet, output_dir) -> List[Path]:
    """Write one CSV per (layer, head) plus a composite SVG grid.

    CSV header: ``out_pos,in_t-11,...,in_t`` for a 12-step window; the SVG
    arranges layers as rows and heads as columns on a shared linear color
    scale spanning the figure's min and max.
    """
    if not maps.maps:
        raise ValueError("attention map set is empty")
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    w = maps.window
    labels = _time_labels(w)
    written: List[Path] = []
    for (layer, head), matrix in sorted(maps.maps.items()):
        path = outdir / f"attention_{maps.group}_l{layer}_h{head}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["out_pos"] + [f"in_{lb}" for lb in labels])
            for i, row in enumerate(matrix):
                writer.writerow([labels[i]] + [repr(float(v)) for v in row])
        written.append(path)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_layers, n_heads = maps.layers, maps.heads
    vmin = min(m.min() for m in maps.maps.values())
    vmax = max(m.max() for m in maps.maps.values())
    fig, axes = plt.subplots(
        n_layers, n_heads, figsize=(3 * n_heads, 3 * n_layers), squeeze=False
    )
    for (layer, head), matrix in maps.maps.items():
        ax = axes[layer][head]
        im = ax.imshow(matrix, vmin=vmin, vmax=vmax, cmap="viridis", aspect="auto")
        ax.set_title(f"layer {layer}, head {head}", fontsize=9)
        ax.set_xticks([0, w - 1])
        ax.set_xticklabels([labels[0], labels[-1]], fontsize=7)
        ax.set_yticks([0, w - 1])
        ax.set_yticklabels([labels[0], labels[-1]], fontsize=7)
    fig.suptitle(f"{maps.group} firms (horizon {maps.horizon}, n={maps.n_observations})")
    fig.colorbar(im, ax=[a for row in axes for a in row], fraction=0.02)
    svg = outdir / f"attention_{maps.group}.svg"
    fig.savefig(svg, format="svg")
    plt.close(fig)
    written.append(svg)
    return written


def column_mass(maps: AttentionMapSet) -> np.ndarray:
    """Average attention received by each input position, over all maps."""
    stacked = np.stack(list(maps.maps.values()))
    return stacked.mean(axis=(0, 1))
