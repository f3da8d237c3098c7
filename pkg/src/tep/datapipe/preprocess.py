"""Robust scaling, winsorization, and missing-value imputation with dummies.

Statistics are fitted on the training split only.  Scaling is
(x - median) / IQR clamped to [-6, +6]; missing cells become 0 (the scaled
median) and one appended indicator column per original feature marks the
imputations.  Features with zero IQR are flagged degenerate and pass
through as (x - median), clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List

import numpy as np

from .panel import ChannelPanel

WINSOR_BOUND = 6.0


@dataclass
class ChannelStats:
    median: np.ndarray
    iqr: np.ndarray
    degenerate: np.ndarray  # bool per feature, True where IQR == 0

    def to_dict(self) -> dict:
        return {
            "median": self.median.tolist(),
            "iqr": self.iqr.tolist(),
            "degenerate": self.degenerate.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(
            np.asarray(d["median"], dtype=np.float64),
            np.asarray(d["iqr"], dtype=np.float64),
            np.asarray(d["degenerate"], dtype=bool),
        )


@dataclass
class PreprocessStats:
    channels: Dict[str, ChannelStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {name: cs.to_dict() for name, cs in self.channels.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessStats":
        return cls({name: ChannelStats.from_dict(v) for name, v in d.items()})


def fit_channel(panels: Iterable[ChannelPanel]) -> ChannelStats:
    panels = list(panels)
    if not panels:
        raise ValueError("cannot fit preprocessing on an empty panel list")
    stacked = np.concatenate([p.values for p in panels], axis=0)  # (sum_w, f)
    median = np.nanmedian(stacked, axis=0)
    q1 = np.nanpercentile(stacked, 25, axis=0)  # linear interpolation
    q3 = np.nanpercentile(stacked, 75, axis=0)
    iqr = q3 - q1
    degenerate = iqr == 0.0
    return ChannelStats(median, iqr, degenerate)


def fit_preprocess(panels_by_channel: Dict[str, List[ChannelPanel]]) -> PreprocessStats:
    if not panels_by_channel:
        raise ValueError("no channels to fit")
    return PreprocessStats({name: fit_channel(ps) for name, ps in panels_by_channel.items()})


def apply_channel(panel: ChannelPanel, stats: ChannelStats) -> np.ndarray:
    """Return the (w, 2f) scaled matrix: features then missing indicators."""
    f = panel.n_features
    if stats.median.shape[0] != f:
        raise ValueError(
            f"feature count mismatch: panel has {f}, stats fitted for {stats.median.shape[0]}"
        )
    x = panel.values - stats.median
    scale = np.where(stats.degenerate, 1.0, np.where(stats.iqr == 0.0, 1.0, stats.iqr))
    x = x / scale
    x = np.clip(x, -WINSOR_BOUND, WINSOR_BOUND)
    x = np.where(panel.missing_mask, 0.0, x)
    ind = panel.missing_mask.astype(np.float64)
    return np.concatenate([x, ind], axis=1)


def apply_preprocess(panel: ChannelPanel, stats: PreprocessStats) -> np.ndarray:
    if panel.channel not in stats.channels:
        raise ValueError(f"no fitted stats for channel {panel.channel!r}")
    return apply_channel(panel, stats.channels[panel.channel])
