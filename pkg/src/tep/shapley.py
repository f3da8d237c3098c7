"""Grouped attribution over data channels via exact Shapley enumeration.

A game assigns every binary channel-selection profile a score in [0, 1]
(here: the Gini coefficient of a model trained on exactly those channels,
clipped at 0).  Exact enumeration is cheap because the group count is the
channel count, so the table has at most 2^G = 32 entries.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import HORIZONS
from .datapipe import ChannelPanel, Dataset, Observation
from .experiments import RunSettings, evaluate, run_training
from .fusion import predict
from .metrics import HorizonReport, gini, horizon_report

log = logging.getLogger(__name__)

Profile = Tuple[int, ...]


@dataclass
class ShapleyGame:
    """Complete score table over all 2^G selection profiles."""

    groups: Tuple[str, ...]
    scores: Dict[Profile, float]

    def __post_init__(self):
        self.groups = tuple(self.groups)
        g = len(self.groups)
        expected = {p for p in itertools.product((0, 1), repeat=g)}
        if set(self.scores) != expected:
            missing = expected - set(self.scores)
            raise ValueError(f"score table incomplete: {len(missing)} profiles missing")
        empty = (0,) * g
        if self.scores[empty] != 0.0:
            raise ValueError("the empty profile must score 0")
        for p, s in self.scores.items():
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"score {s} for profile {p} outside [0, 1]")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def grand_score(self) -> float:
        return self.scores[(1,) * self.n_groups]


@dataclass
class ShapleyResult:
    groups: Tuple[str, ...]
    values: Dict[str, float]
    grand_score: float

    def ranked(self) -> List[str]:
        """Group names in decreasing order of attributed value."""
        return sorted(self.values, key=lambda g: -self.values[g])

    def shares(self) -> Dict[str, Optional[float]]:
        total = sum(self.values.values())
        if total <= 0:
            return {g: None for g in self.groups}
        return {g: self.values[g] / total for g in self.groups}

    def to_dict(self) -> dict:
        return {"values": dict(self.values), "grand_score": self.grand_score,
                "shares": self.shares()}


def marginal(game: ShapleyGame, profile: Profile, group: int) -> float:
    """Score gain from adding one group to a profile that excludes it."""
    profile = tuple(profile)
    if profile[group]:
        raise ValueError(f"group {group} is already selected in {profile}")
    extended = profile[:group] + (1,) + profile[group + 1 :]
    return game.scores[extended] - game.scores[profile]


def shapley_values(game: ShapleyGame) -> ShapleyResult:
    """Exact values: factorial-weighted average marginal over all profiles."""
    g = game.n_groups
    fact = [math.factorial(i) for i in range(g + 1)]
    values = {}
    for i, name in enumerate(game.groups):
        total = 0.0
        for profile in game.scores:
            if profile[i]:
                continue
            size = sum(profile)
            weight = fact[size] * fact[g - size - 1] / fact[g]
            total += weight * marginal(game, profile, i)
        values[name] = total
    return ShapleyResult(game.groups, values, game.grand_score)


def _clipped_gini(auc: Optional[float]) -> Optional[float]:
    return None if auc is None else max(gini(auc), 0.0)


@dataclass
class ChannelImportance:
    """Trained channel-attribution game plus its Shapley decomposition."""

    game: ShapleyGame
    result: ShapleyResult
    per_horizon: Dict[str, ShapleyResult] = field(default_factory=dict)
    reports: Dict[Profile, HorizonReport] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "groups": list(self.game.groups),
            "scores": {"".join(map(str, p)): s for p, s in self.game.scores.items()},
            "values": self.result.to_dict(),
            "per_horizon": {h: r.to_dict() for h, r in self.per_horizon.items()},
        }


def channel_importance(dataset: Dataset, settings: RunSettings, seed: int,
                       per_horizon: bool = False) -> ChannelImportance:
    """Train one model per non-empty channel subset and decompose the Gini.

    The training preset is restricted to the channels present in each
    profile; the score is the Gini of the subset model's average test AUC,
    clipped at 0.
    """
    groups = tuple(settings.channels)
    g = len(groups)
    reports: Dict[Profile, HorizonReport] = {}
    scores: Dict[Profile, float] = {(0,) * g: 0.0}
    for profile in itertools.product((0, 1), repeat=g):
        if not any(profile):
            continue
        subset = tuple(ch for ch, bit in zip(groups, profile) if bit)
        sub = replace(
            settings,
            channels=subset,
            kinds={ch: settings.kinds[ch] for ch in subset},
            configs={ch: settings.configs.get(ch) for ch in subset},
        )
        try:
            ckpt, (_, _, test_ds) = run_training(dataset, sub, seed)
            reports[profile] = evaluate(ckpt, test_ds)
        except Exception as exc:
            raise RuntimeError(f"training failed for channel profile {subset}") from exc
        avg = reports[profile].average
        scores[profile] = _clipped_gini(avg) if avg is not None else 0.0
        log.info("profile %s: score %.4f", subset, scores[profile])
    game = ShapleyGame(groups, scores)
    out = ChannelImportance(game, shapley_values(game), reports=reports)
    if per_horizon:
        for i, h in enumerate(HORIZONS):
            aucs = {p: reports[p].auc[h] for p in reports}
            if any(a is None for a in aucs.values()):
                log.warning("horizon %s is single-class in some profile; skipped", h)
                continue
            h_scores = {(0,) * g: 0.0}
            h_scores.update({p: _clipped_gini(a) for p, a in aucs.items()})
            out.per_horizon[h] = shapley_values(ShapleyGame(groups, h_scores))
    return out


# Temporal grouping: the most recent year vs everything before it.
RECENT_QUARTERS = 4
RECENT_TRADING_DAYS = 252
TEMPORAL_GROUPS = ("past_year", "previous")


def _recent_rows(channel: str, window: int) -> int:
    if channel == "pricing":
        if window <= RECENT_TRADING_DAYS:
            raise ValueError(
                f"pricing window of {window} days cannot be split at {RECENT_TRADING_DAYS}"
            )
        return RECENT_TRADING_DAYS
    if window < 3 * RECENT_QUARTERS:
        raise ValueError(
            f"channel {channel!r} window of {window} quarters is shorter than 12"
        )
    return RECENT_QUARTERS


def _ablate_panel(panel: ChannelPanel, keep_recent: bool, keep_old: bool) -> ChannelPanel:
    """Mask a temporal group: values to NaN so preprocessing imputes the
    scaled median (0) and raises the missing indicators."""
    boundary = _recent_rows(panel.channel, panel.window)
    values = panel.values.copy()
    mask = panel.missing_mask.copy()
    if not keep_old:
        values[:-boundary] = np.nan
        mask[:-boundary] = True
    if not keep_recent:
        values[-boundary:] = np.nan
        mask[-boundary:] = True
    return ChannelPanel(panel.firm_id, panel.observation_date, panel.channel, values, mask)


def _ablated_observations(observations, channel: str, keep_recent: bool, keep_old: bool):
    out = []
    for obs in observations:
        panels = dict(obs.panels)
        panels[channel] = _ablate_panel(panels[channel], keep_recent, keep_old)
        out.append(Observation(obs.firm_id, obs.observation_date, panels, obs.target))
    return out


@dataclass
class TemporalImportance:
    """Per-channel two-group split of attribution between recent and older data."""

    values: Dict[str, Dict[str, float]]  # channel -> group -> Shapley value
    totals: Dict[str, float]

    def percentage_table(self) -> Dict[str, Dict[str, Optional[float]]]:
        table = {}
        for ch, vals in self.values.items():
            total = self.totals[ch]
            if total > 0:
                table[ch] = {g: 100.0 * vals[g] / total for g in TEMPORAL_GROUPS}
            else:
                table[ch] = {g: None for g in TEMPORAL_GROUPS}
        return table

    def to_dict(self) -> dict:
        return {"values": self.values, "totals": self.totals,
                "percentages": self.percentage_table()}


def temporal_importance(dataset: Dataset, settings: RunSettings, seed: int) -> TemporalImportance:
    """Within each channel, split attribution between the past year and earlier.

    One single-channel model is trained per channel; group coalitions are
    evaluated by ablation masking on the test split, never by retraining.
    """
    first = dataset.observations[0]
    for ch in settings.channels:
        _recent_rows(ch, first.panels[ch].window)  # validate up front
    values: Dict[str, Dict[str, float]] = {}
    totals: Dict[str, float] = {}
    for ch in settings.channels:
        sub = replace(
            settings,
            channels=(ch,),
            kinds={ch: settings.kinds[ch]},
            configs={ch: settings.configs.get(ch)},
            regime="r1",
        )
        ckpt, (_, _, test_ds) = run_training(dataset, sub, seed)
        targets = test_ds.targets_matrix()

        def coalition_score(keep_recent: bool, keep_old: bool) -> float:
            if not keep_recent and not keep_old:
                return 0.0
            obs = _ablated_observations(test_ds.observations, ch, keep_recent, keep_old)
            avg = horizon_report(predict(ckpt, obs), targets).average
            return _clipped_gini(avg) if avg is not None else 0.0

        scores = {
            (0, 0): 0.0,
            (1, 0): coalition_score(True, False),
            (0, 1): coalition_score(False, True),
            (1, 1): coalition_score(True, True),
        }
        res = shapley_values(ShapleyGame(TEMPORAL_GROUPS, scores))
        values[ch] = dict(res.values)
        totals[ch] = sum(res.values.values())
        log.info("channel %s temporal values: %s", ch, values[ch])
    return TemporalImportance(values, totals)
