"""Experiment orchestration: end-to-end runs, evaluation, CV, window sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import CHANNELS
from .datapipe import Dataset, assign_folds
from .fusion import (
    Checkpoint,
    MultimodalModel,
    RegimeSchedule,
    TrainSettings,
    build_multimodal,
    predict,
    train,
)
from .metrics import CvReport, HorizonReport, horizon_report
from .nets import build_model, default_config
from .datapipe.panel import ChannelPanel, Observation

log = logging.getLogger(__name__)

DEFAULT_KINDS = {"fundamental": "tep", "market": "tep", "pricing": "tcn"}

# Pricing-window presets in trading days (21 per month).
WINDOW_SIZES = {"3m": 63, "6m": 126, "9m": 189, "1y": 252, "2y": 504}


@dataclass
class RunSettings:
    """Everything needed to train one multimodal configuration."""

    channels: Sequence[str] = CHANNELS
    kinds: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_KINDS))
    configs: Dict[str, object] = field(default_factory=dict)
    rep_width: int = 72
    regime: str = "r3"
    max_epochs: int = 50
    solo_patience: int = 8
    multi_patience: int = 5
    train_settings: TrainSettings = field(default_factory=TrainSettings)
    split: tuple = (0.6, 0.2, 0.2)

    def config_for(self, ch: str):
        return self.configs.get(ch) or default_config(self.kinds[ch])


def build_pipeline_model(dataset: Dataset, settings: RunSettings, seed: int) -> MultimodalModel:
    """Build channel models sized to the dataset's preprocessed feature widths."""
    first = dataset.observations[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB01D]))
    channel_models = {}
    for ch in settings.channels:
        panel = first.panels[ch]
        kind = settings.kinds[ch]
        cfg = settings.config_for(ch)
        # preprocessing appends one missing indicator per feature
        channel_models[ch] = build_model(kind, panel.window, 2 * panel.n_features, cfg, rng)
    return build_multimodal(channel_models, settings.rep_width, rng)


def run_training(dataset: Dataset, settings: RunSettings, seed: int):
    """Split by firm, fit preprocessing on train, train per the regime preset.

    Returns (checkpoint, (train_ds, val_ds, test_ds)).
    """
    train_ds, val_ds, test_ds = dataset.split_by_firm(seed, settings.split)
    model = build_pipeline_model(dataset, settings, seed)
    schedule = RegimeSchedule.preset(
        settings.regime,
        settings.channels,
        solo_patience=settings.solo_patience,
        multi_patience=settings.multi_patience,
        max_epochs=settings.max_epochs,
    )
    ckpt = train(train_ds, val_ds, model, schedule, seed, settings.train_settings)
    return ckpt, (train_ds, val_ds, test_ds)


def evaluate(checkpoint: Checkpoint, test_ds: Dataset, isotonic: bool = False) -> HorizonReport:
    pds = predict(checkpoint, test_ds.observations, isotonic=isotonic)
    return horizon_report(pds, test_ds.targets_matrix())


def cross_validate(dataset: Dataset, k: int, settings: RunSettings, seed: int) -> CvReport:
    """Company-stratified k-fold CV; each round retrains from scratch."""
    if k < 2:
        raise ValueError("k must be at least 2")
    fa = assign_folds(dataset.defaulted_flags(), k, seed)
    reports: List[HorizonReport] = []
    for fold in range(k):
        test_firms = set(fa.firms_in_fold(fold))
        test_ds = dataset.subset_firms(test_firms)
        rest = dataset.subset_firms(set(dataset.firm_ids) - test_firms)
        train_ds, val_ds, _ = rest.split_by_firm(seed + fold, (0.75, 0.25, 0.0))
        model = build_pipeline_model(dataset, settings, seed + fold)
        schedule = RegimeSchedule.preset(
            settings.regime, settings.channels,
            solo_patience=settings.solo_patience, multi_patience=settings.multi_patience,
            max_epochs=settings.max_epochs,
        )
        ckpt = train(train_ds, val_ds, model, schedule, seed + fold, settings.train_settings)
        reports.append(evaluate(ckpt, test_ds))
        log.info("fold %d/%d done", fold + 1, k)
    return CvReport.from_folds(reports)


def _slice_pricing(dataset: Dataset, days: int):
    """Restrict pricing panels to their last `days` rows; drop short ones."""
    kept = []
    dropped = 0
    for obs in dataset.observations:
        p = obs.panels["pricing"]
        if p.window < days:
            dropped += 1
            continue
        sliced = ChannelPanel(p.firm_id, p.observation_date, "pricing",
                              p.values[-days:], p.missing_mask[-days:])
        panels = dict(obs.panels)
        panels["pricing"] = sliced
        kept.append(Observation(obs.firm_id, obs.observation_date, panels, obs.target))
    return Dataset(kept, dict(dataset.default_dates)), dropped


@dataclass
class WindowSweepResult:
    reports: Dict[str, HorizonReport]
    dropped: Dict[str, int]

    def grid_row(self) -> Dict[str, Optional[float]]:
        return {size: rep.average if rep else None for size, rep in self.reports.items()}


def window_sweep(dataset: Dataset, kind: str, sizes: Sequence[str], settings: RunSettings,
                 seed: int) -> WindowSweepResult:
    """Train a pricing-only model per lookback window size."""
    unknown = [s for s in sizes if s not in WINDOW_SIZES]
    if unknown:
        raise ValueError(f"unknown window sizes {unknown}; choose from {sorted(WINDOW_SIZES)}")
    reports: Dict[str, HorizonReport] = {}
    dropped: Dict[str, int] = {}
    for size in sizes:
        days = WINDOW_SIZES[size]
        sliced, n_dropped = _slice_pricing(dataset, days)
        dropped[size] = n_dropped
        run = replace(
            settings,
            channels=("pricing",),
            kinds={"pricing": kind},
            configs={"pricing": settings.configs.get("pricing")},
            regime="r1",
        )
        ckpt, (_, _, test_ds) = run_training(sliced, run, seed)
        reports[size] = evaluate(ckpt, test_ds)
        log.info("window %s: average AUC %s", size, reports[size].average)
    return WindowSweepResult(reports, dropped)
