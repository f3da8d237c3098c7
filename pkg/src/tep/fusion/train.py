"""Staged training with channel freezing, early stopping, and prediction."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import CHANNELS
from ..datapipe import Dataset, PreprocessStats, apply_preprocess, fit_preprocess
from ..tensorcore import forward_backward, tape_scope
from ..tensorcore.optim import OptimizerState, optimizer_step
from ..tensorcore.tensor import Tensor
from .checkpoint import Checkpoint
from .loss import multilabel_loss
from .model import MultimodalModel, isotonic_non_decreasing, multimodal_forward

log = logging.getLogger(__name__)

# Differential training order: hardest-to-fit channel first, as later
# stages freeze everything trained before them.
R3_ORDER = ("pricing", "market", "fundamental")


@dataclass
class Stage:
    name: str
    active_channels: Tuple[str, ...]
    trainable: Tuple[str, ...]  # channel groups and/or "fusion"
    patience: int
    max_epochs: int = 50


@dataclass
class RegimeSchedule:
    stages: List[Stage]

    @classmethod
    def preset(cls, regime: str, channels: Sequence[str], solo_patience: int = 8,
               multi_patience: int = 5, max_epochs: int = 50) -> "RegimeSchedule":
        channels = [ch for ch in R3_ORDER if ch in channels] + [
            ch for ch in channels if ch not in R3_ORDER
        ]
        if not channels:
            raise ValueError("no channels in schedule")
        if regime == "r1":
            stages = [
                Stage(f"solo-{ch}", (ch,), (ch, "fusion"), solo_patience, max_epochs)
                for ch in channels
            ]
        elif regime == "r2":
            patience = multi_patience if len(channels) > 1 else solo_patience
            stages = [Stage("joint", tuple(channels), tuple(channels) + ("fusion",), patience, max_epochs)]
        elif regime == "r3":
            stages = [Stage(f"solo-{channels[0]}", (channels[0],), (channels[0], "fusion"),
                            solo_patience, max_epochs)]
            for i in range(1, len(channels)):
                active = tuple(channels[: i + 1])
                stages.append(
                    Stage(f"add-{channels[i]}", active, (channels[i], "fusion"),
                          multi_patience, max_epochs)
                )
        else:
            raise ValueError(f"unknown regime preset {regime!r}")
        return cls(stages)


@dataclass
class TrainSettings:
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    eval_chunk: int = 256


def dataset_arrays(dataset: Dataset, stats: PreprocessStats, channels: Sequence[str]):
    """Preprocess every observation into per-channel (N, w, 2f) arrays + targets."""
    xs: Dict[str, np.ndarray] = {}
    for ch in channels:
        xs[ch] = np.stack([apply_preprocess(o.panels[ch], stats) for o in dataset.observations])
    y = dataset.targets_matrix()
    return xs, y


def _hash_params(model: MultimodalModel, names: Sequence[str]) -> str:
    h = hashlib.sha256()
    params = model.parameters()
    for name in sorted(names):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


def _eval_loss(model, xs, y, active, chunk: int) -> float:
    n = y.shape[0]
    total = 0.0
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        inputs = {ch: Tensor(xs[ch][lo:hi]) for ch in active}
        with tape_scope():
            logits = multimodal_forward(model, inputs, active, training=False)
            loss = multilabel_loss(logits, y[lo:hi])
        total += loss.item() * (hi - lo)
    return total / n


def train(
    train_ds: Dataset,
    val_ds: Dataset,
    model: MultimodalModel,
    schedule: RegimeSchedule,
    seed: int,
    settings: Optional[TrainSettings] = None,
    preprocess: Optional[PreprocessStats] = None,
) -> Checkpoint:
    """Run the schedule stage by stage and return the trained checkpoint.

    Preprocessing stats are fitted on the training split unless supplied.
    Fully deterministic given (data, schedule, seed, settings).
    """
    settings = settings or TrainSettings()
    channels = list(model.channels)
    if preprocess is None:
        panels = {ch: [o.panels[ch] for o in train_ds.observations] for ch in channels}
        preprocess = fit_preprocess(panels)
    xs_train, y_train = dataset_arrays(train_ds, preprocess, channels)
    xs_val, y_val = dataset_arrays(val_ds, preprocess, channels)

    params = model.parameters()
    training_log = []
    for stage_idx, stage in enumerate(schedule.stages):
        trainable: List[str] = []
        for group in stage.trainable:
            trainable.extend(model.group_names(group))
        trainable = sorted(set(trainable))
        if not trainable:
            raise ValueError(f"stage {stage.name!r} has an empty trainable set")
        frozen = sorted(set(params) - set(trainable))
        frozen_hash_before = _hash_params(model, frozen)

        active = tuple(ch for ch in model.channel_order if ch in stage.active_channels)
        trainable_params = {name: params[name] for name in trainable}
        opt = OptimizerState(kind=settings.optimizer, learning_rate=settings.learning_rate)
        shuffle_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA7C, stage_idx]))
        dropout_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0B0, stage_idx]))

        n = y_train.shape[0]
        best_loss = np.inf
        best_epoch = -1
        best_snapshot: Dict[str, np.ndarray] = {}
        epochs_log = []
        stopped_epoch = None
        for epoch in range(stage.max_epochs):
            order = shuffle_rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, settings.batch_size):
                idx = order[lo : lo + settings.batch_size]
                inputs = {ch: Tensor(xs_train[ch][idx]) for ch in active}
                try:
                    with tape_scope() as tape:
                        logits = multimodal_forward(
                            model, inputs, active, training=True, rng=dropout_rng
                        )
                        loss = multilabel_loss(logits, y_train[idx])
                    if not np.isfinite(loss.data):
                        raise FloatingPointError("non-finite loss")
                    grads = forward_backward(tape, loss, trainable_params)
                except FloatingPointError as exc:
                    raise RuntimeError(
                        f"training aborted in stage {stage.name!r}, epoch {epoch}: {exc}"
                    ) from exc
                optimizer_step(trainable_params, grads, opt)
                epoch_loss += loss.item() * len(idx)
            epoch_loss /= n
            val_loss = _eval_loss(model, xs_val, y_val, active, settings.eval_chunk)
            epochs_log.append({"epoch": epoch, "train_loss": epoch_loss, "val_loss": val_loss})
            if val_loss < best_loss:
                best_loss = val_loss
                best_epoch = epoch
                best_snapshot = {name: params[name].data.copy() for name in trainable}
            elif epoch - best_epoch >= stage.patience:
                stopped_epoch = epoch
                break
        # restore best-validation weights for the trainable set
        for name, data in best_snapshot.items():
            params[name].data = data
        frozen_hash_after = _hash_params(model, frozen)
        if frozen_hash_before != frozen_hash_after:
            raise RuntimeError(f"frozen parameters changed during stage {stage.name!r}")
        training_log.append(
            {
                "stage": stage.name,
                "active_channels": list(active),
                "trainable_groups": list(stage.trainable),
                "patience": stage.patience,
                "epochs": epochs_log,
                "best_epoch": best_epoch,
                "best_val_loss": best_loss,
                "stopped_epoch": stopped_epoch,
                "frozen_hash_before": frozen_hash_before,
                "frozen_hash_after": frozen_hash_after,
            }
        )
        log.info("stage %s finished: best epoch %d, val loss %.5f", stage.name, best_epoch, best_loss)

    rng_state = {"seed": seed, "stages_completed": len(schedule.stages)}
    return Checkpoint.from_model(model, preprocess, rng_state, training_log)


def predict(checkpoint: Checkpoint, observations, isotonic: bool = False,
            chunk: int = 256) -> np.ndarray:
    """Per-observation PDs over the six horizons from a saved checkpoint."""
    model = checkpoint.to_model()
    stats = checkpoint.preprocess_stats()
    channels = list(checkpoint.model_meta["channels"])
    meta = checkpoint.model_meta["channels"]
    for obs in observations:
        for ch in channels:
            if ch not in obs.panels:
                raise ValueError(f"observation {obs.firm_id} lacks channel {ch!r}")
            p = obs.panels[ch]
            if p.window != meta[ch]["window"] or 2 * p.n_features != meta[ch]["n_features"]:
                raise ValueError(
                    f"channel {ch!r} shape ({p.window}, {p.n_features}) does not match checkpoint"
                )
    xs = {ch: np.stack([apply_preprocess(o.panels[ch], stats) for o in observations]) for ch in channels}
    n = len(observations)
    out = np.empty((n, 6))
    active = tuple(model.channel_order)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        inputs = {ch: Tensor(xs[ch][lo:hi]) for ch in channels}
        with tape_scope():
            logits = multimodal_forward(model, inputs, active, training=False)
        out[lo:hi] = 1.0 / (1.0 + np.exp(-logits.data))
    if isotonic:
        out = isotonic_non_decreasing(out)
    return out
