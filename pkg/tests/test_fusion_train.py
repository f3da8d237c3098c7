"""Staged training: presets, freezing, early stopping, determinism."""

import numpy as np
import pytest

import importlib

ftrain = importlib.import_module("tep.fusion.train")
from tep.experiments import RunSettings, build_pipeline_model, evaluate, run_training
from tep.fusion import (
    R3_ORDER,
    RegimeSchedule,
    TrainSettings,
    fuse,
    isotonic_non_decreasing,
    predict,
    train,
)
from tep.tensorcore import tape_scope
from tep.tensorcore.tensor import Tensor

from conftest import tiny_run_settings

ALL = ("fundamental", "market", "pricing")


def test_r3_preset_structure():
    sched = RegimeSchedule.preset("r3", ALL)
    assert [s.name for s in sched.stages] == ["solo-pricing", "add-market", "add-fundamental"]
    assert sched.stages[0].active_channels == ("pricing",)
    assert sched.stages[0].trainable == ("pricing", "fusion")
    assert sched.stages[0].patience == 8
    assert sched.stages[1].active_channels == ("pricing", "market")
    assert sched.stages[1].trainable == ("market", "fusion")
    assert sched.stages[1].patience == 5
    assert sched.stages[2].active_channels == ("pricing", "market", "fundamental")
    assert sched.stages[2].trainable == ("fundamental", "fusion")
    assert sched.stages[2].patience == 5
    assert R3_ORDER == ("pricing", "market", "fundamental")


def test_r1_and_r2_presets():
    r1 = RegimeSchedule.preset("r1", ALL)
    assert [s.name for s in r1.stages] == ["solo-pricing", "solo-market", "solo-fundamental"]
    assert all(s.patience == 8 for s in r1.stages)
    r2 = RegimeSchedule.preset("r2", ALL)
    assert len(r2.stages) == 1
    assert r2.stages[0].active_channels == ("pricing", "market", "fundamental")
    assert set(r2.stages[0].trainable) == set(ALL) | {"fusion"}
    with pytest.raises(ValueError, match="regime"):
        RegimeSchedule.preset("r9", ALL)
    with pytest.raises(ValueError, match="channels"):
        RegimeSchedule.preset("r1", ())


def test_training_is_deterministic(tiny_dataset):
    settings = tiny_run_settings(regime="r2", max_epochs=2)
    a, _ = run_training(tiny_dataset, settings, seed=5)
    b, _ = run_training(tiny_dataset, settings, seed=5)
    c, _ = run_training(tiny_dataset, settings, seed=6)
    assert a.to_bytes() == b.to_bytes()
    assert a.to_bytes() != c.to_bytes()


def test_r3_freezes_earlier_channels(tiny_dataset):
    """Pricing weights after full r3 equal those after pricing-only training."""
    full = tiny_run_settings(regime="r3", max_epochs=2)
    solo = tiny_run_settings(
        regime="r1",
        channels=("pricing",),
        kinds={"pricing": "tcn"},
        configs={"pricing": full.configs["pricing"]},
        max_epochs=2,
    )
    train_ds, val_ds, _ = tiny_dataset.split_by_firm(5)
    model_full = build_pipeline_model(tiny_dataset, full, seed=5)
    ck_full = train(train_ds, val_ds, model_full, RegimeSchedule.preset(
        "r3", ALL, solo_patience=full.solo_patience, multi_patience=full.multi_patience,
        max_epochs=2), 5, full.train_settings)
    # the pricing stage in both runs sees identical data, init, and RNG streams,
    # and the later r3 stages must not touch pricing weights
    model_solo = build_pipeline_model(tiny_dataset, full, seed=5)
    ck_solo = train(train_ds, val_ds, model_solo, RegimeSchedule.preset(
        "r1", ("pricing",), solo_patience=full.solo_patience, max_epochs=2),
        5, full.train_settings)
    pricing_names = [n for n in ck_full.tensors if n.startswith("pricing.")]
    assert pricing_names
    for name in pricing_names:
        np.testing.assert_array_equal(ck_full.tensors[name], ck_solo.tensors[name])
    for entry in ck_full.training_log:
        assert entry["frozen_hash_before"] == entry["frozen_hash_after"]
    assert [e["stage"] for e in ck_full.training_log] == [
        "solo-pricing", "add-market", "add-fundamental",
    ]


def test_early_stopping_follows_validation_curve(tiny_dataset, monkeypatch):
    script = iter([0.50, 0.40, 0.45, 0.46, 0.47, 0.48, 0.49])
    snapshots = []

    real_eval = ftrain._eval_loss

    def scripted_eval(model, xs, y, active, chunk):
        params = model.parameters()
        snapshots.append({n: t.data.copy() for n, t in params.items()})
        return next(script)

    monkeypatch.setattr(ftrain, "_eval_loss", scripted_eval)
    settings = tiny_run_settings(
        regime="r1", channels=("pricing",), kinds={"pricing": "tcn"},
        max_epochs=10, solo_patience=2,
    )
    ck, _ = run_training(tiny_dataset, settings, seed=2)
    entry = ck.training_log[0]
    assert entry["best_epoch"] == 1
    assert entry["stopped_epoch"] == 3
    assert len(entry["epochs"]) == 4
    # weights restored to the best-validation epoch, not the last one
    best = snapshots[1]
    for name, arr in ck.tensors.items():
        np.testing.assert_array_equal(arr, best[name].astype(np.float32))
    assert real_eval is not ftrain._eval_loss


def test_nan_loss_aborts_with_stage_name(tiny_dataset):
    settings = tiny_run_settings(regime="r3", max_epochs=2)
    train_ds, val_ds, _ = tiny_dataset.split_by_firm(5)
    model = build_pipeline_model(tiny_dataset, settings, seed=5)
    bad = model.channels["pricing"].tensors["block0.conv1.v"]
    bad.data[0, 0] = np.nan
    with pytest.raises(RuntimeError, match="solo-pricing"):
        train(train_ds, val_ds, model, RegimeSchedule.preset("r3", ALL, max_epochs=2),
              5, settings.train_settings)


def test_predict_rejects_mismatched_panels(tiny_dataset):
    settings = tiny_run_settings(regime="r2", max_epochs=1)
    ck, (_, _, test_ds) = run_training(tiny_dataset, settings, seed=5)
    from tep.datapipe import ChannelPanel, Observation

    obs = test_ds.observations[0]
    short = ChannelPanel(obs.firm_id, obs.observation_date, "pricing",
                         obs.panels["pricing"].values[:-1],
                         obs.panels["pricing"].missing_mask[:-1])
    panels = dict(obs.panels)
    panels["pricing"] = short
    bad = Observation(obs.firm_id, obs.observation_date, panels, obs.target)
    with pytest.raises(ValueError, match="pricing"):
        predict(ck, [bad])


def test_evaluate_reports_all_horizons(tiny_dataset):
    settings = tiny_run_settings(regime="r2", max_epochs=2)
    ck, (_, _, test_ds) = run_training(tiny_dataset, settings, seed=5)
    report = evaluate(ck, test_ds)
    assert set(report.auc) == {"3m", "6m", "9m", "1y", "2y", "3y"}
    for h, auc in report.auc.items():
        if auc is not None:
            assert 0.0 <= auc <= 1.0


def test_fuse_single_channel_uses_one_block(tiny_dataset):
    settings = tiny_run_settings()
    model = build_pipeline_model(tiny_dataset, settings, seed=1)
    rng = np.random.default_rng(0)
    rep = Tensor(rng.normal(size=(3, 5, model.rep_width)))
    with tape_scope():
        out = fuse(model, {"market": rep})
        manual = (
            np.max(rep.data, axis=1) @ model.fusion["fusion.market.w"].data
            + model.fusion["fusion.b"].data
        )
    np.testing.assert_allclose(out.data, manual, atol=1e-12)
    with pytest.raises(ValueError, match="no active"):
        with tape_scope():
            fuse(model, {})


def test_isotonic_projection():
    out = isotonic_non_decreasing(np.array([[3.0, 1.0, 2.0, 4.0, 4.0, 5.0]]))
    np.testing.assert_allclose(out[0], [2.0, 2.0, 2.0, 4.0, 4.0, 5.0])
    mono = np.array([[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]])
    np.testing.assert_array_equal(isotonic_non_decreasing(mono), mono)
