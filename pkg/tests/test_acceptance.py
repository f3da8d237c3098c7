"""Acceptance gate: one check (and one printed PASS line) per shipped guarantee.

These tests exercise the full pipeline at desk scale: gradient oracles,
closed-form loss identities, ranking-metric and attribution oracles, label
invariants, staged-training contracts, end-to-end determinism, and
learnability/ordering recovery on the controllable synthetic generator.
"""

import itertools
import math
import time

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from tep.cli import cli
from tep.datapipe import GenConfig, build_targets, generate_synthetic
from tep.experiments import RunSettings, evaluate, run_training
from tep.fusion import RegimeSchedule, TrainSettings, multilabel_loss, train
from tep.interpret import extract_attention
from tep.metrics import roc_auc, roc_auc_pairwise
from tep.nets import TcnConfig, TepConfig, build_model, model_forward
from tep.shapley import ShapleyGame, channel_importance, shapley_values
from tep.tensorcore import forward_backward, tape_scope
from tep.tensorcore.gradcheck import LAYER_KINDS, grad_check
from tep.tensorcore.tensor import Tensor

from test_shapley import permutation_oracle, random_game


def report(number: int, name: str, ok: bool):
    print(f"ACCEPTANCE {number:02d} {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, f"acceptance criterion {number:02d} ({name}) failed"


# --- 1: gradient oracle ------------------------------------------------------

def test_acceptance_01_gradient_oracle():
    t0 = time.time()
    ok = True
    for kind in LAYER_KINDS:
        for seed in range(20):
            if not grad_check(kind, tolerance=1e-4, seed=seed).passed:
                ok = False
    elapsed = time.time() - t0
    report(1, "gradient-oracle", ok and elapsed < 60.0)


# --- 2: loss closed form -----------------------------------------------------

def test_acceptance_02_loss_closed_form():
    rng = np.random.default_rng(0)
    z = Tensor(rng.normal(size=(8, 6)), requires_grad=True)
    y = rng.integers(0, 2, size=(8, 6)).astype(float)
    with tape_scope() as tape:
        loss = multilabel_loss(z, y)
    grads = forward_backward(tape, loss, {"z": z})
    expected = (1.0 / (1.0 + np.exp(-z.data)) - y) / 8.0
    grad_ok = np.max(np.abs(grads["z"].data - expected)) < 1e-10

    with tape_scope():
        at_zero = multilabel_loss(Tensor(np.zeros((1, 6))), np.zeros((1, 6)))
    zero_ok = abs(at_zero.item() - 6 * math.log(2)) < 1e-12
    report(2, "loss-closed-form", grad_ok and zero_ok)


# --- 3: AUC oracle -----------------------------------------------------------

def test_acceptance_03_auc_oracle():
    rng = np.random.default_rng(1)
    ok = True
    for _ in range(100):
        n = int(rng.integers(10, 1001))
        scores = rng.integers(0, max(3, n // 4), size=n).astype(float)  # forces ties
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0], labels[1] = 0, 1
        fast = roc_auc(scores, labels)
        if abs(fast - roc_auc_pairwise(scores, labels)) >= 1e-12:
            ok = False
        # strictly monotone transforms preserve ranks, hence the AUC exactly
        if roc_auc(3.0 * scores + 1.0, labels) != fast:
            ok = False
        if roc_auc(np.exp(scores / max(scores.max(), 1.0)), labels) != fast:
            ok = False
    report(3, "auc-oracle", ok)


# --- 4: attribution oracle ---------------------------------------------------

def test_acceptance_04_shapley_oracle():
    rng = np.random.default_rng(2)
    ok = True
    for _ in range(100):
        g = int(rng.integers(2, 6))
        game = random_game(rng, g)
        res = shapley_values(game)
        got = np.array([res.values[name] for name in game.groups])
        if np.max(np.abs(got - permutation_oracle(game))) >= 1e-12:
            ok = False
        # efficiency
        if abs(got.sum() - game.grand_score) >= 1e-10:
            ok = False
        # dummy: append a player that never changes the score
        ext = {}
        for p, s in game.scores.items():
            ext[p + (0,)] = s
            ext[p + (1,)] = s
        dummy = shapley_values(ShapleyGame(game.groups + ("dummy",), ext))
        if abs(dummy.values["dummy"]) >= 1e-12:
            ok = False
        # symmetry on a constructed symmetric game
        sym_scores = {p: sum(p) / g for p in itertools.product((0, 1), repeat=g)}
        sym = shapley_values(ShapleyGame(game.groups, sym_scores))
        if np.ptp([sym.values[name] for name in game.groups]) >= 1e-12:
            ok = False
        # linearity under score averaging
        other = random_game(rng, g)
        mixed = shapley_values(ShapleyGame(game.groups, {
            p: 0.5 * (game.scores[p] + other.scores[p]) for p in game.scores
        }))
        ro = shapley_values(other)
        for i, name in enumerate(game.groups):
            want = 0.5 * (res.values[name] + ro.values[f"g{i}"])
            if abs(mixed.values[name] - want) >= 1e-12:
                ok = False
    report(4, "shapley-oracle", ok)


# --- 5: target monotonicity --------------------------------------------------

def test_acceptance_05_target_monotonicity():
    ok = True
    for seed in range(3):
        ds = generate_synthetic(
            GenConfig(n_firms=80, quarters=6, pricing_window_days=30,
                      n_fundamental_features=3, n_market_features=2,
                      base_hazard=-5.0),
            seed=seed,
        )
        for o in ds.observations:
            if np.any(np.diff(o.target.y) < 0):
                ok = False
    from datetime import date

    from tep.datapipe import add_months

    obs = date(2020, 12, 31)
    tv = build_targets(obs, add_months(obs, 10))
    if not np.array_equal(tv.y, [0, 0, 0, 1, 1, 1]):
        ok = False
    report(5, "target-monotonicity", ok)


# --- shared small settings for training-based criteria -----------------------

def _small_settings(**overrides) -> RunSettings:
    base = dict(
        channels=("fundamental", "market", "pricing"),
        kinds={"fundamental": "tep", "market": "tep", "pricing": "tcn"},
        configs={
            "fundamental": TepConfig(model_size=16, layers=1, heads=4, dropout=0.0),
            "market": TepConfig(model_size=16, layers=1, heads=4, dropout=0.0),
            "pricing": TcnConfig(filters=12, kernel_size=3, levels=4, dropout=0.0),
        },
        rep_width=16,
        regime="r3",
        max_epochs=40,
        solo_patience=8,
        multi_patience=6,
        train_settings=TrainSettings(batch_size=32, learning_rate=3e-3),
    )
    base.update(overrides)
    return RunSettings(**base)


def _mixed_signal_gen(**overrides) -> GenConfig:
    base = dict(
        n_firms=400, quarters=12, pricing_window_days=63,
        n_fundamental_features=6, n_market_features=6,
        alpha_fundamental=2.5, alpha_market=2.5, alpha_pricing=2.0,
        base_hazard=-6.5, fundamental_noise=0.3, ar=0.95,
    )
    base.update(overrides)
    return GenConfig(**base)


# --- 6: freeze contract ------------------------------------------------------

def test_acceptance_06_freeze_contract():
    from tep.experiments import build_pipeline_model

    cfg = GenConfig(n_firms=60, quarters=6, pricing_window_days=40,
                    n_fundamental_features=4, n_market_features=3,
                    base_hazard=-6.0)
    ok = True
    for seed in range(3):
        ds = generate_synthetic(cfg, seed=seed)
        settings = _small_settings(max_epochs=3, solo_patience=2, multi_patience=2)
        model = build_pipeline_model(ds, settings, seed)
        initial = {n: t.data.copy() for n, t in model.parameters().items()}
        train_ds, val_ds, _ = ds.split_by_firm(seed)
        schedule = RegimeSchedule.preset("r3", settings.channels,
                                         solo_patience=2, multi_patience=2, max_epochs=3)
        ckpt = train(train_ds, val_ds, model, schedule, seed, settings.train_settings)
        for entry in ckpt.training_log:
            if entry["frozen_hash_before"] != entry["frozen_hash_after"]:
                ok = False
        for ch in settings.channels:  # every channel was trainable in some stage
            names = [n for n in ckpt.tensors if n.startswith(f"{ch}.")]
            if all(np.array_equal(ckpt.tensors[n], initial[n].astype(np.float32))
                   for n in names):
                ok = False
    report(6, "freeze-contract", ok)


# --- 7: end-to-end determinism -----------------------------------------------

def test_acceptance_07_determinism(tmp_path):
    cfg = {
        "seed": 3,
        "output_dir": str(tmp_path / "out"),
        "generator": {"n_firms": 50, "quarters": 6, "pricing_window_days": 70,
                      "n_fundamental_features": 4, "n_market_features": 3,
                      "base_hazard": -6.0},
        "models": {
            "fundamental": {"kind": "tep", "model_size": 8, "layers": 1, "heads": 2, "dropout": 0.0},
            "market": {"kind": "tep", "model_size": 8, "layers": 1, "heads": 2, "dropout": 0.0},
            "pricing": {"kind": "tcn", "filters": 8, "kernel_size": 3, "levels": 2, "dropout": 0.0},
        },
        "rep_width": 8,
        "training": {"regime": "r3", "max_epochs": 2, "solo_patience": 1,
                     "multi_patience": 1, "batch_size": 16},
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    runner = CliRunner()
    outdir = tmp_path / "out" / "train"

    assert runner.invoke(cli, ["train", "--config", str(cfg_path)]).exit_code == 0
    first_ckpt = (outdir / "checkpoint.ckpt").read_bytes()
    first_metrics = (outdir / "eval.csv").read_bytes()
    first_json = (outdir / "eval.json").read_bytes()
    assert runner.invoke(cli, ["train", "--config", str(cfg_path)]).exit_code == 0
    ok = (
        (outdir / "checkpoint.ckpt").read_bytes() == first_ckpt
        and (outdir / "eval.csv").read_bytes() == first_metrics
        and (outdir / "eval.json").read_bytes() == first_json
    )
    report(7, "determinism", ok)


# --- 8: synthetic learnability -----------------------------------------------

def test_acceptance_08_synthetic_learnability():
    settings = _small_settings(
        channels=("fundamental",),
        kinds={"fundamental": "tep"},
        configs={"fundamental": TepConfig(model_size=24, layers=2, heads=4, dropout=0.0)},
        rep_width=24, regime="r1", max_epochs=50, solo_patience=10,
        train_settings=TrainSettings(batch_size=32, learning_rate=5e-3),
    )
    t0 = time.time()
    ds = generate_synthetic(GenConfig(), seed=0)
    ckpt, (_, _, test_ds) = run_training(ds, settings, seed=0)
    rep = evaluate(ckpt, test_ds)
    elapsed = time.time() - t0
    learn_ok = rep.auc["3m"] is not None and rep.auc["3m"] >= 0.85 and elapsed < 600

    null_cfg = GenConfig(n_firms=300, alpha_fundamental=0.0, alpha_market=0.0,
                         alpha_pricing=0.0, base_hazard=-3.5,
                         pricing_window_days=40, n_fundamental_features=6,
                         n_market_features=4)
    null_settings = _small_settings(
        channels=("fundamental",), kinds={"fundamental": "tep"},
        configs={"fundamental": TepConfig(model_size=16, layers=1, heads=4, dropout=0.0)},
        regime="r1", max_epochs=15, solo_patience=4,
    )
    null_avgs = []
    for seed in range(5):
        nds = generate_synthetic(null_cfg, seed=seed)
        nckpt, (_, _, nte) = run_training(nds, null_settings, seed=seed)
        null_avgs.append(evaluate(nckpt, nte).average)
    null_ok = abs(float(np.mean(null_avgs)) - 0.5) <= 0.05
    print(f"  learnability: 3m AUC {rep.auc['3m']:.3f} in {elapsed:.0f}s; "
          f"null mean AUC {np.mean(null_avgs):.3f}")
    report(8, "synthetic-learnability", learn_ok and null_ok)


# --- 9: multimodal benefit ---------------------------------------------------

def test_acceptance_09_multimodal_benefit():
    cfg = _mixed_signal_gen()
    margins = []
    for seed in range(5):
        ds = generate_synthetic(cfg, seed=seed)
        singles = []
        for ch in ("fundamental", "market", "pricing"):
            s = _small_settings(channels=(ch,), kinds={ch: _small_settings().kinds[ch]},
                                configs={ch: _small_settings().configs[ch]}, regime="r1")
            ckpt, (_, _, te) = run_training(ds, s, seed=seed)
            singles.append(evaluate(ckpt, te).average)
        multi = _small_settings(regime="r3")
        mckpt, (_, _, mte) = run_training(ds, multi, seed=seed)
        margin = evaluate(mckpt, mte).average - max(singles)
        margins.append(margin)
        print(f"  seed {seed}: best single {max(singles):.3f}, "
              f"multimodal margin {margin:+.3f}")
    report(9, "multimodal-benefit", float(np.median(margins)) >= 0.005)


# --- 10: attribution ordering recovery ---------------------------------------

def test_acceptance_10_shapley_ordering():
    cfg = _mixed_signal_gen(n_firms=300, alpha_fundamental=6.0, alpha_market=2.5,
                            alpha_pricing=1.2, base_hazard=-8.5)
    settings = _small_settings(max_epochs=30, solo_patience=6, multi_patience=4)
    hits = 0
    for seed in range(5):
        ds = generate_synthetic(cfg, seed=seed)
        ci = channel_importance(ds, settings, seed)
        if ci.result.ranked() == ["fundamental", "market", "pricing"]:
            hits += 1
    print(f"  ordering recovered in {hits}/5 seeds")
    report(10, "shapley-ordering", hits >= 4)


# --- 11: attention plumbing --------------------------------------------------

def test_acceptance_11_attention_plumbing():
    from tep.fusion import predict

    settings = _small_settings(
        channels=("fundamental",), kinds={"fundamental": "tep"},
        configs={"fundamental": TepConfig(model_size=16, layers=2, heads=4,
                                          dropout=0.0, positional_encoding=False)},
        regime="r1", max_epochs=40, solo_patience=8,
    )
    cfg = GenConfig(n_firms=400, quarters=12, horizon_quarters=1,
                    pricing_window_days=40, n_fundamental_features=6,
                    n_market_features=4, alpha_fundamental=8.0, alpha_market=0.0,
                    alpha_pricing=0.0, base_hazard=-4.0, fundamental_noise=0.25,
                    ar=0.3, planted_hazard_lag=6)
    stochastic_ok = bitwise_ok = True
    planted_col = 6  # input row t-5 in a 12-quarter window
    defaulted_hits = surviving_hits = 0
    for seed in range(5):
        ds = generate_synthetic(cfg, seed=seed)
        ckpt, (_, _, te) = run_training(ds, settings, seed=seed)
        before = predict(ckpt, te.observations)
        groups = extract_attention(ckpt, te.observations)
        if not np.array_equal(before, predict(ckpt, te.observations)):
            bitwise_ok = False
        for maps in groups.values():
            if maps is None:
                continue
            for m in maps.maps.values():
                if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1.0)) >= 1e-9:
                    stochastic_ok = False
        defaulted_hits += sum(
            int(np.argmax(m.mean(axis=0))) == planted_col
            for m in groups["defaulted"].maps.values()
        )
        surviving_hits += sum(
            int(np.argmax(m.mean(axis=0))) == planted_col
            for m in groups["non-defaulted"].maps.values()
        )
    print(f"  planted-column argmax: defaulted {defaulted_hits} maps vs "
          f"non-defaulted {surviving_hits} maps over 5 seeds")
    report(11, "attention-plumbing",
           stochastic_ok and bitwise_ok and defaulted_hits > surviving_hits)


# --- 12: causal convolution receptive field ----------------------------------

def test_acceptance_12_tcn_receptive_field():
    ok = True
    rng = np.random.default_rng(12)
    for k, levels in [(3, 3), (3, 2), (6, 2)]:
        cfg = TcnConfig(filters=4, kernel_size=k, levels=levels, dropout=0.0)
        expected = 1 + 2 * (k - 1) * (2 ** levels - 1)
        if cfg.receptive_field() != expected:
            ok = False
        w = expected + 10
        model = build_model("tcn", w, 2, cfg, rng)

        def fwd(x):
            with tape_scope():
                rep, _ = model_forward(model, Tensor(x))
            return rep.data

        base_x = rng.normal(size=(1, w, 2))
        base = fwd(base_x)
        # future perturbation never leaks backward
        pert = base_x.copy()
        pert[0, w // 2, :] += 1.0
        diff = np.abs(fwd(pert) - base).max(axis=-1)[0]
        if np.any(diff[: w // 2] != 0.0):
            ok = False
        # impulse at t=0 reaches exactly the advertised span
        zero = fwd(np.zeros((1, w, 2)))
        imp = np.zeros((1, w, 2))
        imp[0, 0, 0] = 1.0
        resp = np.abs(fwd(imp) - zero).max(axis=-1)[0]
        influenced = np.nonzero(resp > 1e-12)[0]
        if influenced[0] != 0 or influenced[-1] != expected - 1:
            ok = False
    report(12, "tcn-receptive-field", ok)
