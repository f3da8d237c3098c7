"""End-to-end command surface: artifacts, exit codes, determinism."""

import json
import os
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from tep.cli import DEFAULTS, cli, load_config
from tep.cli.config import ConfigError


SMALL_CONFIG = {
    "seed": 5,
    "generator": {
        "n_firms": 50,
        "quarters": 6,
        "pricing_window_days": 70,
        "n_fundamental_features": 4,
        "n_market_features": 3,
        "base_hazard": -6.0,
    },
    "models": {
        "fundamental": {"kind": "tep", "model_size": 8, "layers": 1, "heads": 2, "dropout": 0.0},
        "market": {"kind": "tep", "model_size": 8, "layers": 1, "heads": 2, "dropout": 0.0},
        "pricing": {"kind": "tcn", "filters": 8, "kernel_size": 3, "levels": 2, "dropout": 0.0},
    },
    "rep_width": 8,
    "training": {"max_epochs": 2, "solo_patience": 1, "multi_patience": 1, "batch_size": 16},
    "sweep": {"kind": "tcn", "sizes": ["3m"]},
    "shapley": {"per_horizon": False, "temporal": False},
    "cv": {"k": 2},
}


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    cfg_path = tmp_path / "config.yaml"
    cfg = dict(SMALL_CONFIG)
    cfg["output_dir"] = str(tmp_path / "out")
    cfg_path.write_text(yaml.safe_dump(cfg))
    monkeypatch.delenv("TEP_OUTPUT_ROOT", raising=False)
    return tmp_path, cfg_path


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


def test_unknown_key_rejected_with_path(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"training": {"regmie": "r3"}}))
    result = invoke("train", "--config", str(bad))
    assert result.exit_code == 2
    assert "training.regmie" in result.stderr


def test_unknown_model_key_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"models": {"pricing": {"kind": "tcn", "filtrs": 8}}}))
    result = invoke("train", "--config", str(bad))
    assert result.exit_code == 2
    assert "models.pricing.filtrs" in result.stderr


def test_defaults_resolve_without_file():
    cfg = load_config(None)
    assert cfg["training"]["regime"] == "r3"
    assert cfg["models"]["pricing"]["kind"] == "tcn"
    assert cfg is not DEFAULTS


def test_invalid_values_rejected(tmp_path):
    for override, fragment in [
        ({"training": {"regime": "r7"}}, "regime"),
        ({"split": [0.5, 0.5, 0.5]}, "split"),
        ({"generator": {"n_firms": -1}}, "generator"),
        ({"cv": {"k": 1}}, "cv.k"),
    ]:
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump(override))
        with pytest.raises(ConfigError, match=fragment):
            load_config(str(bad))


def test_gen_is_deterministic(workdir):
    tmp_path, cfg_path = workdir
    assert invoke("gen", "--config", str(cfg_path)).exit_code == 0
    data_dir = tmp_path / "out" / "gen" / "data"
    first = {p.name: p.read_bytes() for p in sorted(data_dir.iterdir())}
    assert invoke("gen", "--config", str(cfg_path)).exit_code == 0
    second = {p.name: p.read_bytes() for p in sorted(data_dir.iterdir())}
    assert first == second
    assert set(first) == {"fundamental.csv", "market.csv", "pricing.csv", "labels.csv"}


def test_prep_emits_stats_and_audit(workdir):
    tmp_path, cfg_path = workdir
    result = invoke("prep", "--config", str(cfg_path))
    assert result.exit_code == 0
    outdir = tmp_path / "out" / "prep"
    stats = json.loads((outdir / "preprocess.json").read_text())
    audit = json.loads((outdir / "prep_report.json").read_text())
    assert set(stats) == {"fundamental", "market", "pricing"}
    assert audit["fundamental"]["features"] == 4
    assert (outdir / "config.yaml").exists()


def test_train_writes_checkpoint_log_and_metrics(workdir):
    tmp_path, cfg_path = workdir
    result = invoke("train", "--config", str(cfg_path))
    assert result.exit_code == 0
    outdir = tmp_path / "out" / "train"
    assert (outdir / "checkpoint.ckpt").exists()
    log = json.loads((outdir / "train_log.json").read_text())
    assert [e["stage"] for e in log] == ["solo-pricing", "add-market", "add-fundamental"]
    for entry in log:
        assert entry["frozen_hash_before"] == entry["frozen_hash_after"]
    assert (outdir / "eval.csv").read_text().startswith("model,Average,d_3m")
    events = [json.loads(l) for l in (outdir / "run.ndjson").read_text().splitlines()]
    assert events[0]["event"] == "start"
    assert events[-1]["event"] == "trained"


def test_train_twice_is_bitwise_identical(workdir):
    tmp_path, cfg_path = workdir
    outdir = tmp_path / "out" / "train"
    assert invoke("train", "--config", str(cfg_path)).exit_code == 0
    ckpt1 = (outdir / "checkpoint.ckpt").read_bytes()
    metrics1 = (outdir / "eval.csv").read_bytes()
    assert invoke("train", "--config", str(cfg_path)).exit_code == 0
    assert (outdir / "checkpoint.ckpt").read_bytes() == ckpt1
    assert (outdir / "eval.csv").read_bytes() == metrics1


def test_eval_command(workdir):
    tmp_path, cfg_path = workdir
    assert invoke("train", "--config", str(cfg_path)).exit_code == 0
    ckpt = tmp_path / "out" / "train" / "checkpoint.ckpt"
    result = invoke("eval", "--config", str(cfg_path), "--checkpoint", str(ckpt))
    assert result.exit_code == 0
    outdir = tmp_path / "out" / "eval"
    assert (outdir / "eval.json").exists()
    assert (outdir / "eval.svg").exists()


def test_cv_cell_format(workdir):
    tmp_path, cfg_path = workdir
    result = invoke("cv", "--config", str(cfg_path), "--k", "2")
    assert result.exit_code == 0
    text = (tmp_path / "out" / "cv" / "cv.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "metric,Average,d_3m,d_6m,d_9m,d_1y,d_2y,d_3y"
    assert lines[1].startswith('"mean (std)"') or lines[1].startswith("mean (std)")


def test_sweep_window_grid(workdir):
    tmp_path, cfg_path = workdir
    result = invoke("sweep-window", "--config", str(cfg_path))
    assert result.exit_code == 0
    text = (tmp_path / "out" / "sweep-window" / "sweep.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0].startswith("window,days,Average")
    assert lines[1].startswith("3m,63,")


def test_shapley_command(workdir):
    tmp_path, cfg_path = workdir
    result = invoke("shapley", "--config", str(cfg_path))
    assert result.exit_code == 0
    outdir = tmp_path / "out" / "shapley"
    payload = json.loads((outdir / "shapley.json").read_text())
    assert set(payload["groups"]) == {"fundamental", "market", "pricing"}
    assert (outdir / "shapley.svg").stat().st_size > 0
    lines = (outdir / "shapley.csv").read_text().strip().splitlines()
    assert lines[0] == "channel,value,share"
    assert len(lines) == 4


def test_attention_command(workdir):
    tmp_path, cfg_path = workdir
    assert invoke("train", "--config", str(cfg_path)).exit_code == 0
    ckpt = tmp_path / "out" / "train" / "checkpoint.ckpt"
    result = invoke("attention", "--config", str(cfg_path), "--checkpoint", str(ckpt))
    assert result.exit_code == 0
    outdir = tmp_path / "out" / "attention"
    svgs = list(outdir.glob("attention_*.svg"))
    csvs = list(outdir.glob("attention_*_l0_h0.csv"))
    assert svgs and csvs


def test_runtime_error_exits_one(workdir, tmp_path):
    _, cfg_path = workdir
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"XXXX" + b"\x00" * 16)
    result = invoke("eval", "--config", str(cfg_path), "--checkpoint", str(bogus))
    assert result.exit_code == 1
    assert "runtime error" in result.stderr


def test_output_root_env_override(workdir, monkeypatch):
    tmp_path, cfg_path = workdir
    root = tmp_path / "elsewhere"
    monkeypatch.setenv("TEP_OUTPUT_ROOT", str(root))
    assert invoke("gen", "--config", str(cfg_path)).exit_code == 0
    moved = root / str(tmp_path / "out").lstrip("/") / "gen"
    assert moved.exists()
