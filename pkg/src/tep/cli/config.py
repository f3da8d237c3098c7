"""Config file loading, defaults, and strict key validation."""

from __future__ import annotations

import copy
import dataclasses
from datetime import date
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from ..datapipe import GenConfig
from ..experiments import RunSettings
from ..fusion import TrainSettings
from ..nets import MODEL_KINDS, config_from_dict, default_config


class ConfigError(ValueError):
    """Invalid configuration; the message carries the offending key path."""


def _generator_defaults() -> Dict[str, Any]:
    out = {}
    for f in dataclasses.fields(GenConfig):
        v = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        out[f.name] = v.isoformat() if isinstance(v, date) else v
    return out


def _model_defaults(kind: str) -> Dict[str, Any]:
    d = {"kind": kind}
    d.update(dataclasses.asdict(default_config(kind)))
    return d


DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "output_dir": "tep-out",
    "data_dir": None,
    "generator": _generator_defaults(),
    "channels": ["fundamental", "market", "pricing"],
    "models": {
        "fundamental": _model_defaults("tep"),
        "market": _model_defaults("tep"),
        "pricing": _model_defaults("tcn"),
    },
    "rep_width": 72,
    "training": {
        "regime": "r3",
        "max_epochs": 50,
        "solo_patience": 8,
        "multi_patience": 5,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "optimizer": "adam",
    },
    "split": [0.6, 0.2, 0.2],
    "cv": {"k": 10},
    "sweep": {"kind": "tcn", "sizes": ["3m", "6m", "9m", "1y", "2y"]},
    "shapley": {"per_horizon": True, "temporal": False},
    "attention": {"channel": "fundamental", "horizon": "3y"},
}


def _merge(base: Dict[str, Any], override: Dict[str, Any], path: str) -> Dict[str, Any]:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(base[key], dict) and not (path == "" and key == "models"):
            if not isinstance(value, dict):
                raise ConfigError(f"{here} must be a mapping")
            out[key] = _merge(base[key], value, here)
        elif path == "" and key == "models":
            out[key] = _merge_models(value)
        else:
            out[key] = value
    return out


def _merge_models(models: Dict[str, Any]) -> Dict[str, Any]:
    """Per-channel model sections validate against the declared kind's fields."""
    out = copy.deepcopy(DEFAULTS["models"])
    if not isinstance(models, dict):
        raise ConfigError("models must be a mapping")
    for channel, section in models.items():
        here = f"models.{channel}"
        if not isinstance(section, dict):
            raise ConfigError(f"{here} must be a mapping")
        kind = section.get("kind", out.get(channel, {}).get("kind"))
        if kind not in MODEL_KINDS:
            raise ConfigError(f"{here}.kind must be one of {MODEL_KINDS}, got {kind!r}")
        merged = _model_defaults(kind)
        for key, value in section.items():
            if key != "kind" and key not in merged:
                raise ConfigError(f"unknown config key: {here}.{key}")
            merged[key] = value
        out[channel] = merged
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Resolve a config file against the defaults; unknown keys are fatal."""
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config root in {path} must be a mapping")
    cfg = _merge(DEFAULTS, raw, "")
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: Dict[str, Any]) -> None:
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    for ch in cfg["channels"]:
        if ch not in cfg["models"]:
            raise ConfigError(f"channels lists {ch!r} but models.{ch} is undefined")
    if cfg["training"]["regime"] not in ("r1", "r2", "r3"):
        raise ConfigError("training.regime must be one of r1, r2, r3")
    if cfg["training"]["optimizer"] not in ("adam", "sgd"):
        raise ConfigError("training.optimizer must be adam or sgd")
    if len(cfg["split"]) != 3 or abs(sum(cfg["split"]) - 1.0) > 1e-9:
        raise ConfigError("split must be three fractions summing to 1")
    if cfg["cv"]["k"] < 2:
        raise ConfigError("cv.k must be at least 2")
    try:
        gen_config(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"generator: {exc}") from exc


def gen_config(cfg: Dict[str, Any]) -> GenConfig:
    d = dict(cfg["generator"])
    if isinstance(d["observation_date"], str):
        # YAML already parses bare dates; config files may quote them
        d["observation_date"] = date.fromisoformat(d["observation_date"])
    return GenConfig(**d)


def run_settings(cfg: Dict[str, Any]) -> RunSettings:
    channels = tuple(cfg["channels"])
    kinds = {}
    configs = {}
    for ch in channels:
        section = dict(cfg["models"][ch])
        kind = section.pop("kind")
        kinds[ch] = kind
        try:
            configs[ch] = config_from_dict(kind, section)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"models.{ch}: {exc}") from exc
    t = cfg["training"]
    return RunSettings(
        channels=channels,
        kinds=kinds,
        configs=configs,
        rep_width=cfg["rep_width"],
        regime=t["regime"],
        max_epochs=t["max_epochs"],
        solo_patience=t["solo_patience"],
        multi_patience=t["multi_patience"],
        train_settings=TrainSettings(
            batch_size=t["batch_size"],
            learning_rate=t["learning_rate"],
            optimizer=t["optimizer"],
        ),
        split=tuple(cfg["split"]),
    )
