"""Shared fixtures: small synthetic datasets and model settings."""

import pytest

from tep.datapipe import GenConfig, generate_synthetic
from tep.experiments import RunSettings
from tep.fusion import TrainSettings
from tep.nets import LstmConfig, TcnConfig, TepConfig


def tiny_gen_config(**overrides) -> GenConfig:
    base = dict(
        n_firms=60,
        quarters=6,
        pricing_window_days=40,
        n_fundamental_features=4,
        n_market_features=3,
        base_hazard=-6.0,
    )
    base.update(overrides)
    return GenConfig(**base)


def tiny_run_settings(**overrides) -> RunSettings:
    base = dict(
        kinds={"fundamental": "tep", "market": "tep", "pricing": "tcn"},
        configs={
            "fundamental": TepConfig(model_size=8, layers=1, heads=2, dropout=0.0),
            "market": TepConfig(model_size=8, layers=1, heads=2, dropout=0.0),
            "pricing": TcnConfig(filters=8, kernel_size=3, levels=2, dropout=0.0),
        },
        rep_width=8,
        max_epochs=3,
        solo_patience=2,
        multi_patience=2,
        train_settings=TrainSettings(batch_size=16),
    )
    base.update(overrides)
    return RunSettings(**base)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_synthetic(tiny_gen_config(), seed=11)
