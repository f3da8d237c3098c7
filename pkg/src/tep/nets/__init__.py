from .models import (
    MODEL_KINDS,
    N_LOGITS,
    LogisticConfig,
    LstmConfig,
    ModelParams,
    NnConfig,
    TcnConfig,
    TepConfig,
    attention,
    build_model,
    config_from_dict,
    default_config,
    model_forward,
)

__all__ = [
    "MODEL_KINDS",
    "N_LOGITS",
    "TepConfig",
    "TcnConfig",
    "LstmConfig",
    "NnConfig",
    "LogisticConfig",
    "ModelParams",
    "build_model",
    "model_forward",
    "attention",
    "default_config",
    "config_from_dict",
]
