from .loss import multilabel_loss
from .model import (
    MultimodalModel,
    build_multimodal,
    channel_representation,
    fuse,
    isotonic_non_decreasing,
    multimodal_forward,
)
from .checkpoint import Checkpoint, FORMAT_VERSION, MAGIC
from .train import (
    R3_ORDER,
    RegimeSchedule,
    Stage,
    TrainSettings,
    dataset_arrays,
    predict,
    train,
)

__all__ = [
    "multilabel_loss",
    "MultimodalModel",
    "build_multimodal",
    "channel_representation",
    "fuse",
    "multimodal_forward",
    "isotonic_non_decreasing",
    "Checkpoint",
    "FORMAT_VERSION",
    "MAGIC",
    "RegimeSchedule",
    "Stage",
    "TrainSettings",
    "R3_ORDER",
    "dataset_arrays",
    "predict",
    "train",
]
