from .panel import (
    ChannelPanel,
    Dataset,
    Observation,
    TargetVector,
    add_months,
    build_targets,
    months_between,
)
from .preprocess import PreprocessStats, apply_preprocess, fit_preprocess, WINSOR_BOUND
from .folds import FoldAssignment, assign_folds
from .synthetic import GenConfig, SyntheticDataset, generate_synthetic
from .csvio import CsvFormatError, LoadReport, load_channels, load_directory, write_dataset

__all__ = [
    "ChannelPanel",
    "Dataset",
    "Observation",
    "TargetVector",
    "add_months",
    "build_targets",
    "months_between",
    "PreprocessStats",
    "fit_preprocess",
    "apply_preprocess",
    "WINSOR_BOUND",
    "FoldAssignment",
    "assign_folds",
    "GenConfig",
    "SyntheticDataset",
    "generate_synthetic",
    "CsvFormatError",
    "LoadReport",
    "load_channels",
    "load_directory",
    "write_dataset",
]
