"""Temporally folded convolutional networks in plain numpy."""
from .estimators import TFCClassifier, TFCForecaster
from .formats import DigestMismatch, load_model, save_model
from .model import (BUILTINS, ConfigError, ModelSpec, TfcModel, build_model, build_parallel,
                    builtin_spec, count_parameters, fold_trace)
from .training import Adam, TrainConfig, evaluate, persistence_baseline, train

__all__ = [
    "Adam", "BUILTINS", "ConfigError", "DigestMismatch", "ModelSpec", "TFCClassifier",
    "TFCForecaster", "TfcModel", "TrainConfig", "build_model", "build_parallel", "builtin_spec",
    "count_parameters", "evaluate", "fold_trace", "load_model", "persistence_baseline",
    "save_model", "train",
]
__version__ = "0.1.0"
