"""Progress estimation for linear sequential processes.

A recurrent regressor estimates completeness in [0, 1] frame by frame, a
one-dimensional Gaussian mixture turns completeness into a phase, and the
average rate of progress so far gives the remaining time.
"""

from .errors import DataError, NumericError, ProcestError, UsageError
from .gmm import LossWeights, PhaseGMM, combined_loss, conditional_loss, fit_gmm, predict_phase, predict_phases
from .inference import OnlineEstimator, ProgressReport, estimate_trace, remaining_time
from .metrics import (
    classification_report,
    completeness_error,
    confusion_matrix,
    remaining_time_error,
    segment_error_counts,
    two_set,
    two_set_many,
)
from .model import ModelConfig, ProgressRegressor, load_model, save_model
from .simulator import SimulatorConfig, generate_dataset, generate_trace
from .trace import FeatureFrame, PhaseSchema, ProcessTrace, label_completeness, load_dataset, save_dataset
from .trace import split_dataset
from .training import TrainConfig, compare_activations, evaluate_mae, train

__all__ = [
    "DataError",
    "FeatureFrame",
    "LossWeights",
    "ModelConfig",
    "NumericError",
    "OnlineEstimator",
    "PhaseGMM",
    "PhaseSchema",
    "ProcessTrace",
    "ProcestError",
    "ProgressRegressor",
    "ProgressReport",
    "SimulatorConfig",
    "TrainConfig",
    "UsageError",
    "classification_report",
    "combined_loss",
    "compare_activations",
    "completeness_error",
    "conditional_loss",
    "confusion_matrix",
    "estimate_trace",
    "evaluate_mae",
    "fit_gmm",
    "generate_dataset",
    "generate_trace",
    "label_completeness",
    "load_dataset",
    "load_model",
    "predict_phase",
    "predict_phases",
    "remaining_time",
    "remaining_time_error",
    "save_dataset",
    "save_model",
    "segment_error_counts",
    "split_dataset",
    "train",
    "two_set",
    "two_set_many",
]

__version__ = "0.1.0"
