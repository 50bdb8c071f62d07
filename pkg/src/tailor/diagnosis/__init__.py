from .model import Classifier
from .ensemble import (
    DEFAULT_THRESHOLDS,
    DEFAULT_WEIGHTS,
    EXPERT_KINDS,
    DecisionTrace,
    EnsembleModel,
    ExpertRead,
    LesionPrediction,
    load_predictions_jsonl,
    recompute_lesion,
    recompute_trace,
    save_predictions_jsonl,
)
from .training import (
    ClassBalanceError,
    fine_tune_expert,
    oversampled_indices,
    train_base,
    train_baseline_real,
    train_classifier,
)

__all__ = [
    "Classifier", "ClassBalanceError", "DEFAULT_THRESHOLDS", "DEFAULT_WEIGHTS",
    "DecisionTrace", "EXPERT_KINDS", "EnsembleModel", "ExpertRead", "LesionPrediction",
    "fine_tune_expert", "load_predictions_jsonl", "oversampled_indices",
    "recompute_lesion", "recompute_trace", "save_predictions_jsonl", "train_base",
    "train_baseline_real", "train_classifier",
]
