from bugsolve.when.features import (
    FIXED_CLASS_WEIGHTS,
    Discussion,
    FeatureVector,
    StepInstance,
    WhenFeaturizer,
    balanced_class_weights,
    make_instances,
)
from bugsolve.when.forest import ForestConfig, ForestModel, ModelFormatError, TrainingError, load_model, save_model, train_forest
from bugsolve.when.predict import (
    DIST_P_POS,
    WhenPrediction,
    baseline_first,
    baseline_random,
    baseline_second,
    estimate_p_pos,
    first_positive,
    infer_tp,
    train_when_model,
)

__all__ = [
    "DIST_P_POS",
    "FIXED_CLASS_WEIGHTS",
    "Discussion",
    "FeatureVector",
    "ForestConfig",
    "ForestModel",
    "ModelFormatError",
    "StepInstance",
    "TrainingError",
    "WhenFeaturizer",
    "WhenPrediction",
    "balanced_class_weights",
    "baseline_first",
    "baseline_random",
    "baseline_second",
    "estimate_p_pos",
    "first_positive",
    "infer_tp",
    "load_model",
    "make_instances",
    "save_model",
    "train_forest",
    "train_when_model",
]
