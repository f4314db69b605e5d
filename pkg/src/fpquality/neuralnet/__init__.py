"""Feed-forward quality-class network, its training objective and optimizers."""

from .model import (
    FeatureTransform,
    NetworkModel,
    forward,
    load_model,
    normalize_features,
    predict_class,
    prepare,
    save_model,
)
from .objective import MSE, OPT_MSE, Objective, error_mse, error_opt_mse, objective_and_gradient
from .train import BFGS, SCG, TrainConfig, TrainResult, boltzmann_prune, train, train_bfgs, train_scg

__all__ = [
    "FeatureTransform", "NetworkModel", "forward", "load_model", "normalize_features", "predict_class",
    "prepare", "save_model", "MSE", "OPT_MSE", "Objective", "error_mse", "error_opt_mse",
    "objective_and_gradient", "BFGS", "SCG", "TrainConfig", "TrainResult", "boltzmann_prune",
    "train", "train_bfgs", "train_scg",
]
