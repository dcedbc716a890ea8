from .features import FEATURE_DIM, build_features, heading_rotation
from .model import (ModelParams, MixturePrediction, forward, forward_batch,
                    head_dim, init_params, load_checkpoint, save_checkpoint)
from .sampling import (predict, predict_most_likely, sample_from_prediction,
                       sample_trajectories)
from .training import (LOSS_HORIZON_DEFAULT, VARIANTS, TrainConfig,
                       compute_example_weight, compute_weights,
                       loss_and_grad, prepare_arrays, train)

__all__ = [
    "FEATURE_DIM", "build_features", "heading_rotation",
    "ModelParams", "MixturePrediction", "forward", "forward_batch",
    "head_dim", "init_params", "load_checkpoint", "save_checkpoint",
    "predict", "predict_most_likely", "sample_from_prediction",
    "sample_trajectories",
    "LOSS_HORIZON_DEFAULT", "VARIANTS", "TrainConfig",
    "compute_example_weight", "compute_weights", "loss_and_grad",
    "prepare_arrays", "train",
]
