"""Drawing predictions from a trained model.

Most-likely prediction is the trajectory of the highest-probability
mode.  Stochastic samples draw a mode from the mixture weights, then
add per-step diagonal Gaussian noise around that mode's trajectory.
Sample streams are keyed by (seed, example_index) so each example has
its own reproducible stream regardless of evaluation order.
"""

from __future__ import annotations

import numpy as np

from .features import build_features
from .model import ModelParams, MixturePrediction, forward


def predict(params: ModelParams, history, current_position,
            dt: float = 0.5) -> MixturePrediction:
    feats, R = build_features(history, dt=dt)
    return forward(params, feats, R, current_position)


def predict_most_likely(params: ModelParams, history, current_position,
                        dt: float = 0.5) -> np.ndarray:
    return predict(params, history, current_position, dt=dt).most_likely()


def sample_from_prediction(pred: MixturePrediction, n_samples: int,
                           rng) -> np.ndarray:
    ks = rng.choice(pred.mode_probs.shape[0], size=n_samples,
                    p=pred.mode_probs)
    noise = rng.standard_normal((n_samples,) + pred.mode_trajectories.shape[1:])
    return pred.mode_trajectories[ks] + noise * pred.mode_scales[ks]


def sample_trajectories(params: ModelParams, history, current_position,
                        n_samples: int, seed: int, example_index: int = 0,
                        dt: float = 0.5) -> np.ndarray:
    """(n_samples, 8, 2) world-frame trajectory samples."""
    pred = predict(params, history, current_position, dt=dt)
    rng = np.random.default_rng([seed, example_index])
    return sample_from_prediction(pred, n_samples, rng)
