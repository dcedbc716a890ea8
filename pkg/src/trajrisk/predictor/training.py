"""Weighted training loop for the mixture-density predictor.

Per-example loss weights implement the re-weighting variants:

    baseline        w = 1
    location_risk   w = heatmap weight at the current position
    non_stationary  w = 0 for vehicles whose whole source track is
                    stationary, else 1
    combined        product of the two

Optimisation is plain SGD with momentum over shuffled mini-batches.
The batch denominator is the batch size, not the weight sum, so a
zero-weight example contributes exactly nothing while keeping the
loss scale comparable across variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..dataset import AgentClass, PredictionExample
from ..errors import ConfigError, NumericalError, TrainingError
from ..riskmap import RiskHeatmap, lookup_weight
from .features import build_features
from .model import ModelParams, init_params

VARIANTS = ("baseline", "location_risk", "non_stationary", "combined")
LOSS_HORIZON_DEFAULT = 6  # train on the first 3 s of the 4 s future


@dataclass
class TrainConfig:
    variant: str = "baseline"
    epochs: int = 12
    batch_size: int = 64
    learning_rate: float = 1e-2
    momentum: float = 0.9
    seed: int = 0
    loss_horizon_steps: int = LOSS_HORIZON_DEFAULT
    rotation_augmentation: bool = False
    hidden_width: int = 64
    n_modes: int = 4
    # mixture NLLs are steep early on (z^2/sigma^2 with meter-scale
    # residuals); a global-norm cap keeps plain SGD from running away
    grad_clip_norm: float = 10.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; "
                              f"expected one of {VARIANTS}")
        if not 1 <= self.loss_horizon_steps <= 8:
            raise ConfigError("loss_horizon_steps must be in 1..8")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.grad_clip_norm <= 0:
            raise ConfigError("grad_clip_norm must be positive")


def _resolve_heatmap(heatmap, example):
    """Accept a single heatmap or a mapping scene_id -> heatmap."""
    if heatmap is None or isinstance(heatmap, RiskHeatmap):
        return heatmap
    return heatmap[example.scene_id]


def compute_example_weight(example: PredictionExample,
                           heatmap,
                           variant: str) -> float:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    w = 1.0
    if variant in ("location_risk", "combined"):
        hm = _resolve_heatmap(heatmap, example)
        if hm is None:
            raise ConfigError(f"variant {variant!r} needs a risk heatmap")
        w *= lookup_weight(hm, example.current_position)
    if variant in ("non_stationary", "combined"):
        if (example.agent_class is AgentClass.VEHICLE
                and example.whole_track_stationary):
            w = 0.0
    return w


def compute_weights(examples, heatmap, variant) -> np.ndarray:
    return np.array(
        [compute_example_weight(ex, heatmap, variant) for ex in examples],
        dtype=float)


def prepare_arrays(examples, dt: float = 0.5):
    """Pack examples into (feats, rot_cs, pos, fut) float64 arrays."""
    n = len(examples)
    feats = np.empty((n, 9))
    cs = np.empty((n, 2))
    pos = np.empty((n, 2))
    fut = np.empty((n, 8, 2))
    for i, ex in enumerate(examples):
        f, R = build_features(ex.history, dt=dt)
        feats[i] = f
        cs[i, 0] = R[0, 0]
        cs[i, 1] = R[1, 0]
        pos[i] = ex.current_position
        fut[i] = ex.future
    return feats, cs, pos, fut


def loss_and_grad(params: ModelParams, feats, rot_cs, pos, fut, weights,
                  horizon: int = LOSS_HORIZON_DEFAULT,
                  denom: int | None = None):
    """Batch loss and gradients; checks numerical health.

    ``denom`` defaults to the batch size.  Passing it explicitly lets a
    caller evaluate a sub-batch against the same denominator, which is
    how zero-weight transparency is checked.
    """
    if denom is None:
        denom = len(weights)
    loss, gW1, gb1, gW2, gb2 = _kernels.mdn_loss_grad(
        params.W1, params.b1, params.W2, params.b2,
        feats, rot_cs, pos, fut, weights,
        params.n_modes, horizon, denom)
    if not np.isfinite(loss):
        raise NumericalError(f"non-finite loss {loss!r}")
    return loss, (gW1, gb1, gW2, gb2)


def _rotated_batch(cs, pos, fut, theta):
    """Rotate whole examples about the origin (data augmentation)."""
    cq, sq = np.cos(theta), np.sin(theta)
    cs2 = np.empty_like(cs)
    cs2[:, 0] = cq * cs[:, 0] - sq * cs[:, 1]
    cs2[:, 1] = sq * cs[:, 0] + cq * cs[:, 1]
    Q = np.array([[cq, -sq], [sq, cq]])
    return cs2, pos @ Q.T, fut @ Q.T


def train(examples, heatmap, config: TrainConfig, dt: float = 0.5):
    """Train a model on the given examples.

    Returns (params, epoch_losses) where epoch_losses[e] is the mean
    weighted loss over the examples seen in epoch e.
    """
    weights = compute_weights(examples, heatmap, config.variant)
    if not np.any(weights > 0.0):
        raise TrainingError("no effective examples: all loss weights are 0")
    feats, cs, pos, fut = prepare_arrays(examples, dt=dt)
    if not (np.isfinite(feats).all() and np.isfinite(fut).all()):
        raise NumericalError("non-finite values in training examples")

    rng = np.random.default_rng(config.seed)
    params = init_params(rng, hidden=config.hidden_width,
                         n_modes=config.n_modes)
    live = (params.W1, params.b1, params.W2, params.b2)
    vel = [np.zeros_like(p) for p in live]
    # fixed-lr SGD ends up bouncing around the basin floor; returning the
    # average of the late iterates (Polyak-Ruppert) instead of the last
    # bounce sample cuts that variance without touching the optimizer
    # itself
    avg = [np.zeros_like(p) for p in live]
    n_avg = 0
    avg_from = config.epochs - max(1, config.epochs // 2)
    n = len(examples)
    bs = config.batch_size
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        if config.rotation_augmentation:
            theta = float(rng.uniform(0.0, 2.0 * np.pi))
            cs_e, pos_e, fut_e = _rotated_batch(cs, pos, fut, theta)
        else:
            cs_e, pos_e, fut_e = cs, pos, fut
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = loss_and_grad(
                params, feats[idx], cs_e[idx], pos_e[idx], fut_e[idx],
                weights[idx], horizon=config.loss_horizon_steps)
            total += loss * len(idx)
            gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            scale = (config.grad_clip_norm / gnorm
                     if gnorm > config.grad_clip_norm else 1.0)
            for p, v, g in zip(live, vel, grads):
                v *= config.momentum
                v -= config.learning_rate * scale * g
                p += v
            if epoch >= avg_from:
                for a, p in zip(avg, live):
                    a += p
                n_avg += 1
        losses.append(total / n)
    if n_avg:
        for a, p in zip(avg, live):
            p[...] = a / n_avg
    return params, losses
