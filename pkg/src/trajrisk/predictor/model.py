"""Mixture-density trajectory model: parameters, forward pass, checkpoints.

A single tanh layer encodes the 9-dim feature vector; a linear head
emits, per mixture mode, a logit, 8 future displacement means in the
heading frame and 8 diagonal log-scales.  Displacements are cumulatively
summed, rotated to world frame and anchored at the current position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .._kernels._ref import LOG_SIG_CLAMP
from .features import FEATURE_DIM

N_MODES_DEFAULT = 4
N_STEPS = 8
HIDDEN_DEFAULT = 64
INIT_SCALE = 0.1


def head_dim(n_modes: int, n_steps: int = N_STEPS) -> int:
    # logit + (mu + logsig) * 2 coords per step, per mode
    return n_modes * (1 + 4 * n_steps)


@dataclass
class ModelParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    n_modes: int = N_MODES_DEFAULT
    n_steps: int = N_STEPS

    def __post_init__(self):
        if self.W2.shape[0] != head_dim(self.n_modes, self.n_steps):
            raise ConfigError(
                f"head of width {self.W2.shape[0]} does not match "
                f"{self.n_modes} modes x {self.n_steps} steps")
        if self.W1.shape[0] != self.W2.shape[1]:
            raise ConfigError("encoder/head width mismatch")

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.W1.copy(), self.b1.copy(),
                           self.W2.copy(), self.b2.copy(),
                           self.n_modes, self.n_steps)


def init_params(rng, hidden: int = HIDDEN_DEFAULT,
                n_modes: int = N_MODES_DEFAULT,
                feature_dim: int = FEATURE_DIM) -> ModelParams:
    """Uniform(-0.1, 0.1) init; draw order W1, b1, W2, b2."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    out = head_dim(n_modes)
    W1 = rng.uniform(-INIT_SCALE, INIT_SCALE, (hidden, feature_dim))
    b1 = rng.uniform(-INIT_SCALE, INIT_SCALE, hidden)
    W2 = rng.uniform(-INIT_SCALE, INIT_SCALE, (out, hidden))
    b2 = rng.uniform(-INIT_SCALE, INIT_SCALE, out)
    return ModelParams(W1, b1, W2, b2, n_modes=n_modes)


@dataclass
class MixturePrediction:
    mode_probs: np.ndarray        # (K,)
    mode_trajectories: np.ndarray  # (K, T, 2) world frame
    mode_scales: np.ndarray       # (K, T, 2) per-step sigma, world-axis diag

    def most_likely(self) -> np.ndarray:
        return self.mode_trajectories[int(np.argmax(self.mode_probs))]


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(params: ModelParams, feats, rot_cs, pos):
    """Vectorised forward pass.

    Args:
        feats: (B, F); rot_cs: (B, 2) heading (cos, sin); pos: (B, 2).

    Returns:
        probs (B, K), trajectories (B, K, T, 2), scales (B, K, T, 2).
    """
    feats = np.asarray(feats, dtype=float)
    if feats.shape[1] != params.feature_dim:
        raise ConfigError(
            f"feature dim {feats.shape[1]} != model dim {params.feature_dim}")
    K, T = params.n_modes, params.n_steps
    B = feats.shape[0]
    H = np.tanh(feats @ params.W1.T + params.b1)
    O = H @ params.W2.T + params.b2
    probs = _softmax(O[:, :K])
    mu = O[:, K:K + K * T * 2].reshape(B, K, T, 2)
    ls = np.clip(O[:, K + K * T * 2:].reshape(B, K, T, 2),
                 -LOG_SIG_CLAMP, LOG_SIG_CLAMP)
    c = np.cumsum(mu, axis=2)
    cos = np.asarray(rot_cs, dtype=float)[:, 0][:, None, None]
    sin = np.asarray(rot_cs, dtype=float)[:, 1][:, None, None]
    traj = np.empty((B, K, T, 2))
    traj[..., 0] = np.asarray(pos, float)[:, 0][:, None, None] \
        + cos * c[..., 0] - sin * c[..., 1]
    traj[..., 1] = np.asarray(pos, float)[:, 1][:, None, None] \
        + sin * c[..., 0] + cos * c[..., 1]
    return probs, traj, np.exp(ls)


def forward(params: ModelParams, features, rotation,
            current_position) -> MixturePrediction:
    """Single-example forward pass."""
    cs = np.array([rotation[0, 0], rotation[1, 0]])
    probs, traj, scales = forward_batch(
        params, np.asarray(features, float)[None, :], cs[None, :],
        np.asarray(current_position, float)[None, :])
    return MixturePrediction(probs[0], traj[0], scales[0])


def save_checkpoint(path, params: ModelParams, meta: dict | None = None):
    blob = {
        "n_modes": params.n_modes,
        "n_steps": params.n_steps,
        "hidden": params.hidden,
        "feature_dim": params.feature_dim,
        "W1": params.W1.tolist(),
        "b1": params.b1.tolist(),
        "W2": params.W2.tolist(),
        "b2": params.b2.tolist(),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True))


def load_checkpoint(path):
    """Returns (params, meta)."""
    blob = json.loads(Path(path).read_text())
    params = ModelParams(
        np.array(blob["W1"], dtype=float),
        np.array(blob["b1"], dtype=float),
        np.array(blob["W2"], dtype=float),
        np.array(blob["b2"], dtype=float),
        n_modes=int(blob["n_modes"]),
        n_steps=int(blob["n_steps"]),
    )
    return params, blob.get("meta", {})
