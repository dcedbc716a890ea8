"""Feature extraction and mixture model forward-pass behavior."""

import numpy as np
import pytest

from trajrisk.errors import ConfigError
from trajrisk.predictor.features import (
    FEATURE_DIM,
    build_features,
    heading_rotation,
)
from trajrisk.predictor.model import (
    ModelParams,
    N_STEPS,
    forward,
    forward_batch,
    head_dim,
    init_params,
    load_checkpoint,
    save_checkpoint,
)


def _history(step=(2.0, 0.0), start=(0.0, 0.0), n=5):
    start = np.asarray(start, float)
    step = np.asarray(step, float)
    return start + np.arange(n)[:, None] * step


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def test_heading_rotation_aligns_last_motion():
    R = heading_rotation(_history(step=(0.0, 3.0)))
    # heading frame +x must map to world +y
    np.testing.assert_allclose(R @ np.array([1.0, 0.0]), [0.0, 1.0],
                               atol=1e-12)


def test_heading_rotation_skips_trailing_zero_step():
    h = np.array([[0, 0], [1, 0], [2, 0], [2, 0], [2, 0]], dtype=float)
    R = heading_rotation(h)
    np.testing.assert_allclose(R, np.eye(2), atol=1e-12)


def test_heading_rotation_stationary_fallback():
    R = heading_rotation(np.zeros((5, 2)))
    np.testing.assert_array_equal(R, np.eye(2))


def test_build_features_shape_and_speed():
    feats, R = build_features(_history(step=(0.0, 2.0)), dt=0.5)
    assert feats.shape == (FEATURE_DIM,)
    assert feats[8] == pytest.approx(4.0)  # 2 m per 0.5 s
    # in the heading frame every displacement points along +x
    local = feats[:8].reshape(4, 2)
    np.testing.assert_allclose(local[:, 0], 2.0, atol=1e-12)
    np.testing.assert_allclose(local[:, 1], 0.0, atol=1e-12)


def test_build_features_rotation_invariance():
    # rotating the whole history must not change the local features
    h = _history(step=(1.5, 0.5))
    ang = 1.1
    Q = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    f1, _ = build_features(h)
    f2, _ = build_features(h @ Q.T)
    np.testing.assert_allclose(f1, f2, atol=1e-9)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

def test_head_dim():
    assert head_dim(4) == 4 * (1 + 4 * N_STEPS)


def test_init_params_deterministic():
    a = init_params(np.random.default_rng(3))
    b = init_params(np.random.default_rng(3))
    for x, y in zip((a.W1, a.b1, a.W2, a.b2), (b.W1, b.b1, b.W2, b.b2)):
        np.testing.assert_array_equal(x, y)


def test_init_params_bounds():
    p = init_params(np.random.default_rng(0), hidden=32, n_modes=3)
    assert p.W1.shape == (32, FEATURE_DIM)
    assert p.W2.shape == (head_dim(3), 32)
    for arr in (p.W1, p.b1, p.W2, p.b2):
        assert np.all(np.abs(arr) <= 0.1)


def test_model_params_shape_validation():
    p = init_params(np.random.default_rng(0))
    with pytest.raises(ConfigError):
        # head width inconsistent with the declared mode count
        ModelParams(W1=p.W1, b1=p.b1, W2=p.W2[:-1], b2=p.b2[:-1])
    with pytest.raises(ConfigError):
        # encoder output narrower than the head expects
        ModelParams(W1=p.W1[:-1], b1=p.b1[:-1], W2=p.W2, b2=p.b2)


def test_forward_batch_shapes_and_probs():
    p = init_params(np.random.default_rng(1), hidden=16, n_modes=4)
    B = 7
    rng = np.random.default_rng(2)
    feats = rng.normal(size=(B, FEATURE_DIM))
    cs = np.tile([1.0, 0.0], (B, 1))
    pos = rng.normal(size=(B, 2))
    probs, traj, scales = forward_batch(p, feats, cs, pos)
    assert probs.shape == (B, 4)
    assert traj.shape == (B, 4, N_STEPS, 2)
    assert scales.shape == (B, 4, N_STEPS, 2)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(scales > 0)


def test_forward_trajectories_anchor_at_current_position():
    # zero weights make the head emit zero offsets: cumsum stays at pos
    p = init_params(np.random.default_rng(1), hidden=8, n_modes=2)
    p.W2[:] = 0.0
    p.b2[:] = 0.0
    feats = np.random.default_rng(0).normal(size=(3, FEATURE_DIM))
    pos = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    cs = np.tile([0.0, 1.0], (3, 1))
    _, traj, _ = forward_batch(p, feats, cs, pos)
    for b in range(3):
        np.testing.assert_allclose(traj[b, :, :, :],
                                   np.tile(pos[b], (2, N_STEPS, 1)),
                                   atol=1e-12)


def test_forward_rotation_equivariance():
    # rotating (features fixed, heading rotated) rotates offsets rigidly
    p = init_params(np.random.default_rng(5), hidden=16, n_modes=3)
    feats = np.random.default_rng(6).normal(size=(1, FEATURE_DIM))
    pos = np.zeros((1, 2))
    ang = 0.7
    cs0 = np.array([[1.0, 0.0]])
    cs1 = np.array([[np.cos(ang), np.sin(ang)]])
    _, t0, _ = forward_batch(p, feats, cs0, pos)
    _, t1, _ = forward_batch(p, feats, cs1, pos)
    Q = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    np.testing.assert_allclose(t1[0], t0[0] @ Q.T, atol=1e-9)


def test_forward_single_matches_batch():
    p = init_params(np.random.default_rng(7), hidden=16, n_modes=4)
    rng = np.random.default_rng(8)
    feats = rng.normal(size=(FEATURE_DIM,))
    R = np.eye(2)
    pos = np.array([0.5, -0.5])
    pred = forward(p, feats, R, pos)
    probs, traj, scales = forward_batch(p, feats[None], np.array([[1.0, 0.0]]),
                                        pos[None])
    np.testing.assert_allclose(pred.mode_probs, probs[0], atol=1e-12)
    np.testing.assert_allclose(pred.mode_trajectories, traj[0], atol=1e-12)
    np.testing.assert_allclose(pred.mode_scales, scales[0], atol=1e-12)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    p = init_params(np.random.default_rng(11), hidden=24, n_modes=4)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, p, meta={"variant": "baseline"})
    p2, meta = load_checkpoint(path)
    for a, b in zip((p.W1, p.b1, p.W2, p.b2), (p2.W1, p2.b1, p2.W2, p2.b2)):
        np.testing.assert_array_equal(a, b)
    assert meta["variant"] == "baseline"


def test_checkpoint_bytes_deterministic(tmp_path):
    p = init_params(np.random.default_rng(11))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(a, p, meta={"k": 1})
    save_checkpoint(b, p, meta={"k": 1})
    assert a.read_bytes() == b.read_bytes()
