"""Backend-level checks on the training kernel.

The analytic gradient is verified against central finite differences,
the compiled and pure-python backends are compared on identical inputs,
and the zero-weight masking contract is pinned down exactly.
"""

import numpy as np
import pytest

from trajrisk import _kernels
from trajrisk._kernels import _ref
from trajrisk.predictor.features import FEATURE_DIM
from trajrisk.predictor.model import init_params


def _random_batch(rng, B=6, T=8):
    feats = rng.normal(size=(B, FEATURE_DIM))
    ang = rng.uniform(0, 2 * np.pi, B)
    cs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pos = rng.normal(scale=5.0, size=(B, 2))
    fut = pos[:, None, :] + np.cumsum(rng.normal(scale=0.8, size=(B, T, 2)),
                                      axis=1)
    w = rng.uniform(0.5, 3.0, B)
    return feats, cs, pos, fut, w


def _loss_only(kern, params, batch, horizon=6):
    feats, cs, pos, fut, w = batch
    out = kern.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                             feats, cs, pos, fut, w, params.n_modes,
                             horizon, float(len(w)))
    return out[0]


def _flatten(params):
    return np.concatenate([params.W1.ravel(), params.b1.ravel(),
                           params.W2.ravel(), params.b2.ravel()])


def _unflatten_into(params, vec):
    shapes = [params.W1, params.b1, params.W2, params.b2]
    i = 0
    for arr in shapes:
        arr.flat[:] = vec[i:i + arr.size]
        i += arr.size


def test_gradcheck_against_central_differences():
    """Max relative error < 1e-4 over several random models/batches."""
    rng = np.random.default_rng(123)
    h = 1e-5
    for trial in range(5):
        params = init_params(rng, hidden=10, n_modes=3)
        batch = _random_batch(rng, B=4)
        feats, cs, pos, fut, w = batch
        loss, gW1, gb1, gW2, gb2 = _ref.mdn_loss_grad(
            params.W1, params.b1, params.W2, params.b2,
            feats, cs, pos, fut, w, 3, 6, 4.0)
        analytic = np.concatenate([gW1.ravel(), gb1.ravel(),
                                   gW2.ravel(), gb2.ravel()])
        x0 = _flatten(params)
        # probe a random subset of coordinates; full FD would be slow
        idx = rng.choice(x0.size, size=60, replace=False)
        for i in idx:
            xp = x0.copy()
            xp[i] += h
            _unflatten_into(params, xp)
            fp = _loss_only(_ref, params, batch)
            xp[i] -= 2 * h
            _unflatten_into(params, xp)
            fm = _loss_only(_ref, params, batch)
            _unflatten_into(params, x0)
            numeric = (fp - fm) / (2 * h)
            scale = max(abs(numeric), abs(analytic[i]), 1e-8)
            assert abs(numeric - analytic[i]) / scale < 1e-4, \
                f"trial {trial} coord {i}: {numeric} vs {analytic[i]}"


def test_zero_weight_examples_are_inert():
    """Weight-0 rows must not touch the arithmetic at all (1e-12 contract)."""
    rng = np.random.default_rng(7)
    params = init_params(rng, hidden=12, n_modes=4)
    feats, cs, pos, fut, w = _random_batch(rng, B=8)
    w = w.copy()
    w[[1, 4, 5]] = 0.0
    keep = w != 0.0
    denom = 8.0
    full = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                              feats, cs, pos, fut, w, 4, 6, denom)
    sub = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                             feats[keep], cs[keep], pos[keep], fut[keep],
                             w[keep], 4, 6, denom)
    assert abs(full[0] - sub[0]) <= 1e-12
    for a, b in zip(full[1:], sub[1:]):
        assert np.max(np.abs(a - b)) <= 1e-12


def test_zero_weight_poisoned_rows_do_not_propagate():
    # even NaN data in a zero-weight row must not reach the loss
    rng = np.random.default_rng(8)
    params = init_params(rng, hidden=8, n_modes=2)
    feats, cs, pos, fut, w = _random_batch(rng, B=4)
    w[2] = 0.0
    feats[2] = np.nan
    fut[2] = np.inf
    loss, *grads = _ref.mdn_loss_grad(params.W1, params.b1, params.W2,
                                      params.b2, feats, cs, pos, fut, w,
                                      2, 6, 4.0)
    assert np.isfinite(loss)
    for g in grads:
        assert np.all(np.isfinite(g))


def test_all_zero_weights_give_zero_loss_and_grad():
    rng = np.random.default_rng(9)
    params = init_params(rng, hidden=8, n_modes=2)
    feats, cs, pos, fut, _ = _random_batch(rng, B=3)
    out = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                             feats, cs, pos, fut, np.zeros(3), 2, 6, 3.0)
    assert out[0] == 0.0
    for g in out[1:]:
        assert np.all(g == 0.0)


def test_loss_scales_linearly_in_weights():
    rng = np.random.default_rng(10)
    params = init_params(rng, hidden=8, n_modes=2)
    feats, cs, pos, fut, w = _random_batch(rng, B=5)
    l1 = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                            feats, cs, pos, fut, w, 2, 6, 5.0)[0]
    l2 = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                            feats, cs, pos, fut, 2.0 * w, 2, 6, 5.0)[0]
    assert l2 == pytest.approx(2.0 * l1, rel=1e-12)


def test_horizon_truncates_future_terms():
    # steps beyond the horizon must not influence the loss
    rng = np.random.default_rng(11)
    params = init_params(rng, hidden=8, n_modes=2)
    feats, cs, pos, fut, w = _random_batch(rng, B=4)
    base = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                              feats, cs, pos, fut, w, 2, 6, 4.0)[0]
    fut2 = fut.copy()
    fut2[:, 6:, :] += 100.0
    moved = _ref.mdn_loss_grad(params.W1, params.b1, params.W2, params.b2,
                               feats, cs, pos, fut2, w, 2, 6, 4.0)[0]
    assert moved == base


def test_backend_registry():
    names = _kernels.available_backends()
    assert "python" in names
    prev = _kernels.active_backend()
    try:
        assert _kernels.set_backend("python") == "python"
        assert _kernels.active_backend() == "python"
        with pytest.raises(ValueError):
            _kernels.set_backend("fortran")
    finally:
        _kernels.set_backend(prev)


def test_backend_determinism_bitwise():
    # same inputs, same backend -> identical bits
    rng = np.random.default_rng(12)
    params = init_params(rng, hidden=16, n_modes=4)
    batch = _random_batch(rng, B=10)
    feats, cs, pos, fut, w = batch
    args = (params.W1, params.b1, params.W2, params.b2,
            feats, cs, pos, fut, w, 4, 6, 10.0)
    for name in _kernels.available_backends():
        prev = _kernels.active_backend()
        try:
            _kernels.set_backend(name)
            a = _kernels.mdn_loss_grad(*args)
            b = _kernels.mdn_loss_grad(*args)
        finally:
            _kernels.set_backend(prev)
        assert a[0] == b[0]
        for x, y in zip(a[1:], b[1:]):
            np.testing.assert_array_equal(x, y)


@pytest.mark.skipif(len(_kernels.available_backends()) < 2,
                    reason="compiled backend not built")
def test_backends_agree():
    rng = np.random.default_rng(13)
    for _ in range(10):
        params = init_params(rng, hidden=16, n_modes=4)
        feats, cs, pos, fut, w = _random_batch(rng, B=12)
        args = (params.W1, params.b1, params.W2, params.b2,
                feats, cs, pos, fut, w, 4, 6, 12.0)
        prev = _kernels.active_backend()
        try:
            _kernels.set_backend("python")
            ref = _kernels.mdn_loss_grad(*args)
            _kernels.set_backend("compiled")
            core = _kernels.mdn_loss_grad(*args)
        finally:
            _kernels.set_backend(prev)
        assert core[0] == pytest.approx(ref[0], rel=1e-9, abs=1e-12)
        for a, b in zip(core[1:], ref[1:]):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
