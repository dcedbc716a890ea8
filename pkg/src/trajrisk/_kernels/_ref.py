"""Pure-numpy reference implementation of the mixture-NLL kernel.

Both backends compute the same math; this file is the readable statement
of it.  Layout of the head output vector ``o`` (length K*(1+4T)):

    o[:K]                     mixture logits
    o[K : K+K*T*2]            per-mode per-step displacement means mu[k][t]
    o[K+K*T*2 :]              per-mode per-step log-scales logsig[k][t]

Per example with features x, heading rotation R (heading frame -> world,
encoded as (cos, sin)), current position p and ground-truth future g:

    h = tanh(W1 x + b1)
    o = W2 h + b2
    logsig clamped to [-5, 5]
    m[k][t] = p + R cumsum(mu[k])[t]                     (world-frame mean)
    logN[k][t] = -log(2 pi) - ls0 - ls1
                 - (z0^2 e^{-2 ls0} + z1^2 e^{-2 ls1}) / 2,   z = g[t] - m[k][t]
    a[k] = log softmax(logits)[k] + sum_{t < horizon} logN[k][t]
    nll = -logsumexp(a)

Batch loss is sum_i w_i nll_i / denom; gradients follow by backprop.
Zero-weight examples are masked out before any arithmetic, so they
contribute exactly nothing to loss or gradients.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))
LOG_SIG_CLAMP = 5.0


def mdn_loss_grad(W1, b1, W2, b2, feats, rot_cs, pos, fut, weights,
                  n_modes, horizon, denom):
    """Weighted mixture-NLL over a batch, with parameter gradients.

    Args:
        W1, b1, W2, b2: encoder and head parameters.
        feats: (B, F) feature vectors.
        rot_cs: (B, 2) heading rotations as (cos, sin).
        pos: (B, 2) current positions.
        fut: (B, T, 2) ground-truth futures.
        weights: (B,) non-negative per-example loss weights.
        n_modes: mixture size K.
        horizon: number of leading future steps entering the loss.
        denom: batch denominator (normally B).

    Returns:
        (loss, gW1, gb1, gW2, gb2)
    """
    K = int(n_modes)
    T = fut.shape[1]
    Hs = int(horizon)
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)

    active = np.flatnonzero(weights != 0.0)
    if active.size == 0:
        return 0.0, gW1, gb1, gW2, gb2

    X = np.asarray(feats, dtype=float)[active]
    cs = np.asarray(rot_cs, dtype=float)[active]
    P = np.asarray(pos, dtype=float)[active]
    G = np.asarray(fut, dtype=float)[active]
    w = np.asarray(weights, dtype=float)[active]
    B = X.shape[0]

    # forward
    H = np.tanh(X @ W1.T + b1)                     # (B, hid)
    O = H @ W2.T + b2                              # (B, out)
    logits = O[:, :K]
    mu = O[:, K:K + K * T * 2].reshape(B, K, T, 2)
    ls_raw = O[:, K + K * T * 2:].reshape(B, K, T, 2)
    ls = np.clip(ls_raw, -LOG_SIG_CLAMP, LOG_SIG_CLAMP)

    c = np.cumsum(mu, axis=2)
    cos = cs[:, 0][:, None, None]
    sin = cs[:, 1][:, None, None]
    mx = P[:, 0][:, None, None] + cos * c[..., 0] - sin * c[..., 1]
    my = P[:, 1][:, None, None] + sin * c[..., 0] + cos * c[..., 1]

    zx = G[:, None, :Hs, 0] - mx[:, :, :Hs]        # (B, K, Hs)
    zy = G[:, None, :Hs, 1] - my[:, :, :Hs]
    ivx = np.exp(-2.0 * ls[:, :, :Hs, 0])          # 1 / sigma_x^2
    ivy = np.exp(-2.0 * ls[:, :, :Hs, 1])
    logN = (-LOG_2PI - ls[:, :, :Hs, 0] - ls[:, :, :Hs, 1]
            - 0.5 * (zx * zx * ivx + zy * zy * ivy))

    lmax = logits.max(axis=1)
    lse = lmax + np.log(np.exp(logits - lmax[:, None]).sum(axis=1))
    logpi = logits - lse[:, None]
    a = logpi + logN.sum(axis=2)                   # (B, K)
    amax = a.max(axis=1)
    ea = np.exp(a - amax[:, None])
    sa = ea.sum(axis=1)
    nll = -(amax + np.log(sa))
    loss = float(np.dot(w, nll) / denom)

    # backward
    scale = w / float(denom)                       # (B,)
    r = ea / sa[:, None]                           # responsibilities
    pi = np.exp(logpi)
    dlogits = scale[:, None] * (pi - r)

    rs = (scale[:, None] * r)[:, :, None]          # (B, K, 1)
    dmx = rs * (-zx * ivx)
    dmy = rs * (-zy * ivy)

    dls = np.zeros((B, K, T, 2))
    mask = np.abs(ls_raw[:, :, :Hs, :]) < LOG_SIG_CLAMP
    dls[:, :, :Hs, 0] = rs * (1.0 - zx * zx * ivx) * mask[..., 0]
    dls[:, :, :Hs, 1] = rs * (1.0 - zy * zy * ivy) * mask[..., 1]

    # rotate world-mean gradients back to the heading frame (R^T)
    dcx = cos * dmx + sin * dmy
    dcy = -sin * dmx + cos * dmy

    dmu = np.zeros((B, K, T, 2))
    dmu[:, :, :Hs, 0] = dcx[:, :, ::-1].cumsum(axis=2)[:, :, ::-1]
    dmu[:, :, :Hs, 1] = dcy[:, :, ::-1].cumsum(axis=2)[:, :, ::-1]

    dO = np.concatenate(
        [dlogits, dmu.reshape(B, -1), dls.reshape(B, -1)], axis=1)
    gW2[:] = dO.T @ H
    gb2[:] = dO.sum(axis=0)
    dH = dO @ W2
    dpre = dH * (1.0 - H * H)
    gW1[:] = dpre.T @ X
    gb1[:] = dpre.sum(axis=0)

    return loss, gW1, gb1, gW2, gb2
