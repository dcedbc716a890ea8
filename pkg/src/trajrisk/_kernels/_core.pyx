# cython: language_level=3
"""Compiled mixture-NLL kernel.  Same math as _ref.py, loop form."""

import numpy as np

from libc.math cimport exp, log, tanh, fabs

cdef double LOG_2PI = 1.8378770664093453
cdef double LOG_SIG_CLAMP = 5.0


def mdn_loss_grad(W1, b1, W2, b2, feats, rot_cs, pos, fut, weights,
                  n_modes, horizon, denom):
    """See trajrisk._kernels._ref.mdn_loss_grad."""
    cdef double[:, ::1] W1v = np.ascontiguousarray(W1, dtype=np.float64)
    cdef double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef double[:, ::1] W2v = np.ascontiguousarray(W2, dtype=np.float64)
    cdef double[::1] b2v = np.ascontiguousarray(b2, dtype=np.float64)
    cdef double[:, ::1] Xv = np.ascontiguousarray(feats, dtype=np.float64)
    cdef double[:, ::1] csv = np.ascontiguousarray(rot_cs, dtype=np.float64)
    cdef double[:, ::1] Pv = np.ascontiguousarray(pos, dtype=np.float64)
    cdef double[:, :, ::1] Gv = np.ascontiguousarray(fut, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)

    cdef Py_ssize_t K = n_modes
    cdef Py_ssize_t Hs = horizon
    cdef Py_ssize_t B = Xv.shape[0]
    cdef Py_ssize_t F = Xv.shape[1]
    cdef Py_ssize_t hid = W1v.shape[0]
    cdef Py_ssize_t out = W2v.shape[0]
    cdef Py_ssize_t T = Gv.shape[1]
    cdef double dn = denom

    gW1 = np.zeros((hid, F))
    gb1 = np.zeros(hid)
    gW2 = np.zeros((out, hid))
    gb2 = np.zeros(out)
    cdef double[:, ::1] gW1v = gW1
    cdef double[::1] gb1v = gb1
    cdef double[:, ::1] gW2v = gW2
    cdef double[::1] gb2v = gb2

    # per-example scratch
    h_ = np.empty(hid)
    o_ = np.empty(out)
    do_ = np.empty(out)
    a_ = np.empty(K)
    r_ = np.empty(K)
    pi_ = np.empty(K)
    ls_ = np.empty((K, T, 2))
    lsr_ = np.empty((K, T, 2))
    z_ = np.empty((K, T, 2))
    iv_ = np.empty((K, T, 2))
    dc_ = np.empty((K, T, 2))
    cdef double[::1] h = h_
    cdef double[::1] o = o_
    cdef double[::1] do = do_
    cdef double[::1] a = a_
    cdef double[::1] r = r_
    cdef double[::1] pi = pi_
    cdef double[:, :, ::1] ls = ls_
    cdef double[:, :, ::1] lsr = lsr_
    cdef double[:, :, ::1] z = z_
    cdef double[:, :, ::1] iv = iv_
    cdef double[:, :, ::1] dc = dc_

    cdef double loss = 0.0
    cdef Py_ssize_t i, j, q, k, t, base_mu, base_ls
    cdef double acc, c, s, px, py, cx, cy, mxw, myw
    cdef double lmax, lse, amax, sa, nll, w, sc
    cdef double zx, zy, dmx, dmy, v, g0, g1

    base_mu = K
    base_ls = K + K * T * 2

    for i in range(B):
        w = wv[i]
        if w == 0.0:
            continue
        sc = w / dn
        c = csv[i, 0]
        s = csv[i, 1]
        px = Pv[i, 0]
        py = Pv[i, 1]

        # encoder
        for j in range(hid):
            acc = b1v[j]
            for q in range(F):
                acc += W1v[j, q] * Xv[i, q]
            h[j] = tanh(acc)
        for q in range(out):
            acc = b2v[q]
            for j in range(hid):
                acc += W2v[q, j] * h[j]
            o[q] = acc

        # log softmax of the logits
        lmax = o[0]
        for k in range(1, K):
            if o[k] > lmax:
                lmax = o[k]
        lse = 0.0
        for k in range(K):
            lse += exp(o[k] - lmax)
        lse = lmax + log(lse)

        # per-mode joint log likelihood over the loss horizon
        for k in range(K):
            a[k] = o[k] - lse
            pi[k] = exp(a[k])
            cx = 0.0
            cy = 0.0
            for t in range(T):
                cx += o[base_mu + (k * T + t) * 2]
                cy += o[base_mu + (k * T + t) * 2 + 1]
                g0 = o[base_ls + (k * T + t) * 2]
                g1 = o[base_ls + (k * T + t) * 2 + 1]
                lsr[k, t, 0] = g0
                lsr[k, t, 1] = g1
                if g0 > LOG_SIG_CLAMP:
                    g0 = LOG_SIG_CLAMP
                elif g0 < -LOG_SIG_CLAMP:
                    g0 = -LOG_SIG_CLAMP
                if g1 > LOG_SIG_CLAMP:
                    g1 = LOG_SIG_CLAMP
                elif g1 < -LOG_SIG_CLAMP:
                    g1 = -LOG_SIG_CLAMP
                ls[k, t, 0] = g0
                ls[k, t, 1] = g1
                if t < Hs:
                    mxw = px + c * cx - s * cy
                    myw = py + s * cx + c * cy
                    zx = Gv[i, t, 0] - mxw
                    zy = Gv[i, t, 1] - myw
                    z[k, t, 0] = zx
                    z[k, t, 1] = zy
                    iv[k, t, 0] = exp(-2.0 * g0)
                    iv[k, t, 1] = exp(-2.0 * g1)
                    a[k] += (-LOG_2PI - g0 - g1
                             - 0.5 * (zx * zx * iv[k, t, 0]
                                      + zy * zy * iv[k, t, 1]))

        amax = a[0]
        for k in range(1, K):
            if a[k] > amax:
                amax = a[k]
        sa = 0.0
        for k in range(K):
            r[k] = exp(a[k] - amax)
            sa += r[k]
        nll = -(amax + log(sa))
        loss += w * nll
        for k in range(K):
            r[k] /= sa

        # head gradients
        for k in range(K):
            do[k] = sc * (pi[k] - r[k])
            for t in range(T):
                if t < Hs:
                    dmx = sc * r[k] * (-z[k, t, 0] * iv[k, t, 0])
                    dmy = sc * r[k] * (-z[k, t, 1] * iv[k, t, 1])
                    dc[k, t, 0] = c * dmx + s * dmy
                    dc[k, t, 1] = -s * dmx + c * dmy
                    v = sc * r[k] * (1.0 - z[k, t, 0] * z[k, t, 0]
                                     * iv[k, t, 0])
                    if fabs(lsr[k, t, 0]) >= LOG_SIG_CLAMP:
                        v = 0.0
                    do[base_ls + (k * T + t) * 2] = v
                    v = sc * r[k] * (1.0 - z[k, t, 1] * z[k, t, 1]
                                     * iv[k, t, 1])
                    if fabs(lsr[k, t, 1]) >= LOG_SIG_CLAMP:
                        v = 0.0
                    do[base_ls + (k * T + t) * 2 + 1] = v
                else:
                    dc[k, t, 0] = 0.0
                    dc[k, t, 1] = 0.0
                    do[base_ls + (k * T + t) * 2] = 0.0
                    do[base_ls + (k * T + t) * 2 + 1] = 0.0
            # reverse cumulative sum: mu[k][s] feeds every step t >= s
            cx = 0.0
            cy = 0.0
            for t in range(T - 1, -1, -1):
                cx += dc[k, t, 0]
                cy += dc[k, t, 1]
                do[base_mu + (k * T + t) * 2] = cx
                do[base_mu + (k * T + t) * 2 + 1] = cy

        # accumulate parameter gradients
        for q in range(out):
            v = do[q]
            if v != 0.0:
                for j in range(hid):
                    gW2v[q, j] += v * h[j]
            gb2v[q] += v
        for j in range(hid):
            acc = 0.0
            for q in range(out):
                acc += W2v[q, j] * do[q]
            acc *= (1.0 - h[j] * h[j])
            gb1v[j] += acc
            for q in range(F):
                gW1v[j, q] += acc * Xv[i, q]

    return loss / dn, gW1, gb1, gW2, gb2
