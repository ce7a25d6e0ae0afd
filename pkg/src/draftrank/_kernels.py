"""Numba inner loops for the hot layers.

Every kernel is deterministic: parallelism only splits work across
independent output rows or elements, and each output value is accumulated
serially in a fixed order. All kernels specialize per dtype, so the same
code serves the float32 training path and the float64 gradient checks.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv_fwd(xp, w, b, y):
    """y[b,o,h,w] = bias[o] + sum_{c,i,j} w[o,c,i,j] * xp[b,c,h+i,w+j]."""
    bsz = xp.shape[0]
    ci = xp.shape[1]
    co, _, k, _ = w.shape
    h_out, w_out = y.shape[2], y.shape[3]
    for bi in prange(bsz):
        for o in range(co):
            for h in range(h_out):
                for x_ in range(w_out):
                    y[bi, o, h, x_] = b[o]
                for c in range(ci):
                    for i in range(k):
                        for j in range(k):
                            coef = w[o, c, i, j]
                            for x_ in range(w_out):
                                y[bi, o, h, x_] += coef * xp[bi, c, h + i, x_ + j]


@njit(parallel=True, cache=True)
def conv_dw(xp, dy, dw):
    """dw[o,c,i,j] = sum_{b,h,w} dy[b,o,h,w] * xp[b,c,h+i,w+j]."""
    bsz = xp.shape[0]
    ci = xp.shape[1]
    co, _, k, _ = dw.shape
    h_out, w_out = dy.shape[2], dy.shape[3]
    for oc in prange(co * ci):
        o = oc // ci
        c = oc % ci
        for i in range(k):
            for j in range(k):
                acc = 0.0
                for bi in range(bsz):
                    for h in range(h_out):
                        for x_ in range(w_out):
                            acc += dy[bi, o, h, x_] * xp[bi, c, h + i, x_ + j]
                dw[o, c, i, j] = acc


@njit(parallel=True, cache=True)
def maxpool_fwd(x, k, y, arg):
    bsz, ch, _, _ = x.shape
    h_out, w_out = y.shape[2], y.shape[3]
    for bi in prange(bsz):
        for c in range(ch):
            for h in range(h_out):
                for x_ in range(w_out):
                    best = x[bi, c, h * k, x_ * k]
                    best_idx = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[bi, c, h * k + i, x_ * k + j]
                            if v > best:
                                best = v
                                best_idx = i * k + j
                    y[bi, c, h, x_] = best
                    arg[bi, c, h, x_] = best_idx


@njit(parallel=True, cache=True)
def maxpool_bwd(dout, arg, k, dx):
    bsz, ch, _, _ = dout.shape
    h_out, w_out = dout.shape[2], dout.shape[3]
    for bi in prange(bsz):
        for c in range(ch):
            for h in range(h_out):
                for x_ in range(w_out):
                    idx = arg[bi, c, h, x_]
                    dx[bi, c, h * k + idx // k, x_ * k + idx % k] = dout[bi, c, h, x_]


@njit(parallel=True, cache=True)
def layer_norm_fwd(x2d, floor, xhat, inv, floored):
    """Per-row normalization of a (batch, features) view."""
    bsz, n = x2d.shape
    for bi in prange(bsz):
        mean = 0.0
        for e in range(n):
            mean += x2d[bi, e]
        mean /= n
        var = 0.0
        for e in range(n):
            d = x2d[bi, e] - mean
            var += d * d
        var /= n
        floored[bi] = var < floor
        if var < floor:
            var = floor
        s = 1.0 / np.sqrt(var)
        inv[bi] = s
        for e in range(n):
            xhat[bi, e] = (x2d[bi, e] - mean) * s


@njit(parallel=True, cache=True)
def layer_norm_bwd(dout2d, g, xhat, inv, floored, dx2d, dg, db):
    bsz, n = dout2d.shape
    for e in prange(n):
        sg = 0.0
        sb = 0.0
        for bi in range(bsz):
            sg += dout2d[bi, e] * xhat[bi, e]
            sb += dout2d[bi, e]
        dg[e] = sg
        db[e] = sb
    for bi in prange(bsz):
        m1 = 0.0
        m2 = 0.0
        for e in range(n):
            dxh = dout2d[bi, e] * g[e]
            m1 += dxh
            m2 += dxh * xhat[bi, e]
        m1 /= n
        m2 /= n
        if floored[bi]:
            m2 = 0.0
        s = inv[bi]
        for e in range(n):
            dx2d[bi, e] = s * (dout2d[bi, e] * g[e] - m1 - xhat[bi, e] * m2)
