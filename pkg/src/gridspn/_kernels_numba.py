"""Numba-compiled kernels (default backend).

Same contracts as _kernels_numpy; hot loops are @njit(parallel=True) with
the batch (or row) axis on prange.  fastmath stays off everywhere: the
-inf conventions of log-space probability are load-bearing.
"""

import numpy as np
from numba import njit, prange

NAME = "numba"

_JIT = dict(parallel=True, cache=True)

NEG_INF = -np.inf


def gclp_out_hw(in_h, in_w, geom):
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    oh = (in_h + 2 * ph - (kh - 1) * dh - 1) // sh + 1
    ow = (in_w + 2 * pw - (kw - 1) * dw - 1) // sw + 1
    return oh, ow


@njit(**_JIT)
def _gclp_forward_depthwise(x, oh, ow, kh, kw, sh, sw, dh, dw, ph, pw):
    b, in_h, in_w, c = x.shape
    y = np.zeros((b, oh, ow, c))
    for bi in prange(b):
        for oi in range(oh):
            for oj in range(ow):
                for mh in range(kh):
                    ii = oi * sh - ph + mh * dh
                    if ii < 0 or ii >= in_h:
                        continue
                    for mw in range(kw):
                        jj = oj * sw - pw + mw * dw
                        if jj < 0 or jj >= in_w:
                            continue
                        for ci in range(c):
                            y[bi, oi, oj, ci] += x[bi, ii, jj, ci]
    return y


@njit(**_JIT)
def _gclp_forward_table(x, oh, ow, kh, kw, sh, sw, dh, dw, ph, pw, table):
    b, in_h, in_w, c_in = x.shape
    c_out = table.shape[0]
    y = np.zeros((b, oh, ow, c_out))
    for bi in prange(b):
        for oi in range(oh):
            for oj in range(ow):
                for mh in range(kh):
                    ii = oi * sh - ph + mh * dh
                    if ii < 0 or ii >= in_h:
                        continue
                    for mw in range(kw):
                        jj = oj * sw - pw + mw * dw
                        if jj < 0 or jj >= in_w:
                            continue
                        m = mh * kw + mw
                        for o in range(c_out):
                            y[bi, oi, oj, o] += x[bi, ii, jj, table[o, m]]
    return y


def gclp_forward(x, geom, table):
    oh, ow = gclp_out_hw(x.shape[1], x.shape[2], geom)
    x = np.ascontiguousarray(x)
    if table is None:
        return _gclp_forward_depthwise(x, oh, ow, *geom)
    return _gclp_forward_table(x, oh, ow, *geom, table)


@njit(**_JIT)
def _gclp_backward_logderiv(d_out, x, y, kh, kw, sh, sw, dh, dw, ph, pw,
                            table, depthwise):
    b, in_h, in_w, c_in = x.shape
    oh, ow, c_out = y.shape[1], y.shape[2], y.shape[3]
    d_in = np.full((b, in_h, in_w, c_in), NEG_INF)
    t = kh * kw
    for bi in prange(b):
        ii_buf = np.empty(t, dtype=np.int64)
        jj_buf = np.empty(t, dtype=np.int64)
        for oi in range(oh):
            for oj in range(ow):
                for mh in range(kh):
                    for mw in range(kw):
                        m = mh * kw + mw
                        ii = oi * sh - ph + mh * dh
                        jj = oj * sw - pw + mw * dw
                        if 0 <= ii < in_h and 0 <= jj < in_w:
                            ii_buf[m] = ii
                            jj_buf[m] = jj
                        else:
                            ii_buf[m] = -1
                            jj_buf[m] = -1
                for o in range(c_out):
                    d = d_out[bi, oi, oj, o]
                    n_zero = 0
                    sum_fin = 0.0
                    for m in range(t):
                        if ii_buf[m] < 0:
                            continue
                        c = o if depthwise else table[o, m]
                        v = x[bi, ii_buf[m], jj_buf[m], c]
                        if v == NEG_INF:
                            n_zero += 1
                        else:
                            sum_fin += v
                    if n_zero >= 2:
                        continue
                    for m in range(t):
                        if ii_buf[m] < 0:
                            continue
                        c = o if depthwise else table[o, m]
                        v = x[bi, ii_buf[m], jj_buf[m], c]
                        if n_zero == 1:
                            if v != NEG_INF:
                                continue
                            contrib = d + sum_fin
                        else:
                            contrib = d + (sum_fin - v)
                        cur = d_in[bi, ii_buf[m], jj_buf[m], c]
                        d_in[bi, ii_buf[m], jj_buf[m], c] = np.logaddexp(cur, contrib)
    return d_in


def gclp_backward_logderiv(d_out, x, y, geom, table):
    depthwise = table is None
    tab = np.zeros((1, 1), dtype=np.int64) if depthwise else table
    return _gclp_backward_logderiv(np.ascontiguousarray(d_out), np.ascontiguousarray(x),
                                   np.ascontiguousarray(y), *geom, tab, depthwise)


@njit(**_JIT)
def _gclp_scatter_f64(src, in_h, in_w, c_in, kh, kw, sh, sw, dh, dw, ph, pw,
                      table, depthwise):
    b, oh, ow, c_out = src.shape
    out = np.zeros((b, in_h, in_w, c_in))
    for bi in prange(b):
        for oi in range(oh):
            for oj in range(ow):
                for mh in range(kh):
                    ii = oi * sh - ph + mh * dh
                    if ii < 0 or ii >= in_h:
                        continue
                    for mw in range(kw):
                        jj = oj * sw - pw + mw * dw
                        if jj < 0 or jj >= in_w:
                            continue
                        m = mh * kw + mw
                        for o in range(c_out):
                            c = o if depthwise else table[o, m]
                            out[bi, ii, jj, c] += src[bi, oi, oj, o]
    return out


def gclp_backward_grad(g_out, in_shape, geom, table):
    depthwise = table is None
    tab = np.zeros((1, 1), dtype=np.int64) if depthwise else table
    return _gclp_scatter_f64(np.ascontiguousarray(g_out), *in_shape, *geom, tab, depthwise)


def gclp_select(sel_out, in_shape, geom, table):
    depthwise = table is None
    tab = np.zeros((1, 1), dtype=np.int64) if depthwise else table
    out = _gclp_scatter_f64(sel_out.astype(np.float64), *in_shape, *geom, tab, depthwise)
    return np.round(out).astype(np.int64)


# Sum mixtures factor into exp-shift + dense matmul; BLAS already does that
# better than explicit loops, so the numpy implementation is shared.
sum_forward = _kernels_numpy.sum_forward


@njit(**_JIT)
def _sum_forward_max(x, lw):
    m, c_in = x.shape
    c_out = lw.shape[1]
    y = np.empty((m, c_out))
    arg = np.zeros((m, c_out), dtype=np.int64)
    for r in prange(m):
        for o in range(c_out):
            hi = NEG_INF
            best = 0
            for c in range(c_in):
                v = lw[c, o] + x[r, c]
                if v > hi:
                    hi = v
                    best = c
            y[r, o] = hi
            arg[r, o] = best
    return y, arg


def sum_forward_max(x, lw):
    return _sum_forward_max(np.ascontiguousarray(x), np.ascontiguousarray(lw))


def sum_backward_logderiv(d_out, lw):
    return _sum_forward(np.ascontiguousarray(d_out),
                        np.ascontiguousarray(lw.T))


@njit(**_JIT)
def _sum_backward_grad(g_out, x, y, lw):
    m, c_in = x.shape
    c_out = lw.shape[1]
    g_x = np.zeros((m, c_in))
    g_lw_slabs = np.zeros((m, c_in, c_out))
    for r in prange(m):
        for o in range(c_out):
            yo = y[r, o]
            if yo == NEG_INF:
                continue
            go = g_out[r, o]
            for c in range(c_in):
                v = lw[c, o] + x[r, c]
                if v == NEG_INF:
                    continue
                q = np.exp(v - yo)
                g_x[r, c] += go * q
                g_lw_slabs[r, c, o] = go * q
    return g_x, g_lw_slabs


def sum_backward_grad(g_out, x, y, lw):
    g_x, slabs = _sum_backward_grad(np.ascontiguousarray(g_out), np.ascontiguousarray(x),
                                    np.ascontiguousarray(y), np.ascontiguousarray(lw))
    # Reduced in fixed row order for run-to-run reproducibility.
    return g_x, slabs.sum(axis=0)


@njit(**_JIT)
def _sum_select_weighted(sel_out, x, lw):
    m, c_in = x.shape
    c_out = sel_out.shape[1]
    sel_in = np.zeros((m, c_in), dtype=np.int64)
    winners = np.full((m, c_out), -1, dtype=np.int64)
    for r in prange(m):
        for o in range(c_out):
            n = sel_out[r, o]
            if n <= 0:
                continue
            hi = NEG_INF
            best = 0
            for c in range(c_in):
                v = lw[c, o] + x[r, c]
                if v > hi:
                    hi = v
                    best = c
            winners[r, o] = best
            sel_in[r, best] += n
    return sel_in, winners


@njit(**_JIT)
def _sum_select_unweighted(sel_out, x):
    m, c_in = x.shape
    c_out = sel_out.shape[1]
    sel_in = np.zeros((m, c_in), dtype=np.int64)
    winners = np.full((m, c_out), -1, dtype=np.int64)
    for r in prange(m):
        hi = NEG_INF
        best = 0
        for c in range(c_in):
            if x[r, c] > hi:
                hi = x[r, c]
                best = c
        for o in range(c_out):
            n = sel_out[r, o]
            if n <= 0:
                continue
            winners[r, o] = best
            sel_in[r, best] += n
    return sel_in, winners


def sum_select(sel_out, x, lw):
    sel_out = np.ascontiguousarray(sel_out)
    x = np.ascontiguousarray(x)
    if lw is None:
        return _sum_select_unweighted(sel_out, x)
    return _sum_select_weighted(sel_out, x, np.ascontiguousarray(lw))
