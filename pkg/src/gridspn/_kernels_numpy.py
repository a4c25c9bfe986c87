"""Pure-numpy kernel implementations (fallback backend).

Conventions shared with the numba backend:
  * activations are float64, log-space, shape (B, H, W, C) for spatial ops
    and (M, C) for channel mixtures (M = B*H*W rows);
  * geometry is (kh, kw, sh, sw, dh, dw, ph, pw), padding cells contribute
    exactly 0.0 (log of probability 1);
  * -inf is a legal value (zero probability), NaN never is.
"""

import numpy as np

NAME = "numpy"


def _pad_input(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)), constant_values=0.0)


def _patch_views(x, out_h, out_w, geom):
    """Strided views of the padded input, one per kernel cell."""
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    xp = _pad_input(x, ph, pw)
    for mh in range(kh):
        for mw in range(kw):
            i0, j0 = mh * dh, mw * dw
            yield xp[:, i0:i0 + (out_h - 1) * sh + 1:sh,
                     j0:j0 + (out_w - 1) * sw + 1:sw, :]


def gclp_out_hw(in_h, in_w, geom):
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    oh = (in_h + 2 * ph - (kh - 1) * dh - 1) // sh + 1
    ow = (in_w + 2 * pw - (kw - 1) * dw - 1) // sw + 1
    return oh, ow


def gclp_forward(x, geom, table):
    """Log-space product convolution: out[b,i,j,o] sums one selected channel
    per covered cell.  table is (C_out, kh*kw) or None for depthwise."""
    b, in_h, in_w, c_in = x.shape
    oh, ow = gclp_out_hw(in_h, in_w, geom)
    if table is None:
        y = np.zeros((b, oh, ow, c_in))
        for view in _patch_views(x, oh, ow, geom):
            y += view
    else:
        y = np.zeros((b, oh, ow, table.shape[0]))
        for m, view in enumerate(_patch_views(x, oh, ow, geom)):
            y += view[:, :, :, table[:, m]]
    return y


def gclp_backward_logderiv(d_out, x, y, geom, table):
    """Route log-derivatives from product outputs to their children.

    Linear-space rule: d child += d parent * (parent value / child value),
    computed in log space with explicit handling of zero-valued children
    (at most one zero child receives the product of its siblings; two or
    more zeros kill every contribution).
    """
    b, in_h, in_w, c_in = x.shape
    _, oh, ow, _ = y.shape
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    gathered = [view if table is None else view[:, :, :, table[:, m]]
                for m, view in enumerate(_patch_views(x, oh, ow, geom))]
    neg = [np.isneginf(g) for g in gathered]
    n_zero = np.zeros(y.shape, dtype=np.int64)
    sum_fin = np.zeros(y.shape)
    for g, isz in zip(gathered, neg):
        n_zero += isz
        sum_fin += np.where(isz, 0.0, g)

    d_in = np.full((b, in_h + 2 * ph, in_w + 2 * pw, c_in), -np.inf)
    bb = np.arange(b)[:, None, None]
    oi = np.arange(oh)[None, :, None]
    oj = np.arange(ow)[None, None, :]
    for m, (g, isz) in enumerate(zip(gathered, neg)):
        with np.errstate(invalid="ignore"):
            contrib = np.where(
                n_zero == 0, d_out + (y - g),
                np.where((n_zero == 1) & isz, d_out + sum_fin, -np.inf))
        contrib = np.where(np.isnan(contrib), -np.inf, contrib)
        mh, mw = divmod(m, kw)
        ii = oi * sh + mh * dh
        jj = oj * sw + mw * dw
        if table is None:
            cc = np.arange(c_in)[None, None, None, :]
        else:
            cc = table[:, m][None, None, None, :]
        np.logaddexp.at(d_in, (bb[..., None], ii[..., None], jj[..., None], cc), contrib)
    return d_in[:, ph:ph + in_h, pw:pw + in_w, :]


def gclp_backward_grad(g_out, in_shape, geom, table):
    """Linear gradients through a log-space product: each selected child
    receives the output gradient unchanged (d log out / d log in = 1)."""
    b, oh, ow, c_out = g_out.shape
    in_h, in_w, c_in = in_shape
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    g_in = np.zeros((b, in_h + 2 * ph, in_w + 2 * pw, c_in))
    bb = np.arange(b)[:, None, None]
    oi = np.arange(oh)[None, :, None]
    oj = np.arange(ow)[None, None, :]
    for m in range(kh * kw):
        mh, mw = divmod(m, kw)
        ii = oi * sh + mh * dh
        jj = oj * sw + mw * dw
        if table is None:
            cc = np.arange(c_in)[None, None, None, :]
        else:
            cc = table[:, m][None, None, None, :]
        np.add.at(g_in, (bb[..., None], ii[..., None], jj[..., None], cc), g_out)
    return g_in[:, ph:ph + in_h, pw:pw + in_w, :]


def gclp_select(sel_out, in_shape, geom, table):
    """Hard-EM selection through a product: every covered child of a selected
    output receives the output's selection count."""
    b, oh, ow, c_out = sel_out.shape
    in_h, in_w, c_in = in_shape
    kh, kw, sh, sw, dh, dw, ph, pw = geom
    sel_in = np.zeros((b, in_h + 2 * ph, in_w + 2 * pw, c_in), dtype=np.int64)
    bb = np.arange(b)[:, None, None]
    oi = np.arange(oh)[None, :, None]
    oj = np.arange(ow)[None, None, :]
    for m in range(kh * kw):
        mh, mw = divmod(m, kw)
        ii = oi * sh + mh * dh
        jj = oj * sw + mw * dw
        if table is None:
            cc = np.arange(c_in)[None, None, None, :]
        else:
            cc = table[:, m][None, None, None, :]
        np.add.at(sel_in, (bb[..., None], ii[..., None], jj[..., None], cc), sel_out)
    return sel_in[:, ph:ph + in_h, pw:pw + in_w, :]


def sum_forward(x, lw):
    """Weighted log-sum-exp rows: out[m,o] = log sum_c exp(lw[c,o] + x[m,c]).

    Max-shifted on both operands so any finite weights are safe; rows or
    weight columns that are entirely -inf yield -inf, never NaN.
    """
    mx = np.max(x, axis=1, keepdims=True)
    safe_mx = np.where(np.isneginf(mx), 0.0, mx)
    e = np.exp(x - safe_mx)
    e[np.isneginf(mx)[:, 0], :] = 0.0
    mw = np.max(lw, axis=0, keepdims=True)
    safe_mw = np.where(np.isneginf(mw), 0.0, mw)
    w = np.exp(lw - safe_mw)
    w[:, np.isneginf(mw)[0]] = 0.0
    s = e @ w
    with np.errstate(divide="ignore"):
        out = np.log(s)
    out += safe_mx
    out += safe_mw
    out[np.isneginf(mx)[:, 0], :] = -np.inf
    out[:, np.isneginf(mw)[0]] = -np.inf
    return out


def sum_forward_max(x, lw):
    """Max-sum evaluation: out[m,o] = max_c (lw[c,o] + x[m,c]) plus the
    argmax (ties to the lowest channel index)."""
    t = x[:, :, None] + lw[None, :, :]
    arg = np.argmax(t, axis=1)
    out = np.take_along_axis(t, arg[:, None, :], axis=1)[:, 0, :]
    return out, arg.astype(np.int64)


def sum_backward_logderiv(d_out, lw):
    """Log-derivative routing through a sum: d child = LSE_o(d_out + lw)."""
    return sum_forward(d_out, lw.T)


def sum_backward_grad(g_out, x, y, lw):
    """Linear gradients through sum_forward.

    Returns (g_x, g_lw); posterior responsibilities exp(lw + x - y) are
    computed one output channel at a time so nothing ever overflows.
    """
    m, c_in = x.shape
    c_out = lw.shape[1]
    g_x = np.zeros_like(x)
    g_lw = np.zeros_like(lw)
    for o in range(c_out):
        yo = y[:, o:o + 1]
        dead = np.isneginf(yo[:, 0])
        with np.errstate(invalid="ignore"):
            q = np.exp(lw[None, :, o] + x - yo)
        q[dead, :] = 0.0
        q = np.where(np.isnan(q), 0.0, q)
        go = g_out[:, o:o + 1]
        g_x += go * q
        g_lw[:, o] = (go * q).sum(axis=0)
    return g_x, g_lw


def sum_select(sel_out, x, lw):
    """Hard-EM winner selection at a sum layer.

    For every row/output with a positive selection count the winning input
    channel is argmax_c(lw[c,o] + x[m,c]) (weighted mode) or argmax_c x[m,c]
    when lw is None (unweighted-sum-inputs mode).  Returns the propagated
    per-input selection counts and the winner index table (-1 where the
    output was not selected).
    """
    m, c_in = x.shape
    c_out = sel_out.shape[1]
    if lw is None:
        arg = np.argmax(x, axis=1)  # same winner for every output channel
        winners = np.broadcast_to(arg[:, None], (m, c_out)).copy()
    else:
        t = x[:, :, None] + lw[None, :, :]
        winners = np.argmax(t, axis=1)
    winners = winners.astype(np.int64)
    sel_in = np.zeros((m, c_in), dtype=np.int64)
    rows = np.arange(m)[:, None]
    np.add.at(sel_in, (np.broadcast_to(rows, winners.shape), winners), sel_out)
    winners = np.where(sel_out > 0, winners, -1)
    return sel_in, winners
