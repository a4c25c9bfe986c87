"""Log-space tensor primitives: weighted log-sum-exp mixtures, the one-hot
product convolution and per-cell sum layers.

Values are natural-log probabilities; -inf encodes probability zero and
padding positions hold exactly 0.0.  No documented operation produces NaN
for log-values in [-inf, 0] and linear weights in [0, 1].
"""

from dataclasses import dataclass

import numpy as np

from . import backend

__all__ = ["ConvGeometry", "weighted_logsumexp", "gclp_forward", "spatial_sum_forward"]


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel/stride/dilation/padding of one product convolution.

    Padding is explicit (cells per side per axis); full padding for kernel k
    and dilation d is (k-1)*d per side.
    """

    kh: int
    kw: int
    sh: int = 1
    sw: int = 1
    dh: int = 1
    dw: int = 1
    ph: int = 0
    pw: int = 0

    def as_tuple(self):
        return (self.kh, self.kw, self.sh, self.sw, self.dh, self.dw, self.ph, self.pw)

    def out_hw(self, in_h, in_w):
        oh, ow = backend.gclp_out_hw(in_h, in_w, self.as_tuple())
        if oh < 1 or ow < 1:
            raise ValueError(f"{self} does not fit a {in_h}x{in_w} grid")
        return oh, ow


def weighted_logsumexp(children, log_weights) -> float:
    """log sum_i exp(log_w_i + c_i), max-shift stabilized.

    A (log_w=-inf, c=-inf) pair contributes zero, never NaN.
    """
    children = np.asarray(children, dtype=np.float64)
    log_weights = np.asarray(log_weights, dtype=np.float64)
    if children.size == 0:
        raise ValueError("empty child set")
    if children.shape != log_weights.shape:
        raise ValueError(f"shape mismatch: {children.shape} vs {log_weights.shape}")
    out = backend.sum_forward(children.reshape(1, -1),
                              log_weights.reshape(-1, 1))
    return float(out[0, 0])


def _check_batched(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ValueError(f"expected (H, W, C) or (B, H, W, C), got shape {x.shape}")


def gclp_forward(x, geometry: ConvGeometry, table=None):
    """Product convolution in log space.

    out[i,j,o] sums, over the covered patch cells, the one input channel the
    kernel table selects for (o, cell); with table=None every channel pools
    depthwise.  Padding cells contribute 0.0.
    """
    x, squeeze = _check_batched(x)
    geom = geometry.as_tuple()
    geometry.out_hw(x.shape[1], x.shape[2])  # fail fast on bad geometry
    if table is not None:
        table = np.asarray(table, dtype=np.int64)
        if table.ndim != 2 or table.shape[1] != geometry.kh * geometry.kw:
            raise ValueError(f"kernel table must be (C_out, {geometry.kh * geometry.kw})")
        if table.min() < 0 or table.max() >= x.shape[3]:
            raise ValueError("kernel table selects nonexistent channels")
    y = backend.gclp_forward(x, geom, table)
    return y[0] if squeeze else y


def spatial_sum_forward(x, log_weights):
    """Per-cell mixtures with one weight matrix shared by every cell.

    out[i,j,o] = weighted_logsumexp(x[i,j,:], log_weights[:,o]); spatial
    dimensions are unchanged.
    """
    x, squeeze = _check_batched(x)
    log_weights = np.asarray(log_weights, dtype=np.float64)
    if log_weights.ndim != 2 or log_weights.shape[0] != x.shape[3]:
        raise ValueError(
            f"weight matrix {log_weights.shape} does not match {x.shape[3]} input channels")
    b, h, w, c = x.shape
    y = backend.sum_forward(x.reshape(b * h * w, c), log_weights)
    y = y.reshape(b, h, w, log_weights.shape[1])
    return y[0] if squeeze else y
