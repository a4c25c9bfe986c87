"""Leaf distribution layers: per-pixel Gaussian components and discrete
indicator channels, with evidence handling (hidden variables marginalize to
log 1 across all their channels)."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "VARIANCE_FLOOR",
    "GaussianLeafParams",
    "gaussian_log_prob",
    "quantile_init",
    "equidistant_init",
    "indicator_log_prob",
]

VARIANCE_FLOOR = 1e-4

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianLeafParams:
    """Means and variances, (H, W, K) each; variances are clamped to the floor."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.maximum(np.asarray(self.variances, dtype=np.float64),
                                    VARIANCE_FLOOR)
        if self.means.shape != self.variances.shape or self.means.ndim != 3:
            raise ValueError(f"means {self.means.shape} / variances "
                             f"{self.variances.shape} must be equal (H, W, K) shapes")

    @property
    def components(self):
        return self.means.shape[2]


def _as_batch(images, h, w):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        return images[None], True
    if images.ndim != 3:
        raise ValueError(f"expected (H, W) or (B, H, W) pixels, got {images.shape}")
    if images.shape[1:] != (h, w):
        raise ValueError(f"pixel grid {images.shape[1:]} does not match leaf grid {(h, w)}")
    return images, False


def gaussian_log_prob(images, params: GaussianLeafParams, mask=None):
    """Per-component log densities, (H, W, K).

    mask marks observed variables (True); hidden variables get 0.0 in every
    component, i.e. they are marginalized out.
    """
    h, w, k = params.means.shape
    images, squeeze = _as_batch(images, h, w)
    if not np.all(np.isfinite(images)):
        raise ValueError("pixel values must be finite")
    z = images[:, :, :, None] - params.means[None]
    out = -0.5 * (z * z / params.variances[None]
                  + np.log(params.variances[None]) + _LOG_2PI)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (h, w):
            raise ValueError(f"evidence mask {mask.shape} does not match grid {(h, w)}")
        out = np.where(mask[None, :, :, None], out, 0.0)
    return out[0] if squeeze else out


def quantile_init(train_images, k: int) -> GaussianLeafParams:
    """Per-pixel quantile means: sort each pixel across the train set, split
    into k equal groups (remainder spread over the first groups), use group
    means; all variances start at 1."""
    train_images = np.asarray(train_images, dtype=np.float64)
    if train_images.ndim != 3 or train_images.shape[0] == 0:
        raise ValueError("need a nonempty (N, H, W) train array")
    n, h, w = train_images.shape
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    flat = np.sort(train_images.reshape(n, h * w), axis=0)
    base, extra = divmod(n, k)
    means = np.empty((k, h * w))
    start = 0
    for q in range(k):
        size = base + (1 if q < extra else 0)
        means[q] = flat[start:start + size].mean(axis=0)
        start += size
    means = means.T.reshape(h, w, k)
    return GaussianLeafParams(means=means, variances=np.ones((h, w, k)))


def equidistant_init(lo: float, hi: float, k: int, grid_shape) -> GaussianLeafParams:
    """Means at the k interval midpoints of [lo, hi], identical across
    pixels; variances 1."""
    if not lo < hi:
        raise ValueError(f"need lo < hi, got {lo} >= {hi}")
    h, w = grid_shape
    points = lo + (np.arange(k) + 0.5) * (hi - lo) / k
    means = np.broadcast_to(points, (h, w, k)).copy()
    return GaussianLeafParams(means=means, variances=np.ones((h, w, k)))


def indicator_log_prob(assignment, arity: int, mask=None):
    """Indicator channels for discrete variables.

    Observed variable: the matching channel is 0.0, the rest -inf.  Hidden
    variable: every channel 0.0.
    """
    assignment = np.asarray(assignment)
    squeeze = assignment.ndim == 2
    if squeeze:
        assignment = assignment[None]
    if assignment.ndim != 3:
        raise ValueError(f"expected (H, W) or (B, H, W) assignment, got {assignment.shape}")
    b, h, w = assignment.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    observed = assignment[mask[None, :, :].repeat(b, axis=0)]
    if observed.size and (observed.min() < 0 or observed.max() >= arity):
        raise ValueError(f"assignment values outside [0, {arity})")
    out = np.zeros((b, h, w, arity))
    hit = assignment[:, :, :, None] == np.arange(arity)[None, None, None, :]
    out = np.where(mask[None, :, :, None] & ~hit, -np.inf, out)
    return out[0] if squeeze else out
