"""Plan execution: marginal and MPE forward passes, partition function,
root-derivative backward pass, leaf posteriors and inpainting."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .graph import ExecutionPlan
from .leaves import gaussian_log_prob
from .params import ModelParams
from .structure import GaussianLeaf

__all__ = [
    "ForwardTrace",
    "LeafPosterior",
    "forward_marginal",
    "partition_function",
    "forward_mpe",
    "backward_root_derivatives",
    "leaf_posterior",
    "inpaint",
]


@dataclass
class ForwardTrace:
    """Per-op activations retained for backward passes.

    activations[0] is the leaf tensor; activations[t+1] the output of op t.
    Dense-sum activations are (B, n_out); spatial ones (B, H, W, C).
    """

    activations: list
    argmax: Optional[list] = None  # per sum op, winner index arrays (MPE only)

    @property
    def root_log(self) -> np.ndarray:
        return self.activations[-1][:, 0]

    @property
    def batch_size(self) -> int:
        return self.activations[0].shape[0]


@dataclass
class LeafPosterior:
    """Per-variable component posteriors; rows of hidden variables sum to 1,
    observed variables carry the is-observed flag instead."""

    probs: np.ndarray  # (H, W, K)
    observed: np.ndarray  # (H, W) bool


def _as_batch_tensor(plan: ExecutionPlan, leaf_tensor):
    x = np.asarray(leaf_tensor, dtype=np.float64)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != plan.input_shape:
        raise ValueError(f"leaf tensor {x.shape} does not match plan input "
                         f"{plan.input_shape}")
    return x, squeeze


def _run_forward(plan, params, x, use_max=False, product_masks=None):
    acts = [x]
    argmax = [] if use_max else None
    for t, op in enumerate(plan.ops):
        if op.kind == "gclp":
            y = backend.gclp_forward(x, op.kernel + op.stride + op.dilation + op.pad,
                                     op.table)
            if product_masks is not None and product_masks[t] is not None:
                y = np.where(product_masks[t], -np.inf, y)
        elif op.kind == "sum":
            b, h, w, c = x.shape
            lw = params.log_weights(op.param_slot)
            rows = x.reshape(b * h * w, c)
            if use_max:
                y, arg = backend.sum_forward_max(rows, lw)
                argmax.append(arg.reshape(b, h, w, -1))
            else:
                y = backend.sum_forward(rows, lw)
            y = y.reshape(b, h, w, -1)
        else:  # dense_sum
            b = x.shape[0]
            lw = params.log_weights(op.param_slot)
            rows = x.reshape(b, -1)
            if use_max:
                y, arg = backend.sum_forward_max(rows, lw)
                argmax.append(arg)
            else:
                y = backend.sum_forward(rows, lw)
        acts.append(y)
        x = y
    return ForwardTrace(activations=acts, argmax=argmax)


def forward_marginal(plan: ExecutionPlan, params: ModelParams, leaf_tensor):
    """Evaluate the network bottom-up with sum (marginal) semantics.

    Returns (root log value, trace); with partial evidence encoded in the
    leaf tensor the root value is the evidence marginal log S(e).
    """
    x, squeeze = _as_batch_tensor(plan, leaf_tensor)
    trace = _run_forward(plan, params, x, use_max=False)
    root = trace.root_log
    return (float(root[0]) if squeeze else root), trace


def partition_function(plan: ExecutionPlan, params: ModelParams) -> float:
    """Single-pass log Z: the all-hidden forward (every leaf channel log 1)."""
    x = np.zeros((1,) + plan.input_shape)
    trace = _run_forward(plan, params, x, use_max=False)
    return float(trace.root_log[0])


def forward_mpe(plan: ExecutionPlan, params: ModelParams, leaf_tensor):
    """Max-sum evaluation: sums compute max_i(log w_i + c_i) and record the
    winning child (ties to the lowest index)."""
    x, squeeze = _as_batch_tensor(plan, leaf_tensor)
    trace = _run_forward(plan, params, x, use_max=True)
    root = trace.root_log
    return (float(root[0]) if squeeze else root), trace


def backward_root_derivatives(plan: ExecutionPlan, params: ModelParams,
                              trace: ForwardTrace) -> np.ndarray:
    """Reverse pass returning log dS/d(leaf channel) for every leaf channel.

    Sums route derivative + weight; products route derivative + (own value
    minus child value), all in log space (SPN derivatives are nonnegative).
    """
    b = trace.batch_size
    d = np.zeros((b, 1))  # log dS/dS
    for t in range(len(plan.ops) - 1, -1, -1):
        op = plan.ops[t]
        if op.kind == "gclp":
            d = backend.gclp_backward_logderiv(
                d, trace.activations[t], trace.activations[t + 1],
                op.kernel + op.stride + op.dilation + op.pad, op.table)
        elif op.kind == "sum":
            bb, h, w, c_out = trace.activations[t + 1].shape
            lw = params.log_weights(op.param_slot)
            d = backend.sum_backward_logderiv(d.reshape(bb * h * w, c_out), lw)
            d = d.reshape(bb, h, w, -1)
        else:
            lw = params.log_weights(op.param_slot)
            d = backend.sum_backward_logderiv(d, lw)
            d = d.reshape((b,) + op.in_shape)
    return d


def _posterior_from_derivs(log_derivs, mask):
    """Normalize per-variable component derivatives into posteriors.

    A hidden variable whose derivatives are all -inf has probability-zero
    evidence under the model; the uniform posterior is used by convention.
    """
    b, h, w, k = log_derivs.shape
    hi = log_derivs.max(axis=3, keepdims=True)
    dead = np.isneginf(hi)
    safe = np.where(dead, 0.0, hi)
    e = np.exp(log_derivs - safe)
    e = np.where(np.broadcast_to(dead, e.shape), 1.0, e)
    probs = e / e.sum(axis=3, keepdims=True)
    probs = np.where(mask[None, :, :, None], 0.0, probs)
    return probs


def leaf_posterior(plan: ExecutionPlan, params: ModelParams, image, mask) -> LeafPosterior:
    """Marginal posterior over leaf components at every hidden variable,
    from root partial derivatives (hidden leaves have value 1, so the
    derivative is the unnormalized component marginal)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return LeafPosterior(probs=np.zeros(plan.input_shape), observed=mask)
    leaf_t = gaussian_log_prob(image, params.leaf, mask)
    probs = _posterior_batch(plan, params, leaf_t[None], mask)[0]
    return LeafPosterior(probs=probs, observed=mask)


def _posterior_batch(plan, params, leaf_tensors, mask):
    _, trace = forward_marginal(plan, params, leaf_tensors)
    log_derivs = backward_root_derivatives(plan, params, trace)
    return _posterior_from_derivs(log_derivs, mask)


def inpaint(plan: ExecutionPlan, params: ModelParams, image, mask) -> np.ndarray:
    """Complete the hidden pixels of one image (normalized units).

    Hidden pixel values are the posterior-weighted combination of component
    modes (a Gaussian's mode is its mean); observed pixels copy through.
    """
    out = inpaint_batch(plan, params, np.asarray(image, dtype=np.float64)[None], mask)
    return out[0]


def inpaint_batch(plan: ExecutionPlan, params: ModelParams, images, mask) -> np.ndarray:
    if not isinstance(plan.spec.leaf, GaussianLeaf):
        raise TypeError("inpainting requires Gaussian leaves")
    images = np.asarray(images, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.all():
        return images.copy()
    leaf_t = gaussian_log_prob(images, params.leaf, mask)
    probs = _posterior_batch(plan, params, leaf_t, mask)
    predicted = (probs * params.leaf.means[None]).sum(axis=3)
    return np.where(mask[None], images, predicted)
