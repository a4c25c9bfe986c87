"""Training: online hard EM (weighted and unweighted-sum-inputs winner
selection) for generative networks, and Adam on log-space accumulators with
product/input dropout and cross-entropy for discriminative ones."""

import time
from dataclasses import dataclass

import numpy as np

from . import backend
from .graph import ExecutionPlan
from .inference import _run_forward
from .leaves import gaussian_log_prob
from .params import EM_MODES, ModelParams, smooth_normalize  # noqa: F401  (spec surface)
from .seeding import substream
from .structure import ClassSums

__all__ = [
    "TrainConfig",
    "AdamState",
    "smooth_normalize",
    "hard_em_step",
    "adam_step",
    "product_dropout",
    "input_dropout",
    "train",
    "format_record",
]

MODES = EM_MODES + ("adam",)


@dataclass
class TrainConfig:
    mode: str = "hard_em"
    batch_size: int = 128
    epochs: int = 15
    seed: int = 0
    smoothing_base: float = 1e-2  # eps = smoothing_base / fan-in
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-7
    product_dropout_rate: float = 0.2
    input_dropout_rate: float = 0.2

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be positive")
        for rate in (self.product_dropout_rate, self.input_dropout_rate):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"dropout rates must be in [0, 1], got {rate}")


@dataclass
class AdamState:
    """First/second moment estimates, one pair per trainable array."""

    m: list
    v: list
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        arrays = params.trainable_arrays()
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])

    def update(self, arrays, grads, config: TrainConfig):
        self.step += 1
        b1, b2 = config.beta1, config.beta2
        correction1 = 1.0 - b1 ** self.step
        correction2 = 1.0 - b2 ** self.step
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            a -= config.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + config.adam_epsilon)


def product_dropout(layer_output, rate: float, rng) -> np.ndarray:
    """Replace product outputs by -inf (probability zero) independently with
    the given rate.  Training mode only; evaluation applies no rescaling."""
    if rate <= 0.0:
        return layer_output
    mask = rng.random(layer_output.shape) < rate
    return np.where(mask, -np.inf, layer_output)


def input_dropout(leaf_tensor, rate: float, rng) -> np.ndarray:
    """Drop whole variables: with the given rate, all component channels of
    a variable are set to log 1, as if it were excluded from the evidence."""
    if rate <= 0.0:
        return leaf_tensor
    drop = _input_dropout_mask(leaf_tensor.shape[:-1], rate, rng)
    return np.where(drop[..., None], 0.0, leaf_tensor)


def _input_dropout_mask(grid_shape, rate, rng):
    return rng.random(grid_shape) < rate


def _check_generative(plan: ExecutionPlan):
    if any(isinstance(l, ClassSums) for l in plan.spec.layers):
        raise ValueError("hard EM is a generative method; this network has class sums")


def hard_em_step(plan: ExecutionPlan, params: ModelParams, leaf_tensor,
                 use_usi=None) -> float:
    """One online hard-EM batch update.

    Forward uses marginal (sum) semantics; a top-down pass then selects, at
    every reached sum instance, the winning child: argmax_i(log w_i + c_i),
    or argmax_i c_i in unweighted-sum-inputs mode.  Each selection adds 1 to
    the winner's accumulator; weights are re-normalized afterwards with
    fan-in-smoothed counts.  Returns the batch mean log-likelihood.
    """
    _check_generative(plan)
    if use_usi is None:
        use_usi = params.mode == "hard_em_usi"
    x = np.asarray(leaf_tensor, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    trace = _run_forward(plan, params, x)
    b = x.shape[0]

    sel = np.ones((b, 1), dtype=np.int64)
    deltas = [np.zeros(s.accumulators.shape, dtype=np.int64) for s in params.sums]
    for t in range(len(plan.ops) - 1, -1, -1):
        op = plan.ops[t]
        if op.kind == "gclp":
            sel = backend.gclp_select(sel, op.in_shape,
                                      op.kernel + op.stride + op.dilation + op.pad,
                                      op.table)
        else:
            if op.kind == "sum":
                bb, h, w, c_out = trace.activations[t + 1].shape
                sel = sel.reshape(bb * h * w, c_out)
                rows = trace.activations[t].reshape(bb * h * w, -1)
            else:
                rows = trace.activations[t].reshape(b, -1)
            lw = None if use_usi else params.log_weights(op.param_slot)
            sel_in, winners = backend.sum_select(sel, rows, lw)
            _tally_votes(deltas[op.param_slot], winners, sel)
            sel = sel_in.reshape((b,) + op.in_shape)

    for s, d in zip(params.sums, deltas):
        s.accumulators += d
    params.refresh()
    return float(trace.root_log.mean())


def _tally_votes(delta, winners, sel):
    """Accumulate integer winner counts into a (C_in, C_out) delta."""
    hit = sel > 0
    if not hit.any():
        return
    cols = np.broadcast_to(np.arange(winners.shape[1]), winners.shape)
    np.add.at(delta, (winners[hit], cols[hit]), sel[hit])


def _cross_entropy(scores, labels):
    """Mean cross-entropy of softmax class scores plus its gradient.

    Samples whose scores are all -inf (every class path product-dropped)
    carry no signal and are excluded from the batch mean and gradient.
    """
    b, k = scores.shape
    hi = scores.max(axis=1, keepdims=True)
    alive = ~np.isneginf(hi[:, 0])
    if not alive.any():
        return 0.0, np.zeros_like(scores)
    shift = scores - np.where(np.isneginf(hi), 0.0, hi)
    with np.errstate(divide="ignore"):
        logp = shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))
    loss = -logp[alive, labels[alive]].mean()
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    grad[~alive] = 0.0
    return loss, grad / alive.sum()


def adam_step(plan: ExecutionPlan, params: ModelParams, state: AdamState,
              images, labels, config: TrainConfig, rng) -> tuple:
    """One discriminative Adam batch: dropout, forward, cross-entropy over
    the class-sum outputs, hand-rolled reverse pass, bias-corrected update.

    Returns (loss, batch accuracy).
    """
    class_op = plan.class_op
    if class_op is None:
        raise ValueError("Adam training needs a class-sum layer")
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != np.asarray(images).shape[0]:
        raise ValueError("labels must be one integer per batch image")

    images = np.asarray(images, dtype=np.float64)
    b = images.shape[0]
    h, w, k_leaf = plan.input_shape

    observed = ~_input_dropout_mask((b, h, w), config.input_dropout_rate, rng)
    leaf_t = gaussian_log_prob(images, params.leaf)
    leaf_t = np.where(observed[..., None], leaf_t, 0.0)

    class_index = plan.ops.index(class_op)
    masks = [None] * len(plan.ops)
    if config.product_dropout_rate > 0.0:
        for t, op in enumerate(plan.ops[:class_index]):
            if op.kind == "gclp":
                masks[t] = rng.random((b,) + op.out_shape) < config.product_dropout_rate

    trace = _run_forward(plan, params, leaf_t, product_masks=masks)
    scores = trace.activations[class_index + 1]
    loss, g = _cross_entropy(scores, labels)
    accuracy = float((scores.argmax(axis=1) == labels).mean())

    g_lw = [None] * len(params.sums)
    g_lw[plan.root_op.param_slot] = np.zeros_like(params.sums[plan.root_op.param_slot].accumulators)
    for t in range(class_index, -1, -1):
        op = plan.ops[t]
        if op.kind == "gclp":
            g = backend.gclp_backward_grad(
                g, op.in_shape, op.kernel + op.stride + op.dilation + op.pad, op.table)
        elif op.kind == "sum":
            bb, hh, ww, c_out = trace.activations[t + 1].shape
            rows_in = trace.activations[t].reshape(bb * hh * ww, -1)
            y = trace.activations[t + 1].reshape(bb * hh * ww, c_out)
            g, g_w = backend.sum_backward_grad(g.reshape(bb * hh * ww, c_out), rows_in,
                                               y, params.log_weights(op.param_slot))
            g = g.reshape(trace.activations[t].shape)
            g_lw[op.param_slot] = g_w
        else:
            rows_in = trace.activations[t].reshape(b, -1)
            g, g_w = backend.sum_backward_grad(g, rows_in, trace.activations[t + 1],
                                               params.log_weights(op.param_slot))
            g = g.reshape(trace.activations[t].shape)
            g_lw[op.param_slot] = g_w

    grads = [_logits_grad(s.accumulators, gw) for s, gw in zip(params.sums, g_lw)]
    grads.extend(_leaf_grads(params, images, g, observed))
    state.update(params.trainable_arrays(), grads, config)
    params.refresh()
    return loss, accuracy


def _logits_grad(acc, g_lw):
    """Chain g through the per-column log-softmax that derives the weights."""
    shifted = np.exp(acc - acc.max(axis=0, keepdims=True))
    p = shifted / shifted.sum(axis=0, keepdims=True)
    return g_lw - p * g_lw.sum(axis=0, keepdims=True)


def _leaf_grads(params: ModelParams, images, g_leaf, observed):
    """Gradients of the loss w.r.t. Gaussian means and the unconstrained
    variance parameter (variance = floor + exp(rho))."""
    mu = params.leaf.means[None]
    var = params.leaf.variances[None]
    z = images[:, :, :, None] - mu
    g_eff = g_leaf * observed[..., None]
    g_mu = (g_eff * z / var).sum(axis=0)
    dlog_dvar = 0.5 * (z * z / (var * var) - 1.0 / var)
    g_rho = (g_eff * dlog_dvar).sum(axis=0) * np.exp(params.leaf_rho)
    return [g_mu, g_rho]


def format_record(epoch, batch, metrics) -> str:
    parts = [f"epoch={epoch}", f"batch={batch}"]
    parts += [f"metric={name}:{value:.6f}" for name, value in metrics]
    return " ".join(parts)


def train(plan: ExecutionPlan, params: ModelParams, images, labels,
          config: TrainConfig, progress=None) -> ModelParams:
    """Epoch/batch loop with seeded shuffling and progress records.

    images are normalized pixel grids (N, H, W); labels may be None for
    generative modes.  The last partial batch is kept.
    """
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    shuffle_rng = substream(config.seed, "shuffle")
    dropout_rng = substream(config.seed, "dropout")
    state = AdamState.for_params(params) if config.mode == "adam" else None
    if config.mode == "adam" and labels is None:
        raise ValueError("adam training requires labels")
    labels = None if labels is None else np.asarray(labels)

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        start = time.perf_counter()
        for batch_no, lo in enumerate(range(0, n, config.batch_size)):
            idx = order[lo:lo + config.batch_size]
            if config.mode == "adam":
                loss, acc = adam_step(plan, params, state, images[idx], labels[idx],
                                      config, dropout_rng)
                metrics = [("loss", loss), ("accuracy", acc)]
            else:
                leaf_t = gaussian_log_prob(images[idx], params.leaf)
                loglik = hard_em_step(plan, params, leaf_t,
                                      use_usi=config.mode == "hard_em_usi")
                metrics = [("loglik", loglik)]
            if progress is not None:
                metrics.append(("walltime", time.perf_counter() - start))
                progress(format_record(epoch, batch_no, metrics))
    return params
