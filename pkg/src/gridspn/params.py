"""Learnable state: per-layer sum accumulators (linear counts for hard EM,
log-space accumulators for gradient training) and leaf parameters, plus the
weight normalizations that turn accumulators into sum weights."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import ExecutionPlan
from .leaves import VARIANCE_FLOOR, GaussianLeafParams
from .seeding import substream

__all__ = [
    "smooth_normalize",
    "log_softmax_columns",
    "SumParams",
    "ModelParams",
    "init_em_params",
    "init_gradient_params",
]

EM_MODES = ("hard_em", "hard_em_usi")


def smooth_normalize(counts, n: Optional[int] = None, eps_base: float = 1e-2):
    """Weights from nonnegative counts with fan-in-dependent additive
    smoothing: eps = eps_base / n, w_i = (c_i + eps) / sum_j (c_j + eps).

    The denominator sums the smoothed counts so the result normalizes
    exactly (all-zero counts give the uniform vector).
    """
    counts = np.asarray(counts, dtype=np.float64)
    if n is None:
        n = counts.shape[0]
    if n == 0:
        raise ValueError("empty sum fan-in")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    eps = eps_base / n
    smoothed = counts + eps
    return smoothed / smoothed.sum(axis=0, keepdims=counts.ndim > 1)


def log_softmax_columns(acc):
    """Per-column log softmax: normalized log weights from unconstrained
    log-space accumulators."""
    acc = np.asarray(acc, dtype=np.float64)
    shifted = acc - acc.max(axis=0, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=0, keepdims=True))


@dataclass
class SumParams:
    """One sum layer's state: (C_in, C_out) accumulators plus the derived
    normalized log weights."""

    accumulators: np.ndarray
    log_space: bool  # False: EM counts; True: gradient-mode log accumulators
    eps_base: float = 1e-2
    log_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.accumulators = np.asarray(self.accumulators, dtype=np.float64)
        self.refresh()

    def refresh(self):
        if self.log_space:
            self.log_weights = log_softmax_columns(self.accumulators)
        else:
            fan_in = self.accumulators.shape[0]
            self.log_weights = np.log(
                smooth_normalize(self.accumulators, fan_in, self.eps_base))


@dataclass
class ModelParams:
    mode: str  # hard_em | hard_em_usi | adam
    sums: list
    leaf: Optional[GaussianLeafParams] = None
    leaf_rho: Optional[np.ndarray] = None  # adam-mode variance parameter

    def log_weights(self, slot: int) -> np.ndarray:
        return self.sums[slot].log_weights

    def refresh(self):
        for s in self.sums:
            s.refresh()
        if self.leaf_rho is not None:
            self.leaf.variances = VARIANCE_FLOOR + np.exp(self.leaf_rho)

    def trainable_arrays(self):
        """Arrays updated by gradient steps, in a fixed order."""
        arrays = [s.accumulators for s in self.sums]
        if self.leaf is not None and self.leaf_rho is not None:
            arrays.append(self.leaf.means)
            arrays.append(self.leaf_rho)
        return arrays


def init_em_params(plan: ExecutionPlan, mode: str = "hard_em",
                   leaf: Optional[GaussianLeafParams] = None,
                   eps_base: float = 1e-2) -> ModelParams:
    """Zero accumulators (uniform initial weights) for hard-EM training."""
    if mode not in EM_MODES:
        raise ValueError(f"EM mode must be one of {EM_MODES}, got {mode!r}")
    sums = [SumParams(np.zeros(shape), log_space=False, eps_base=eps_base)
            for shape in plan.param_shapes]
    return ModelParams(mode=mode, sums=sums, leaf=leaf)


def init_gradient_params(plan: ExecutionPlan, seed: int,
                         leaf: Optional[GaussianLeafParams] = None) -> ModelParams:
    """Gradient-mode parameters: log accumulators drawn from N(0, 0.5) to
    break channel symmetry, softmax-normalized per sum."""
    rng = substream(seed, "sum-init")
    sums = [SumParams(rng.normal(0.0, 0.5, size=shape), log_space=True)
            for shape in plan.param_shapes]
    leaf_rho = None
    if leaf is not None:
        leaf_rho = np.log(np.maximum(leaf.variances - VARIANCE_FLOOR, 1e-12))
    return ModelParams(mode="adam", sums=sums, leaf=leaf, leaf_rho=leaf_rho)
