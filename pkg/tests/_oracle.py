"""Independent brute-force oracle: expands a layer stack into an explicit
node graph and evaluates it in linear probability space, one node at a
time, vectorized only over enumerated assignments.

Deliberately shares no code with the engine's compiled path: geometry is
re-derived with plain loops, channel combinations come from
itertools.product, probabilities stay linear (no log-space tricks).
"""

import itertools

import numpy as np

from gridspn.structure import (ClassSums, GaussianLeaf, GCLProduct,
                               IndicatorLeaf, RootSum, SpatialSum)


class LeafNode:
    def __init__(self, var, channel, kind, mean=None, variance=None):
        self.var = var
        self.channel = channel
        self.kind = kind  # "indicator" | "gaussian"
        self.mean = mean
        self.variance = variance

    def value(self, assignments, hidden):
        if hidden[self.var]:
            return np.ones(assignments.shape[0])
        x = assignments[:, self.var]
        if self.kind == "indicator":
            return (x == self.channel).astype(np.float64)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.variance) / np.sqrt(
            2.0 * np.pi * self.variance)


class SumNode:
    def __init__(self, children, weights):
        self.children = children
        self.weights = np.asarray(weights, dtype=np.float64)


class ProductNode:
    def __init__(self, children):
        self.children = children


class OneNode:
    """Constant probability 1 (a patch that covered only padding)."""


def _conv_output_size(size, k, s, d, pad):
    return (size + 2 * pad - ((k - 1) * d + 1)) // s + 1


def build_node_graph(spec, params):
    """Explicit node grid per layer; grid[i][j] is the channel list of one
    cell.  Weights come from the engine's params (exponentiated)."""
    h, w = spec.height, spec.width
    leaf = spec.layers[0]
    grid = []
    for i in range(h):
        row = []
        for j in range(w):
            var = i * w + j
            if isinstance(leaf, IndicatorLeaf):
                row.append([LeafNode(var, c, "indicator") for c in range(leaf.arity)])
            else:
                row.append([LeafNode(var, c, "gaussian",
                                     mean=params.leaf.means[i, j, c],
                                     variance=params.leaf.variances[i, j, c])
                            for c in range(leaf.components)])
        grid.append(row)

    slot = 0
    for layer in spec.layers[1:]:
        if isinstance(layer, SpatialSum):
            weights = np.exp(params.sums[slot].log_weights)  # (C_in, C_out)
            slot += 1
            grid = [[[SumNode(cell, weights[:, o]) for o in range(weights.shape[1])]
                     for cell in row] for row in grid]
        elif isinstance(layer, GCLProduct):
            grid = _product_layer(grid, layer)
        elif isinstance(layer, (ClassSums, RootSum)):
            children = [node for row in grid for cell in row for node in cell]
            weights = np.exp(params.sums[slot].log_weights)  # (N, K)
            slot += 1
            grid = [[[SumNode(children, weights[:, o]) for o in range(weights.shape[1])]]]
    return grid[0][0][0]


def _product_layer(grid, layer):
    in_h, in_w = len(grid), len(grid[0])
    c_in = len(grid[0][0])
    kh, kw = layer.kernel
    sh, sw = layer.stride
    dh, dw = layer.dilation
    ph, pw = layer.pad_amount()
    out_h = _conv_output_size(in_h, kh, sh, dh, ph)
    out_w = _conv_output_size(in_w, kw, sw, dw, pw)
    t = kh * kw
    if layer.channel_mode == "depthwise":
        combos = [(c,) * t for c in range(c_in)]
    else:
        n_out = layer.channel_mode[1]
        combos = list(itertools.islice(itertools.product(range(c_in), repeat=t), n_out))
    out = []
    for oi in range(out_h):
        row = []
        for oj in range(out_w):
            cells = []  # covered real cells in kernel order, None for padding
            for mh in range(kh):
                for mw in range(kw):
                    ii = oi * sh - ph + mh * dh
                    jj = oj * sw - pw + mw * dw
                    cells.append(grid[ii][jj] if 0 <= ii < in_h and 0 <= jj < in_w
                                 else None)
            channels = []
            for combo in combos:
                children = [cell[c] for cell, c in zip(cells, combo) if cell is not None]
                channels.append(ProductNode(children) if children else OneNode())
            row.append(channels)
        out.append(row)
    return out


def evaluate(root, assignments, hidden):
    """Linear-space values of the root for a batch of assignments.

    assignments: (n, n_vars) array; hidden: (n_vars,) bool, hidden variables
    are marginalized at the leaves (value 1).
    """
    assignments = np.asarray(assignments, dtype=np.float64)
    hidden = np.asarray(hidden, dtype=bool)
    memo = {}

    def walk(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, LeafNode):
            val = node.value(assignments, hidden)
        elif isinstance(node, OneNode):
            val = np.ones(assignments.shape[0])
        elif isinstance(node, ProductNode):
            val = np.ones(assignments.shape[0])
            for child in node.children:
                val = val * walk(child)
        else:
            val = np.zeros(assignments.shape[0])
            for weight, child in zip(node.weights, node.children):
                val = val + weight * walk(child)
        memo[key] = val
        return val

    return walk(root)


def enumerate_assignments(n_vars, arity=2):
    """All assignments, one row each, in lexicographic order."""
    grids = np.meshgrid(*[np.arange(arity)] * n_vars, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def oracle_log_marginal(spec, params, assignment, observed_mask):
    """log sum over completions of the hidden variables (binary networks).

    assignment: (n_vars,) values (entries at hidden positions ignored);
    observed_mask: (n_vars,) bool.
    """
    root = build_node_graph(spec, params)
    observed_mask = np.asarray(observed_mask, dtype=bool)
    n_vars = observed_mask.size
    hidden_idx = np.flatnonzero(~observed_mask)
    arity = spec.layers[0].arity
    completions = enumerate_assignments(len(hidden_idx), arity) if len(hidden_idx) \
        else np.zeros((1, 0), dtype=np.int64)
    rows = np.tile(np.asarray(assignment, dtype=np.float64), (completions.shape[0], 1))
    rows[:, hidden_idx] = completions
    values = evaluate(root, rows, np.zeros(n_vars, dtype=bool))
    total = values.sum()
    return np.log(total) if total > 0 else -np.inf
