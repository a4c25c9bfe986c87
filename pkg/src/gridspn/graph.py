"""Scope propagation, completeness/decomposability checking and compilation
of a validated layer stack into a flat execution plan.

Scopes are bitsets over flattened variable indices (row-major over the
input grid), held as plain Python ints on the propagation path.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .structure import (ClassSums, GaussianLeaf, GCLProduct, IndicatorLeaf,
                        NetworkSpec, RootSum, SpatialSum, StructureError)

__all__ = [
    "Scope",
    "ScopeMap",
    "Violation",
    "ValidityReport",
    "ExecutionPlan",
    "InvalidNetworkError",
    "propagate_scopes",
    "check_validity",
    "compile_network",
    "onehot_table",
]


@dataclass(frozen=True)
class Scope:
    """Set of variable indices, fixed capacity `n_vars`."""

    mask: int
    n_vars: int

    @classmethod
    def empty(cls, n_vars):
        return cls(0, n_vars)

    @classmethod
    def singleton(cls, index, n_vars):
        if not 0 <= index < n_vars:
            raise ValueError(f"variable index {index} outside [0, {n_vars})")
        return cls(1 << index, n_vars)

    @classmethod
    def full(cls, n_vars):
        return cls((1 << n_vars) - 1, n_vars)

    def union(self, other: "Scope") -> "Scope":
        return Scope(self.mask | other.mask, self.n_vars)

    def intersection(self, other: "Scope") -> "Scope":
        return Scope(self.mask & other.mask, self.n_vars)

    def disjoint(self, other: "Scope") -> bool:
        return (self.mask & other.mask) == 0

    def is_empty(self) -> bool:
        return self.mask == 0

    def indices(self) -> tuple:
        return tuple(i for i in range(self.n_vars) if (self.mask >> i) & 1)

    def __len__(self):
        return bin(self.mask).count("1")

    def __contains__(self, index):
        return bool((self.mask >> index) & 1)


class ScopeMap:
    """Per-layer grids of cell scopes (one scope per cell; channels within a
    cell are homogeneous by construction)."""

    def __init__(self, spec: NetworkSpec, grids):
        self.spec = spec
        self.n_vars = spec.n_variables
        self._grids = grids  # list of 2-D lists of int masks

    def scope(self, layer_index: int, i: int, j: int) -> Scope:
        return Scope(self._grids[layer_index][i][j], self.n_vars)

    def is_padding(self, layer_index: int, i: int, j: int) -> bool:
        return self._grids[layer_index][i][j] == 0

    def grid_shape(self, layer_index: int) -> tuple:
        g = self._grids[layer_index]
        return (len(g), len(g[0]))

    def raw_grid(self, layer_index: int):
        return self._grids[layer_index]

    @property
    def n_layers(self):
        return len(self._grids)

    def root_scope(self) -> Scope:
        return Scope(self._grids[-1][0][0], self.n_vars)


@dataclass(frozen=True)
class Violation:
    layer_index: int
    cell: tuple  # (i, j) in the coordinate system noted by `kind`
    kind: str  # completeness | decomposability | coverage
    scopes: tuple = ()  # offending scope masks, for diagnostics

    def format(self) -> str:
        return f"layer={self.layer_index} cell={self.cell[0]},{self.cell[1]} kind={self.kind}"


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple

    def format(self) -> str:
        if self.valid:
            return "valid"
        return "\n".join(v.format() for v in self.violations)


class InvalidNetworkError(ValueError):
    def __init__(self, report: ValidityReport):
        super().__init__("network is not a valid sum-product structure:\n" + report.format())
        self.report = report


def _patch_cells(layer: GCLProduct, out_i, out_j, in_h, in_w):
    """Input-grid coordinates covered by the patch at one output cell.

    Yields (ii, jj, m) with m the row-major kernel cell index; positions
    falling outside the input grid are padding and are skipped.
    """
    kh, kw = layer.kernel
    sh, sw = layer.stride
    dh, dw = layer.dilation
    ph, pw = layer.pad_amount()
    base_i = out_i * sh - ph
    base_j = out_j * sw - pw
    for mh in range(kh):
        ii = base_i + mh * dh
        if not 0 <= ii < in_h:
            continue
        for mw in range(kw):
            jj = base_j + mw * dw
            if not 0 <= jj < in_w:
                continue
            yield ii, jj, mh * kw + mw


def propagate_scopes(spec: NetworkSpec) -> ScopeMap:
    """Symbolic forward pass computing every cell's scope.

    Product cells take the union of the covered patch cells' scopes
    (padding skipped); sum layers copy the grid; class/root layers union
    every cell of their input.
    """
    shapes = spec.layer_shapes()  # raises StructureError on inconsistency
    h, w = spec.height, spec.width
    grids = []
    cur = [[(1 << (i * w + j)) for j in range(w)] for i in range(h)]
    for index, layer in enumerate(spec.layers):
        if index == 0:
            grids.append(cur)
            continue
        if isinstance(layer, SpatialSum):
            cur = [row[:] for row in cur]
        elif isinstance(layer, GCLProduct):
            in_h, in_w = len(cur), len(cur[0])
            out = shapes[index]
            nxt = [[0] * out.width for _ in range(out.height)]
            for oi in range(out.height):
                for oj in range(out.width):
                    m = 0
                    for ii, jj, _ in _patch_cells(layer, oi, oj, in_h, in_w):
                        m |= cur[ii][jj]
                    nxt[oi][oj] = m
            cur = nxt
        elif isinstance(layer, (ClassSums, RootSum)):
            m = 0
            for row in cur:
                for cell in row:
                    m |= cell
            cur = [[m]]
        else:
            raise StructureError(f"cannot propagate through {layer!r}", index)
        grids.append(cur)
    return ScopeMap(spec, grids)


def check_validity(spec: NetworkSpec, scope_map: Optional[ScopeMap] = None) -> ValidityReport:
    """Check completeness at every sum, decomposability at every product and
    full variable coverage at the root.  All violations are reported, not
    just the first."""
    if scope_map is None:
        scope_map = propagate_scopes(spec)
    violations = []
    for index, layer in enumerate(spec.layers):
        if isinstance(layer, GCLProduct):
            prev = scope_map.raw_grid(index - 1)
            in_h, in_w = len(prev), len(prev[0])
            grid = scope_map.raw_grid(index)
            for oi in range(len(grid)):
                for oj in range(len(grid[0])):
                    acc = 0
                    clash = None
                    for ii, jj, _ in _patch_cells(layer, oi, oj, in_h, in_w):
                        m = prev[ii][jj]
                        if m == 0:
                            continue  # padding-equivalent cells are exempt
                        if acc & m:
                            clash = (acc, m)
                            break
                        acc |= m
                    if clash is not None:
                        violations.append(Violation(index, (oi, oj), "decomposability", clash))
        elif isinstance(layer, SpatialSum):
            # Channels within a cell share one scope by representation, so
            # per-cell sums are complete by construction; nothing can differ.
            continue
        elif isinstance(layer, (ClassSums, RootSum)):
            if isinstance(layer, RootSum) and isinstance(spec.layers[index - 1], ClassSums):
                continue  # root over the K class sums: single cell, one scope
            prev = scope_map.raw_grid(index - 1)
            reference = None
            for i, row in enumerate(prev):
                for j, m in enumerate(row):
                    if m == 0:
                        continue
                    if reference is None:
                        reference = m
                    elif m != reference:
                        violations.append(Violation(index, (i, j), "completeness",
                                                    (reference, m)))
    full = (1 << spec.n_variables) - 1
    if scope_map.root_scope().mask != full and not violations:
        # Reported only for otherwise-clean networks; with local violations
        # present the root scope is not meaningful.
        violations.append(Violation(len(spec.layers) - 1, (0, 0), "coverage",
                                    (scope_map.root_scope().mask, full)))
    return ValidityReport(valid=not violations, violations=tuple(violations))


def onehot_table(c_in: int, t: int, n_out: int) -> np.ndarray:
    """First n_out channel combinations in lexicographic order.

    Row r holds one input-channel index per kernel cell (cells row-major,
    first cell most significant), i.e. the digits of r in base c_in.
    """
    if n_out > c_in ** t:
        raise StructureError(f"onehot:{n_out} exceeds {c_in}^{t} combinations")
    digits = np.unravel_index(np.arange(n_out), (c_in,) * t)
    return np.stack(digits, axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class GclpOp:
    layer_index: int
    in_shape: tuple  # (H, W, C)
    out_shape: tuple
    kernel: tuple
    stride: tuple
    dilation: tuple
    pad: tuple  # cells per side per axis
    table: Optional[np.ndarray]  # (C_out, kh*kw) channel picks; None = depthwise

    kind = "gclp"


@dataclass(frozen=True)
class SumOp:
    """Per-cell mixture layer; weight matrix (C_in, C_out) tied across cells."""

    layer_index: int
    in_shape: tuple
    out_shape: tuple
    param_slot: int

    kind = "sum"


@dataclass(frozen=True)
class DenseSumOp:
    """Class sums or root: each output sums every channel of every input cell."""

    layer_index: int
    in_shape: tuple
    n_out: int
    param_slot: int

    kind = "dense_sum"

    @property
    def n_children(self):
        h, w, c = self.in_shape
        return h * w * c


@dataclass(frozen=True, eq=False)
class ExecutionPlan:
    spec: NetworkSpec
    input_shape: tuple  # (H, W, C) of the leaf tensor
    ops: tuple
    param_shapes: tuple  # per slot, (C_in, C_out) of the sum weight matrix
    scope_map: ScopeMap

    @property
    def class_op(self) -> Optional[DenseSumOp]:
        for op in self.ops:
            if op.kind == "dense_sum" and op.layer_index == len(self.spec.layers) - 2:
                if isinstance(self.spec.layers[op.layer_index], ClassSums):
                    return op
        return None

    @property
    def root_op(self) -> DenseSumOp:
        return self.ops[-1]

    def sum_slots(self):
        return [(op, op.param_slot) for op in self.ops if op.kind in ("sum", "dense_sum")]


def compile_network(spec: NetworkSpec) -> ExecutionPlan:
    """Compile a valid spec into a topologically ordered op list.

    Refuses invalid networks, carrying the full validity report.
    """
    scope_map = propagate_scopes(spec)
    report = check_validity(spec, scope_map)
    if not report.valid:
        raise InvalidNetworkError(report)
    shapes = spec.layer_shapes()
    ops = []
    param_shapes = []
    cur = shapes[0]
    for index, layer in enumerate(spec.layers[1:], start=1):
        out = shapes[index]
        if isinstance(layer, GCLProduct):
            if layer.channel_mode == "depthwise":
                table = None
            else:
                t = layer.kernel[0] * layer.kernel[1]
                table = onehot_table(cur.channels, t, layer.channel_mode[1])
            ops.append(GclpOp(index,
                              (cur.height, cur.width, cur.channels),
                              (out.height, out.width, out.channels),
                              layer.kernel, layer.stride, layer.dilation,
                              layer.pad_amount(), table))
        elif isinstance(layer, SpatialSum):
            slot = len(param_shapes)
            param_shapes.append((cur.channels, layer.channels))
            ops.append(SumOp(index, (cur.height, cur.width, cur.channels),
                             (out.height, out.width, out.channels), slot))
        elif isinstance(layer, (ClassSums, RootSum)):
            n_out = layer.classes if isinstance(layer, ClassSums) else 1
            slot = len(param_shapes)
            param_shapes.append((cur.size, n_out))
            ops.append(DenseSumOp(index, (cur.height, cur.width, cur.channels),
                                  n_out, slot))
        cur = out
    return ExecutionPlan(spec=spec,
                         input_shape=(shapes[0].height, shapes[0].width, shapes[0].channels),
                         ops=tuple(ops),
                         param_shapes=tuple(param_shapes),
                         scope_map=scope_map)
