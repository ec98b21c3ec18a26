"""Graph kernels: Laplacians and normalized adjacency operators.

Supported kinds, by the degree/adjacency shorthand used in configs:

==========================  =========  ==========================
kind                        shorthand  action
==========================  =========  ==========================
``combinatorial_laplacian``   L        D - A
``sym_norm_adjacency``        DAD      D^{-1/2} A D^{-1/2}
``row_norm_adjacency``        DA       D^{-1} A
``col_norm_adjacency``        AD       A D^{-1}
``sym_norm_laplacian``        N        I - D^{-1/2} A D^{-1/2}
==========================  =========  ==========================

Degree-0 nodes need a policy for the normalized kinds: ``identity_row``
realizes the row as the unit vector e_i (the operator acts as identity on
that node's value, so smoothing leaves it untouched), ``zero_row`` leaves
the row empty.  The combinatorial Laplacian ignores the policy; its
isolated rows are zero by definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from graphstack.backend import csr_matmat
from graphstack.errors import ConfigError, ShapeError
from graphstack.graph import Graph

KERNEL_KINDS = (
    "combinatorial_laplacian",
    "sym_norm_adjacency",
    "row_norm_adjacency",
    "col_norm_adjacency",
    "sym_norm_laplacian",
)

ISOLATED_POLICIES = ("identity_row", "zero_row")

# config-file shorthand used in kernel-type tables
KIND_ALIASES = {
    "L": "combinatorial_laplacian",
    "DAD": "sym_norm_adjacency",
    "DA": "row_norm_adjacency",
    "AD": "col_norm_adjacency",
    "N": "sym_norm_laplacian",
}


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel to realize and how to treat degree-0 nodes."""

    kind: str = "sym_norm_adjacency"
    isolated_node_policy: str = "identity_row"

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in KERNEL_KINDS:
            raise ConfigError(f"unknown kernel kind {self.kind!r}")
        if self.isolated_node_policy not in ISOLATED_POLICIES:
            raise ConfigError(
                f"unknown isolated_node_policy {self.isolated_node_policy!r}")


class SparseOperator:
    """Realized sparse linear operator over a graph's node set."""

    __slots__ = ("num_nodes", "indptr", "indices", "data", "spec")

    def __init__(self, num_nodes, indptr, indices, data, spec: KernelSpec):
        self.num_nodes = int(num_nodes)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.spec = spec
        for arr in (self.indptr, self.indices, self.data):
            arr.setflags(write=False)

    def apply(self, dense: np.ndarray) -> np.ndarray:
        """Operator-times-matrix with a fixed per-row accumulation order."""
        dense = np.ascontiguousarray(dense, dtype=np.float64)
        squeeze = dense.ndim == 1
        if squeeze:
            dense = dense[:, None]
        if dense.shape[0] != self.num_nodes:
            raise ShapeError(
                f"operator is {self.num_nodes}x{self.num_nodes}, "
                f"operand has {dense.shape[0]} rows")
        out = csr_matmat(self.indptr, self.indices, self.data, dense)
        return out[:, 0] if squeeze else out

    def to_dense(self) -> np.ndarray:
        """Dense copy, for test oracles and small solves."""
        n = self.num_nodes
        out = np.zeros((n, n))
        for i in range(n):
            sl = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[sl]] = self.data[sl]
        return out


def _with_diagonal(graph: Graph, offdiag_data, diag):
    """CSR merge of off-diagonal adjacency entries with diagonal values."""
    n = graph.num_nodes
    keep_diag = diag != 0.0
    counts = graph.degrees + keep_diag
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    nnz = int(indptr[-1])
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=np.float64)
    pos = 0
    for i in range(n):
        row = graph.indices[graph.indptr[i]:graph.indptr[i + 1]]
        vals = offdiag_data[graph.indptr[i]:graph.indptr[i + 1]]
        before = np.searchsorted(row, i)
        if keep_diag[i]:
            indices[pos:pos + before] = row[:before]
            data[pos:pos + before] = vals[:before]
            indices[pos + before] = i
            data[pos + before] = diag[i]
            indices[pos + before + 1:pos + counts[i]] = row[before:]
            data[pos + before + 1:pos + counts[i]] = vals[before:]
        else:
            indices[pos:pos + row.size] = row
            data[pos:pos + row.size] = vals
        pos += counts[i]
    return indptr, indices, data


def build_kernel(graph: Graph, spec: KernelSpec) -> SparseOperator:
    """Realize the requested kernel for ``graph``.

    Deterministic; degree-0 rows follow ``spec.isolated_node_policy``.
    """
    n = graph.num_nodes
    deg = graph.degrees.astype(np.float64)
    rows = np.repeat(np.arange(n, dtype=np.int64), graph.degrees)
    cols = graph.indices
    isolated = graph.degrees == 0
    kind = spec.kind

    if kind == "combinatorial_laplacian":
        offdiag = -np.ones(cols.shape[0])
        diag = deg.copy()
        indptr, indices, data = _with_diagonal(graph, offdiag, diag)
        return SparseOperator(n, indptr, indices, data, spec)

    inv = np.zeros(n)
    np.divide(1.0, deg, out=inv, where=deg > 0)
    inv_sqrt = np.sqrt(inv)
    if kind in ("sym_norm_adjacency", "sym_norm_laplacian"):
        offdiag = inv_sqrt[rows] * inv_sqrt[cols]
    elif kind == "row_norm_adjacency":
        offdiag = inv[rows]
    elif kind == "col_norm_adjacency":
        offdiag = inv[cols]
    else:  # pragma: no cover - guarded by KernelSpec
        raise ConfigError(f"unknown kernel kind {kind!r}")

    if kind == "sym_norm_laplacian":
        # I - S; isolated rows then follow the policy on the full operator
        offdiag = -offdiag
        diag = np.ones(n)
        diag[isolated] = 1.0 if spec.isolated_node_policy == "identity_row" else 0.0
    else:
        diag = np.zeros(n)
        if spec.isolated_node_policy == "identity_row":
            diag[isolated] = 1.0

    indptr, indices, data = _with_diagonal(graph, offdiag, diag)
    return SparseOperator(n, indptr, indices, data, spec)
