"""Sparse undirected graph storage.

A :class:`Graph` is an immutable CSR adjacency structure: symmetric, no
self-loops, no duplicate edges, column indices strictly increasing within
each row.  Directed or duplicated input edges are symmetrized and merged
at construction; self-loops in the input are dropped (whether a kernel
adds self-weight is a kernel-level decision).
"""

from __future__ import annotations

import numpy as np

from graphstack.errors import FileParseError, IntegrityError


class Graph:
    """Immutable sparse undirected graph with per-node degrees."""

    __slots__ = ("num_nodes", "indptr", "indices", "degrees")

    def __init__(self, num_nodes: int, indptr, indices):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if indptr.shape != (num_nodes + 1,):
            raise IntegrityError("indptr length must be num_nodes + 1")
        if indptr[0] != 0 or indptr[-1] != indices.shape[0]:
            raise IntegrityError("indptr does not span the index array")
        self.num_nodes = int(num_nodes)
        self.indptr = indptr
        self.indices = indices
        self.degrees = np.diff(indptr).astype(np.int64)
        for arr in (self.indptr, self.indices, self.degrees):
            arr.setflags(write=False)
        self._validate()

    def _validate(self):
        n = self.num_nodes
        idx = self.indices
        if idx.size == 0:
            return
        if idx.min() < 0 or idx.max() >= n:
            raise IntegrityError("column index out of range")
        rows = np.repeat(np.arange(n, dtype=np.int64), self.degrees)
        if np.any(rows == idx):
            raise IntegrityError("self-loop stored")
        same_row = rows[1:] == rows[:-1]
        if np.any(idx[1:][same_row] <= idx[:-1][same_row]):
            raise IntegrityError("column indices not strictly increasing")
        # symmetry: the transposed pair list, re-sorted, must match
        order = np.lexsort((rows, idx))
        if not (np.array_equal(idx[order], rows)
                and np.array_equal(rows[order], idx)):
            raise IntegrityError("adjacency is not symmetric")

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return int(self.indices.shape[0] // 2)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    @classmethod
    def from_edges(cls, num_nodes: int, edges) -> "Graph":
        """Build from an iterable of (u, v) pairs.

        Input pairs may be directed and may repeat; the result is the
        symmetrized simple graph.
        """
        pairs = np.asarray(list(edges), dtype=np.int64)
        if pairs.size == 0:
            return cls(num_nodes, np.zeros(num_nodes + 1, dtype=np.int64),
                       np.zeros(0, dtype=np.int64))
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise IntegrityError("edges must be (u, v) pairs")
        if pairs.min() < 0 or pairs.max() >= num_nodes:
            bad = pairs[(pairs < 0) | (pairs >= num_nodes)]
            raise IntegrityError(
                f"edge endpoints out of range [0, {num_nodes}): "
                f"{sorted(set(bad.tolist()))[:10]}")
        u = np.concatenate([pairs[:, 0], pairs[:, 1]])
        v = np.concatenate([pairs[:, 1], pairs[:, 0]])
        keep = u != v
        u, v = u[keep], v[keep]
        if u.size == 0:
            return cls(num_nodes, np.zeros(num_nodes + 1, dtype=np.int64),
                       np.zeros(0, dtype=np.int64))
        # sort by (row, col), then drop duplicates
        order = np.lexsort((v, u))
        u, v = u[order], v[order]
        first = np.ones(u.shape[0], dtype=bool)
        first[1:] = (u[1:] != u[:-1]) | (v[1:] != v[:-1])
        u, v = u[first], v[first]
        counts = np.bincount(u, minlength=num_nodes)
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(num_nodes, indptr, v)

    def edge_pairs(self) -> np.ndarray:
        """All stored (u, v) pairs with u < v, sorted."""
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64),
                         self.degrees)
        mask = rows < self.indices
        return np.stack([rows[mask], self.indices[mask]], axis=1)


def read_edge_list(path, num_nodes: int | None = None) -> Graph:
    """Parse a plain-text edge list: one ``u v`` pair per line.

    Whitespace separated, 0-based integer ids, ``#`` starts a comment
    line.  When ``num_nodes`` is omitted it is inferred as max id + 1.
    """
    pairs = []
    max_id = -1
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FileParseError(
                    f"expected 'u v', got {line!r}", path=path, line=lineno)
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise FileParseError(
                    f"non-integer node id in {line!r}", path=path,
                    line=lineno) from None
            if a < 0 or b < 0:
                raise FileParseError(
                    "negative node id", path=path, line=lineno)
            pairs.append((a, b))
            max_id = max(max_id, a, b)
    if num_nodes is None:
        num_nodes = max_id + 1
    return Graph.from_edges(num_nodes, pairs)


def write_edge_list(graph: Graph, path) -> None:
    """Write each undirected edge once as ``u v``."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edge_pairs():
            fh.write(f"{u} {v}\n")
