"""Sparse adjacency, GCN renormalization and feature propagation."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix with sorted, duplicate-free columns per row."""

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> SparseMatrix:
        """Build from coordinate triplets; duplicate coordinates are summed."""
        n_rows, n_cols = shape
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise IndexError(f"coordinate out of range for shape {shape}")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if rows.size:
            keys = rows * n_cols + cols
            first = np.concatenate(([True], keys[1:] != keys[:-1]))
            starts = np.flatnonzero(first)
            values = np.add.reduceat(values, starts)
            rows, cols = rows[starts], cols[starts]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=offsets[1:])
        return cls(n_rows, n_cols, offsets, cols, values)

    @classmethod
    def from_dense(cls, dense) -> SparseMatrix:
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def dot(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n_cols:
            raise DimensionError(f"spmm: shapes {self.shape} and {x.shape} do not conform")
        return np.asarray(self._csr @ x)

    @cached_property
    def _transposed(self) -> SparseMatrix:
        return SparseMatrix.from_coo(self.col_indices, self.row_ids(), self.values,
                                     (self.n_cols, self.n_rows))

    def transpose(self) -> SparseMatrix:
        return self._transposed

    def select_rows(self, idx) -> SparseMatrix:
        """Submatrix made of the given rows, in the given order."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_rows):
            raise IndexError(f"row index out of range for {self.n_rows} rows")
        sub = self._csr[idx]
        return SparseMatrix(len(idx), self.n_cols, sub.indptr.astype(np.int64),
                            sub.indices.astype(np.int64), sub.data.astype(np.float64))

    def is_symmetric(self) -> bool:
        t = self.transpose()
        return (self.shape == t.shape
                and np.array_equal(self.row_offsets, t.row_offsets)
                and np.array_equal(self.col_indices, t.col_indices)
                and np.array_equal(self.values, t.values))


@dataclass(frozen=True, eq=False)
class GraphDataset:
    """One citation graph: features X, labels y, undirected edges, label names."""

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    label_names: tuple[str, ...]
    name: str = ""
    _by_class: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise DimensionError(f"labels shape {self.labels.shape} does not match {n} nodes")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise IndexError("edge endpoint out of range")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= len(self.label_names)):
            raise ContractError("label id outside the label-name map")
        if not np.isfinite(self.features).all():
            raise ContractError("feature matrix has non-finite entries")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    def nodes_of_class(self, c: int) -> np.ndarray:
        """Node ids carrying label ``c``, ascending."""
        if c not in self._by_class:
            self._by_class[c] = np.flatnonzero(self.labels == c)
        return self._by_class[c]

    @cached_property
    def adjacency(self) -> SparseMatrix:
        return build_adjacency(self.edges, self.n)

    @cached_property
    def normalized_adjacency(self) -> SparseMatrix:
        return normalize_adjacency(self.adjacency)


def build_adjacency(edges, n: int) -> SparseMatrix:
    """Symmetric binary adjacency; duplicates collapse, self-loops are dropped."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise IndexError(f"edge endpoint out of range for {n} nodes")
    edges = edges[edges[:, 0] != edges[:, 1]]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = SparseMatrix.from_coo(rows, cols, np.ones(rows.size), (n, n))
    # duplicates were summed; binarize
    return SparseMatrix(n, n, adj.row_offsets, adj.col_indices, np.ones(adj.nnz))


def normalize_adjacency(adj: SparseMatrix) -> SparseMatrix:
    """Renormalized operator D^-1/2 (A + I) D^-1/2, with D the degrees of A + I."""
    if adj.n_rows != adj.n_cols:
        raise DimensionError(f"adjacency must be square, got {adj.shape}")
    n = adj.n_rows
    rows = np.concatenate([adj.row_ids(), np.arange(n)])
    cols = np.concatenate([adj.col_indices, np.arange(n)])
    vals = np.concatenate([adj.values, np.ones(n)])
    with_loops = SparseMatrix.from_coo(rows, cols, vals, (n, n))
    degree = np.add.reduceat(with_loops.values, with_loops.row_offsets[:-1]) if n else np.zeros(0)
    inv_sqrt = 1.0 / np.sqrt(degree)
    r = with_loops.row_ids()
    c = with_loops.col_indices
    # product of the two scalings first, so (i, j) and (j, i) round identically
    scaled = with_loops.values * (inv_sqrt[r] * inv_sqrt[c])
    return SparseMatrix(n, n, with_loops.row_offsets, with_loops.col_indices, scaled)


def propagate_features(adj: SparseMatrix, features, hops: int) -> np.ndarray:
    """Apply ``adj`` to ``features`` ``hops`` times."""
    if hops < 0:
        raise ContractError("hop count must be nonnegative")
    h = np.asarray(features, dtype=np.float64)
    if h.ndim != 2 or adj.n_cols != h.shape[0]:
        raise DimensionError(f"propagate: shapes {adj.shape} and {h.shape} do not conform")
    for _ in range(hops):
        h = adj.dot(h)
    return h
