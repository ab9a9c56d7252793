"""Differentiable node classifiers: SGC and two-layer GCN.

Both produce row-wise log-probabilities for a chosen set of nodes and are
recorded on an autodiff tape so the meta-learner can differentiate through
them (including through an inner gradient step).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .autodiff import Tape
from .errors import ContractError, DimensionError
from .graph import GraphDataset, SparseMatrix, propagate_features

SGC = "sgc"
GCN = "gcn"
ARCHS = (SGC, GCN)


class Dims(NamedTuple):
    features: int
    hidden: int
    classes: int


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Model weights: ``[d x c]`` for SGC, ``[d x h, h x c]`` for GCN."""

    arch: str
    weights: tuple[np.ndarray, ...]
    dims: Dims

    def __post_init__(self) -> None:
        expected = weight_shapes(self.arch, self.dims)
        got = [w.shape for w in self.weights]
        if got != expected:
            raise DimensionError(f"{self.arch} weights {got} do not match dims {expected}")
        for w in self.weights:
            w.setflags(write=False)

    @property
    def size(self) -> int:
        return sum(w.size for w in self.weights)

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights])

    def with_flat(self, vector) -> ParamSet:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise DimensionError(f"flat vector of shape {vector.shape}, expected ({self.size},)")
        out, start = [], 0
        for w in self.weights:
            out.append(vector[start:start + w.size].reshape(w.shape).copy())
            start += w.size
        return ParamSet(self.arch, tuple(out), self.dims)

    def replace(self, weights: Sequence[np.ndarray]) -> ParamSet:
        return ParamSet(self.arch, tuple(np.array(w, dtype=np.float64) for w in weights),
                        self.dims)


def weight_shapes(arch: str, dims: Dims) -> list[tuple[int, int]]:
    d, h, c = dims
    if arch == SGC:
        return [(d, c)]
    if arch == GCN:
        return [(d, h), (h, c)]
    raise ContractError(f"unknown architecture {arch!r}; expected one of {ARCHS}")


def init_params(arch: str, dims: Dims, seed: int) -> ParamSet:
    """Glorot-uniform weights, deterministic per seed."""
    dims = Dims(*dims)
    shapes = weight_shapes(arch, dims)
    if any(n <= 0 for shape in shapes for n in shape):
        raise ContractError(f"dims must be positive, got {tuple(dims)}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in shapes:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    return ParamSet(arch, tuple(weights), dims)


def forward(tape: Tape, arch: str, weight_ids: Sequence[int], inputs,
            adj: SparseMatrix | None, node_ids) -> int:
    """Log-softmax outputs for ``node_ids``, recorded on ``tape``.

    For SGC, ``inputs`` is the precomputed ``adj^L X`` (dense) and ``adj`` is
    unused. For GCN, ``inputs`` is ``X`` (dense array or SparseMatrix) and the
    output is ``log_softmax(adj relu(adj X W1) W2)``. Only the selected rows of
    the last propagation are computed.
    """
    node_ids = np.asarray(node_ids, dtype=np.intp)
    n = inputs.shape[0]
    if node_ids.size and (node_ids.min() < 0 or node_ids.max() >= n):
        raise IndexError(f"node id out of range for {n} nodes")
    if arch == SGC:
        (w,) = weight_ids
        rows = tape.constant(np.asarray(inputs)[node_ids])
        return tape.log_softmax(tape.matmul(rows, w))
    if arch == GCN:
        w1, w2 = weight_ids
        if isinstance(inputs, SparseMatrix):
            xw = tape.spmm(inputs, w1)
        else:
            xw = tape.matmul(tape.constant(inputs), w1)
        hidden = tape.relu(tape.spmm(adj, xw))
        out = tape.spmm(adj.select_rows(node_ids), tape.matmul(hidden, w2))
        return tape.log_softmax(out)
    raise ContractError(f"unknown architecture {arch!r}")


def cross_entropy_loss(tape: Tape, log_probs: int, labels) -> int:
    """Mean negative log-likelihood of ``labels`` under row log-probabilities."""
    labels = np.asarray(labels, dtype=np.intp)
    rows, c = tape.shape(log_probs)
    if labels.shape != (rows,):
        raise ContractError(f"{labels.shape[0] if labels.ndim else 0} labels for {rows} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ContractError(f"labels must lie in [0, {c})")
    return tape.nll_mean(log_probs, labels)


class GraphModel:
    """An architecture bound to one graph's prepared inputs.

    This is the ``f_theta`` the meta-learner adapts: it knows how to build
    a loss and log-probabilities on a tape from weight nodes.
    """

    def __init__(self, arch: str, inputs, adj: SparseMatrix | None,
                 hidden: int = 16, hops: int = 2) -> None:
        if arch not in ARCHS:
            raise ContractError(f"unknown architecture {arch!r}")
        self.arch = arch
        self.inputs = inputs
        self.adj = adj
        self.hidden = hidden
        self.hops = hops

    @classmethod
    def from_dataset(cls, arch: str, dataset: GraphDataset, hidden: int = 16,
                     hops: int = 2) -> GraphModel:
        adj = dataset.normalized_adjacency
        if arch == SGC:
            inputs = propagate_features(adj, dataset.features, hops)
        else:
            x = dataset.features
            # bag-of-words features are very sparse; spmm beats a dense product
            dense_fraction = np.count_nonzero(x) / max(x.size, 1)
            inputs = SparseMatrix.from_dense(x) if dense_fraction < 0.25 else x
        return cls(arch, inputs, adj, hidden=hidden, hops=hops)

    @property
    def num_nodes(self) -> int:
        return int(self.inputs.shape[0])

    def dims(self, classes: int) -> Dims:
        return Dims(int(self.inputs.shape[1]), self.hidden if self.arch == GCN else 0, classes)

    def init_params(self, classes: int, seed: int) -> ParamSet:
        return init_params(self.arch, self.dims(classes), seed)

    def log_probs(self, tape: Tape, weight_ids: Sequence[int], node_ids) -> int:
        return forward(tape, self.arch, weight_ids, self.inputs, self.adj, node_ids)

    def loss(self, tape: Tape, weight_ids: Sequence[int], examples) -> int:
        """Cross-entropy over ``examples``, a sequence of (node id, local label)."""
        nodes, labels = split_examples(examples)
        return cross_entropy_loss(tape, self.log_probs(tape, weight_ids, nodes), labels)


def split_examples(examples) -> tuple[np.ndarray, np.ndarray]:
    pairs = np.asarray(examples, dtype=np.intp).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]
