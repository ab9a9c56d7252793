"""Reverse-mode automatic differentiation on a dynamic tape.

Every value is a 2-D float64 array (scalars are 1x1). Operations are
evaluated eagerly and appended to a :class:`Tape`; :func:`gradient` walks the
tape backwards. With ``create_graph=True`` the backward pass is itself
recorded on the tape, so gradients can be differentiated again. This is what
makes the exact second-order MAML meta-gradient possible.

The backward rules are written once against a tiny operator interface and
run either on raw arrays (:class:`_ArrayOps`, first-order and cheap) or on
tape nodes (:class:`_TapeOps`, differentiable).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NumericError

# Kinds with no parents.
LEAF_KINDS = frozenset({"constant", "parameter"})

OP_KINDS = frozenset({
    "constant", "parameter", "add", "subtract", "scalar_multiply", "matmul",
    "spmm", "relu", "log_softmax", "nll_mean", "elementwise_multiply",
    # used by backward rules, available to callers as well
    "transpose", "exp", "sum", "row_sum", "row_scale", "scale_by",
    "gather_rows", "scatter_rows",
})


@dataclass(frozen=True, eq=False)
class Node:
    kind: str
    parents: tuple[int, ...]
    value: np.ndarray
    payload: Any = None


def _as_matrix(x) -> np.ndarray:
    arr = np.array(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"values must be at most 2-D, got shape {arr.shape}")
    return arr


def _same_shape(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} differ")


def _log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _forward(kind: str, vals: list[np.ndarray], payload) -> np.ndarray:
    if kind in ("add", "subtract", "elementwise_multiply"):
        a, b = vals
        _same_shape(kind, a, b)
        if kind == "add":
            return a + b
        if kind == "subtract":
            return a - b
        return a * b
    if kind == "scalar_multiply":
        return vals[0] * float(payload)
    if kind == "matmul":
        a, b = vals
        if a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        return a @ b
    if kind == "spmm":
        (x,) = vals
        if payload.shape[1] != x.shape[0]:
            raise DimensionError(
                f"spmm: shapes {tuple(payload.shape)} and {x.shape} do not conform")
        return np.asarray(payload.dot(x), dtype=np.float64)
    if kind == "relu":
        return np.maximum(vals[0], 0.0)
    if kind == "log_softmax":
        return _log_softmax(vals[0])
    if kind == "nll_mean":
        (x,) = vals
        labels = payload
        if labels.shape != (x.shape[0],):
            raise DimensionError(
                f"nll_mean: shapes {x.shape} and labels {labels.shape} do not conform")
        return np.array([[-x[np.arange(x.shape[0]), labels].mean()]])
    if kind == "transpose":
        return vals[0].T.copy()
    if kind == "exp":
        return np.exp(vals[0])
    if kind == "sum":
        return np.array([[vals[0].sum()]])
    if kind == "row_sum":
        return vals[0].sum(axis=1, keepdims=True)
    if kind == "row_scale":
        m, v = vals
        if v.shape != (m.shape[0], 1):
            raise DimensionError(f"row_scale: shapes {m.shape} and {v.shape} do not conform")
        return m * v
    if kind == "scale_by":
        m, s = vals
        if s.shape != (1, 1):
            raise DimensionError(f"scale_by: shapes {m.shape} and {s.shape} do not conform")
        return m * s[0, 0]
    if kind == "gather_rows":
        return vals[0][payload]
    if kind == "scatter_rows":
        idx, n_rows = payload
        out = np.zeros((n_rows, vals[0].shape[1]))
        np.add.at(out, idx, vals[0])
        return out
    raise ContractError(f"unknown op kind {kind!r}")


class Tape:
    """Append-only record of nodes; node ids are list positions."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def value(self, node: int) -> np.ndarray:
        return self.nodes[node].value

    def shape(self, node: int) -> tuple[int, int]:
        return self.nodes[node].value.shape

    def apply(self, kind: str, parents: Sequence[int] = (), payload=None) -> int:
        if kind not in OP_KINDS:
            raise ContractError(f"unknown op kind {kind!r}")
        parents = tuple(int(p) for p in parents)
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise ContractError(f"{kind}: parent id {p} is not on the tape")
        if kind in LEAF_KINDS:
            value = _as_matrix(payload)
            payload = None
        else:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                value = _forward(kind, [self.nodes[p].value for p in parents], payload)
        if not np.isfinite(value).all():
            raise NumericError(f"{kind}: non-finite result")
        value.setflags(write=False)
        self.nodes.append(Node(kind, parents, value, payload))
        return len(self.nodes) - 1

    # convenience wrappers

    def constant(self, value) -> int:
        return self.apply("constant", (), value)

    def parameter(self, value) -> int:
        return self.apply("parameter", (), value)

    def add(self, a: int, b: int) -> int:
        return self.apply("add", (a, b))

    def subtract(self, a: int, b: int) -> int:
        return self.apply("subtract", (a, b))

    def scalar_multiply(self, a: int, c: float) -> int:
        return self.apply("scalar_multiply", (a,), float(c))

    def elementwise_multiply(self, a: int, b: int) -> int:
        return self.apply("elementwise_multiply", (a, b))

    def matmul(self, a: int, b: int) -> int:
        return self.apply("matmul", (a, b))

    def spmm(self, sparse, x: int) -> int:
        return self.apply("spmm", (x,), sparse)

    def relu(self, a: int) -> int:
        return self.apply("relu", (a,))

    def log_softmax(self, a: int) -> int:
        return self.apply("log_softmax", (a,))

    def nll_mean(self, log_probs: int, labels) -> int:
        return self.apply("nll_mean", (log_probs,), np.asarray(labels, dtype=np.intp))

    def transpose(self, a: int) -> int:
        return self.apply("transpose", (a,))

    def exp(self, a: int) -> int:
        return self.apply("exp", (a,))

    def sum(self, a: int) -> int:
        return self.apply("sum", (a,))

    def row_sum(self, a: int) -> int:
        return self.apply("row_sum", (a,))

    def row_scale(self, m: int, v: int) -> int:
        return self.apply("row_scale", (m, v))

    def scale_by(self, m: int, s: int) -> int:
        return self.apply("scale_by", (m, s))

    def gather_rows(self, a: int, idx) -> int:
        idx = np.asarray(idx, dtype=np.intp)
        n = self.shape(a)[0]
        if idx.size and (idx.min() < -n or idx.max() >= n):
            raise IndexError(f"gather_rows: index out of range for {n} rows")
        return self.apply("gather_rows", (a,), idx)

    def scatter_rows(self, a: int, idx, n_rows: int) -> int:
        return self.apply("scatter_rows", (a,), (np.asarray(idx, dtype=np.intp), int(n_rows)))


class _ArrayOps:
    """Backward-rule operators on plain arrays (nothing recorded)."""

    def const(self, x):
        return x

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def scale(self, a, c):
        return a * c

    def mul(self, a, b):
        return a * b

    def matmul(self, a, b):
        return a @ b

    def transpose(self, a):
        return a.T

    def spmm(self, sparse, x):
        return np.asarray(sparse.dot(x), dtype=np.float64)

    def exp(self, a):
        return np.exp(a)

    def sum(self, a):
        return np.array([[a.sum()]])

    def row_sum(self, a):
        return a.sum(axis=1, keepdims=True)

    def row_scale(self, m, v):
        return m * v

    def scale_by(self, m, s):
        return m * s[0, 0]

    def gather(self, a, idx):
        return a[idx]

    def scatter(self, a, idx, n_rows):
        out = np.zeros((n_rows, a.shape[1]))
        np.add.at(out, idx, a)
        return out


class _TapeOps:
    """Backward-rule operators that record onto a tape."""

    def __init__(self, tape: Tape) -> None:
        self.t = tape

    def const(self, x):
        return self.t.constant(x)

    def add(self, a, b):
        return self.t.add(a, b)

    def sub(self, a, b):
        return self.t.subtract(a, b)

    def scale(self, a, c):
        return self.t.scalar_multiply(a, c)

    def mul(self, a, b):
        return self.t.elementwise_multiply(a, b)

    def matmul(self, a, b):
        return self.t.matmul(a, b)

    def transpose(self, a):
        return self.t.transpose(a)

    def spmm(self, sparse, x):
        return self.t.spmm(sparse, x)

    def exp(self, a):
        return self.t.exp(a)

    def sum(self, a):
        return self.t.sum(a)

    def row_sum(self, a):
        return self.t.row_sum(a)

    def row_scale(self, m, v):
        return self.t.row_scale(m, v)

    def scale_by(self, m, s):
        return self.t.scale_by(m, s)

    def gather(self, a, idx):
        return self.t.apply("gather_rows", (a,), idx)

    def scatter(self, a, idx, n_rows):
        return self.t.scatter_rows(a, idx, n_rows)


def _vjp(ops, node: Node, g, refs, out_ref, need, in_shape):
    """Vector-Jacobian products of one node for each parent flagged in ``need``.

    ``refs`` / ``out_ref`` are arrays or tape ids, matching ``ops``;
    ``in_shape`` is the shape of the first parent's value.
    """
    kind, payload = node.kind, node.payload
    grads = [None] * len(node.parents)
    if kind == "add":
        grads = [g if need[0] else None, g if need[1] else None]
    elif kind == "subtract":
        grads = [g if need[0] else None, ops.scale(g, -1.0) if need[1] else None]
    elif kind == "scalar_multiply":
        grads[0] = ops.scale(g, float(payload))
    elif kind == "elementwise_multiply":
        a, b = refs
        grads = [ops.mul(g, b) if need[0] else None, ops.mul(g, a) if need[1] else None]
    elif kind == "matmul":
        a, b = refs
        if need[0]:
            grads[0] = ops.matmul(g, ops.transpose(b))
        if need[1]:
            grads[1] = ops.matmul(ops.transpose(a), g)
    elif kind == "spmm":
        grads[0] = ops.spmm(payload.transpose(), g)
    elif kind == "relu":
        # derivative of relu is piecewise constant; its own derivative is zero
        grads[0] = ops.mul(g, ops.const((node.value > 0).astype(np.float64)))
    elif kind == "log_softmax":
        softmax = ops.exp(out_ref)
        grads[0] = ops.sub(g, ops.row_scale(softmax, ops.row_sum(g)))
    elif kind == "nll_mean":
        coef = np.zeros(in_shape)
        coef[np.arange(in_shape[0]), payload] = -1.0 / in_shape[0]
        grads[0] = ops.scale_by(ops.const(coef), g)
    elif kind == "transpose":
        grads[0] = ops.transpose(g)
    elif kind == "exp":
        grads[0] = ops.mul(g, out_ref)
    elif kind == "sum":
        grads[0] = ops.scale_by(ops.const(np.ones(in_shape)), g)
    elif kind == "row_sum":
        grads[0] = ops.row_scale(ops.const(np.ones(in_shape)), g)
    elif kind == "row_scale":
        m, v = refs
        if need[0]:
            grads[0] = ops.row_scale(g, v)
        if need[1]:
            grads[1] = ops.row_sum(ops.mul(g, m))
    elif kind == "scale_by":
        m, s = refs
        if need[0]:
            grads[0] = ops.scale_by(g, s)
        if need[1]:
            grads[1] = ops.sum(ops.mul(g, m))
    elif kind == "gather_rows":
        grads[0] = ops.scatter(g, payload, in_shape[0])
    elif kind == "scatter_rows":
        grads[0] = ops.gather(g, payload[0])
    else:
        raise ContractError(f"no backward rule for {kind!r}")
    return grads


def gradient(tape: Tape, loss: int, wrt: Sequence[int], create_graph: bool = False) -> list[int]:
    """Gradients of the scalar node ``loss`` with respect to each node in ``wrt``.

    Returns tape node ids. With ``create_graph`` the returned nodes are
    connected to the tape and may be differentiated again; otherwise they
    are detached constants. A ``wrt`` node that ``loss`` does not depend on
    gets a zero matrix.
    """
    if tape.shape(loss) != (1, 1):
        raise ContractError(f"gradient: loss must be scalar, got shape {tape.shape(loss)}")
    wrt = [int(w) for w in wrt]
    for w in wrt:
        if not 0 <= w < len(tape):
            raise ContractError(f"gradient: node {w} is not on the tape")
    nodes = tape.nodes
    wrt_set = set(wrt)
    lo = min(wrt, default=loss + 1)

    # depends[i]: node i is a descendant of (or equal to) some wrt node
    depends = {}
    for i in range(lo, loss + 1):
        depends[i] = i in wrt_set or any(depends.get(p, False) for p in nodes[i].parents)

    ops = _TapeOps(tape) if create_graph else _ArrayOps()
    grads: dict[int, Any] = {}
    if depends.get(loss, False):
        grads[loss] = ops.const(np.ones((1, 1)))
    for i in range(loss, lo - 1, -1):
        g = grads.get(i)
        node = nodes[i]
        if g is None or not node.parents:
            continue
        need = [depends.get(p, False) for p in node.parents]
        if not any(need):
            continue
        if create_graph:
            refs = node.parents
            out_ref = i
        else:
            refs = [nodes[p].value for p in node.parents]
            out_ref = node.value
        in_shape = nodes[node.parents[0]].value.shape
        parent_grads = _vjp(ops, node, g, refs, out_ref, need, in_shape)
        for p, gp, wanted in zip(node.parents, parent_grads, need):
            if not wanted or gp is None:
                continue
            grads[p] = gp if p not in grads else ops.add(grads[p], gp)

    out = []
    for w in wrt:
        g = grads.get(w)
        if g is None:
            out.append(tape.constant(np.zeros(tape.shape(w))))
        elif create_graph:
            out.append(g)
        else:
            out.append(tape.constant(g))
    return out


def finite_difference_check(
    f: Callable[[Tape, list[int]], int],
    weights: Sequence[np.ndarray],
    eps: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f(tape, weight_ids)`` must build a scalar loss on ``tape`` from the
    parameter nodes ``weight_ids`` and return its id. The relative error of
    an entry is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    weights = [np.array(w, dtype=np.float64) for w in weights]

    tape = Tape()
    ids = [tape.parameter(w) for w in weights]
    analytic = [tape.value(g) for g in gradient(tape, f(tape, ids), ids)]

    def evaluate(ws):
        t = Tape()
        return t.value(f(t, [t.parameter(w) for w in ws]))[0, 0]

    worst = 0.0
    for k, w in enumerate(weights):
        for idx in np.ndindex(w.shape):
            plus = [x.copy() for x in weights]
            minus = [x.copy() for x in weights]
            plus[k][idx] += eps
            minus[k][idx] -= eps
            numeric = (evaluate(plus) - evaluate(minus)) / (2 * eps)
            a = analytic[k][idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
