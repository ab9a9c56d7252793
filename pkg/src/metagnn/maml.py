"""MAML over graph classifiers: inner adaptation, meta-update, training, testing.

A *model* here is anything with

* ``loss(tape, weight_ids, examples) -> node id`` (scalar), and
* ``log_probs(tape, weight_ids, node_ids) -> node id`` (for meta-testing),

such as :class:`metagnn.models.GraphModel`. Weights travel as
:class:`metagnn.models.ParamSet` snapshots between steps and are put on a
fresh tape per task.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .autodiff import Tape, gradient
from .episodes import ClassSplit, Task, sample_task
from .errors import ContractError, NumericError
from .graph import GraphDataset
from .models import GCN, SGC, ParamSet

FIRST = "first"
SECOND = "second"

# learning rates used for Cora/Citeseer
DEFAULT_RATES = {SGC: (0.5, 0.003), GCN: (0.1, 0.001)}


@dataclass(frozen=True)
class MetaConfig:
    alpha1: float
    alpha2: float
    inner_steps: int = 1
    batch_size: int = 5
    meta_iterations: int = 500
    order: str = SECOND
    k: int = 3
    query_size: int | None = None  # per task; None means 20 x way
    arch: str = SGC
    seed: int = 0
    reduction: str = "mean"  # how per-task query losses combine: "mean" or "sum"

    def __post_init__(self) -> None:
        # alpha1 == 0 is allowed: it degenerates MAML to plain SGD on query losses
        if self.alpha1 < 0 or not self.alpha2 > 0:
            raise ContractError("alpha1 must be nonnegative and alpha2 positive")
        if self.inner_steps < 1 or self.batch_size < 1:
            raise ContractError("inner_steps and batch_size must be at least 1")
        if self.meta_iterations < 0:
            raise ContractError("meta_iterations must be nonnegative")
        if self.order not in (FIRST, SECOND):
            raise ContractError(f"order must be {FIRST!r} or {SECOND!r}")
        if self.reduction not in ("mean", "sum"):
            raise ContractError("reduction must be 'mean' or 'sum'")

    @classmethod
    def for_arch(cls, arch: str, **overrides) -> MetaConfig:
        alpha1, alpha2 = DEFAULT_RATES[arch]
        return cls(**{"alpha1": alpha1, "alpha2": alpha2, "arch": arch, **overrides})

    def query_size_for(self, way: int) -> int:
        return 20 * way if self.query_size is None else self.query_size


@dataclass(frozen=True, eq=False)
class AdaptedParams:
    """Task-specific weights as nodes on ``tape`` plus a value snapshot."""

    tape: Tape
    weight_ids: tuple[int, ...]
    params: ParamSet
    base_id: int
    task_id: int | None
    steps: int = field(default=0)


class Progress(NamedTuple):
    iteration: int
    query_loss: float
    wall_time: float

    def line(self) -> str:
        return f"iter={self.iteration} query_loss={self.query_loss!r} wall={self.wall_time:.3f}"


def inner_adapt(model, theta: ParamSet, support, alpha1: float, steps: int,
                tape: Tape | None = None, weight_ids: Sequence[int] | None = None,
                create_graph: bool = False, task_id: int | None = None) -> AdaptedParams:
    """Gradient descent on the support loss, ``steps`` full-batch updates.

    ``weight_ids`` may point at existing nodes for ``theta`` on ``tape``;
    otherwise they are added as parameters. With ``create_graph`` the
    adapted weights stay differentiable with respect to those nodes.
    """
    if steps < 1:
        raise ContractError("steps must be at least 1")
    tape = Tape() if tape is None else tape
    if weight_ids is None:
        weight_ids = [tape.parameter(w) for w in theta.weights]
    ids = list(weight_ids)
    for step in range(steps):
        try:
            loss = model.loss(tape, ids, support)
            grads = gradient(tape, loss, ids, create_graph=create_graph)
            ids = [tape.subtract(w, tape.scalar_multiply(g, alpha1)) for w, g in zip(ids, grads)]
        except NumericError as exc:
            raise NumericError(f"inner step {step}: {exc}") from exc
    params = theta.replace([tape.value(w) for w in ids])
    return AdaptedParams(tape, tuple(ids), params, id(theta), task_id, steps)


def meta_gradient(model, theta: ParamSet, task: Task, config: MetaConfig
                  ) -> tuple[list[np.ndarray], float]:
    """Gradient of one task's post-adaptation query loss w.r.t. ``theta``."""
    tape = Tape()
    base = [tape.parameter(w) for w in theta.weights]
    adapted = inner_adapt(model, theta, task.support, config.alpha1, config.inner_steps,
                          tape=tape, weight_ids=base, create_graph=config.order == SECOND)
    query_loss = model.loss(tape, adapted.weight_ids, task.query)
    grads = gradient(tape, query_loss, base)
    return [tape.value(g) for g in grads], float(tape.value(query_loss)[0, 0])


def meta_step(model, theta: ParamSet, tasks: Sequence[Task], config: MetaConfig
              ) -> tuple[ParamSet, float]:
    """One meta-update: adapt per task, pool query losses, step ``theta``.

    Returns the new parameters and the mean query loss of the batch.
    """
    if not tasks:
        raise ContractError("meta_step needs at least one task")
    total = [np.zeros_like(w) for w in theta.weights]
    losses = []
    for task in tasks:
        grads, loss = meta_gradient(model, theta, task, config)
        total = [t + g for t, g in zip(total, grads)]
        losses.append(loss)
    scale = 1.0 / len(tasks) if config.reduction == "mean" else 1.0
    new = []
    for w, g in zip(theta.weights, total):
        updated = w - config.alpha2 * (g * scale)
        if not np.isfinite(updated).all():
            raise NumericError("non-finite meta-update")
        new.append(updated)
    return theta.replace(new), float(np.mean(losses))


def meta_train(model, dataset: GraphDataset, split: ClassSplit, config: MetaConfig,
               sink: Callable[[Progress], None] | None = None,
               theta: ParamSet | None = None) -> ParamSet:
    """Run ``config.meta_iterations`` meta-steps over freshly sampled task batches."""
    rng = np.random.default_rng([config.seed, 1])
    if theta is None:
        theta = model.init_params(split.way, seed=config.seed)
    query_size = config.query_size_for(split.way)
    start = time.perf_counter()
    for it in range(config.meta_iterations):
        tasks = [sample_task(dataset, split, config.k, query_size, rng)
                 for _ in range(config.batch_size)]
        try:
            theta, loss = meta_step(model, theta, tasks, config)
        except NumericError as exc:
            raise NumericError(f"meta-iteration {it}: {exc}") from exc
        if sink is not None:
            sink(Progress(it, loss, time.perf_counter() - start))
    return theta


def predict(log_probs: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class id."""
    return np.argmax(np.asarray(log_probs), axis=1)


def meta_test(model, theta: ParamSet, task: Task, alpha1: float, steps: int
              ) -> tuple[np.ndarray, float]:
    """Fine-tune on the task's support, then classify its query nodes."""
    adapted = inner_adapt(model, theta, task.support, alpha1, steps)
    tape = adapted.tape
    out = model.log_probs(tape, adapted.weight_ids, task.query_nodes)
    predictions = predict(tape.value(out))
    labels = task.query_labels
    accuracy = float(np.mean(predictions == labels)) if labels.size else 0.0
    return predictions, accuracy


def with_overrides(config: MetaConfig, **overrides) -> MetaConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
