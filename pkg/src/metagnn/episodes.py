"""Class partitioning and episodic task sampling for few-shot node classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SamplingError
from .graph import GraphDataset

MAX_RESAMPLES = 100


@dataclass(frozen=True)
class ClassSplit:
    train_classes: tuple[int, ...]
    test_classes: tuple[int, ...]

    def __post_init__(self) -> None:
        if set(self.train_classes) & set(self.test_classes):
            raise ContractError("train and test classes overlap")

    @property
    def way(self) -> int:
        return len(self.test_classes)


@dataclass(frozen=True)
class Task:
    """One episode. Labels in ``support``/``query`` are local ids in [0, way)."""

    classes: tuple[int, ...]
    support: tuple[tuple[int, int], ...]
    query: tuple[tuple[int, int], ...]

    @property
    def local_map(self) -> dict[int, int]:
        return {c: i for i, c in enumerate(self.classes)}

    @property
    def way(self) -> int:
        return len(self.classes)

    @property
    def support_nodes(self) -> np.ndarray:
        return np.array([v for v, _ in self.support], dtype=np.intp)

    @property
    def query_nodes(self) -> np.ndarray:
        return np.array([v for v, _ in self.query], dtype=np.intp)

    @property
    def query_labels(self) -> np.ndarray:
        return np.array([y for _, y in self.query], dtype=np.intp)


def partition_classes(dataset: GraphDataset, c2_size: int, fold_seed) -> ClassSplit:
    """Hold out ``c2_size`` random classes for meta-testing; the rest train."""
    n_classes = dataset.num_classes
    if not 0 < c2_size < n_classes:
        raise ContractError(f"c2_size must be in [1, {n_classes}), got {c2_size}")
    rng = np.random.default_rng(fold_seed)
    test = sorted(int(c) for c in rng.choice(n_classes, size=c2_size, replace=False))
    train = [c for c in range(n_classes) if c not in test]
    return ClassSplit(tuple(train), tuple(test))


def _labelled(nodes, classes, dataset: GraphDataset) -> tuple[tuple[int, int], ...]:
    local = {c: i for i, c in enumerate(classes)}
    return tuple((int(v), local[int(dataset.labels[v])]) for v in nodes)


def sample_task(dataset: GraphDataset, split: ClassSplit, k: int, query_size: int,
                rng: np.random.Generator) -> Task:
    """Draw one meta-training episode from the training classes.

    Picks ``split.way`` classes, ``k`` support nodes per class, then
    ``query_size`` query nodes uniformly from the rest of those classes.
    Class combinations too small for the request are redrawn.
    """
    way = split.way
    if len(split.train_classes) < way:
        raise ContractError(
            f"need {way} training classes per task, only {len(split.train_classes)} exist")
    for _ in range(MAX_RESAMPLES):
        classes = tuple(sorted(int(c) for c in rng.choice(split.train_classes, size=way,
                                                          replace=False)))
        pools = [dataset.nodes_of_class(c) for c in classes]
        if any(len(p) < k for p in pools) or sum(len(p) for p in pools) - k * way < query_size:
            continue
        support = np.concatenate([rng.choice(p, size=k, replace=False) for p in pools])
        rest = np.setdiff1d(np.concatenate(pools), support)
        query = rng.choice(rest, size=query_size, replace=False)
        return Task(classes, _labelled(support, classes, dataset),
                    _labelled(query, classes, dataset))
    raise SamplingError(
        f"no {way}-class combination of {split.train_classes} has {k} support nodes per "
        f"class and {query_size} query nodes left after {MAX_RESAMPLES} draws")


def build_meta_test_task(dataset: GraphDataset, split: ClassSplit, k: int,
                         selection_seed) -> Task:
    """``k`` support nodes per held-out class; every other held-out node is queried."""
    classes = split.test_classes
    pools = [dataset.nodes_of_class(c) for c in classes]
    small = [c for c, p in zip(classes, pools) if len(p) < k]
    if small:
        raise SamplingError(f"test classes {small} have fewer than {k} nodes")
    rng = np.random.default_rng(selection_seed)
    support = np.concatenate([rng.choice(p, size=k, replace=False) for p in pools])
    query = np.setdiff1d(np.concatenate(pools), support)
    return Task(tuple(classes), _labelled(support, classes, dataset),
                _labelled(query, classes, dataset))
