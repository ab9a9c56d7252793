"""Few-shot benchmark: class folds x support selections, meta models vs baselines."""

from __future__ import annotations

import csv
import io
import logging
import statistics
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .autodiff import Tape, gradient
from .data import load_planetoid
from .episodes import Task, build_meta_test_task, partition_classes
from .errors import ContractError
from .graph import GraphDataset
from .maml import MetaConfig, Progress, meta_test, meta_train, predict
from .models import GCN, SGC, GraphModel, ParamSet

log = logging.getLogger(__name__)

MODELS = ("meta-sgc", "meta-gcn", "sgc", "gcn")
BASELINE_LR = {SGC: 0.2, GCN: 0.01}
BASELINE_EPOCHS = 200


def arch_of(model: str) -> str:
    return model.removeprefix("meta-")


def derive_seed(root: int, *labels) -> int:
    """Seed for one random draw, from the root seed and a path of labels."""
    key = [zlib.crc32(str(label).encode()) for label in labels]
    return int(np.random.SeedSequence(root, spawn_key=key).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    content: str
    cites: str
    dataset: str = "cora"
    models: tuple[str, ...] = ("meta-sgc",)
    k: int = 3
    folds: int = 10
    selections: int = 50
    way: int = 2
    order: str | None = None
    alpha1: float | None = None
    alpha2: float | None = None
    batch: int | None = None
    iters: int | None = None
    inner_steps: int | None = None
    query_size: int | None = None
    hidden: int = 16
    hops: int = 2
    baseline_epochs: int = BASELINE_EPOCHS
    baseline_lr: float | None = None
    seed: int = 0
    out: str | None = None
    format: str = "csv"

    def __post_init__(self) -> None:
        if isinstance(self.models, str):
            self.models = tuple(m.strip() for m in self.models.split(",") if m.strip())
        unknown = [m for m in self.models if m not in MODELS]
        if unknown or not self.models:
            raise ContractError(f"unknown model(s) {unknown}; choose from {MODELS}")
        if self.folds < 1 or self.selections < 1:
            raise ContractError("folds and selections must be at least 1")
        if self.format not in ("csv", "markdown"):
            raise ContractError("format must be 'csv' or 'markdown'")

    def meta_config(self, arch: str, seed: int) -> MetaConfig:
        overrides = {
            "order": self.order, "alpha1": self.alpha1, "alpha2": self.alpha2,
            "batch_size": self.batch, "meta_iterations": self.iters,
            "inner_steps": self.inner_steps, "query_size": self.query_size,
        }
        return MetaConfig.for_arch(arch, k=self.k, seed=seed,
                                   **{k: v for k, v in overrides.items() if v is not None})


@dataclass(frozen=True)
class Cell:
    fold: int
    selection: int
    model: str
    k: int
    accuracy: float


@dataclass
class ResultsTable:
    dataset: str = ""
    k: int = 0
    cells: list[Cell] = field(default_factory=list)
    failure: str | None = None

    def models(self) -> list[str]:
        return list(dict.fromkeys(c.model for c in self.cells))

    def accuracies(self, model: str) -> list[float]:
        return [c.accuracy for c in self.cells if c.model == model]

    def aggregate(self, model: str) -> tuple[float, float, int]:
        """Mean, population standard deviation and count of a model's cells."""
        accs = self.accuracies(model)
        if not accs:
            return float("nan"), float("nan"), 0
        return statistics.fmean(accs), statistics.pstdev(accs), len(accs)

    def canonical(self) -> ResultsTable:
        order = {m: i for i, m in enumerate(MODELS)}
        cells = sorted(self.cells, key=lambda c: (order.get(c.model, 99), c.fold, c.selection))
        return ResultsTable(self.dataset, self.k, cells, self.failure)


def micro_f1(predictions, labels) -> float:
    """Micro-averaged F1 from true/false positives and negatives pooled over classes."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ContractError("predictions and labels differ in length")
    if predictions.size == 0:
        raise ContractError("micro_f1 of an empty prediction set")
    tp = fp = fn = 0
    for c in np.union1d(predictions, labels):
        hit = predictions == c
        true = labels == c
        tp += int(np.sum(hit & true))
        fp += int(np.sum(hit & ~true))
        fn += int(np.sum(~hit & true))
    return 2 * tp / (2 * tp + fp + fn)


def baseline_train(model: GraphModel, task: Task, seed: int,
                   epochs: int = BASELINE_EPOCHS, lr: float | None = None) -> ParamSet:
    """Train from Glorot init by full-batch gradient descent on the task support."""
    lr = BASELINE_LR[model.arch] if lr is None else lr
    theta = model.init_params(task.way, seed=seed)
    weights = list(theta.weights)
    for _ in range(epochs):
        tape = Tape()
        ids = [tape.parameter(w) for w in weights]
        grads = gradient(tape, model.loss(tape, ids, task.support), ids)
        weights = [w - lr * tape.value(g) for w, g in zip(weights, grads)]
    return theta.replace(weights)


def evaluate(model: GraphModel, theta: ParamSet, task: Task) -> tuple[np.ndarray, float]:
    """Predict the task's query nodes with fixed weights."""
    tape = Tape()
    ids = [tape.parameter(w) for w in theta.weights]
    predictions = predict(tape.value(model.log_probs(tape, ids, task.query_nodes)))
    return predictions, float(np.mean(predictions == task.query_labels))


def run_experiment(config: ExperimentConfig, dataset: GraphDataset | None = None,
                   sink: Callable[[str, int, Progress], None] | None = None) -> ResultsTable:
    """Run every (fold, selection) for every configured model.

    Each fold holds out ``config.way`` classes. Meta models are meta-trained
    once per fold and fine-tuned per selection; baselines train from
    scratch on each selection's support. All models in a run share the same
    meta-test tasks. On failure the partial table is written (if an output
    path is set) with a failure marker and the error re-raised.
    """
    if dataset is None:
        dataset = load_planetoid(config.content, config.cites, name=config.dataset)
    table = ResultsTable(config.dataset, config.k)
    graph_models = {}
    try:
        for arch in dict.fromkeys(arch_of(m) for m in config.models):
            graph_models[arch] = GraphModel.from_dataset(arch, dataset, hidden=config.hidden,
                                                         hops=config.hops)
        for fold in range(config.folds):
            split = partition_classes(dataset, config.way, derive_seed(config.seed, "fold", fold))
            tasks = [build_meta_test_task(dataset, split, config.k,
                                          derive_seed(config.seed, fold, sel, "support"))
                     for sel in range(config.selections)]
            for name in config.models:
                arch = arch_of(name)
                model = graph_models[arch]
                if name.startswith("meta-"):
                    meta = config.meta_config(arch, derive_seed(config.seed, fold, name, "meta"))
                    progress = None if sink is None else (lambda p, n=name, f=fold: sink(n, f, p))
                    theta = meta_train(model, dataset, split, meta, sink=progress)
                    for sel, task in enumerate(tasks):
                        _, acc = meta_test(model, theta, task, meta.alpha1, meta.inner_steps)
                        table.cells.append(Cell(fold, sel, name, config.k, acc))
                else:
                    for sel, task in enumerate(tasks):
                        theta = baseline_train(
                            model, task, derive_seed(config.seed, fold, sel, name, "init"),
                            epochs=config.baseline_epochs, lr=config.baseline_lr)
                        _, acc = evaluate(model, theta, task)
                        table.cells.append(Cell(fold, sel, name, config.k, acc))
                log.info("fold %d %s mean accuracy %.4f", fold, name,
                         np.mean([c.accuracy for c in table.cells
                                  if c.fold == fold and c.model == name]))
    except Exception as exc:
        table = table.canonical()
        table.failure = f"{type(exc).__name__}: {exc}"
        if config.out:
            emit_results(table, config.out, config.format)
        raise
    table = table.canonical()
    if config.out:
        emit_results(table, config.out, config.format)
    return table


CSV_HEADER = ("fold", "selection", "model", "K", "accuracy")


def format_csv(table: ResultsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for c in table.cells:
        w.writerow((c.fold, c.selection, c.model, c.k, repr(c.accuracy)))
    for model in table.models():
        mean, std, count = table.aggregate(model)
        w.writerow(("mean", "", model, table.k, repr(mean)))
        w.writerow(("std", "", model, table.k, repr(std)))
        w.writerow(("count", "", model, table.k, count))
    if table.failure:
        w.writerow(("failed", "", "", table.k, table.failure))
    return buf.getvalue()


def parse_csv(text: str) -> tuple[list[Cell], dict[str, dict[str, float]]]:
    """Read back data rows and the per-model aggregate footer of :func:`format_csv`."""
    cells, footer = [], {}
    rows = csv.reader(io.StringIO(text))
    next(rows)
    for fold, sel, model, k, value in rows:
        if fold in ("mean", "std", "count"):
            footer.setdefault(model, {})[fold] = float(value)
        elif fold != "failed":
            cells.append(Cell(int(fold), int(sel), model, int(k), float(value)))
    return cells, footer


def format_markdown(table: ResultsTable) -> str:
    title = f"{table.dataset or 'dataset'} {table.k}-shot"
    lines = [f"| Model | {title} |", "|---|---|"]
    for model in table.models():
        mean, std, count = table.aggregate(model)
        lines.append(f"| {model} | {100 * mean:.2f}% ± {100 * std:.2f}% (n={count}) |")
    if table.failure:
        lines.append("")
        lines.append(f"**FAILED:** {table.failure}")
    return "\n".join(lines) + "\n"


def emit_results(table: ResultsTable, path: str | Path, fmt: str = "csv") -> None:
    if fmt == "csv":
        text = format_csv(table)
    elif fmt == "markdown":
        text = format_markdown(table)
    else:
        raise ContractError(f"unknown format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")


def paired_advantage(table: ResultsTable, meta: str, baseline: str) -> float:
    """Mean accuracy gap between two models over their shared (fold, selection) cells."""
    a = {(c.fold, c.selection): c.accuracy for c in table.cells if c.model == meta}
    b = {(c.fold, c.selection): c.accuracy for c in table.cells if c.model == baseline}
    shared = sorted(a.keys() & b.keys())
    if not shared:
        raise ContractError(f"{meta} and {baseline} share no cells")
    return float(np.mean([a[key] - b[key] for key in shared]))
