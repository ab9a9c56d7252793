"""Few-shot node classification with MAML-trained graph neural networks."""

from .autodiff import Tape, finite_difference_check, gradient
from .bench import ExperimentConfig, ResultsTable, baseline_train, micro_f1, run_experiment
from .data import encode_labels, load_planetoid, row_normalize_features
from .episodes import ClassSplit, Task, build_meta_test_task, partition_classes, sample_task
from .graph import (GraphDataset, SparseMatrix, build_adjacency, normalize_adjacency,
                    propagate_features)
from .maml import MetaConfig, inner_adapt, meta_step, meta_test, meta_train
from .models import GCN, SGC, Dims, GraphModel, ParamSet, cross_entropy_loss, forward, init_params

__all__ = [
    "Tape", "gradient", "finite_difference_check",
    "SparseMatrix", "GraphDataset", "build_adjacency", "normalize_adjacency",
    "propagate_features",
    "SGC", "GCN", "Dims", "ParamSet", "GraphModel", "init_params", "forward",
    "cross_entropy_loss",
    "ClassSplit", "Task", "partition_classes", "sample_task", "build_meta_test_task",
    "MetaConfig", "inner_adapt", "meta_step", "meta_train", "meta_test",
    "load_planetoid", "row_normalize_features", "encode_labels",
    "ExperimentConfig", "ResultsTable", "run_experiment", "baseline_train", "micro_f1",
]
