import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metagnn import bench
from metagnn.autodiff import Tape
from metagnn.bench import (Cell, ExperimentConfig, ResultsTable, baseline_train, derive_seed,
                           emit_results, format_csv, format_markdown, micro_f1, paired_advantage,
                           parse_csv, run_experiment)
from metagnn.episodes import ClassSplit, build_meta_test_task, partition_classes
from metagnn.errors import ContractError, NumericError
from metagnn.graph import GraphDataset
from metagnn.models import GCN, SGC, GraphModel


def quick(files, **kw):
    base = dict(content=str(files[0]), cites=str(files[1]), dataset="small", folds=2,
                selections=3, iters=3, baseline_epochs=5, query_size=10)
    base.update(kw)
    return ExperimentConfig(**base)


def support_loss(model, theta, task):
    t = Tape()
    return t.value(model.loss(t, [t.parameter(w) for w in theta.weights], task.support))[0, 0]


# micro-F1

def test_micro_f1_examples():
    assert micro_f1([0, 0, 1, 1], [0, 1, 1, 0]) == 0.5
    assert micro_f1([2, 0, 1], [2, 0, 1]) == 1.0


def test_micro_f1_contract():
    with pytest.raises(ContractError):
        micro_f1([], [])
    with pytest.raises(ContractError):
        micro_f1([0, 1], [0])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_micro_f1_equals_accuracy(seed):
    rng = np.random.default_rng(seed)
    n, c = int(rng.integers(1, 200)), int(rng.integers(2, 8))
    preds, labels = rng.integers(0, c, size=n), rng.integers(0, c, size=n)
    assert micro_f1(preds, labels) == np.mean(preds == labels)


# baselines

def test_zero_epoch_baseline_is_the_initialization(small):
    model = GraphModel.from_dataset(SGC, small)
    task = build_meta_test_task(small, ClassSplit((0, 1), (2, 3)), 3, 0)
    theta = baseline_train(model, task, seed=4, epochs=0)
    np.testing.assert_array_equal(theta.weights[0], model.init_params(2, seed=4).weights[0])


@pytest.mark.parametrize("arch", [SGC, GCN])
def test_baseline_reduces_support_loss(small, arch):
    model = GraphModel.from_dataset(arch, small)
    task = build_meta_test_task(small, ClassSplit((0, 1), (2, 3)), 3, 0)
    init = model.init_params(2, seed=1)
    trained = baseline_train(model, task, seed=1)
    assert support_loss(model, trained, task) < support_loss(model, init, task)


def test_baseline_reduces_support_loss_on_cora(cora):
    model = GraphModel.from_dataset(SGC, cora)
    task = build_meta_test_task(cora, partition_classes(cora, 2, 0), 3, 0)
    trained = baseline_train(model, task, seed=1)
    assert support_loss(model, trained, task) < support_loss(model, model.init_params(2, 1), task)


# the experiment loop

def test_config_contract(small_files):
    with pytest.raises(ContractError):
        quick(small_files, models=("gat",))
    with pytest.raises(ContractError):
        quick(small_files, folds=0)
    with pytest.raises(ContractError):
        quick(small_files, selections=0)
    assert quick(small_files, models="meta-sgc, sgc").models == ("meta-sgc", "sgc")


def test_table_has_one_cell_per_fold_selection_model(small_files):
    table = run_experiment(quick(small_files, models=("meta-sgc", "sgc", "meta-gcn", "gcn")))
    for model in ("meta-sgc", "sgc", "meta-gcn", "gcn"):
        mean, _, count = table.aggregate(model)
        assert count == 6 and 0.0 <= mean <= 1.0
    assert table.models() == ["meta-sgc", "meta-gcn", "sgc", "gcn"]


def test_models_share_identical_meta_test_tasks(small_files, monkeypatch):
    seen = {}

    def spy_meta_test(model, theta, task, alpha1, steps):
        seen.setdefault("meta", []).append(task)
        return np.zeros(len(task.query), dtype=int), 0.5

    def spy_evaluate(model, theta, task):
        seen.setdefault(model.arch, []).append(task)
        return np.zeros(len(task.query), dtype=int), 0.5

    monkeypatch.setattr(bench, "meta_test", spy_meta_test)
    monkeypatch.setattr(bench, "evaluate", spy_evaluate)
    run_experiment(quick(small_files, models=("meta-sgc", "sgc", "gcn")))
    assert len(seen["meta"]) == 6
    assert seen["meta"] == seen[SGC] == seen[GCN]


def random_label_dataset(seed):
    rng = np.random.default_rng(seed)
    n = 400
    return GraphDataset(rng.random((n, 30)), rng.integers(0, 4, size=n),
                        rng.integers(0, n, size=(800, 2)), ("a", "b", "c", "d"))


@pytest.mark.parametrize("seed", range(5))
def test_untrained_meta_model_is_at_chance(seed):
    config = ExperimentConfig(content="", cites="", folds=1, selections=1, iters=0, seed=seed)
    table = run_experiment(config, dataset=random_label_dataset(seed))
    assert abs(table.aggregate("meta-sgc")[0] - 0.5) <= 0.15


def test_rerun_is_bitwise_identical(small_files, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        run_experiment(quick(small_files, models=("meta-gcn", "sgc"), out=str(out)))
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_root_seed_changes_the_draws(small_files):
    a = run_experiment(quick(small_files, seed=0))
    b = run_experiment(quick(small_files, seed=1))
    assert a.accuracies("meta-sgc") != b.accuracies("meta-sgc")


def test_seed_lineage_is_label_sensitive():
    seeds = {derive_seed(0, "fold", 0), derive_seed(0, "fold", 1), derive_seed(1, "fold", 0),
             derive_seed(0, 0, 0, "support"), derive_seed(0, 0, 1, "support")}
    assert len(seeds) == 5
    assert derive_seed(7, 2, "x") == derive_seed(7, 2, "x")


def test_failure_flushes_partial_results(small_files, tmp_path, monkeypatch):
    calls = {"n": 0}
    real = bench.evaluate

    def flaky(model, theta, task):
        calls["n"] += 1
        if calls["n"] == 4:
            raise NumericError("boom")
        return real(model, theta, task)

    monkeypatch.setattr(bench, "evaluate", flaky)
    out = tmp_path / "partial.csv"
    with pytest.raises(NumericError):
        run_experiment(quick(small_files, models=("sgc",), out=str(out)))
    text = out.read_text()
    cells, footer = parse_csv(text)
    assert len(cells) == 3 and footer["sgc"]["count"] == 3
    assert text.splitlines()[-1].startswith("failed,") and "boom" in text


# emission

def one_cell_table():
    return ResultsTable("cora", 3, [Cell(0, 0, "meta-sgc", 3, 0.7719)])


def test_one_row_csv():
    lines = format_csv(one_cell_table()).splitlines()
    assert lines[0] == "fold,selection,model,K,accuracy"
    assert lines[1] == "0,0,meta-sgc,3,0.7719"
    assert [line.split(",")[0] for line in lines[2:]] == ["mean", "std", "count"]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
@settings(max_examples=50, deadline=None)
def test_csv_round_trip_and_footer(accs):
    cells = [Cell(i // 5, i % 5, m, 1, a) for i, a in enumerate(accs) for m in ("meta-sgc", "sgc")]
    table = ResultsTable("cora", 1, cells)
    parsed, footer = parse_csv(format_csv(table))
    assert parsed == cells
    for model in ("meta-sgc", "sgc"):
        values = [c.accuracy for c in parsed if c.model == model]
        assert abs(footer[model]["mean"] - np.mean(values)) <= 1e-12
        assert abs(footer[model]["std"] - np.std(values)) <= 1e-12
        assert footer[model]["count"] == len(values)


def test_markdown_has_one_row_per_model():
    table = ResultsTable("cora", 3, [Cell(0, 0, "meta-sgc", 3, 0.75), Cell(0, 1, "meta-sgc", 3, 0.8),
                                     Cell(0, 0, "sgc", 3, 0.7), Cell(0, 1, "sgc", 3, 0.7)])
    text = format_markdown(table)
    assert "| meta-sgc | 77.50% ± 2.50% (n=2) |" in text
    assert "| sgc | 70.00% ± 0.00% (n=2) |" in text
    assert sum(line.startswith("| ") for line in text.splitlines()) == 3


def test_emit_to_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        emit_results(one_cell_table(), tmp_path / "missing" / "out.csv")
    with pytest.raises(ContractError):
        emit_results(one_cell_table(), tmp_path / "x", "json")


def test_paired_advantage():
    table = ResultsTable("cora", 3, [Cell(0, 0, "meta-sgc", 3, 0.8), Cell(0, 1, "meta-sgc", 3, 0.6),
                                     Cell(0, 0, "sgc", 3, 0.7), Cell(0, 1, "sgc", 3, 0.7)])
    assert paired_advantage(table, "meta-sgc", "sgc") == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ContractError):
        paired_advantage(table, "meta-sgc", "gcn")
