import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gnnplus import tensor as T
from gnnplus.errors import ConfigError, DatasetError, DimensionError, StateError, \
    UndefinedMetricError
from gnnplus.graph import Dataset, generate_regression_task, generate_sbm_node_task
from gnnplus.layers import TechniqueFlags
from gnnplus.metrics import accuracy, auroc, average_precision, compute_metrics, f1_macro, mae
from gnnplus.model import ModelConfig, build_model
from gnnplus.training import TrainConfig, adamw_step, clip_grad_norm, lr_at, train
from oracles import adam_reference, ap_rank_walk, auroc_pairs, f1_macro_loop


def store_with(theta, grad=None):
    s = T.ParameterStore()
    p = s.add("theta", np.array(theta, dtype=float))
    p.grad = None if grad is None else np.array(grad, dtype=float)
    return s, p


# ---------------------------------------------------------------------------
# AdamW

def test_adamw_zero_grad_no_decay():
    s, p = store_with([1.5, -2.0], [0.0, 0.0])
    adamw_step(s, 0.1)
    assert p.data.tolist() == [1.5, -2.0]
    assert p.grad is None


def test_adamw_decoupled_decay():
    s, p = store_with([1.0, -3.0], [0.0, 0.0])
    adamw_step(s, 1.0, weight_decay=0.1)
    assert p.data.tolist() == [0.9, -0.9 * 3.0]


def test_adamw_first_step():
    s, p = store_with([0.0], [1.0])
    adamw_step(s, 0.1)
    assert p.data[0] == pytest.approx(-0.1, abs=1e-8)


def test_adamw_missing_grad():
    s, _ = store_with([0.0])
    with pytest.raises(StateError):
        adamw_step(s, 0.1)


@given(seed=st.integers(0, 10_000))
def test_adamw_matches_adam_reference(seed):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(10)]
    lr = float(rng.choice([1e-4, 5e-4, 1e-3, 1e-2]))
    s, p = store_with(theta)
    for g in grads:
        p.grad = g.copy()
        adamw_step(s, lr)
    np.testing.assert_allclose(p.data, adam_reference(theta, grads, lr), rtol=0, atol=1e-12)


def test_clip_grad_norm():
    s, p = store_with([0.0, 0.0], [3.0, 4.0])
    assert clip_grad_norm(s, 1.0) == 5.0
    np.testing.assert_allclose(p.grad, [0.6, 0.8])


# ---------------------------------------------------------------------------
# schedule

def test_lr_examples():
    cfg = TrainConfig(learning_rate=1e-3, epochs=50, warmup_epochs=5)
    assert lr_at(0, cfg) == pytest.approx(0.2e-3)
    assert lr_at(5, cfg) == 1e-3
    expect = 1e-3 * 0.5 * (1 + math.cos(math.pi * (50 - 1 - 5) / (50 - 5)))
    assert lr_at(49, cfg) == pytest.approx(expect, rel=1e-15)


@given(epochs=st.integers(1, 300), warm=st.integers(0, 50), lr=st.floats(1e-5, 1.0))
def test_lr_shape(epochs, warm, lr):
    warm = min(warm, epochs)
    cfg = TrainConfig(learning_rate=lr, epochs=epochs, warmup_epochs=warm)
    vals = [lr_at(e, cfg) for e in range(epochs)]
    assert all(0 < v <= lr * (1 + 1e-12) for v in vals)
    after = vals[warm:]
    assert all(b <= a for a, b in zip(after, after[1:]))
    if 0 < warm < epochs:
        # the ramp ends exactly where decay begins
        assert vals[warm - 1] == pytest.approx(lr) and vals[warm] == lr


def test_train_config_guards():
    with pytest.raises(ConfigError):
        TrainConfig(epochs=3, warmup_epochs=5)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(eval_metric="r2")


# ---------------------------------------------------------------------------
# metrics

def test_metric_examples():
    assert auroc([0.9, 0.1], [1, 0]) == 1.0
    assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert average_precision([0.8, 0.6, 0.4], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-15)
    assert accuracy([0, 1, 1], [0, 1, 0]) == pytest.approx(2 / 3)


def test_f1_absent_class_counts_as_zero():
    # class 2 never appears but still divides the mean
    assert f1_macro([0, 1], [0, 1], 3) == pytest.approx(2 / 3)


def test_auroc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auroc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        average_precision([0.1, 0.2], [0, 0])


def test_auroc_ties_midrank():
    assert auroc([0.5, 0.5], [1, 0]) == 0.5


def test_metric_shape_mismatch():
    with pytest.raises(DimensionError):
        accuracy([0, 1], [0])
    with pytest.raises(DimensionError):
        auroc([0.1, 0.2], [0, 1, 1])


@given(seed=st.integers(0, 10_000))
def test_metrics_match_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 40))
    scores = rng.integers(0, 6, n) / 5.0  # coarse scores force ties
    labels = rng.integers(0, 2, n)
    labels[0], labels[1] = 0, 1
    assert auroc(scores, labels) == float(auroc_pairs(scores, labels))
    assert average_precision(scores, labels) == float(ap_rank_walk(scores, labels))
    k = int(rng.integers(2, 6))
    pred, true = rng.integers(0, k, n), rng.integers(0, k, n)
    assert f1_macro(pred, true, k) == float(f1_macro_loop(pred, true, k))


@given(seed=st.integers(0, 10_000))
def test_metrics_order_invariant(seed):
    rng = np.random.default_rng(seed)
    n = 30
    logits = rng.standard_normal((n, 2)).round(1)
    labels = rng.integers(0, 2, n)
    labels[:2] = [0, 1]
    perm = rng.permutation(n)
    assert compute_metrics(logits, labels, "graph_classification") == \
        compute_metrics(logits[perm], labels[perm], "graph_classification")
    ml, yl = rng.standard_normal((n, 3)), rng.integers(0, 2, (n, 3))
    assert compute_metrics(ml, yl, "graph_multilabel") == \
        compute_metrics(ml[perm], yl[perm], "graph_multilabel")


@given(seed=st.integers(0, 10_000))
def test_metric_ranges(seed):
    rng = np.random.default_rng(seed)
    out = compute_metrics(rng.standard_normal((20, 2)), rng.integers(0, 2, 20),
                          "graph_classification")
    assert all(0.0 <= v <= 1.0 for v in out.values())
    assert mae(rng.standard_normal(5), rng.standard_normal(5)) >= 0


# ---------------------------------------------------------------------------
# training loop

def small_regression():
    return generate_regression_task(30, size_range=(4, 8), rng=0)


def test_zero_epochs_returns_initial_model():
    ds = small_regression()
    model = build_model(ModelConfig("gcn", 3, 8), ds.meta)
    before = model.state()
    res = train(model, ds, TrainConfig(epochs=0, warmup_epochs=0))
    assert res.log == [] and res.best_epoch is None
    assert all(np.array_equal(before[k], v) for k, v in model.state().items())


def test_empty_split_is_dataset_error():
    ds = small_regression()
    bad = Dataset(ds.graphs, {"train": ds.splits["train"], "val": [], "test": ds.splits["test"]},
                  ds.meta)
    with pytest.raises(DatasetError):
        train(build_model(ModelConfig("gcn", 3, 8), ds.meta), bad, TrainConfig(epochs=1,
                                                                               warmup_epochs=0))


def test_deterministic_replay():
    ds = small_regression()
    cfg = ModelConfig("gin", 3, 8, TechniqueFlags(False, True, 0.2, True, True, True),
                      pe_steps=4, readout="sum", seed=2)
    tc = TrainConfig(epochs=4, warmup_epochs=1, seed=2)
    logs = [train(build_model(cfg, ds.meta), ds, tc).log for _ in range(2)]
    assert logs[0] == logs[1]


@pytest.mark.parametrize("task_kind", ["regression", "sbm"])
def test_selection_uses_best_validation_epoch(task_kind):
    if task_kind == "regression":
        ds = small_regression()
        cfg = ModelConfig("gcn", 3, 8, TechniqueFlags(use_residual=True))
    else:
        ds = generate_sbm_node_task(20, 12, 3, 0.5, 0.05, 0.5, rng=0)
        cfg = ModelConfig("gcn", 3, 8, TechniqueFlags(use_residual=True), readout="node_level")
    model = build_model(cfg, ds.meta)
    res = train(model, ds, TrainConfig(learning_rate=5e-3, epochs=8, warmup_epochs=1))
    vals = [r["val_metric"] for r in res.log]
    pick = int(np.argmin(vals) if task_kind == "regression" else np.argmax(vals))
    assert res.best_epoch == pick
    assert res.test_metric == res.log[pick]["test_metric"]
    assert res.val_metric == vals[pick]
    assert all(np.array_equal(model.state()[k], v) for k, v in res.best_state.items())


def test_log_fields():
    ds = small_regression()
    res = train(build_model(ModelConfig("gcn", 3, 4), ds.meta), ds,
                TrainConfig(epochs=2, warmup_epochs=1))
    assert [list(r) for r in res.log] == [["epoch", "lr", "train_loss", "val_metric",
                                           "test_metric"]] * 2
    assert res.metric == "mae"
