import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dragonet.data import Transaction
from dragonet.errors import ConfigError, DataError
from dragonet.model import ModelConfig, init_params
from dragonet.numerics import autodiff as ad
from dragonet.numerics.gradcheck import grad_check
from dragonet.training import (
    TrainConfig,
    compute_loss,
    evaluate,
    evaluate_both,
    kfold_split,
    level_metrics,
    loss_from_scores,
    metrics_from_predictions,
    train,
    train_test_indices,
)

LN15_PLUS_LN82 = 7.1147694483664632


def _zero_params(cfg):
    return {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}


@pytest.mark.parametrize("activation", ["sigmoid", "softmax"])
def test_uniform_heads_loss(taxonomy, activation):
    cfg = ModelConfig(vocab_size=6, macro_count=15, micro_count=82, embed_dim=4, num_heads=1, num_layers=1, max_len=4, head_activation=activation)
    ids = np.array([[2, 3, 0, 0], [4, 0, 0, 0]])
    loss, _ = compute_loss(ids, ids, [0, 14], [0, 81], _zero_params(cfg), cfg)
    assert loss == pytest.approx(LN15_PLUS_LN82, abs=1e-12)
    assert math.log(15) + math.log(82) == pytest.approx(LN15_PLUS_LN82, abs=1e-14)


def test_one_hot_softmax_loss_is_zero():
    cfg = ModelConfig(vocab_size=6, macro_count=3, micro_count=5, embed_dim=4, num_heads=1, head_activation="softmax")
    o_a = np.eye(3)[[1]]
    o_b = np.eye(5)[[4]]
    assert float(loss_from_scores(o_a, o_b, np.array([1]), np.array([4]), cfg)) == 0.0


def test_loss_bounded_by_uniform_in_softmax_mode(rng):
    cfg = ModelConfig(vocab_size=6, macro_count=3, micro_count=5, embed_dim=4, num_heads=1, head_activation="softmax")
    for _ in range(20):
        o_a = ad.softmax(rng.normal(size=(4, 3)))
        o_b = ad.softmax(rng.normal(size=(4, 5)))
        loss = float(loss_from_scores(o_a, o_b, rng.integers(3, size=4), rng.integers(5, size=4), cfg))
        assert loss >= 0


@pytest.mark.parametrize("activation", ["sigmoid", "softmax"])
def test_loss_gradcheck_two_examples(small_config, activation):
    cfg = ModelConfig.from_dict({**small_config.to_dict(), "head_activation": activation})
    params = init_params(cfg, 5)
    names = list(params)
    name_ids = np.array([[2, 3, 4, 0], [5, 6, 0, 0]])
    act_ids = np.array([[7, 8, 0, 0], [9, 10, 11, 0]])
    y_a, y_b = np.array([0, 2]), np.array([1, 4])
    from dragonet.model import forward

    def f(*ws):
        o_a, o_b = forward(name_ids, act_ids, dict(zip(names, ws)), cfg)
        return loss_from_scores(o_a, o_b, y_a, y_b, cfg)

    assert grad_check(f, [params[k] for k in names]) < 1e-4
    loss, grads = compute_loss(name_ids, act_ids, y_a, y_b, params, cfg)
    assert set(grads) == set(params) and loss > 0


def test_label_out_of_range(small_config):
    ids = np.array([[2, 0, 0, 0]])
    with pytest.raises(DataError):
        compute_loss(ids, ids, [3], [0], init_params(small_config, 0), small_config)
    with pytest.raises(DataError):
        compute_loss(ids, ids, [0], [-1], init_params(small_config, 0), small_config)


# -- folds --------------------------------------------------------------


def test_folds_even():
    folds = kfold_split(100, 10, seed=0)
    assert [len(f) for f in folds] == [10] * 10


def test_folds_uneven():
    assert sorted(len(f) for f in kfold_split(101, 10, seed=0)) == [10] * 9 + [11]


def test_folds_deterministic_and_seeded():
    a, b = kfold_split(50, 5, seed=3), kfold_split(50, 5, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, kfold_split(50, 5, seed=4)))


def test_folds_accept_dataset():
    data = [Transaction(str(i), "x", 0, 0) for i in range(23)]
    assert all(np.array_equal(x, y) for x, y in zip(kfold_split(data, 4, 1), kfold_split(23, 4, 1)))


def test_folds_errors():
    with pytest.raises(DataError):
        kfold_split(5, 10)
    with pytest.raises(ConfigError):
        kfold_split(5, 1)


def test_train_test_indices():
    folds = kfold_split(30, 3, 0)
    tr, te = train_test_indices(folds, 1)
    assert len(tr) == 20 and np.array_equal(te, folds[1])
    assert not set(tr) & set(te)


@settings(max_examples=60)
@given(st.integers(2, 300), st.integers(2, 12), st.integers(0, 2**31))
def test_fold_partition(n, k, seed):
    if k > n:
        return
    folds = kfold_split(n, k, seed)
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(n))


# -- metrics ------------------------------------------------------------


def test_f1_worked_example():
    # class A: TP=1, FP=1, FN=0 ; class B: TP=0, FP=0, FN=1
    m = level_metrics(gold=[0, 1], pred=[0, 0], n_classes=2)
    assert m.per_class_precision[0] == 0.5
    assert m.per_class_recall[0] == 1.0
    assert m.per_class_f1[0] == pytest.approx(2 / 3, abs=1e-15)
    assert m.per_class_f1[1] == 0.0
    assert m.confusion.tolist() == [[1, 0], [1, 0]]


def test_perfect_predictions(toy_taxonomy):
    gold_a, gold_b = np.array([0, 0, 1]), np.array([0, 1, 2])
    m = metrics_from_predictions(gold_a, gold_b, gold_a, gold_b, toy_taxonomy, True)
    assert (m.macro.precision, m.macro.recall, m.macro.f1) == (1.0, 1.0, 1.0)
    assert (m.micro.precision, m.micro.recall, m.micro.f1) == (1.0, 1.0, 1.0)
    assert m.hierarchy_violations == 0


def test_absent_classes_ignored():
    m = level_metrics([0, 0], [0, 0], n_classes=5)
    assert m.f1 == 1.0


def test_violation_count(toy_taxonomy):
    m = metrics_from_predictions([0, 1], [0, 2], [0, 1], [2, 0], toy_taxonomy, False)
    assert m.hierarchy_violations == 2


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
def test_metric_bounds(pairs):
    gold, pred = zip(*pairs)
    m = level_metrics(gold, pred, 4)
    for p, r, f in zip(m.per_class_precision, m.per_class_recall, m.per_class_f1):
        assert 0 <= p <= 1 and 0 <= r <= 1 and 0 <= f <= 1
        if p > 0 and r > 0:
            assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12
            assert f == pytest.approx(2 * p * r / (p + r))
    assert m.confusion.sum() == len(pairs)


# -- training loop ------------------------------------------------------

WORDS = {0: ["apple", "pear"], 1: ["plum", "fig"], 2: ["kiwi", "lime"]}
ACTS = {0: "ORCHARD FRUIT", 1: "STONE FRUIT", 2: "CITRUS GROVE"}
TINY = {"embed_dim": 8, "num_heads": 2, "num_layers": 1, "ffn_hidden": 16, "fusion_hidden": 16, "max_len": 4}


def separable(toy_taxonomy, n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        micro = int(rng.integers(3))
        out.append(Transaction(str(rng.choice(WORDS[micro])).title(), ACTS[micro], toy_taxonomy.parent_of(micro), micro))
    return out


def test_separable_set_learns(toy_taxonomy):
    data = separable(toy_taxonomy, 200)
    result = train(data, toy_taxonomy, TINY, TrainConfig(epochs=30, batch_size=32, seed=0, lr=1e-2))
    trace = result.loss_trace
    assert len(trace) == 30
    assert trace[-1] < 0.1 * trace[0]
    m = evaluate(result.model, data)
    assert m.micro.f1 == 1.0 and m.hierarchy_violations == 0


def test_training_deterministic(toy_taxonomy):
    data = separable(toy_taxonomy, 40)
    a = train(data, toy_taxonomy, TINY, TrainConfig(epochs=2, batch_size=8, seed=3))
    b = train(data, toy_taxonomy, TINY, TrainConfig(epochs=2, batch_size=8, seed=3))
    assert a.loss_trace == b.loss_trace
    assert all(a.model.params[k].tobytes() == b.model.params[k].tobytes() for k in a.model.params)


def test_scenario_is_applied(toy_taxonomy):
    data = separable(toy_taxonomy, 20)
    result = train(data, toy_taxonomy, TINY, TrainConfig(epochs=1, scenario="name_only"))
    name_ids, act_ids = result.model.encode(data)
    assert np.all(act_ids == 0) and np.any(name_ids != 0)


def test_evaluate_both_with_and_without(toy_taxonomy):
    data = separable(toy_taxonomy, 20)
    model = train(data, toy_taxonomy, TINY, TrainConfig(epochs=1)).model
    with_tal, without = evaluate_both(model, data)
    assert with_tal.with_tal and not without.with_tal
    assert with_tal.hierarchy_violations == 0
    doc = with_tal.to_dict(toy_taxonomy)
    assert set(doc) == {"macro", "micro", "hierarchy_violations", "with_tal", "n"}
    assert len(doc["micro"]["confusion"]) == 3


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"batch_size": 0}, {"folds": 1}, {"scenario": "both_names"}, {"lr": 0.0}])
def test_train_config_validation(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


def test_train_rejects_bad_data(toy_taxonomy):
    with pytest.raises(DataError):
        train([], toy_taxonomy)
    with pytest.raises(DataError):
        train([Transaction("a", "b")], toy_taxonomy)
    with pytest.raises(DataError):
        train([Transaction("a", "b", 1, 0)], toy_taxonomy)
    with pytest.raises(DataError):
        evaluate(train(separable(toy_taxonomy, 4), toy_taxonomy, TINY, TrainConfig(epochs=1)).model, [])
