"""Multi-task loss, mini-batch Adam training, k-fold splits and P/R/F1 metrics."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from dragonet.data import Transaction
from dragonet.errors import ConfigError, DataError, NumericError
from dragonet.model import SCENARIOS, DragoNet, ModelConfig, forward, init_params
from dragonet.numerics import autodiff as ad
from dragonet.numerics.adam import AdamState, adam_step
from dragonet.taxonomy import Taxonomy, resolve
from dragonet.text import Vocabulary, build_vocab

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    folds: int = 10
    scenario: str = "both"
    min_freq: int = 1

    def __post_init__(self):
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs!r}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size!r}")
        if not isinstance(self.folds, int) or self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds!r}")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


# -- loss ---------------------------------------------------------------


def loss_from_scores(o_alpha, o_beta, y_alpha, y_beta, config: ModelConfig):
    """H(O_alpha, y_alpha) + H(O_beta, y_beta), batch-averaged.

    Sigmoid heads are rescaled to sum to one first; argmax is unchanged.
    """
    if config.head_activation == "sigmoid":
        o_alpha, o_beta = ad.normalize_sum(o_alpha), ad.normalize_sum(o_beta)
    return ad.add(ad.nll(o_alpha, y_alpha), ad.nll(o_beta, y_beta))


def compute_loss(name_ids, act_ids, y_alpha, y_beta, params: dict, config: ModelConfig):
    """Loss value and a gradient for every parameter."""
    y_alpha = np.asarray(y_alpha)
    y_beta = np.asarray(y_beta)
    if len(y_alpha) == 0:
        raise DataError("compute_loss: empty batch")
    if y_alpha.min() < 0 or y_alpha.max() >= config.macro_count or y_beta.min() < 0 or y_beta.max() >= config.micro_count:
        raise DataError("compute_loss: label index out of range")
    tape = ad.Tape()
    names = list(params)
    leaves = {k: tape.leaf(params[k]) for k in names}
    o_a, o_b = forward(name_ids, act_ids, leaves, config)
    loss = loss_from_scores(o_a, o_b, y_alpha, y_beta, config)
    grads = tape.gradients(loss, [leaves[k] for k in names])
    return float(loss.value), dict(zip(names, grads))


# -- splits -------------------------------------------------------------


def kfold_split(dataset: Sequence | int, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Index folds for a dataset (or a dataset size).

    Seeded shuffle, then item i of the permutation goes to fold i mod k.
    """
    n_items = dataset if isinstance(dataset, (int, np.integer)) else len(dataset)
    if k < 2:
        raise ConfigError("kfold_split: k must be >= 2")
    if k > n_items:
        raise DataError(f"kfold_split: {k} folds for only {n_items} items")
    perm = np.random.default_rng(seed).permutation(n_items)
    return [np.sort(perm[i::k]) for i in range(k)]


def train_test_indices(folds: Sequence[np.ndarray], test_fold: int) -> tuple[np.ndarray, np.ndarray]:
    train = np.sort(np.concatenate([f for i, f in enumerate(folds) if i != test_fold]))
    return train, folds[test_fold]


# -- training -----------------------------------------------------------


@dataclass
class TrainResult:
    model: DragoNet
    loss_trace: list[float]


def _labels(dataset: Sequence[Transaction]):
    if any(not t.labeled for t in dataset):
        raise DataError("training requires labels on every transaction")
    return np.array([t.macro for t in dataset]), np.array([t.micro for t in dataset])


def train(
    dataset: Sequence[Transaction],
    taxonomy: Taxonomy,
    model_config: ModelConfig | dict | None = None,
    train_config: TrainConfig | None = None,
    vocab: Vocabulary | None = None,
) -> TrainResult:
    """Fit a model with shuffled mini-batch Adam.

    ``model_config`` may be a full :class:`ModelConfig` or a dict of
    overrides; vocabulary and label sizes are filled in from the data.
    """
    tc = train_config or TrainConfig()
    if not dataset:
        raise DataError("train: empty dataset")
    if vocab is None:
        vocab = build_vocab([t.merchant_name for t in dataset] + [t.activity for t in dataset], tc.min_freq)
    if not isinstance(model_config, ModelConfig):
        overrides = dict(model_config or {})
        overrides.update(vocab_size=len(vocab), macro_count=taxonomy.n_macros, micro_count=taxonomy.n_micros)
        model_config = ModelConfig.from_dict(overrides)
    if model_config.vocab_size != len(vocab):
        raise ConfigError(f"vocab_size {model_config.vocab_size} != vocabulary size {len(vocab)}")
    if (model_config.macro_count, model_config.micro_count) != (taxonomy.n_macros, taxonomy.n_micros):
        raise ConfigError("model head sizes do not match the taxonomy")
    y_a, y_b = _labels(dataset)
    if np.any(taxonomy.parent_array[y_b] != y_a):
        raise DataError("train: dataset labels violate the taxonomy")

    params = init_params(model_config, tc.seed)
    model = DragoNet(model_config, params, vocab, taxonomy, tc.scenario)
    name_ids, act_ids = model.encode(dataset)
    state = AdamState(lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2, eps=tc.adam_eps)
    rng = np.random.default_rng(tc.seed + 1)
    trace = []
    n = len(dataset)
    for epoch in range(tc.epochs):
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, tc.batch_size):
            idx = order[s : s + tc.batch_size]
            loss, grads = compute_loss(name_ids[idx], act_ids[idx], y_a[idx], y_b[idx], params, model_config)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch + 1}")
            params = adam_step(params, grads, state)
            total += loss * len(idx)
        trace.append(total / n)
        log.info("epoch %d loss %.6f", epoch + 1, trace[-1])
    model.params = params
    return TrainResult(model, trace)


# -- metrics ------------------------------------------------------------


@dataclass
class LevelMetrics:
    precision: float
    recall: float
    f1: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray  # rows gold, columns predicted

    def to_dict(self, names: Sequence[str]) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_class": {
                "names": list(names),
                "precision": self.per_class_precision.tolist(),
                "recall": self.per_class_recall.tolist(),
                "f1": self.per_class_f1.tolist(),
                "support": self.support.tolist(),
            },
            "confusion": self.confusion.tolist(),
        }


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.divide(a, b, out=np.zeros_like(a), where=b > 0)


def level_metrics(gold, pred, n_classes: int) -> LevelMetrics:
    """Per-class P/R/F1 and their unweighted mean over classes present in ``gold``."""
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    tp = np.diag(cm)
    p = _safe_div(tp, cm.sum(axis=0))
    r = _safe_div(tp, cm.sum(axis=1))
    f = _safe_div(2 * p * r, p + r)
    support = cm.sum(axis=1)
    present = support > 0
    return LevelMetrics(
        float(p[present].mean()),
        float(r[present].mean()),
        float(f[present].mean()),
        p,
        r,
        f,
        support,
        cm,
    )


@dataclass
class Metrics:
    macro: LevelMetrics
    micro: LevelMetrics
    hierarchy_violations: int
    with_tal: bool
    n: int

    def to_dict(self, taxonomy: Taxonomy) -> dict:
        return {
            "macro": self.macro.to_dict(taxonomy.macros),
            "micro": self.micro.to_dict(taxonomy.micros),
            "hierarchy_violations": self.hierarchy_violations,
            "with_tal": self.with_tal,
            "n": self.n,
        }


def metrics_from_predictions(gold_macro, gold_micro, pred_macro, pred_micro, taxonomy: Taxonomy, with_tal: bool) -> Metrics:
    if len(gold_macro) == 0:
        raise DataError("evaluate: empty dataset")
    violations = int(np.sum(taxonomy.parent_array[np.asarray(pred_micro)] != np.asarray(pred_macro)))
    return Metrics(
        level_metrics(gold_macro, pred_macro, taxonomy.n_macros),
        level_metrics(gold_micro, pred_micro, taxonomy.n_micros),
        violations,
        with_tal,
        len(gold_macro),
    )


def evaluate(model: DragoNet, dataset: Sequence[Transaction], taxonomy: Taxonomy | None = None, with_tal: bool = True) -> Metrics:
    taxonomy = taxonomy or model.taxonomy
    if not dataset:
        raise DataError("evaluate: empty dataset")
    y_a, y_b = _labels(dataset)
    o_a, o_b = model.scores(dataset)
    macro, micro = resolve(o_a, o_b, taxonomy, with_tal)
    return metrics_from_predictions(y_a, y_b, macro, micro, taxonomy, with_tal)


def evaluate_both(model: DragoNet, dataset: Sequence[Transaction]) -> tuple[Metrics, Metrics]:
    """(with TAL, without TAL) from a single forward pass."""
    if not dataset:
        raise DataError("evaluate: empty dataset")
    y_a, y_b = _labels(dataset)
    o_a, o_b = model.scores(dataset)
    out = []
    for tal in (True, False):
        macro, micro = resolve(o_a, o_b, model.taxonomy, tal)
        out.append(metrics_from_predictions(y_a, y_b, macro, micro, model.taxonomy, tal))
    return out[0], out[1]
