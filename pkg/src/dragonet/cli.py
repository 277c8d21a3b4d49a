"""Command-line entry point.

    dragonet gen-data --out data.csv --set synth.n_samples=2000
    dragonet taxonomy validate table1.tsv
    dragonet train --data data.csv --out-dir run/
    dragonet eval --data data.csv --checkpoint run/ --out metrics.json
    dragonet eval --data data.csv --scenario both --folds 10 --out cv.json
    dragonet predict --checkpoint run/ --data unlabeled.csv --out labels.csv
    dragonet export-embeddings --checkpoint run/ --data data.csv --out emb.tsv
    dragonet baseline --data data.csv --mode tfidf --out knn.json

Exit codes: 0 success, 1 usage/config error, 2 data or validation error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from dragonet import checkpoint
from dragonet.baselines import DEFAULT_BUCKETS, KNNClassifier
from dragonet.data import SynthConfig, Transaction, dumps_csv, generate_synthetic, load_csv
from dragonet.errors import ConfigError, DataError, NumericError
from dragonet.model import ModelConfig
from dragonet.taxonomy import load_taxonomy
from dragonet.text import Vocabulary
from dragonet.training import (
    TrainConfig,
    evaluate_both,
    kfold_split,
    metrics_from_predictions,
    train,
    train_test_indices,
)

log = logging.getLogger("dragonet")

SCENARIO_FLAGS = {"name": "name_only", "activity": "activity_only", "both": "both"}
_MODEL_DERIVED = {"vocab_size", "macro_count", "micro_count"}
CKPT_NAME, VOCAB_NAME, TRACE_NAME = "model.ckpt", "vocab.tsv", "loss_trace.tsv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- run configuration --------------------------------------------------


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    baseline: dict = field(default_factory=lambda: {"mode": "tfidf", "k": 5, "n_buckets": DEFAULT_BUCKETS})
    paths: dict = field(default_factory=lambda: {"taxonomy": None})

    def echo(self) -> dict:
        return {
            "model": dict(sorted(self.model.items())),
            "train": self.train.to_dict(),
            "synth": {f.name: getattr(self.synth, f.name) for f in fields(SynthConfig)},
            "baseline": self.baseline,
        }


_SECTIONS = ("model", "train", "synth", "baseline", "paths")
_BASELINE_KEYS = {"mode", "k", "n_buckets"}
_PATH_KEYS = {"taxonomy"}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def build_run_config(config_path: str | None, overrides: list[str]) -> RunConfig:
    """Merge a JSON config file with ``section.key=value`` overrides and validate everything."""
    raw: dict[str, dict] = {s: {} for s in _SECTIONS}
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{config_path}: invalid JSON ({e})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        for section, values in loaded.items():
            if section not in raw or not isinstance(values, dict):
                raise ConfigError(f"{config_path}: unknown section {section!r}")
            raw[section].update(values)
    for item in overrides:
        key, sep, val = item.partition("=")
        section, dot, name = key.partition(".")
        if not sep or not dot or section not in raw:
            raise ConfigError(f"bad override {item!r}; expected section.key=value")
        raw[section][name] = _parse_value(val)

    model_known = {f.name for f in fields(ModelConfig)} - _MODEL_DERIVED
    bad = set(raw["model"]) - model_known
    if bad:
        raise ConfigError(f"unknown model keys: {sorted(bad)}")
    # validate model keys now with placeholder sizes; real sizes come from data
    ModelConfig.from_dict({**raw["model"], "vocab_size": 2, "macro_count": 1, "micro_count": 1})
    bad = set(raw["baseline"]) - _BASELINE_KEYS
    if bad:
        raise ConfigError(f"unknown baseline keys: {sorted(bad)}")
    baseline = {"mode": "tfidf", "k": 5, "n_buckets": DEFAULT_BUCKETS, **raw["baseline"]}
    if baseline["mode"] not in ("tfidf", "hashing"):
        raise ConfigError(f"baseline.mode must be tfidf or hashing, got {baseline['mode']!r}")
    if not isinstance(baseline["k"], int) or baseline["k"] < 1:
        raise ConfigError("baseline.k must be a positive integer")
    bad = set(raw["paths"]) - _PATH_KEYS
    if bad:
        raise ConfigError(f"unknown paths keys: {sorted(bad)}")
    synth_keys = {f.name for f in fields(SynthConfig)}
    if set(raw["synth"]) - synth_keys:
        raise ConfigError(f"unknown synth keys: {sorted(set(raw['synth']) - synth_keys)}")
    try:
        return RunConfig(
            model=raw["model"],
            train=TrainConfig.from_dict(raw["train"]),
            synth=SynthConfig(**raw["synth"]),
            baseline=baseline,
            paths={"taxonomy": None, **raw["paths"]},
        )
    except TypeError as e:
        raise ConfigError(str(e)) from None


# -- output helpers -----------------------------------------------------


def _fixed(obj):
    """Round floats to 10 decimals so JSON output is stable and readable."""
    if isinstance(obj, float):
        return round(obj, 10)
    if isinstance(obj, dict):
        return {k: _fixed(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_fixed(v) for v in obj]
    if isinstance(obj, np.generic):
        return _fixed(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_fixed(obj), sort_keys=True, indent=2) + "\n"


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def summarize(fold_results: list[dict]) -> dict:
    out = {}
    for level in ("macro", "micro"):
        for key in ("precision", "recall", "f1"):
            out[f"{level}_{key}"] = _mean_std([r["without_tal"][level][key] for r in fold_results])
    if all(r["with_tal"] is not None for r in fold_results):
        for key in ("precision", "recall", "f1"):
            out[f"micro_tal_{key}"] = _mean_std([r["with_tal"]["micro"][key] for r in fold_results])
        out["tal_micro_f1_gain"] = _mean_std(
            [r["with_tal"]["micro"]["f1"] - r["without_tal"]["micro"]["f1"] for r in fold_results]
        )
    out["hierarchy_violations_without_tal"] = int(sum(r["without_tal"]["hierarchy_violations"] for r in fold_results))
    return out


# -- subcommands --------------------------------------------------------


def _taxonomy(args, rc: RunConfig):
    return load_taxonomy(args.taxonomy or rc.paths.get("taxonomy"))


def cmd_gen_data(args, rc):
    tax = _taxonomy(args, rc)
    ds = generate_synthetic(tax, rc.synth)
    checkpoint.atomic_write(args.out, dumps_csv(ds, tax))
    print(f"wrote {len(ds)} transactions to {args.out}")


def cmd_taxonomy(args, rc):
    tax = load_taxonomy(args.path or rc.paths.get("taxonomy"))
    print(f"{tax.n_macros} macros, {tax.n_micros} micros")
    if args.verbose:
        for j, macro in enumerate(tax.macros):
            print(f"{macro}\t{', '.join(tax.micros[i] for i in tax.children(j))}")


def _train(dataset, tax, rc, scenario=None):
    tc = rc.train
    if scenario is not None:
        tc = TrainConfig.from_dict({**tc.to_dict(), "scenario": scenario})
    return train(dataset, tax, dict(rc.model), tc)


def cmd_train(args, rc):
    tax = _taxonomy(args, rc)
    dataset = load_csv(args.data, tax)
    scenario = SCENARIO_FLAGS[args.scenario] if args.scenario else None
    result = _train(dataset, tax, rc, scenario)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace = "".join(f"{i + 1}\t{v:.10f}\n" for i, v in enumerate(result.loss_trace))
    checkpoint.atomic_write(out / VOCAB_NAME, result.model.vocab.dumps())
    checkpoint.atomic_write(out / TRACE_NAME, trace)
    checkpoint.save(out / CKPT_NAME, result.model)
    print(f"saved model to {out / CKPT_NAME}")


def _load_model(args, rc):
    tax = _taxonomy(args, rc)
    ck = Path(args.checkpoint)
    ckpt_file, vocab_file = (ck / CKPT_NAME, ck / VOCAB_NAME) if ck.is_dir() else (ck, ck.with_name(VOCAB_NAME))
    if args.vocab:
        vocab_file = Path(args.vocab)
    return checkpoint.load(ckpt_file, Vocabulary.load(vocab_file), tax), tax


def _fold_record(model, test, tax, with_tal: bool, fold: int):
    w, wo = evaluate_both(model, test)
    return {"fold": fold, "with_tal": w.to_dict(tax) if with_tal else None, "without_tal": wo.to_dict(tax)}


def cmd_eval(args, rc):
    with_tal = not args.no_tal
    if args.checkpoint:
        model, tax = _load_model(args, rc)
        dataset = load_csv(args.data, tax)
        records = [_fold_record(model, dataset, tax, with_tal, 0)]
        mode = "checkpoint"
        scenario = model.scenario
    else:
        tax = _taxonomy(args, rc)
        dataset = load_csv(args.data, tax)
        scenario = SCENARIO_FLAGS[args.scenario] if args.scenario else rc.train.scenario
        k = args.folds or rc.train.folds
        folds = kfold_split(len(dataset), k, rc.train.seed)
        records = []
        for i in range(k):
            tr, te = train_test_indices(folds, i)
            log.info("fold %d/%d", i + 1, k)
            result = _train([dataset[j] for j in tr], tax, rc, scenario)
            records.append(_fold_record(result.model, [dataset[j] for j in te], tax, with_tal, i))
        mode = "cross_validation"
    doc = {"config": rc.echo(), "mode": mode, "scenario": scenario, "folds": records, "summary": summarize(records)}
    checkpoint.atomic_write(args.out, dump_json(doc))
    s = doc["summary"]
    line = f"macro F1 {s['macro_f1']['mean']:.4f}  micro F1 (no TAL) {s['micro_f1']['mean']:.4f}"
    if with_tal:
        line += f"  micro F1 (TAL) {s['micro_tal_f1']['mean']:.4f}"
    print(line)


def cmd_predict(args, rc):
    model, tax = _load_model(args, rc)
    dataset = load_csv(args.data, tax)
    macro, micro = model.predict_indices(dataset, with_tal=not args.no_tal) if dataset else ([], [])
    labeled = [Transaction(t.merchant_name, t.activity, int(a), int(b)) for t, a, b in zip(dataset, macro, micro)]
    checkpoint.atomic_write(args.out, dumps_csv(labeled, tax))
    print(f"wrote {len(labeled)} predictions to {args.out}")


def cmd_export_embeddings(args, rc):
    model, tax = _load_model(args, rc)
    dataset = load_csv(args.data, tax)
    emb = model.embeddings(dataset, args.kind)
    lines = []
    for t, row in zip(dataset, emb):
        label = "" if t.macro is None else tax.macros[t.macro]
        lines.append("\t".join([label, *(f"{v:.8f}" for v in row)]) + "\n")
    checkpoint.atomic_write(args.out, "".join(lines))
    print(f"wrote {len(lines)} {args.kind} embeddings to {args.out}")


def cmd_baseline(args, rc):
    tax = _taxonomy(args, rc)
    dataset = load_csv(args.data, tax)
    cfg = dict(rc.baseline)
    if args.mode:
        cfg["mode"] = args.mode
    if args.k:
        cfg["k"] = args.k
    scenario = SCENARIO_FLAGS[args.scenario] if args.scenario else rc.train.scenario
    k = args.folds or rc.train.folds
    folds = kfold_split(len(dataset), k, rc.train.seed)
    records = []
    for i in range(k):
        tr, te = train_test_indices(folds, i)
        train_set, test = [dataset[j] for j in tr], [dataset[j] for j in te]
        knn = KNNClassifier(tax, cfg["mode"], cfg["k"], scenario, cfg["n_buckets"]).fit(train_set)
        gold_a = [t.macro for t in test]
        gold_b = [t.micro for t in test]
        rec = {"fold": i, "with_tal": None}
        ma, mi = knn.predict_indices(test, with_tal=False)
        rec["without_tal"] = metrics_from_predictions(gold_a, gold_b, ma, mi, tax, False).to_dict(tax)
        if args.tal:
            ma, mi = knn.predict_indices(test, with_tal=True)
            rec["with_tal"] = metrics_from_predictions(gold_a, gold_b, ma, mi, tax, True).to_dict(tax)
        records.append(rec)
    echo = rc.echo()
    echo["baseline"] = cfg
    doc = {"config": echo, "mode": "baseline", "scenario": scenario, "folds": records, "summary": summarize(records)}
    checkpoint.atomic_write(args.out, dump_json(doc))
    print(f"{cfg['mode']}+KNN macro F1 {doc['summary']['macro_f1']['mean']:.4f}")


# -- argument parsing ---------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config value")
    common.add_argument("--taxonomy", help="taxonomy TSV (default: bundled retail taxonomy)")

    p = _Parser(prog="dragonet", description="Hierarchical transaction classification")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic labeled CSV")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("taxonomy", parents=[common], help="taxonomy utilities")
    tsub = t.add_subparsers(dest="action", parser_class=_Parser)
    tsub.required = True
    tv = tsub.add_parser("validate", parents=[common], help="check a taxonomy TSV")
    tv.add_argument("path", nargs="?")
    tv.add_argument("-v", "--verbose", action="store_true")
    tv.set_defaults(func=cmd_taxonomy)

    tr = sub.add_parser("train", parents=[common], help="train a model")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out-dir", required=True)
    tr.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS))
    tr.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or run k-fold cross-validation")
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--vocab")
    e.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS))
    e.add_argument("--folds", type=int)
    e.add_argument("--no-tal", action="store_true")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", parents=[common], help="label a CSV")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--vocab")
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--no-tal", action="store_true")
    pr.set_defaults(func=cmd_predict)

    x = sub.add_parser("export-embeddings", parents=[common], help="write pooled vectors as TSV")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--vocab")
    x.add_argument("--data", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--kind", choices=("fused", "name", "activity"), default="fused")
    x.set_defaults(func=cmd_export_embeddings)

    b = sub.add_parser("baseline", parents=[common], help="vectorizer + KNN cross-validation")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--mode", choices=("tfidf", "hashing"))
    b.add_argument("--k", type=int)
    b.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS))
    b.add_argument("--folds", type=int)
    b.add_argument("--tal", action="store_true", help="also report KNN with taxonomy masking")
    b.set_defaults(func=cmd_baseline)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if getattr(args, "folds", None) is not None and args.folds < 2:
        print("--folds must be >= 2", file=sys.stderr)
        return 1
    if not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        rc = build_run_config(args.config, args.set)
        args.func(args, rc)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 3
    except (DataError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())
