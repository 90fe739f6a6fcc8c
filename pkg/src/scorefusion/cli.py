"""Command-line front end: YAML-configured train / predict / evaluate /
compare over CSV data.

Exit codes: 0 success, 1 configuration or model-format problem, 2 data
problem, 3 provider unavailable, 4 stale cache. Every failure prints one
line to stderr starting with error[config] / error[data] / error[provider]
/ error[stale-cache].
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .cache import ScoreCache, cache_open_adopt
from .core import (
    Dataset,
    LabelSchema,
    LabelVector,
    TaskMode,
    TextExample,
    dataset_fingerprint,
)
from .encoder import HashedNgramEncoder
from .errors import (
    ConfigurationError,
    DataError,
    ModelFormatError,
    ProviderUnavailableError,
    ScoreFusionError,
    StaleCacheError,
)
from .pipeline import FusionModel, build_config, evaluate, fit, load_model, save_model
from .pipeline import predict as pipeline_predict
from .results import prediction_rows, run_compare, run_create, write_predictions_csv

# YAML keys consumed by the CLI itself; everything else is handed to
# build_config, which rejects unknown keys by name.
_PATH_KEYS = ("train_csv", "eval_csv", "runs_dir", "model_out")


def _eprint_error(kind: str, message: str) -> None:
    flat = " ".join(str(message).split())
    print(f"error[{kind}]: {flat}", file=sys.stderr)


def _load_yaml_config(path: str) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") \
            from None
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigurationError(
            f"config file {path} is not valid YAML: {exc}"
        ) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError(
            f"config file {path} must hold a mapping at the top level"
        )
    return doc


def _apply_override(doc: dict, spec: str) -> None:
    """Apply one --set KEY=VALUE override; KEY may be dotted."""
    key, sep, raw = spec.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"--set expects KEY=VALUE, got {spec!r}")
    parts = key.split(".")
    if any(not p for p in parts):
        raise ConfigurationError(f"--set key {key!r} has an empty segment")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    node = doc
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def load_csv_dataset(path: str, schema: LabelSchema, mode: TaskMode,
                     text_column: str = "text") -> Dataset:
    """Read a dataset CSV: one text column plus one 0/1 column per label.

    Rows where every label column is present become labeled examples. A
    file whose header lacks the text column or part of the label columns
    fails naming the missing columns.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read CSV {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty CSV (no header row)")
        fields = set(reader.fieldnames)
        if text_column not in fields:
            raise DataError(f"{path}: missing text column {text_column!r}")
        missing = [name for name in schema.labels if name not in fields]
        has_labels = len(missing) < schema.K
        if has_labels and missing:
            raise DataError(f"{path}: missing label columns {missing}")
        rows: list[TextExample] = []
        for i, record in enumerate(reader):
            text = record[text_column] or ""
            target: Optional[LabelVector] = None
            if has_labels:
                bits = [_parse_bit(record[name], path, i, name)
                        for name in schema.labels]
                target = LabelVector(bits)
            rows.append(TextExample(text, target))
    return Dataset(schema, mode, rows)


def _parse_bit(value, path: str, row: int, column: str) -> int:
    cell = (value or "").strip()
    if cell in ("0", "1"):
        return int(cell)
    raise DataError(
        f"{path}: row {row}: label column {column!r} must be 0 or 1, "
        f"got {value!r}"
    )


def _read_texts_csv(path: str, text_column: str) -> list[str]:
    """Texts for prediction; an empty file yields an empty list."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read CSV {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if text_column not in reader.fieldnames:
            raise DataError(f"{path}: missing text column {text_column!r}")
        return [record[text_column] or "" for record in reader]


def _open_cache_flag(cache_dir: Optional[str]) -> Optional[ScoreCache]:
    if cache_dir is None:
        return None
    return cache_open_adopt(cache_dir)


def _model_config_doc(model: FusionModel, extra: dict) -> dict:
    """A config snapshot reconstructed from a loaded model (evaluate runs)."""
    if isinstance(model.encoder, HashedNgramEncoder):
        enc = {
            "dim": model.encoder.cfg.dim,
            "ngram_sizes": list(model.encoder.cfg.ngram_sizes),
            "buckets": model.encoder.cfg.buckets,
            "lr_small": model.encoder.cfg.lr_small,
        }
    else:
        enc = {"kind": "frozen_lookup", "dim": model.encoder.dim}
    threshold = model.fusion_cfg.threshold
    doc = {
        "label_columns": list(model.schema.labels),
        "multi_label": model.mode is TaskMode.MULTI_LABEL,
        "llm_providers": [asdict(p) for p in model.providers],
        "encoder": enc,
        "fusion": {
            "hidden_sizes": list(model.fusion_cfg.hidden_sizes),
            "lr_high": model.fusion_cfg.lr_high,
            "epochs": model.fusion_cfg.epochs,
            "train_batch_size": model.fusion_cfg.train_batch_size,
            "seed": model.fusion_cfg.seed,
            "threshold": list(threshold) if isinstance(threshold, tuple)
                         else threshold,
        },
    }
    doc.update(extra)
    return doc


def _cmd_train(args) -> int:
    doc = _load_yaml_config(args.config)
    for spec in args.overrides:
        _apply_override(doc, spec)
    if args.seed is not None:
        doc["seed"] = args.seed
    paths = {key: doc.pop(key) for key in _PATH_KEYS if key in doc}
    cfg = build_config(doc)
    if "train_csv" not in paths:
        raise ConfigurationError("config key 'train_csv' is required to train")
    ds = load_csv_dataset(paths["train_csv"], cfg.schema, cfg.mode,
                          cfg.text_column)
    model, record = fit(ds, cfg, runs_root=paths.get("runs_dir"))
    if "model_out" in paths:
        save_model(model, paths["model_out"])
    print(record.run_id)
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    cache = _open_cache_flag(args.cache_dir)
    if args.texts and args.input:
        raise ConfigurationError("give either --input or --text, not both")
    if args.texts:
        preds = pipeline_predict(model, args.texts, cache=cache)
        for pred in preds:
            names = [model.schema.labels[j] for j in pred.decided_indices()]
            print(",".join(names))
        return 0
    if not args.input:
        raise ConfigurationError("predict needs --input or at least one --text")
    if not args.output:
        raise ConfigurationError("--output is required with --input")
    texts = _read_texts_csv(args.input, args.text_column)
    preds = pipeline_predict(model, texts, cache=cache)
    write_predictions_csv(args.output, prediction_rows(preds),
                          model.schema.labels)
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = load_csv_dataset(args.eval_csv, model.schema, model.mode,
                          args.text_column)
    cache = _open_cache_flag(args.cache_dir)
    config_doc = _model_config_doc(model, {
        "command": "evaluate",
        "model_path": str(args.model),
        "eval_csv": str(args.eval_csv),
    })
    run = run_create(args.runs_dir, config_doc, dataset_fingerprint(ds),
                     model.schema.labels)
    report = evaluate(model, ds, cache=cache, run=run)
    print(run.run_id)
    print(f"accuracy={report.accuracy!r}")
    print(f"macro_f1={report.f1!r}")
    return 0


def _cmd_compare(args) -> int:
    rows = run_compare(args.runs_dir, args.run_ids)
    if not rows:
        return 0
    header = list(rows[0].keys())
    print("\t".join(header))
    for row in rows:
        print("\t".join(str(row[key]) for key in header))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorefusion",
        description="Train and apply LLM-score + encoder fusion classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train from a YAML config and CSV")
    train.add_argument("config", help="YAML config file")
    train.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE",
                       help="override a config key (dotted paths allowed)")
    train.add_argument("--seed", type=int, help="override the config seed")
    train.set_defaults(func=_cmd_train)

    pred = sub.add_parser("predict", help="classify texts with a saved model")
    pred.add_argument("--model", required=True, help="model JSON file")
    pred.add_argument("--input", help="CSV of texts to classify")
    pred.add_argument("--output", help="CSV to write predictions to")
    pred.add_argument("--text", action="append", default=[], dest="texts",
                      help="inline text (repeatable); prints decided labels")
    pred.add_argument("--text-column", default="text")
    pred.add_argument("--cache-dir", help="reuse a score cache directory")
    pred.set_defaults(func=_cmd_predict)

    ev = sub.add_parser("evaluate", help="score a saved model on labeled CSV")
    ev.add_argument("--model", required=True)
    ev.add_argument("--eval-csv", required=True)
    ev.add_argument("--runs-dir", required=True,
                    help="directory to persist the evaluation run under")
    ev.add_argument("--text-column", default="text")
    ev.add_argument("--cache-dir")
    ev.set_defaults(func=_cmd_evaluate)

    cmp_ = sub.add_parser("compare", help="tabulate finalized runs")
    cmp_.add_argument("--runs-dir", required=True)
    cmp_.add_argument("run_ids", nargs="+")
    cmp_.set_defaults(func=_cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StaleCacheError as exc:
        _eprint_error("stale-cache", str(exc))
        return 4
    except ProviderUnavailableError as exc:
        _eprint_error("provider", str(exc))
        return 3
    except DataError as exc:
        _eprint_error("data", str(exc))
        return 2
    except ModelFormatError as exc:
        _eprint_error("config", f"model format error: {exc}")
        return 1
    except ScoreFusionError as exc:
        _eprint_error("config", str(exc))
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
