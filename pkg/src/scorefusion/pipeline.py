"""End-to-end orchestration: fetch LLM scores (cache-first), encode texts,
and train the fusion head jointly with the encoder under the two-rate
scheme. Also prediction, evaluation, single-signal baselines, and model
persistence.

Training is deterministic given (data, config, provider responses): all
randomness flows from the fusion seed, and LLM scores are fetched once up
front, never per epoch.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .cache import _MANIFEST_NAME, ScoreCache, cache_open, cache_open_adopt
from .core import (
    Dataset,
    LabelSchema,
    LabelVector,
    ScoreVector,
    TaskMode,
    dataset_fingerprint,
    make_dataset,
    validate_dataset,
)
from .encoder import (
    EncoderConfig,
    EncoderParams,
    FrozenLookupEncoder,
    HashedNgramEncoder,
    load_precomputed_embeddings,
)
from .errors import (
    ConfigurationError,
    DataError,
    InvalidDatasetError,
    ModelFormatError,
    RunStateError,
)
from .fusion import (
    FusionConfig,
    FusionParams,
    Prediction,
    assemble_input,
    backward,
    batch_loss_and_dlogits,
    decide,
    forward,
    fusion_step,
    init_fusion_params,
)
from .llm import LLMScore, ProviderConfig, make_provider_config, score_batch
from .metrics import MetricsReport, compute_metrics
from .results import RunHandle, RunRecord, run_create

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AutoFusionConfig:
    """Everything needed to train and apply one fusion classifier.

    `encoder` is either hashed-n-gram settings (trainable) or a path to a
    precomputed-embedding TSV (frozen).
    """

    label_columns: tuple[str, ...] = ()
    multi_label: bool = False
    llm_providers: tuple[ProviderConfig, ...] = (ProviderConfig(),)
    encoder: Union[EncoderConfig, str] = EncoderConfig()
    fusion: FusionConfig = FusionConfig()
    cache_dir: Optional[str] = None
    cache_policy: str = "strict"
    validation_fraction: float = 0.1
    text_column: str = "text"

    def __post_init__(self):
        object.__setattr__(self, "label_columns", tuple(self.label_columns))
        object.__setattr__(self, "llm_providers", tuple(self.llm_providers))
        if len(self.label_columns) < 2:
            raise ConfigurationError("label_columns needs at least 2 entries")
        if len(set(self.label_columns)) != len(self.label_columns):
            raise ConfigurationError("label_columns must be unique")
        if not self.llm_providers:
            raise ConfigurationError("at least one LLM provider is required")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must lie in [0, 1)")
        if self.cache_policy not in ("strict", "warn"):
            raise ConfigurationError(
                f"cache_policy must be 'strict' or 'warn', got {self.cache_policy!r}"
            )
        if not self.text_column:
            raise ConfigurationError("text_column must be non-empty")
        if isinstance(self.encoder, EncoderConfig) \
                and self.fusion.lr_high <= self.encoder.lr_small:
            logger.warning(
                "lr_high (%g) <= lr_small (%g): the fusion head is meant to "
                "move faster than the encoder",
                self.fusion.lr_high, self.encoder.lr_small,
            )

    @property
    def schema(self) -> LabelSchema:
        return LabelSchema(self.label_columns)

    @property
    def mode(self) -> TaskMode:
        return TaskMode.from_multi_label(self.multi_label)

    def to_dict(self) -> dict:
        if isinstance(self.encoder, str):
            enc: dict = {"precomputed_path": self.encoder}
        else:
            enc = {
                "dim": self.encoder.dim,
                "ngram_sizes": list(self.encoder.ngram_sizes),
                "buckets": self.encoder.buckets,
                "lr_small": self.encoder.lr_small,
            }
        threshold = self.fusion.threshold
        return {
            "label_columns": list(self.label_columns),
            "multi_label": self.multi_label,
            "text_column": self.text_column,
            "llm_providers": [asdict(p) for p in self.llm_providers],
            "encoder": enc,
            "fusion": {
                "hidden_sizes": list(self.fusion.hidden_sizes),
                "lr_high": self.fusion.lr_high,
                "epochs": self.fusion.epochs,
                "train_batch_size": self.fusion.train_batch_size,
                "seed": self.fusion.seed,
                "threshold": list(threshold) if isinstance(threshold, tuple)
                             else threshold,
            },
            "cache_dir": self.cache_dir,
            "cache_policy": self.cache_policy,
            "validation_fraction": self.validation_fraction,
        }


_TOP_KEYS = (
    "label_columns", "multi_label", "text_column", "llm_provider",
    "model_name", "mock_table", "encoder", "fusion", "seed", "cache_dir",
    "cache_policy", "validation_fraction",
)
_PROVIDER_KEYS = (
    "provider", "model_name", "endpoint_url", "api_key_env", "temperature",
    "max_retries", "backoff_base_ms", "llm_batch_size", "timeout_ms",
    "mock_table",
)
_ENCODER_KEYS = ("dim", "ngram_sizes", "buckets", "lr_small", "precomputed_path")
_FUSION_KEYS = ("hidden_sizes", "lr_high", "epochs", "train_batch_size",
                "seed", "threshold")


def _reject_unknown(doc: dict, allowed: Sequence[str], where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigurationError(f"unknown {where} key {key!r}")


def _provider_from_value(value, model_name, mock_table) -> ProviderConfig:
    """One provider spec: a name string, a mapping, or a ready config."""
    if isinstance(value, ProviderConfig):
        return value
    if isinstance(value, str):
        overrides = {}
        if model_name is not None:
            overrides["model_name"] = model_name
        if mock_table is not None:
            overrides["mock_table_path"] = mock_table
        return make_provider_config(value, **overrides)
    if isinstance(value, dict):
        _reject_unknown(value, _PROVIDER_KEYS, "provider")
        if "provider" not in value:
            raise ConfigurationError("provider entry needs a 'provider' name")
        overrides = {k: v for k, v in value.items()
                     if k not in ("provider", "mock_table")}
        if "mock_table" in value:
            overrides["mock_table_path"] = value["mock_table"]
        return make_provider_config(value["provider"], **overrides)
    raise ConfigurationError(
        f"provider entries must be names or mappings, got {type(value).__name__}"
    )


def _providers_from_doc(doc: dict) -> tuple[ProviderConfig, ...]:
    raw = doc.get("llm_provider", "mock")
    model_name = doc.get("model_name")
    mock_table = doc.get("mock_table")
    if not isinstance(raw, (list, tuple)):
        return (_provider_from_value(raw, model_name, mock_table),)
    if isinstance(model_name, (list, tuple)):
        if len(model_name) != len(raw):
            raise ConfigurationError(
                f"model_name list length {len(model_name)} != "
                f"llm_provider list length {len(raw)}"
            )
        names = list(model_name)
    else:
        names = [model_name] * len(raw)
    return tuple(_provider_from_value(v, n, mock_table)
                 for v, n in zip(raw, names))


def _encoder_from_doc(value) -> Union[EncoderConfig, str]:
    if isinstance(value, (EncoderConfig, str)):
        return value
    if isinstance(value, dict):
        _reject_unknown(value, _ENCODER_KEYS, "encoder")
        if "precomputed_path" in value:
            if len(value) > 1:
                raise ConfigurationError(
                    "encoder.precomputed_path excludes other encoder keys"
                )
            return str(value["precomputed_path"])
        fields = dict(value)
        if "ngram_sizes" in fields:
            fields["ngram_sizes"] = tuple(fields["ngram_sizes"])
        try:
            return EncoderConfig(**fields)
        except ValueError as exc:
            raise ConfigurationError(f"encoder: {exc}") from None
    raise ConfigurationError(
        f"encoder must be a mapping or a path, got {type(value).__name__}"
    )


def _fusion_from_doc(value) -> FusionConfig:
    if isinstance(value, FusionConfig):
        return value
    if isinstance(value, dict):
        _reject_unknown(value, _FUSION_KEYS, "fusion")
        fields = dict(value)
        if "hidden_sizes" in fields:
            fields["hidden_sizes"] = tuple(fields["hidden_sizes"])
        if isinstance(fields.get("threshold"), list):
            fields["threshold"] = tuple(fields["threshold"])
        try:
            return FusionConfig(**fields)
        except ValueError as exc:
            raise ConfigurationError(f"fusion: {exc}") from None
    raise ConfigurationError(
        f"fusion must be a mapping, got {type(value).__name__}"
    )


def build_config(doc: dict) -> AutoFusionConfig:
    """Build an AutoFusionConfig from a plain mapping (YAML/dict form).

    Unknown keys are rejected by name at every level. `seed` is shorthand
    for fusion.seed and wins over a seed inside the fusion mapping.
    """
    if not isinstance(doc, dict):
        raise ConfigurationError(
            f"config must be a mapping, got {type(doc).__name__}"
        )
    _reject_unknown(doc, _TOP_KEYS, "config")
    if "label_columns" not in doc:
        raise ConfigurationError("config key 'label_columns' is required")
    fusion = _fusion_from_doc(doc.get("fusion", {}))
    if "seed" in doc:
        fusion = replace(fusion, seed=int(doc["seed"]))
    try:
        return AutoFusionConfig(
            label_columns=tuple(doc["label_columns"]),
            multi_label=bool(doc.get("multi_label", False)),
            llm_providers=_providers_from_doc(doc),
            encoder=_encoder_from_doc(doc.get("encoder", {})),
            fusion=fusion,
            cache_dir=doc.get("cache_dir"),
            cache_policy=doc.get("cache_policy", "strict"),
            validation_fraction=float(doc.get("validation_fraction", 0.1)),
            text_column=str(doc.get("text_column", "text")),
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


@dataclass
class FusionModel:
    """A trained classifier: encoder state + provider list + fusion head."""

    schema: LabelSchema
    mode: TaskMode
    encoder: Union[HashedNgramEncoder, FrozenLookupEncoder]
    providers: tuple[ProviderConfig, ...]
    fusion_cfg: FusionConfig
    fusion_params: FusionParams

    def __post_init__(self):
        if not self.providers:
            raise ConfigurationError("a fusion model needs >= 1 provider")
        expected = self.encoder.dim + len(self.providers) * self.schema.K
        if self.fusion_params.input_dim != expected:
            raise ConfigurationError(
                f"fusion input width {self.fusion_params.input_dim} != "
                f"D + P*K = {expected}"
            )
        if self.fusion_params.output_dim != self.schema.K:
            raise ConfigurationError(
                f"fusion output width {self.fusion_params.output_dim} != "
                f"K = {self.schema.K}"
            )

    @property
    def input_dim(self) -> int:
        return self.fusion_params.input_dim


def _derive_seeds(seed: int) -> tuple[int, int, int]:
    """Independent child seeds (encoder init, fusion init, shuffling) so the
    three random streams never share underlying state."""
    state = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint64)
    return int(state[0]), int(state[1]), int(state[2])


def _build_encoder(cfg: AutoFusionConfig):
    if isinstance(cfg.encoder, str):
        return load_precomputed_embeddings(cfg.encoder)
    enc_seed, _, _ = _derive_seeds(cfg.fusion.seed)
    return HashedNgramEncoder(cfg.encoder, seed=enc_seed)


def _check_training_dataset(ds: Dataset, cfg: AutoFusionConfig) -> None:
    if tuple(ds.schema.labels) != tuple(cfg.label_columns):
        raise DataError(
            f"dataset labels {list(ds.schema.labels)} do not match "
            f"config label_columns {list(cfg.label_columns)}"
        )
    if ds.mode is not cfg.mode:
        raise DataError(
            f"dataset mode {ds.mode.value} does not match config "
            f"(multi_label={cfg.multi_label})"
        )
    violations = validate_dataset(ds)
    if len(ds) == 0:
        violations.insert(0, "dataset has no rows")
    for i, row in enumerate(ds.rows):
        if row.target is None:
            violations.append(f"row {i}: training requires a target")
    if violations:
        raise InvalidDatasetError(violations)


def _train(encoder, texts: Sequence[str], targets: Sequence[LabelVector],
           score_rows: Optional[list[list[LLMScore]]], schema: LabelSchema,
           mode: TaskMode, fcfg: FusionConfig, lr_small: float,
           validation_fraction: float, run: Optional[RunHandle],
           ) -> tuple[FusionParams, Optional[MetricsReport]]:
    """The shared two-rate loop. score_rows None trains the encoder-only
    head (no LLM slice in the input)."""
    n = len(texts)
    d = encoder.dim
    k = schema.K
    extra_width = len(score_rows[0]) * k if score_rows else 0
    _, fus_seed, shuffle_seed = _derive_seeds(fcfg.seed)
    params = init_fusion_params(d + extra_width, fcfg.hidden_sizes, k, fus_seed)

    trainable = encoder.trainable
    feats = [encoder.features(t) for t in texts] if trainable else None
    fixed = None if trainable else encoder.encode_batch(list(texts))

    def embed(i: int) -> np.ndarray:
        return encoder.embed_features(feats[i]) if trainable else fixed[i]

    def inputs_for(indices) -> np.ndarray:
        rows = []
        for i in indices:
            e = embed(i)
            rows.append(assemble_input(e, score_rows[i]) if score_rows else
                        np.asarray(e, dtype=np.float64))
        return np.stack(rows)

    rng = np.random.default_rng(shuffle_seed)
    perm = rng.permutation(n)
    n_val = min(int(validation_fraction * n), n - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    last_report: Optional[MetricsReport] = None
    for epoch in range(1, fcfg.epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        loss_sum = 0.0
        for start in range(0, order.size, fcfg.train_batch_size):
            batch = order[start:start + fcfg.train_batch_size]
            x = inputs_for(batch)
            logits, tape = forward(x, params)
            mean_loss, dlogits = batch_loss_and_dlogits(
                logits, [targets[i] for i in batch], mode)
            bundle = backward(tape, dlogits, d, params)
            fusion_step(params, bundle, fcfg.lr_high)
            if trainable:
                encoder.apply_sparse_gradients(
                    [feats[i] for i in batch],
                    list(bundle.embedding_grad), lr_small)
            loss_sum += mean_loss * batch.size
        log_extra: dict = {}
        if val_idx.size:
            vlogits, _ = forward(inputs_for(val_idx), params)
            vpred = [decide(vlogits[j], mode, fcfg.threshold)
                     for j in range(val_idx.size)]
            last_report = compute_metrics(
                [p.decided for p in vpred],
                [targets[i] for i in val_idx], mode, schema.labels)
            log_extra = {"val_accuracy": last_report.accuracy,
                         "val_macro_f1": last_report.f1}
        if run is not None:
            run.log_epoch(epoch, loss_sum / order.size, **log_extra)
    return params, last_report


def _fetch_scores(texts: list[str], schema: LabelSchema, mode: TaskMode,
                  pcfgs: Sequence[ProviderConfig],
                  cache: Optional[ScoreCache],
                  providers) -> list[list[LLMScore]]:
    """Per-provider score lists, cache-first, in configured provider order."""
    per_provider = []
    for j, pcfg in enumerate(pcfgs):
        client = providers[j] if providers is not None else None
        per_provider.append(score_batch(texts, schema, mode, pcfg,
                                        cache=cache, provider=client))
    return per_provider


def fit(ds: Dataset, cfg: AutoFusionConfig,
        runs_root: Optional[Union[str, Path]] = None,
        cache: Optional[ScoreCache] = None,
        providers: Optional[Sequence] = None,
        ) -> tuple[FusionModel, RunRecord]:
    """Train a fusion classifier.

    Order of work: validate, fingerprint, open cache, prefetch LLM scores
    for every text, then run the joint two-rate loop. `providers` optionally
    injects one client object per configured provider (testing hook).

    Returns the model plus the finalized RunRecord (epoch losses, validation
    metrics when validation_fraction > 0, and final whole-set predictions).
    """
    _check_training_dataset(ds, cfg)
    fingerprint = dataset_fingerprint(ds)
    if cache is None and cfg.cache_dir is not None:
        cache = cache_open(cfg.cache_dir, fingerprint, policy=cfg.cache_policy)
    texts = ds.texts()
    per_provider = _fetch_scores(texts, ds.schema, ds.mode,
                                 cfg.llm_providers, cache, providers)
    score_rows = [[scores[i] for scores in per_provider]
                  for i in range(len(texts))]
    encoder = _build_encoder(cfg)
    lr_small = cfg.encoder.lr_small if isinstance(cfg.encoder, EncoderConfig) \
        else 0.0
    run = run_create(runs_root, cfg.to_dict(), fingerprint, ds.schema.labels)
    targets = [row.target for row in ds.rows]
    params, last_report = _train(
        encoder, texts, targets, score_rows, ds.schema, ds.mode,
        cfg.fusion, lr_small, cfg.validation_fraction, run)
    model = FusionModel(ds.schema, ds.mode, encoder, cfg.llm_providers,
                        cfg.fusion, params)
    preds = _predict_from_scores(model, texts, per_provider)
    run.store_predictions(preds, targets)
    record = run.finalize(last_report)
    return model, record


def _predict_from_scores(model: FusionModel, texts: Sequence[str],
                         per_provider: list[list[LLMScore]]) -> list[Prediction]:
    if not texts:
        return []
    embs = model.encoder.encode_batch(list(texts))
    x = np.stack([
        assemble_input(embs[i], [scores[i] for scores in per_provider])
        for i in range(len(texts))
    ])
    logits, _ = forward(x, model.fusion_params)
    return [decide(logits[i], model.mode, model.fusion_cfg.threshold)
            for i in range(len(texts))]


def predict(model: FusionModel, texts: Sequence[str],
            cache: Optional[ScoreCache] = None,
            providers: Optional[Sequence] = None) -> list[Prediction]:
    """Classify texts in order: LLM scores (cache-first) -> encode ->
    fuse -> decide. An empty input yields an empty output."""
    texts = list(texts)
    if not texts:
        return []
    per_provider = _fetch_scores(texts, model.schema, model.mode,
                                 model.providers, cache, providers)
    return _predict_from_scores(model, texts, per_provider)


def evaluate(model: FusionModel, ds: Dataset,
             cache: Optional[ScoreCache] = None,
             providers: Optional[Sequence] = None,
             run: Optional[RunHandle] = None) -> MetricsReport:
    """Predict over a labeled dataset and score the decisions.

    When a RunHandle is supplied the predictions and report are stored on it
    and the run is finalized.
    """
    if tuple(ds.schema.labels) != tuple(model.schema.labels):
        raise DataError(
            f"dataset labels {list(ds.schema.labels)} do not match the "
            f"model's labels {list(model.schema.labels)}"
        )
    if ds.mode is not model.mode:
        raise DataError("dataset mode does not match the model's mode")
    violations = validate_dataset(ds)
    missing = [i for i, row in enumerate(ds.rows) if row.target is None]
    if missing:
        violations.extend(f"row {i}: evaluation requires a target"
                          for i in missing)
    if violations:
        raise InvalidDatasetError(violations)
    preds = predict(model, ds.texts(), cache=cache, providers=providers)
    targets = [row.target for row in ds.rows]
    report = compute_metrics([p.decided for p in preds], targets, ds.mode,
                             model.schema.labels)
    if run is not None:
        run.store_predictions(preds, targets)
        run.finalize(report)
    return report


# ---------------------------------------------------------------------------
# Single-signal baselines: encoder + head trained alone, and decisions taken
# directly on (mean) LLM scores. Together with fit() they make the
# three-way complementarity comparison runnable.

@dataclass
class EncoderOnlyModel:
    """Encoder + MLP head trained without any LLM slice in the input."""

    schema: LabelSchema
    mode: TaskMode
    encoder: Union[HashedNgramEncoder, FrozenLookupEncoder]
    fusion_cfg: FusionConfig
    params: FusionParams


def fit_encoder_baseline(ds: Dataset, cfg: AutoFusionConfig,
                         runs_root: Optional[Union[str, Path]] = None,
                         ) -> tuple[EncoderOnlyModel, RunRecord]:
    """Train the encoder-only baseline with the same loop and seeds."""
    _check_training_dataset(ds, cfg)
    fingerprint = dataset_fingerprint(ds)
    encoder = _build_encoder(cfg)
    lr_small = cfg.encoder.lr_small if isinstance(cfg.encoder, EncoderConfig) \
        else 0.0
    config_doc = dict(cfg.to_dict(), baseline="encoder_only")
    run = run_create(runs_root, config_doc, fingerprint, ds.schema.labels)
    texts = ds.texts()
    targets = [row.target for row in ds.rows]
    params, last_report = _train(
        encoder, texts, targets, None, ds.schema, ds.mode,
        cfg.fusion, lr_small, cfg.validation_fraction, run)
    model = EncoderOnlyModel(ds.schema, ds.mode, encoder, cfg.fusion, params)
    preds = predict_encoder_baseline(model, texts)
    run.store_predictions(preds, targets)
    record = run.finalize(last_report)
    return model, record


def predict_encoder_baseline(model: EncoderOnlyModel,
                             texts: Sequence[str]) -> list[Prediction]:
    texts = list(texts)
    if not texts:
        return []
    x = np.stack(model.encoder.encode_batch(texts))
    logits, _ = forward(x, model.params)
    return [decide(logits[i], model.mode, model.fusion_cfg.threshold)
            for i in range(len(texts))]


def llm_only_predict(per_provider: Sequence[Sequence[LLMScore]],
                     mode: TaskMode,
                     threshold: Union[float, Sequence[float]] = 0.5,
                     ) -> list[Prediction]:
    """Decide directly on LLM scores, averaged across providers.

    MULTI_CLASS takes the argmax (lowest index wins ties); MULTI_LABEL
    thresholds each class inclusively.
    """
    if not per_provider:
        raise ValueError("at least one provider score list is required")
    n = len(per_provider[0])
    preds = []
    for i in range(n):
        mean = np.mean([np.asarray(scores[i].scores, dtype=np.float64)
                        for scores in per_provider], axis=0)
        k = mean.size
        if mode is TaskMode.MULTI_CLASS:
            winner = int(np.argmax(mean))
            bits = tuple(1 if j == winner else 0 for j in range(k))
        else:
            th = np.full(k, threshold) if np.isscalar(threshold) \
                else np.asarray(threshold, dtype=np.float64)
            bits = tuple(int(s >= t) for s, t in zip(mean, th))
        preds.append(Prediction(ScoreVector(mean.tolist()), LabelVector(bits)))
    return preds


# ---------------------------------------------------------------------------
# Model persistence. One JSON document, keys sorted, floats via repr: saving
# the same model twice yields identical bytes, and load(save(m)) predicts
# bit-identically. Deliberately no timestamps or environment fields.

def _encoder_to_doc(encoder) -> dict:
    if isinstance(encoder, HashedNgramEncoder):
        return {
            "kind": "hashed_ngram",
            "dim": encoder.cfg.dim,
            "ngram_sizes": list(encoder.cfg.ngram_sizes),
            "buckets": encoder.cfg.buckets,
            "lr_small": encoder.cfg.lr_small,
            "projection": encoder.params.projection.ravel().tolist(),
        }
    if isinstance(encoder, FrozenLookupEncoder):
        return {
            "kind": "frozen_lookup",
            "dim": encoder.dim,
            "table": {text: vec.tolist() for text, vec in encoder.table.items()},
        }
    raise ModelFormatError(f"unsupported encoder type {type(encoder).__name__}")


def _encoder_from_model_doc(doc: dict):
    kind = doc["kind"]
    if kind == "hashed_ngram":
        cfg = EncoderConfig(dim=doc["dim"],
                            ngram_sizes=tuple(doc["ngram_sizes"]),
                            buckets=doc["buckets"],
                            lr_small=doc["lr_small"])
        flat = np.asarray(doc["projection"], dtype=np.float64)
        if flat.size != cfg.buckets * cfg.dim:
            raise ModelFormatError(
                f"projection has {flat.size} values, expected "
                f"{cfg.buckets * cfg.dim}"
            )
        params = EncoderParams(flat.reshape(cfg.buckets, cfg.dim))
        return HashedNgramEncoder(cfg, params=params)
    if kind == "frozen_lookup":
        table = {text: np.asarray(vec, dtype=np.float64)
                 for text, vec in doc["table"].items()}
        return FrozenLookupEncoder(table, dim=doc["dim"])
    raise ModelFormatError(f"unknown encoder kind {kind!r}")


def save_model(model: FusionModel, path: Union[str, Path]) -> None:
    """Persist a model as a single self-contained JSON file."""
    threshold = model.fusion_cfg.threshold
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "labels": list(model.schema.labels),
        "mode": model.mode.value,
        "providers": [asdict(p) for p in model.providers],
        "encoder": _encoder_to_doc(model.encoder),
        "fusion": {
            "hidden_sizes": list(model.fusion_cfg.hidden_sizes),
            "lr_high": model.fusion_cfg.lr_high,
            "epochs": model.fusion_cfg.epochs,
            "train_batch_size": model.fusion_cfg.train_batch_size,
            "seed": model.fusion_cfg.seed,
            "threshold": list(threshold) if isinstance(threshold, tuple)
                         else threshold,
            "layers": [
                {
                    "shape": list(w.shape),
                    "weight": w.ravel().tolist(),
                    "bias": b.tolist(),
                }
                for w, b in zip(model.fusion_params.weights,
                                model.fusion_params.biases)
            ],
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_model(path: Union[str, Path]) -> FusionModel:
    """Read a model file back; predictions match the saved model exactly."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from None
    try:
        doc = json.loads(raw)
    except ValueError as exc:
        raise ModelFormatError(f"model file {path} is not valid JSON: {exc}") \
            from None
    try:
        version = doc["format_version"]
        if version != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"model format version {version} unsupported "
                f"(expected {MODEL_FORMAT_VERSION})"
            )
        schema = LabelSchema(doc["labels"])
        mode = TaskMode(doc["mode"])
        providers = tuple(ProviderConfig(**p) for p in doc["providers"])
        encoder = _encoder_from_model_doc(doc["encoder"])
        fdoc = doc["fusion"]
        threshold = fdoc["threshold"]
        fusion_cfg = FusionConfig(
            hidden_sizes=tuple(fdoc["hidden_sizes"]),
            lr_high=fdoc["lr_high"],
            epochs=fdoc["epochs"],
            train_batch_size=fdoc["train_batch_size"],
            seed=fdoc["seed"],
            threshold=tuple(threshold) if isinstance(threshold, list)
                      else threshold,
        )
        weights, biases = [], []
        for layer in fdoc["layers"]:
            shape = tuple(layer["shape"])
            flat = np.asarray(layer["weight"], dtype=np.float64)
            if flat.size != shape[0] * shape[1]:
                raise ModelFormatError(
                    f"layer weight has {flat.size} values, expected "
                    f"{shape[0] * shape[1]}"
                )
            weights.append(flat.reshape(shape))
            biases.append(np.asarray(layer["bias"], dtype=np.float64))
        params = FusionParams(weights, biases)
        return FusionModel(schema, mode, encoder, providers,
                           fusion_cfg, params)
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError,
            ConfigurationError) as exc:
        raise ModelFormatError(
            f"model file {path} is structurally invalid: {exc}"
        ) from None


# ---------------------------------------------------------------------------

class AutoFusionClassifier:
    """Config-in, predictions-out wrapper over fit/predict/evaluate.

    Accepts an AutoFusionConfig or a plain mapping (the YAML schema). Data
    may be a Dataset, a list of record mappings, or anything exposing
    pandas' to_dict("records").
    """

    def __init__(self, config: Union[dict, AutoFusionConfig]):
        if isinstance(config, AutoFusionConfig):
            self.config = config
        else:
            self.config = build_config(dict(config))
        self.model: Optional[FusionModel] = None
        self.last_run: Optional[RunRecord] = None
        self._cache: Optional[ScoreCache] = None

    def fit(self, data, runs_root: Optional[Union[str, Path]] = None,
            providers: Optional[Sequence] = None) -> "AutoFusionClassifier":
        ds = self._as_dataset(data)
        if self.config.cache_dir is not None:
            self._cache = cache_open(self.config.cache_dir,
                                     dataset_fingerprint(ds),
                                     policy=self.config.cache_policy)
        self.model, self.last_run = fit(ds, self.config,
                                        runs_root=runs_root,
                                        cache=self._cache,
                                        providers=providers)
        return self

    def predict(self, texts: Sequence[str],
                providers: Optional[Sequence] = None) -> list[Prediction]:
        return predict(self._require_model(), list(texts),
                       cache=self._open_cache(), providers=providers)

    def evaluate(self, data, runs_root: Optional[Union[str, Path]] = None,
                 providers: Optional[Sequence] = None) -> MetricsReport:
        model = self._require_model()
        ds = self._as_dataset(data)
        run = None
        if runs_root is not None:
            run = run_create(runs_root, self.config.to_dict(),
                             dataset_fingerprint(ds), model.schema.labels)
        return evaluate(model, ds, cache=self._open_cache(),
                        providers=providers, run=run)

    def save(self, path: Union[str, Path]) -> None:
        save_model(self._require_model(), path)

    @classmethod
    def from_model_file(cls, path: Union[str, Path],
                        config: Optional[Union[dict, AutoFusionConfig]] = None,
                        ) -> "AutoFusionClassifier":
        model = load_model(path)
        if config is None:
            config = AutoFusionConfig(
                label_columns=model.schema.labels,
                multi_label=model.mode is TaskMode.MULTI_LABEL,
                llm_providers=model.providers,
                encoder=model.encoder.cfg
                if isinstance(model.encoder, HashedNgramEncoder)
                else EncoderConfig(),
                fusion=model.fusion_cfg,
            )
        clf = cls(config)
        clf.model = model
        return clf

    def _require_model(self) -> FusionModel:
        if self.model is None:
            raise RunStateError("fit (or load a model) before predicting")
        return self.model

    def _open_cache(self) -> Optional[ScoreCache]:
        if self._cache is not None:
            return self._cache
        if self.config.cache_dir is None:
            return None
        manifest = Path(self.config.cache_dir) / _MANIFEST_NAME
        if not manifest.exists():
            return None
        self._cache = cache_open_adopt(self.config.cache_dir)
        return self._cache

    def _as_dataset(self, data) -> Dataset:
        if isinstance(data, Dataset):
            return data
        if hasattr(data, "to_dict"):
            records = data.to_dict("records")
        else:
            records = list(data)
        schema = self.config.schema
        mode = self.config.mode
        tc = self.config.text_column
        texts: list[str] = []
        targets: list[Optional[LabelVector]] = []
        for i, rec in enumerate(records):
            if not isinstance(rec, dict):
                raise DataError(
                    f"record {i}: expected a mapping, got {type(rec).__name__}"
                )
            if tc not in rec:
                raise DataError(f"record {i}: missing text column {tc!r}")
            texts.append(str(rec[tc]))
            present = [name for name in schema.labels if name in rec]
            if not present:
                targets.append(None)
                continue
            if len(present) != schema.K:
                absent = [n for n in schema.labels if n not in rec]
                raise DataError(
                    f"record {i}: missing label columns {absent}"
                )
            bits = [_bit(rec[name], i, name) for name in schema.labels]
            targets.append(LabelVector(bits))
        return make_dataset(schema, mode, texts, targets)


def _bit(value, row: int, column: str) -> int:
    """Coerce a record's label cell to 0/1 or fail naming the cell."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (int, float)) and value in (0, 1):
        return int(value)
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return int(value.strip())
    raise DataError(
        f"record {row}: label column {column!r} must be 0 or 1, "
        f"got {value!r}"
    )
