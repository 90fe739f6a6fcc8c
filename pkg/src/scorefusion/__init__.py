"""Fusion text classification: trainable text encoder + per-class LLM
scores, combined by a compact jointly trained MLP."""

from ._version import __version__
from .cache import (
    CacheEntry,
    CacheKey,
    ScoreCache,
    cache_get,
    cache_open,
    cache_open_adopt,
    cache_put,
)
from .core import (
    Dataset,
    LabelSchema,
    LabelVector,
    ScoreVector,
    TaskMode,
    TextExample,
    dataset_fingerprint,
    make_dataset,
    validate_dataset,
)
from .encoder import (
    EncoderConfig,
    FrozenLookupEncoder,
    HashedNgramEncoder,
    load_precomputed_embeddings,
)
from .errors import (
    CacheWriteError,
    ConfigurationError,
    CorruptCacheError,
    DataError,
    InvalidDatasetError,
    ModelFormatError,
    ProviderUnavailableError,
    RunStateError,
    ScoreFusionError,
    StaleCacheError,
    UnknownTextError,
)
from .fusion import (
    FusionConfig,
    FusionParams,
    FusionTape,
    GradientBundle,
    Prediction,
    assemble_input,
    batch_loss_and_dlogits,
    decide,
    fusion_step,
    grad_loss_multiclass,
    grad_loss_multilabel,
    init_fusion_params,
    loss_multiclass,
    loss_multilabel,
    sigmoid,
    softmax,
)
from .fusion import backward as fusion_backward
from .fusion import forward as fusion_forward
from .llm import (
    LLMScore,
    MockProvider,
    ProviderConfig,
    build_prompt,
    load_mock_table,
    make_provider_config,
    parse_scores,
    score_batch,
    score_text,
    write_mock_table,
)
from .metrics import LabelMetrics, MetricsReport, compute_metrics
from .pipeline import (
    AutoFusionClassifier,
    AutoFusionConfig,
    EncoderOnlyModel,
    FusionModel,
    build_config,
    evaluate,
    fit,
    fit_encoder_baseline,
    llm_only_predict,
    load_model,
    predict,
    predict_encoder_baseline,
    save_model,
)
from .results import RunRecord, load_run, run_compare, run_create
from .synthetic import ComplementaritySplit, make_complementary_data

__all__ = [
    "__version__",
    "AutoFusionClassifier",
    "AutoFusionConfig",
    "CacheEntry",
    "CacheKey",
    "CacheWriteError",
    "ComplementaritySplit",
    "ConfigurationError",
    "CorruptCacheError",
    "DataError",
    "Dataset",
    "EncoderConfig",
    "EncoderOnlyModel",
    "FrozenLookupEncoder",
    "FusionConfig",
    "FusionModel",
    "FusionParams",
    "FusionTape",
    "GradientBundle",
    "HashedNgramEncoder",
    "InvalidDatasetError",
    "LLMScore",
    "LabelMetrics",
    "LabelSchema",
    "LabelVector",
    "MetricsReport",
    "MockProvider",
    "ModelFormatError",
    "Prediction",
    "ProviderConfig",
    "ProviderUnavailableError",
    "RunRecord",
    "RunStateError",
    "ScoreCache",
    "ScoreFusionError",
    "ScoreVector",
    "StaleCacheError",
    "TaskMode",
    "TextExample",
    "UnknownTextError",
    "assemble_input",
    "batch_loss_and_dlogits",
    "build_config",
    "build_prompt",
    "cache_get",
    "cache_open",
    "cache_open_adopt",
    "cache_put",
    "compute_metrics",
    "dataset_fingerprint",
    "decide",
    "evaluate",
    "fit",
    "fit_encoder_baseline",
    "fusion_backward",
    "fusion_forward",
    "fusion_step",
    "grad_loss_multiclass",
    "grad_loss_multilabel",
    "init_fusion_params",
    "llm_only_predict",
    "loss_multiclass",
    "loss_multilabel",
    "load_model",
    "load_mock_table",
    "load_precomputed_embeddings",
    "load_run",
    "make_complementary_data",
    "make_dataset",
    "make_provider_config",
    "parse_scores",
    "predict",
    "predict_encoder_baseline",
    "run_compare",
    "run_create",
    "save_model",
    "score_batch",
    "score_text",
    "sigmoid",
    "softmax",
    "validate_dataset",
    "write_mock_table",
]
