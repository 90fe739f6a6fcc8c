"""Shared fixtures and hypothesis settings."""

from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

import scorefusion as sf

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


TOY_TEXTS = (
    "alpha bird sings", "beta stone falls", "gamma wind blows",
    "delta rain drips", "epsilon fox runs", "zeta moon glows",
    "eta tide turns", "theta leaf drifts",
)


@pytest.fixture
def toy_schema() -> sf.LabelSchema:
    return sf.LabelSchema(("yes", "no"))


@pytest.fixture
def toy_dataset(toy_schema) -> sf.Dataset:
    """8 distinct texts, alternating one-hot targets."""
    targets = [sf.LabelVector.from_index(i % 2, 2) for i in range(len(TOY_TEXTS))]
    return sf.make_dataset(toy_schema, sf.TaskMode.MULTI_CLASS,
                           list(TOY_TEXTS), targets)


@pytest.fixture
def toy_table() -> dict[str, tuple[float, ...]]:
    """Uninformative mock scores: the encoder has to do all the work."""
    return {t: (0.5, 0.5) for t in TOY_TEXTS}


@pytest.fixture
def mock_pcfg() -> sf.ProviderConfig:
    return sf.ProviderConfig(provider_id="mock")


def small_fusion_config(**overrides) -> sf.AutoFusionConfig:
    """A fast config for pipeline tests; toy-scale but real everywhere."""
    fields = dict(
        label_columns=("yes", "no"),
        llm_providers=(sf.ProviderConfig(provider_id="mock"),),
        encoder=sf.EncoderConfig(dim=16, buckets=2 ** 10, lr_small=0.05),
        fusion=sf.FusionConfig(hidden_sizes=(16,), epochs=30, lr_high=0.5,
                               train_batch_size=8, seed=42),
        validation_fraction=0.0,
    )
    fields.update(overrides)
    return sf.AutoFusionConfig(**fields)


@pytest.fixture
def toy_config() -> sf.AutoFusionConfig:
    return small_fusion_config()
