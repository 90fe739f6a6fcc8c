"""LLM scoring: structured prompts, provider clients with retry and
backoff, per-class score parsing, and batched scoring with cache reuse.

The wire protocol is a single internal OpenAI-style chat-completions shape;
per-provider adapters translate requests and responses as needed. A
deterministic mock provider (a text -> scores lookup) makes every path
testable offline.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import requests

from .cache import CacheEntry, CacheKey, ScoreCache
from .core import LabelSchema, TaskMode, text_digest
from .errors import CacheWriteError, ConfigurationError, ProviderUnavailableError

import logging

logger = logging.getLogger(__name__)

PROVIDER_IDS = ("openai-compatible", "gemini-compatible", "deepseek-compatible", "mock")

_PROVIDER_ALIASES = {
    "openai": "openai-compatible",
    "gemini": "gemini-compatible",
    "deepseek": "deepseek-compatible",
}

# Reasonable endpoint/key defaults per provider family; all overridable.
DEFAULT_ENDPOINTS = {
    "openai-compatible": "https://api.openai.com/v1/chat/completions",
    "deepseek-compatible": "https://api.deepseek.com/chat/completions",
    "gemini-compatible": "https://generativelanguage.googleapis.com/v1beta/models/{model}:generateContent",
    "mock": "",
}
DEFAULT_KEY_ENVS = {
    "openai-compatible": "OPENAI_API_KEY",
    "deepseek-compatible": "DEEPSEEK_API_KEY",
    "gemini-compatible": "GEMINI_API_KEY",
    "mock": "",
}
DEFAULT_MODELS = {
    "openai-compatible": "gpt-4o-mini",
    "deepseek-compatible": "deepseek-chat",
    "gemini-compatible": "gemini-2.0-flash",
    "mock": "mock",
}


def resolve_provider_id(name: str) -> str:
    """Map a provider name or short alias to a canonical provider id."""
    resolved = _PROVIDER_ALIASES.get(name, name)
    if resolved not in PROVIDER_IDS:
        raise ConfigurationError(
            f"unknown provider {name!r}; expected one of {', '.join(PROVIDER_IDS)}"
        )
    return resolved


@dataclass(frozen=True)
class ProviderConfig:
    """One LLM provider endpoint and its calling discipline."""

    provider_id: str = "mock"
    model_name: str = "mock"
    endpoint_url: str = ""
    api_key_env: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    backoff_base_ms: int = 500
    llm_batch_size: int = 8
    timeout_ms: int = 30_000
    mock_table_path: Optional[str] = None

    def __post_init__(self):
        if self.provider_id not in PROVIDER_IDS:
            raise ConfigurationError(
                f"unknown provider_id {self.provider_id!r}; "
                f"expected one of {', '.join(PROVIDER_IDS)}"
            )
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if self.llm_batch_size < 1:
            raise ConfigurationError("llm_batch_size must be >= 1")
        if self.backoff_base_ms < 0:
            raise ConfigurationError("backoff_base_ms must be >= 0")
        if self.timeout_ms <= 0:
            raise ConfigurationError("timeout_ms must be > 0")


def make_provider_config(name: str, **overrides) -> ProviderConfig:
    """Build a ProviderConfig from a provider name/alias plus defaults."""
    pid = resolve_provider_id(name)
    fields = {
        "provider_id": pid,
        "model_name": DEFAULT_MODELS[pid],
        "endpoint_url": DEFAULT_ENDPOINTS[pid],
        "api_key_env": DEFAULT_KEY_ENVS[pid],
    }
    fields.update(overrides)
    return ProviderConfig(**fields)


@dataclass(frozen=True)
class LLMScore:
    """Per-class scores in [0, 1] from one provider for one text.

    parse_ok is False exactly when no label -> number mapping could be
    extracted, in which case the scores are the uniform fallback 1/K.
    raw_excerpt keeps the first 256 chars of the raw response for audit
    (empty for cache hits).
    """

    scores: tuple[float, ...]
    parse_ok: bool
    raw_excerpt: str = ""

    def __post_init__(self):
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "raw_excerpt", self.raw_excerpt[:256])
        if any(not (0.0 <= s <= 1.0) for s in self.scores):
            raise ValueError("LLM scores must lie in [0, 1]")
        if not self.parse_ok:
            uniform = 1.0 / len(self.scores)
            if any(s != uniform for s in self.scores):
                raise ValueError("parse_ok=False requires the uniform fallback")

    @staticmethod
    def uniform_fallback(k: int, raw_excerpt: str = "") -> "LLMScore":
        return LLMScore((1.0 / k,) * k, parse_ok=False, raw_excerpt=raw_excerpt)


# Bump when the prompt wording changes; part of every cache key, so stale
# prompts can never serve cached scores.
PROMPT_TEMPLATE_VERSION = 1

TEXT_BEGIN = "<<<TEXT>>>"
TEXT_END = "<<<END>>>"


def build_prompt(text: str, schema: LabelSchema, mode: TaskMode) -> str:
    """Deterministic scoring prompt.

    Lists all label names verbatim in schema order, asks for a JSON object
    mapping each label to a score in [0, 1], states the mode's decision
    semantics, and embeds the input text verbatim between delimiters.
    """
    lines = [
        "You are a precise text classification scorer.",
        f"Score how well each label applies to the text between the {TEXT_BEGIN} "
        f"and {TEXT_END} markers.",
        "Labels:",
    ]
    lines.extend(f"- {name}" for name in schema.labels)
    if mode is TaskMode.MULTI_CLASS:
        lines.append(
            "Exactly one label is correct: give the single best label a clearly "
            "higher score than the rest."
        )
    else:
        lines.append(
            "Labels are independent: score each label on its own; any number of "
            "labels may apply."
        )
    lines.append(
        "Reply with only a JSON object mapping every label name, written exactly "
        "as listed, to a number between 0 and 1."
    )
    lines.append(TEXT_BEGIN)
    lines.append(text)
    lines.append(TEXT_END)
    return "\n".join(lines)


def extract_prompt_text(prompt: str) -> str:
    """Recover the verbatim input text from a build_prompt output."""
    begin = prompt.index("\n" + TEXT_BEGIN + "\n") + len(TEXT_BEGIN) + 2
    end = prompt.rindex("\n" + TEXT_END)
    return prompt[begin:end]


def prompt_template_digest(schema: LabelSchema, mode: TaskMode) -> str:
    """Digest of the prompt template version, label set, and mode.

    Any change to the wording version, the labels, or the mode changes the
    digest and thereby invalidates cache entries.
    """
    h = hashlib.sha256()
    h.update(str(PROMPT_TEMPLATE_VERSION).encode("ascii"))
    for name in schema.labels:
        data = name.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    h.update(mode.value.encode("ascii"))
    return h.hexdigest()


def _as_score(value) -> float | None:
    """Interpret a JSON value as a finite numeric score, or None."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        num = float(value)
    elif isinstance(value, str):
        try:
            num = float(value)
        except ValueError:
            return None
    else:
        return None
    return num if math.isfinite(num) else None


def parse_scores(response_text: str, schema: LabelSchema) -> LLMScore:
    """Extract the first well-formed label -> number mapping in a response.

    A candidate JSON object is well-formed when at least one key equals a
    label name and every matched label's value is numeric; matched values
    are clamped into [0, 1] and missing labels score 0.0. When no candidate
    qualifies the result is the uniform 1/K fallback with parse_ok=False.
    Total: never raises, whatever the input bytes decode to.
    """
    excerpt = response_text[:256]
    decoder = json.JSONDecoder()
    labels = set(schema.labels)
    pos = response_text.find("{")
    while pos != -1:
        try:
            candidate, _ = decoder.raw_decode(response_text, pos)
        except ValueError:
            candidate = None
        if isinstance(candidate, dict):
            matched = {k: _as_score(v) for k, v in candidate.items() if k in labels}
            if matched and all(v is not None for v in matched.values()):
                clamped = {k: min(1.0, max(0.0, v)) for k, v in matched.items()}
                scores = tuple(clamped.get(name, 0.0) for name in schema.labels)
                return LLMScore(scores, parse_ok=True, raw_excerpt=excerpt)
        pos = response_text.find("{", pos + 1)
    return LLMScore.uniform_fallback(schema.K, raw_excerpt=excerpt)


class TransientProviderError(Exception):
    """Internal: a single attempt failed (transport error or bad status)."""

    def __init__(self, status: int | None, detail: str):
        super().__init__(detail)
        self.status = status


def _requests_transport(url: str, headers: dict, body: dict,
                        timeout_s: float) -> tuple[int, str]:
    resp = requests.post(url, headers=headers, json=body, timeout=timeout_s)
    return resp.status_code, resp.text


class HttpChatProvider:
    """Chat-completions client for the OpenAI/DeepSeek/Gemini families.

    The transport is injectable for tests: a callable
    (url, headers, json_body, timeout_s) -> (status_code, body_text).
    """

    def __init__(self, pcfg: ProviderConfig,
                 transport: Callable[..., tuple[int, str]] | None = None):
        if not pcfg.api_key_env:
            raise ConfigurationError(
                f"provider {pcfg.provider_id} needs api_key_env set"
            )
        api_key = os.environ.get(pcfg.api_key_env, "")
        if not api_key:
            raise ConfigurationError(
                f"environment variable {pcfg.api_key_env} is not set"
            )
        self.pcfg = pcfg
        self.api_key = api_key
        self.transport = transport or _requests_transport
        self.calls = 0

    def complete(self, prompt: str) -> str:
        url, headers, body = self._build_request(prompt)
        self.calls += 1
        try:
            status, text = self.transport(url, headers, body,
                                          self.pcfg.timeout_ms / 1000.0)
        except Exception as exc:
            raise TransientProviderError(None, f"transport error: {exc}") from exc
        if not 200 <= status < 300:
            raise TransientProviderError(status, f"status {status}: {text[:200]}")
        try:
            return self._extract_message(text)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientProviderError(status,
                                         f"malformed response envelope: {exc}") from exc

    def _build_request(self, prompt: str) -> tuple[str, dict, dict]:
        pcfg = self.pcfg
        if pcfg.provider_id == "gemini-compatible":
            url = pcfg.endpoint_url.format(model=pcfg.model_name)
            headers = {"x-goog-api-key": self.api_key,
                       "Content-Type": "application/json"}
            body = {
                "contents": [{"parts": [{"text": prompt}]}],
                "generationConfig": {"temperature": pcfg.temperature},
            }
        else:
            url = pcfg.endpoint_url
            headers = {"Authorization": f"Bearer {self.api_key}",
                       "Content-Type": "application/json"}
            body = {
                "model": pcfg.model_name,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": pcfg.temperature,
            }
        return url, headers, body

    def _extract_message(self, body_text: str) -> str:
        parsed = json.loads(body_text)
        if self.pcfg.provider_id == "gemini-compatible":
            return parsed["candidates"][0]["content"]["parts"][0]["text"]
        return parsed["choices"][0]["message"]["content"]


class MockProvider:
    """Deterministic offline provider: a text -> scores lookup table.

    Texts absent from the table score uniform 1/K. Responses go through the
    same prompt/parse path as real providers. `calls` counts completions,
    which is how tests observe cache economy.
    """

    def __init__(self, table: dict[str, Sequence[float]], schema: LabelSchema):
        for text, scores in table.items():
            if len(scores) != schema.K:
                raise ConfigurationError(
                    f"mock table row for {text!r} has {len(scores)} scores, "
                    f"schema has {schema.K} labels"
                )
        self.table = {t: tuple(float(s) for s in scores)
                      for t, scores in table.items()}
        self.schema = schema
        self.calls = 0

    def complete(self, prompt: str) -> str:
        self.calls += 1
        text = extract_prompt_text(prompt)
        scores = self.table.get(text)
        if scores is None:
            scores = (1.0 / self.schema.K,) * self.schema.K
        return json.dumps({name: score
                           for name, score in zip(self.schema.labels, scores)})


def load_mock_table(path: str) -> dict[str, tuple[float, ...]]:
    """Read a mock lookup table: UTF-8 lines of text TAB K scores."""
    table: dict[str, tuple[float, ...]] = {}
    width: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected text TAB scores"
                )
            try:
                scores = tuple(float(v) for v in parts[1:])
            except ValueError:
                raise ConfigurationError(
                    f"{path}:{lineno}: non-numeric score"
                ) from None
            if width is None:
                width = len(scores)
            elif len(scores) != width:
                raise ConfigurationError(
                    f"{path}:{lineno}: score count {len(scores)} differs from "
                    f"earlier rows ({width})"
                )
            table[parts[0]] = scores
    return table


def write_mock_table(table: dict[str, Sequence[float]], path: str) -> None:
    """Write a mock lookup table in the load_mock_table format.

    Texts containing tabs or newlines cannot be represented and are
    rejected.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for text, scores in table.items():
            if "\t" in text or "\n" in text:
                raise ConfigurationError(
                    f"mock table text contains a tab or newline: {text!r}"
                )
            fh.write(text + "\t" + "\t".join(repr(float(s)) for s in scores)
                     + "\n")


def make_provider(pcfg: ProviderConfig, schema: LabelSchema,
                  transport: Callable[..., tuple[int, str]] | None = None):
    """Instantiate the provider client described by a ProviderConfig."""
    if pcfg.provider_id == "mock":
        table = load_mock_table(pcfg.mock_table_path) if pcfg.mock_table_path else {}
        return MockProvider(table, schema)
    return HttpChatProvider(pcfg, transport=transport)


def score_text(text: str, schema: LabelSchema, mode: TaskMode,
               pcfg: ProviderConfig, provider=None,
               _sleep: Callable[[float], None] = time.sleep) -> LLMScore:
    """Score one text with retries.

    Sends the build_prompt output to the provider at the configured
    temperature. On transport error or non-success status, retries up to
    max_retries with exponential backoff (backoff_base_ms * 2^attempt).
    Returns parse_scores of the final body; raises ProviderUnavailableError
    once retries are exhausted.
    """
    if provider is None:
        provider = make_provider(pcfg, schema)
    prompt = build_prompt(text, schema, mode)
    last: TransientProviderError | None = None
    for attempt in range(pcfg.max_retries + 1):
        try:
            body = provider.complete(prompt)
            return parse_scores(body, schema)
        except TransientProviderError as exc:
            last = exc
            if attempt < pcfg.max_retries:
                _sleep(pcfg.backoff_base_ms * (2 ** attempt) / 1000.0)
    assert last is not None
    raise ProviderUnavailableError(
        f"provider {pcfg.provider_id} unavailable after "
        f"{pcfg.max_retries + 1} attempts: {last}",
        last_status=last.status,
    )


def make_cache_key(pcfg: ProviderConfig, schema: LabelSchema, mode: TaskMode,
                   text: str) -> CacheKey:
    return CacheKey(
        provider_id=pcfg.provider_id,
        model_name=pcfg.model_name,
        prompt_template_digest=prompt_template_digest(schema, mode),
        text_digest=text_digest(text),
    )


def score_batch(texts: Sequence[str], schema: LabelSchema, mode: TaskMode,
                pcfg: ProviderConfig, cache: ScoreCache | None = None,
                provider=None,
                _sleep: Callable[[float], None] = time.sleep) -> list[LLMScore]:
    """Score many texts, cache-first, preserving input order.

    At most llm_batch_size requests are in flight at once. Newly fetched
    scores are written back to the cache. If any text still fails after
    retries the whole batch fails with the failing indices; partial results
    are never returned silently.
    """
    results: list[LLMScore | None] = [None] * len(texts)
    keys: list[CacheKey | None] = [None] * len(texts)
    missing: list[int] = []
    for i, text in enumerate(texts):
        if cache is not None:
            key = make_cache_key(pcfg, schema, mode, text)
            keys[i] = key
            entry = cache.get(key)
            if entry is not None:
                results[i] = LLMScore(entry.scores, entry.parse_ok)
                continue
        missing.append(i)

    if missing and provider is None:
        provider = make_provider(pcfg, schema)

    failures: list[tuple[int, Exception]] = []

    def fetch(i: int) -> None:
        try:
            results[i] = score_text(texts[i], schema, mode, pcfg,
                                    provider=provider, _sleep=_sleep)
        except ProviderUnavailableError as exc:
            failures.append((i, exc))

    if pcfg.llm_batch_size == 1 or len(missing) <= 1:
        for i in missing:
            fetch(i)
    else:
        with ThreadPoolExecutor(max_workers=pcfg.llm_batch_size) as pool:
            list(pool.map(fetch, missing))

    if failures:
        failures.sort(key=lambda pair: pair[0])
        indices = [i for i, _ in failures]
        first = failures[0][1]
        raise ProviderUnavailableError(
            f"{len(indices)} of {len(texts)} texts failed "
            f"(indices {indices}): {first}",
            last_status=getattr(first, "last_status", None),
            failed_indices=indices,
        )

    if cache is not None:
        for i in missing:
            score = results[i]
            assert score is not None and keys[i] is not None
            try:
                cache.put(CacheEntry.fresh(keys[i], score.scores, score.parse_ok,
                                           cache.fingerprint))
            except CacheWriteError as exc:
                logger.warning("cache write failed, continuing uncached: %s", exc)

    return [score for score in results if score is not None]
