"""Domain types shared by every module: label schemas, examples, datasets,
task modes, score vectors, and dataset fingerprinting.

All types here are immutable after construction and safe to share across
threads. Label order is frozen at schema creation; every vector in the
package is positional against that order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence


class TaskMode(Enum):
    """Classification regime. Controls loss, activation, and decision rule."""

    MULTI_CLASS = "multi_class"
    MULTI_LABEL = "multi_label"

    @staticmethod
    def from_multi_label(multi_label: bool) -> "TaskMode":
        return TaskMode.MULTI_LABEL if multi_label else TaskMode.MULTI_CLASS


@dataclass(frozen=True)
class LabelSchema:
    """The ordered universe of K label names.

    Index i <-> label i everywhere; the binding never changes for the
    lifetime of a model.
    """

    labels: tuple[str, ...]

    def __init__(self, labels: Iterable[str]):
        object.__setattr__(self, "labels", tuple(labels))
        if len(self.labels) < 2:
            raise ValueError("a label schema needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label names must be unique")
        if any(not name for name in self.labels):
            raise ValueError("label names must be non-empty")

    @property
    def K(self) -> int:
        return len(self.labels)

    def index_of(self, name: str) -> int:
        return self.labels.index(name)


@dataclass(frozen=True)
class LabelVector:
    """Binary target vector of length K.

    In MULTI_CLASS mode exactly one bit is set; in MULTI_LABEL mode any
    number of bits (including zero) may be set. Mode conformance is checked
    by validate_dataset, not by the type itself.
    """

    bits: tuple[int, ...]

    def __init__(self, bits: Iterable[int]):
        as_tuple = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in as_tuple):
            raise ValueError("label vector bits must be 0 or 1")
        object.__setattr__(self, "bits", as_tuple)

    @staticmethod
    def from_index(index: int, k: int) -> "LabelVector":
        """One-hot vector with bit `index` set."""
        if not 0 <= index < k:
            raise ValueError(f"index {index} out of range for K={k}")
        return LabelVector(tuple(1 if i == index else 0 for i in range(k)))

    def active_indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class TextExample:
    """One labeled or unlabeled text row. Empty text is legal everywhere."""

    text: str
    target: Optional[LabelVector] = None


@dataclass(frozen=True)
class Dataset:
    """Texts plus schema and mode. Row order is significant (it is part of
    the fingerprint)."""

    schema: LabelSchema
    mode: TaskMode
    rows: tuple[TextExample, ...] = field(default_factory=tuple)

    def __init__(self, schema: LabelSchema, mode: TaskMode,
                 rows: Iterable[TextExample] = ()):
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "rows", tuple(rows))

    def texts(self) -> list[str]:
        return [row.text for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class ScoreVector:
    """K finite real numbers, positional against a schema."""

    values: tuple[float, ...]

    def __init__(self, values: Iterable[float]):
        as_tuple = tuple(float(v) for v in values)
        if any(not math.isfinite(v) for v in as_tuple):
            raise ValueError("score vector values must be finite")
        object.__setattr__(self, "values", as_tuple)

    def __len__(self) -> int:
        return len(self.values)


def validate_dataset(ds: Dataset) -> list[str]:
    """Check every row against the mode's target invariant.

    Total: never raises on malformed content, only reports. Returns an empty
    list iff the dataset is valid. Each violation names the row index and the
    rule broken.
    """
    violations: list[str] = []
    k = ds.schema.K
    for i, row in enumerate(ds.rows):
        if row.target is None:
            continue
        if len(row.target) != k:
            violations.append(
                f"row {i}: target has {len(row.target)} bits, schema has {k} labels"
            )
            continue
        active = sum(row.target.bits)
        if ds.mode is TaskMode.MULTI_CLASS and active != 1:
            violations.append(
                f"row {i}: multi-class target must have exactly one active label"
            )
    return violations


# Canonical byte serialization for fingerprinting. Every covered field is
# written as an 8-byte big-endian length prefix followed by its UTF-8 bytes,
# in this fixed order: label count, each label name, mode value, row count,
# then per row the text and the target (sentinel byte 0x00 for "no target",
# 0x01 followed by the bits as ASCII '0'/'1' otherwise). Row order is
# significant by design: shuffling rows invalidates caches, which is safer
# than silently reusing them.

_NO_TARGET = b"\x00"
_HAS_TARGET = b"\x01"


def _put_str(h, s: str) -> None:
    data = s.encode("utf-8")
    h.update(len(data).to_bytes(8, "big"))
    h.update(data)


def dataset_fingerprint(ds: Dataset) -> str:
    """SHA-256 digest (64 hex chars) of the canonical serialization of a
    dataset: schema labels in order, mode, and every row's text and target
    in row order. Stable across process restarts and platforms."""
    h = hashlib.sha256()
    h.update(len(ds.schema.labels).to_bytes(8, "big"))
    for name in ds.schema.labels:
        _put_str(h, name)
    _put_str(h, ds.mode.value)
    h.update(len(ds.rows).to_bytes(8, "big"))
    for row in ds.rows:
        _put_str(h, row.text)
        if row.target is None:
            h.update(_NO_TARGET)
        else:
            h.update(_HAS_TARGET)
            h.update("".join(str(b) for b in row.target.bits).encode("ascii"))
    return h.hexdigest()


def text_digest(text: str) -> str:
    """SHA-256 hex digest of a single text (used in cache keys)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def make_dataset(schema: LabelSchema, mode: TaskMode,
                 texts: Sequence[str],
                 targets: Optional[Sequence[Optional[LabelVector]]] = None) -> Dataset:
    """Convenience constructor pairing texts with optional targets."""
    if targets is None:
        rows = [TextExample(t) for t in texts]
    else:
        if len(targets) != len(texts):
            raise ValueError("texts and targets must have equal length")
        rows = [TextExample(t, y) for t, y in zip(texts, targets)]
    return Dataset(schema, mode, rows)
