"""Classification metrics from decided/target label vectors.

Accuracy is exact match in MULTI_CLASS mode and exact-set match (subset
accuracy, the strictest convention) in MULTI_LABEL mode. Per-label
precision/recall/F1 come from one-vs-rest confusion counts; the headline
aggregates are unweighted (macro) means, with micro-averaged variants kept
as extras. Zero-denominator precision/recall/F1 are 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import LabelVector, TaskMode


@dataclass(frozen=True)
class LabelMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"label": self.label, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "support": self.support}

    @staticmethod
    def from_dict(doc: dict) -> "LabelMetrics":
        return LabelMetrics(doc["label"], doc["precision"], doc["recall"],
                            doc["f1"], doc["support"])


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    per_label: tuple[LabelMetrics, ...]
    micro_precision: float
    micro_recall: float
    micro_f1: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "per_label": [m.to_dict() for m in self.per_label],
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
        }

    @staticmethod
    def from_dict(doc: dict) -> "MetricsReport":
        return MetricsReport(
            accuracy=doc["accuracy"], precision=doc["precision"],
            recall=doc["recall"], f1=doc["f1"],
            per_label=tuple(LabelMetrics.from_dict(m) for m in doc["per_label"]),
            micro_precision=doc["micro_precision"],
            micro_recall=doc["micro_recall"], micro_f1=doc["micro_f1"],
        )


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def compute_metrics(decided: Sequence[LabelVector],
                    targets: Sequence[LabelVector],
                    mode: TaskMode,
                    label_names: Sequence[str] | None = None) -> MetricsReport:
    """Confusion-count metrics over parallel decided/target rows."""
    if len(decided) != len(targets):
        raise ValueError(
            f"{len(decided)} decisions vs {len(targets)} targets"
        )
    if not decided:
        raise ValueError("metrics need at least one row")
    k = len(targets[0])
    if any(len(v) != k for v in decided) or any(len(v) != k for v in targets):
        raise ValueError("inconsistent label vector lengths")
    names = list(label_names) if label_names is not None \
        else [f"label_{i}" for i in range(k)]
    if len(names) != k:
        raise ValueError(f"{len(names)} label names for K={k}")

    exact = sum(1 for d, t in zip(decided, targets) if d.bits == t.bits)
    accuracy = exact / len(decided)

    tp = [0] * k
    fp = [0] * k
    fn = [0] * k
    for d, t in zip(decided, targets):
        for i in range(k):
            if d.bits[i] and t.bits[i]:
                tp[i] += 1
            elif d.bits[i] and not t.bits[i]:
                fp[i] += 1
            elif not d.bits[i] and t.bits[i]:
                fn[i] += 1

    per_label = []
    for i in range(k):
        precision = _safe_div(tp[i], tp[i] + fp[i])
        recall = _safe_div(tp[i], tp[i] + fn[i])
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_label.append(LabelMetrics(names[i], precision, recall, f1,
                                      support=tp[i] + fn[i]))

    macro_p = sum(m.precision for m in per_label) / k
    macro_r = sum(m.recall for m in per_label) / k
    macro_f1 = sum(m.f1 for m in per_label) / k

    micro_p = _safe_div(sum(tp), sum(tp) + sum(fp))
    micro_r = _safe_div(sum(tp), sum(tp) + sum(fn))
    micro_f1 = _safe_div(2 * micro_p * micro_r, micro_p + micro_r)

    # mode only disambiguates documentation intent today; both modes share
    # the exact-match accuracy above.
    del mode

    return MetricsReport(
        accuracy=accuracy, precision=macro_p, recall=macro_r, f1=macro_f1,
        per_label=tuple(per_label),
        micro_precision=micro_p, micro_recall=micro_r, micro_f1=micro_f1,
    )
