"""Evaluation metrics for comparing pipeline output against labeled truth.

Accuracy, per-class/weighted/macro F1, Spearman rank correlation with
average ranks for ties, 1-off accuracy over the five ordinal quality
classes, and network coverage.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Sequence

from .aggregation import SegmentAggregate, SegmentStatus
from .predictions import (
    QUALITY_CLASS_RANK,
    QualityClass,
    SurfaceType,
    quality_to_class,
)


class DegenerateInputError(ValueError):
    """Metric undefined on this input (empty, or constant where ranks
    are needed)."""


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    per_class_f1: dict[Hashable, float]
    weighted_f1: float
    macro_f1: float


def classification_metrics(pairs: Sequence[tuple[Hashable, Hashable]]) -> ClassificationMetrics:
    """Standard multi-class metrics over (predicted, true) pairs.

    Per-class F1 is 2PR/(P+R), zero when P+R is zero; weighted F1 weights
    by true-class support; macro F1 averages over every class observed on
    either side.
    """
    if not pairs:
        raise DegenerateInputError("no pairs to score")
    classes = sorted({c for pair in pairs for c in pair}, key=str)
    correct = sum(1 for p, t in pairs if p == t)
    per_class: dict[Hashable, float] = {}
    weighted = 0.0
    for cls in classes:
        tp = sum(1 for p, t in pairs if p == cls and t == cls)
        fp = sum(1 for p, t in pairs if p == cls and t != cls)
        fn = sum(1 for p, t in pairs if p != cls and t == cls)
        f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        per_class[cls] = f1
        weighted += f1 * (tp + fn)
    return ClassificationMetrics(
        accuracy=correct / len(pairs),
        per_class_f1=per_class,
        weighted_f1=weighted / len(pairs),
        macro_f1=sum(per_class.values()) / len(classes),
    )


def _average_ranks(xs: Sequence[float]) -> list[float]:
    """1-based ranks; ties share the average of their rank positions."""
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and xs[order[j + 1]] == xs[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman_rho(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise DegenerateInputError("need at least 2 pairs")
    if min(xs) == max(xs) or min(ys) == max(ys):
        raise DegenerateInputError("correlation undefined for a constant vector")
    rx = _average_ranks(xs)
    ry = _average_ranks(ys)
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def one_off_accuracy(pairs: Sequence[tuple[int, int]]) -> float:
    """Fraction of (predicted, true) quality classes within one ordinal
    step of each other, classes encoded 1..5."""
    if not pairs:
        raise DegenerateInputError("no pairs to score")
    return sum(1 for p, t in pairs if abs(p - t) <= 1) / len(pairs)


def coverage(aggregates: Sequence[SegmentAggregate]) -> float:
    """Fraction of segments carrying a classified (status ok) value."""
    if not aggregates:
        raise DegenerateInputError("no aggregates")
    return sum(1 for a in aggregates if a.status == SegmentStatus.OK) / len(aggregates)


@dataclass(frozen=True)
class LabeledSample:
    segment_id: str
    true_surface_type: SurfaceType | None
    true_quality_class: QualityClass | None

    def __post_init__(self) -> None:
        if self.true_surface_type is None and self.true_quality_class is None:
            raise ValueError(f"{self.segment_id}: sample carries no truth at all")


def load_truth_csv(path: str | Path) -> dict[str, LabeledSample]:
    """Read `segment_id,true_surface_type,true_quality_class`; blank
    fields mean that truth dimension is unknown."""
    out: dict[str, LabeledSample] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for line_no, row in enumerate(reader, start=2):
            try:
                surface = row.get("true_surface_type") or None
                quality = row.get("true_quality_class") or None
                sample = LabeledSample(
                    segment_id=row["segment_id"],
                    true_surface_type=SurfaceType(surface) if surface else None,
                    true_quality_class=QualityClass(quality) if quality else None,
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: row {line_no}: {exc}") from None
            out[sample.segment_id] = sample
    return out


@dataclass
class EvalReport:
    n: int
    type_accuracy: float | None
    per_class_f1: dict[str, float]
    weighted_f1: float | None
    macro_f1: float | None
    quality_accuracy: float | None
    one_off_accuracy: float | None
    spearman: float | None
    coverage: float
    n_type_pairs: int
    n_quality_pairs: int
    excluded: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def format_report(report: EvalReport) -> str:
    def fmt(v: float | None) -> str:
        return "n/a" if v is None else f"{v:.4f}"

    lines = [
        f"segments evaluated: {report.n} (excluded: {report.excluded})",
        f"coverage: {fmt(report.coverage)}",
        f"surface type ({report.n_type_pairs} pairs): "
        f"accuracy {fmt(report.type_accuracy)}, weighted F1 {fmt(report.weighted_f1)}, "
        f"macro F1 {fmt(report.macro_f1)}",
    ]
    for cls, f1 in sorted(report.per_class_f1.items()):
        lines.append(f"  F1[{cls}]: {f1:.4f}")
    lines.append(
        f"quality ({report.n_quality_pairs} pairs): accuracy {fmt(report.quality_accuracy)}, "
        f"1-off accuracy {fmt(report.one_off_accuracy)}, spearman {fmt(report.spearman)}"
    )
    return "\n".join(lines)


def evaluate(
    aggregates: Sequence[SegmentAggregate],
    truth: dict[str, LabeledSample],
) -> EvalReport:
    """Score pipeline aggregates against a labeled sample.

    Segments missing on either side of a comparison are excluded pairwise
    and counted. Quality is scored both discretized (accuracy, 1-off) and
    as the continuous mean against the integer truth rank (Spearman).
    """
    if not aggregates:
        raise DegenerateInputError("no aggregates")
    type_pairs: list[tuple[SurfaceType, SurfaceType]] = []
    quality_class_pairs: list[tuple[int, int]] = []
    quality_cont_pairs: list[tuple[float, int]] = []
    matched = 0
    aggregate_ids = {a.segment_id for a in aggregates}
    truth_only = sum(1 for seg_id in truth if seg_id not in aggregate_ids)
    for agg in aggregates:
        sample = truth.get(agg.segment_id)
        if sample is None:
            continue
        matched += 1
        if agg.surface_type is not None and sample.true_surface_type is not None:
            type_pairs.append((agg.surface_type, sample.true_surface_type))
        if agg.quality_mean is not None and sample.true_quality_class is not None:
            true_rank = QUALITY_CLASS_RANK[sample.true_quality_class]
            pred_rank = QUALITY_CLASS_RANK[quality_to_class(agg.quality_mean)]
            quality_class_pairs.append((pred_rank, true_rank))
            quality_cont_pairs.append((agg.quality_mean, true_rank))

    cls_metrics = classification_metrics(type_pairs) if type_pairs else None
    try:
        rho = (
            spearman_rho([p for p, _ in quality_cont_pairs], [t for _, t in quality_cont_pairs])
            if len(quality_cont_pairs) >= 2
            else None
        )
    except DegenerateInputError:
        rho = None

    return EvalReport(
        n=matched,
        type_accuracy=cls_metrics.accuracy if cls_metrics else None,
        per_class_f1=(
            {str(k.value): v for k, v in cls_metrics.per_class_f1.items()} if cls_metrics else {}
        ),
        weighted_f1=cls_metrics.weighted_f1 if cls_metrics else None,
        macro_f1=cls_metrics.macro_f1 if cls_metrics else None,
        quality_accuracy=(
            sum(1 for p, t in quality_class_pairs if p == t) / len(quality_class_pairs)
            if quality_class_pairs
            else None
        ),
        one_off_accuracy=one_off_accuracy(quality_class_pairs) if quality_class_pairs else None,
        spearman=rho,
        coverage=coverage(aggregates),
        n_type_pairs=len(type_pairs),
        n_quality_pairs=len(quality_class_pairs),
        excluded=len(aggregates) - matched + truth_only,
    )
