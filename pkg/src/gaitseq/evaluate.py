"""Confusion-matrix metrics, exact McNemar comparison, fold aggregation.

LAME is the positive class throughout.  Degenerate 0/0 ratios are defined as
0 so that folds without one of the classes never crash a run; reports flag
such folds instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .data import DataError, Label


@dataclass(frozen=True)
class PredictionRecord:
    """One scored sequence: ground truth, decision, and lameness probability."""

    sequence_id: str
    true_label: Label
    pred_label: Label
    score: float

    @property
    def correct(self) -> bool:
        return self.true_label == self.pred_label


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(records: Sequence[PredictionRecord]) -> ConfusionMatrix:
    """Count the four outcomes over a set of predictions."""
    if not records:
        raise DataError("cannot build a confusion matrix from zero predictions")
    seen: set[str] = set()
    tp = fp = tn = fn = 0
    for r in records:
        if r.sequence_id in seen:
            raise DataError(f"duplicate sequence_id in predictions: {r.sequence_id!r}")
        seen.add(r.sequence_id)
        if r.true_label == Label.LAME:
            if r.pred_label == Label.LAME:
                tp += 1
            else:
                fn += 1
        else:
            if r.pred_label == Label.LAME:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    macro_f1: float
    sensitivity: float
    specificity: float

    def as_dict(self) -> dict[str, float]:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
        }


def _ratio(num: float, den: float) -> float:
    # 0/0 is defined as 0 so degenerate folds stay representable.
    return num / den if den > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Accuracy, macro F1, sensitivity, specificity from exact counts.

    The macro F1 averages the F1 with LAME as positive and the F1 with
    NORMAL as positive.
    """
    if cm.total <= 0:
        raise ValueError("confusion matrix is empty")
    f1_lame = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)
    f1_normal = _ratio(2 * cm.tn, 2 * cm.tn + cm.fn + cm.fp)
    return MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        macro_f1=(f1_lame + f1_normal) / 2.0,
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn),
        specificity=_ratio(cm.tn, cm.tn + cm.fp),
    )


@dataclass(frozen=True)
class McNemarResult:
    """Discordant-pair counts and the exact two-sided binomial p-value."""

    b: int  # first classifier correct, second wrong
    c: int  # first classifier wrong, second correct
    p_value: float

    def significant(self, alpha: float = 0.05) -> bool:
        return self.p_value < alpha


def mcnemar_exact(
    preds_a: Sequence[PredictionRecord], preds_b: Sequence[PredictionRecord]
) -> McNemarResult:
    """Exact McNemar test on two paired prediction sets.

    Under the null the discordant count b follows Binomial(b + c, 1/2); the
    p-value doubles the smaller tail and is capped at 1.  Zero discordant
    pairs give p = 1.  Both sets must cover the same sequence ids with the
    same ground truth.
    """
    by_id_a = {r.sequence_id: r for r in preds_a}
    by_id_b = {r.sequence_id: r for r in preds_b}
    if len(by_id_a) != len(preds_a) or len(by_id_b) != len(preds_b):
        raise DataError("duplicate sequence_id in predictions")
    if by_id_a.keys() != by_id_b.keys():
        raise DataError("prediction sets cover different sequence ids")
    b = c = 0
    for seq_id, ra in by_id_a.items():
        rb = by_id_b[seq_id]
        if ra.true_label != rb.true_label:
            raise DataError(f"true label mismatch for sequence {seq_id!r}")
        if ra.correct and not rb.correct:
            b += 1
        elif not ra.correct and rb.correct:
            c += 1
    n = b + c
    if n == 0:
        return McNemarResult(b=b, c=c, p_value=1.0)
    tail = sum(math.comb(n, i) for i in range(min(b, c) + 1))
    # Exact rational 2 * tail / 2^n, rounded once on conversion to float.
    p = float(Fraction(2 * tail, 1 << n))
    return McNemarResult(b=b, c=c, p_value=min(1.0, p))


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float


@dataclass(frozen=True)
class FoldAggregate:
    """Unweighted mean and population standard deviation per metric."""

    accuracy: MeanStd
    macro_f1: MeanStd
    sensitivity: MeanStd
    specificity: MeanStd

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {
            name: {"mean": ms.mean, "std": ms.std}
            for name, ms in (
                ("accuracy", self.accuracy),
                ("macro_f1", self.macro_f1),
                ("sensitivity", self.sensitivity),
                ("specificity", self.specificity),
            )
        }


def aggregate_folds(fold_metrics: Sequence[MetricSet]) -> FoldAggregate:
    """Aggregate per-fold metric sets with equal fold weights."""
    if not fold_metrics:
        raise ValueError("no fold metrics to aggregate")

    def agg(values: list[float]) -> MeanStd:
        if len(set(values)) == 1:
            # exact result; the general path would leave rounding dust
            return MeanStd(mean=values[0], std=0.0)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        return MeanStd(mean=mean, std=math.sqrt(var))

    return FoldAggregate(
        accuracy=agg([m.accuracy for m in fold_metrics]),
        macro_f1=agg([m.macro_f1 for m in fold_metrics]),
        sensitivity=agg([m.sensitivity for m in fold_metrics]),
        specificity=agg([m.specificity for m in fold_metrics]),
    )


def as_percent(value: float) -> str:
    """Report formatting: value as a percentage with two decimals."""
    return f"{100.0 * value:.2f}"


PREDICTIONS_HEADER = ("sequence_id", "true_label", "pred_label", "score")


def write_predictions_csv(path: str | Path, records: Iterable[PredictionRecord]) -> None:
    lines = [",".join(PREDICTIONS_HEADER)]
    for r in records:
        lines.append(
            f"{r.sequence_id},{r.true_label.to_text()},{r.pred_label.to_text()},{r.score!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_predictions_csv(path: str | Path) -> list[PredictionRecord]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"predictions file not found: {path}")
    records: list[PredictionRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTIONS_HEADER:
            raise DataError(f"unexpected predictions header in {path}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"{path} line {line_no}: expected 4 values")
            try:
                score = float(row[3])
            except ValueError:
                raise DataError(f"{path} line {line_no}: non-numeric score") from None
            records.append(
                PredictionRecord(
                    sequence_id=row[0],
                    true_label=Label.parse(row[1]),
                    pred_label=Label.parse(row[2]),
                    score=score,
                )
            )
    if not records:
        raise DataError(f"no predictions in {path}")
    return records
