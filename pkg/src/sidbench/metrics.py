"""Binary-classification metrics and threshold calibration.

The positive class is "fake". An entry is predicted fake iff its score is
greater than or equal to the decision threshold (the boundary rule is ``>=``
throughout). Undefined rates on single-class inputs are returned as ``None``
rather than 0 so they cannot silently corrupt averages.

Average precision is the uninterpolated step sum
``AP = sum_n (R_n - R_{n-1}) * P_n`` over one curve point per distinct score
value, thresholds descending, with ``R_0 = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_THRESHOLD = 0.5


class MetricError(ValueError):
    """Raised when a metric is requested on degenerate input."""


@dataclass(frozen=True)
class ScoreEntry:
    id: str
    score: float
    label: str  # "real" | "fake"


@dataclass(frozen=True)
class ScoreSet:
    """Scores aligned with ground-truth labels; ids unique, scores finite."""

    entries: tuple[ScoreEntry, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for e in self.entries:
            if e.label not in ("real", "fake"):
                raise MetricError(f"unknown label {e.label!r} for id {e.id!r}")
            if not math.isfinite(e.score):
                raise MetricError(f"non-finite score for id {e.id!r}")
            if e.id in seen:
                raise MetricError(f"duplicate id {e.id!r}")
            seen.add(e.id)

    @classmethod
    def from_items(cls, items) -> "ScoreSet":
        return cls(entries=tuple(ScoreEntry(str(i), float(s), str(l)) for i, s, l in items))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    @property
    def is_fake(self) -> np.ndarray:
        return np.array([e.label == "fake" for e in self.entries], dtype=bool)

    @property
    def n_fake(self) -> int:
        return int(self.is_fake.sum())

    @property
    def n_real(self) -> int:
        return len(self.entries) - self.n_fake


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    precision: float
    recall: float
    fpr: float | None  # None when the set has no real entries


def confusion_at(scores: ScoreSet, threshold: float) -> ConfusionCounts:
    """Tally predictions (fake iff score >= threshold) against labels."""
    if not scores.entries:
        raise MetricError("empty score set")
    pred = scores.scores >= threshold
    fake = scores.is_fake
    return ConfusionCounts(
        tp=int(np.sum(pred & fake)),
        tn=int(np.sum(~pred & ~fake)),
        fp=int(np.sum(pred & ~fake)),
        fn=int(np.sum(~pred & fake)),
    )


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise MetricError("accuracy undefined on zero counts")
    return (c.tp + c.tn) / c.total


def tpr_tnr(c: ConfusionCounts) -> tuple[float | None, float | None]:
    """(TPR, TNR); either is None when its class is absent."""
    tpr = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else None
    tnr = c.tn / (c.tn + c.fp) if (c.tn + c.fp) > 0 else None
    return tpr, tnr


def pr_curve(scores: ScoreSet) -> list[CurvePoint]:
    """One point per distinct score value, thresholds descending, >= rule."""
    if not scores.entries:
        raise MetricError("empty score set")
    fake = scores.is_fake
    n_fake = int(fake.sum())
    n_real = len(scores.entries) - n_fake
    if n_fake == 0:
        raise MetricError("precision-recall curve requires at least one fake entry")
    values = scores.scores
    points: list[CurvePoint] = []
    for t in sorted(set(values.tolist()), reverse=True):
        pred = values >= t
        tp = int(np.sum(pred & fake))
        fp = int(np.sum(pred & ~fake))
        points.append(
            CurvePoint(
                threshold=t,
                precision=tp / (tp + fp),
                recall=tp / n_fake,
                fpr=(fp / n_real) if n_real > 0 else None,
            )
        )
    return points


def average_precision(scores: ScoreSet) -> float:
    points = pr_curve(scores)
    ap = 0.0
    prev_recall = 0.0
    for pt in points:
        ap += (pt.recall - prev_recall) * pt.precision
        prev_recall = pt.recall
    return ap


def roc_auc(scores: ScoreSet) -> float:
    """Trapezoidal area under the ROC sweep with (0,0) and (1,1) endpoints.

    Equals the rank statistic (probability a random fake outscores a random
    real, ties counted 1/2).
    """
    if scores.n_fake == 0 or scores.n_real == 0:
        raise MetricError("ROC AUC requires both classes")
    points = pr_curve(scores)
    fprs = [0.0] + [pt.fpr for pt in points] + [1.0]
    tprs = [0.0] + [pt.recall for pt in points] + [1.0]
    area = 0.0
    for i in range(1, len(fprs)):
        area += (fprs[i] - fprs[i - 1]) * (tprs[i] + tprs[i - 1]) / 2.0
    return area


def threshold_candidates(scores: ScoreSet) -> list[float]:
    """Midpoints of consecutive distinct sorted scores, plus one candidate
    below the minimum and one above the maximum (ascending order)."""
    if not scores.entries:
        raise MetricError("empty score set")
    distinct = sorted(set(scores.scores.tolist()))
    candidates = [distinct[0] - 1.0]
    candidates.extend((a + b) / 2.0 for a, b in zip(distinct, distinct[1:]))
    candidates.append(distinct[-1] + 1.0)
    return candidates


def oracle_threshold(scores: ScoreSet) -> tuple[float, float]:
    """The accuracy-maximizing threshold; ties break toward the smallest.

    The returned accuracy is >= the accuracy at any fixed threshold,
    including the default 0.5.
    """
    best_t = None
    best_acc = -1.0
    for t in threshold_candidates(scores):
        acc = accuracy(confusion_at(scores, t))
        if acc > best_acc:
            best_t, best_acc = t, acc
    assert best_t is not None
    return best_t, best_acc
