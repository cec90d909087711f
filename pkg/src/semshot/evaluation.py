"""Accuracy reporting, shot sweeps and the forgetting check.

Predictions are argmax over class logits; ties resolve to the lowest class
index so evaluation is deterministic.  Reports split accuracy into base and
novel groups, mirroring the two-phase protocol.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .head import Head, forward_pass
from .records import batch_features


@dataclass
class MetricsReport:
    class_names: tuple
    per_class_accuracy: dict
    base_accuracy: float
    novel_accuracy: float
    overall_accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted
    record_count: int

    def to_json(self) -> dict:
        return {
            "record_count": self.record_count,
            "overall_accuracy": self.overall_accuracy,
            "base_accuracy": self.base_accuracy,
            "novel_accuracy": self.novel_accuracy,
            "per_class_accuracy": self.per_class_accuracy,
            "confusion": self.confusion.tolist(),
            "class_names": list(self.class_names),
        }


def _logits_only(head: Head, records) -> np.ndarray:
    x = batch_features(records)
    return forward_pass(head, x).logits.value


def predict(head: Head, records) -> np.ndarray:
    """Predicted class indices for a record list (argmax, lowest index wins)."""
    if not records:
        raise ValueError("nothing to predict on")
    return np.argmax(_logits_only(head, records), axis=0)


def evaluate(head: Head, records) -> MetricsReport:
    """Per-class and grouped accuracy over labeled records."""
    if not records:
        raise ValueError("evaluate needs at least one record")
    labels = np.array([head.registry.index(r.label) for r in records])
    preds = np.argmax(_logits_only(head, records), axis=0)

    n = head.registry.n
    confusion = np.zeros((n, n), dtype=np.int64)
    for t, p in zip(labels, preds):
        confusion[t, p] += 1

    names = head.registry.names
    per_class = {}
    for i, name in enumerate(names):
        total = int(confusion[i].sum())
        if total:
            per_class[name] = float(confusion[i, i]) / total

    def group_acc(indices):
        have = [i for i in indices if confusion[i].sum() > 0]
        if not have:
            return math.nan
        return float(np.mean([confusion[i, i] / confusion[i].sum() for i in have]))

    return MetricsReport(
        class_names=names,
        per_class_accuracy=per_class,
        base_accuracy=group_acc(head.registry.base_indices()),
        novel_accuracy=group_acc(head.registry.novel_indices()),
        overall_accuracy=float((preds == labels).mean()),
        confusion=confusion,
        record_count=len(records),
    )


@dataclass
class ForgettingReport:
    per_class_delta: dict
    mean_delta: float
    worst_delta: float

    def max_drop(self) -> float:
        """Largest accuracy decrease (positive number) across base classes."""
        return max(0.0, -self.worst_delta)


def forgetting_check(before: MetricsReport, after: MetricsReport) -> ForgettingReport:
    """Per-base-class accuracy change from the pre-expansion report to the
    post-fine-tune one.  Positive delta means the class improved."""
    common = [
        name
        for name in before.per_class_accuracy
        if name in after.per_class_accuracy
    ]
    if not common:
        raise ValueError("no shared classes between the two reports")
    deltas = {
        name: after.per_class_accuracy[name] - before.per_class_accuracy[name]
        for name in common
    }
    values = list(deltas.values())
    return ForgettingReport(
        per_class_delta=deltas,
        mean_delta=float(np.mean(values)),
        worst_delta=float(min(values)),
    )


def paired_onesided_pvalue(greater, lesser) -> float:
    """One-sided paired t-test p-value for mean(greater) > mean(lesser).

    Zero-variance difference vectors short-circuit: identical samples give
    p=1, a constant positive gap gives p=0.
    """
    a = np.asarray(greater, dtype=np.float64)
    b = np.asarray(lesser, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired test needs two equal-length 1-D samples")
    if a.size < 2:
        raise ValueError("paired test needs at least two pairs")
    diff = a - b
    if np.allclose(diff, diff[0]):
        if diff[0] > 0:
            return 0.0
        return 1.0
    return float(stats.ttest_rel(a, b, alternative="greater").pvalue)


@dataclass
class SweepRow:
    k: int
    seed: int
    base_accuracy: float
    novel_accuracy: float
    base_accuracy_before: float


@dataclass
class SweepResult:
    rows: list

    def mean_novel(self, k: int) -> float:
        vals = [r.novel_accuracy for r in self.rows if r.k == k]
        if not vals:
            raise ValueError(f"no sweep rows for k={k}")
        return float(np.mean(vals))

    def mean_base(self, k: int) -> float:
        vals = [r.base_accuracy for r in self.rows if r.k == k]
        return float(np.mean(vals))

    def summary(self) -> dict:
        ks = sorted({r.k for r in self.rows})
        return {
            "shots": ks,
            "mean_novel_accuracy": {str(k): self.mean_novel(k) for k in ks},
            "mean_base_accuracy": {str(k): self.mean_base(k) for k in ks},
            "runs": len(self.rows),
        }


def save_sweep_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("k,seed,base_accuracy_before,base_accuracy,novel_accuracy\n")
        for r in rows:
            fh.write(
                f"{r.k},{r.seed},{r.base_accuracy_before:.9g},"
                f"{r.base_accuracy:.9g},{r.novel_accuracy:.9g}\n"
            )
