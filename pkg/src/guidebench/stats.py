"""Statistical kernels: rank correlation, RMSE, ROC/AUROC, F1, fidelity harness."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


def rank_average(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1, with ties receiving the average of their ranks."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(a: Sequence[float], b: Sequence[float]) -> float | None:
    """Pearson correlation of average ranks; None when a rank variance is zero."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise ValueError("need at least two observations")
    ra, rb = rank_average(a), rank_average(b)
    ra -= ra.mean()
    rb -= rb.mean()
    denom = float(np.sqrt((ra**2).sum() * (rb**2).sum()))
    if denom == 0.0:
        return None
    return float((ra * rb).sum() / denom)


def rmse(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not len(a):
        raise ValueError("need at least one observation")
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(np.mean(diff**2)))


@dataclass(frozen=True)
class RocCurve:
    """Threshold sweep: points are (fpr, tpr, threshold), descending thresholds."""

    points: tuple[tuple[float, float, float], ...]
    auroc: float


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC over unique score thresholds (ties grouped); AUROC by trapezoid rule.

    Equals pairwise-concordance probability with ties counted 1/2.
    """
    if len(scores) != len(labels):
        raise ValueError(f"length mismatch: {len(scores)} vs {len(labels)}")
    y = np.asarray(labels, dtype=int)
    s = np.asarray(scores, dtype=float)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]

    points: list[tuple[float, float, float]] = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    while i < len(s_sorted):
        j = i
        while j + 1 < len(s_sorted) and s_sorted[j + 1] == s_sorted[i]:
            j += 1
        tp += int((y_sorted[i : j + 1] == 1).sum())
        fp += int((y_sorted[i : j + 1] == 0).sum())
        points.append((fp / n_neg, tp / n_pos, float(s_sorted[i])))
        i = j + 1

    auroc = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        auroc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(points), auroc=auroc)


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def as_dict(self) -> dict[str, int]:
        return {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp}


def confusion_matrix(pred: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    p = np.asarray(pred, dtype=int)
    t = np.asarray(truth, dtype=int)
    return ConfusionMatrix(
        tn=int(((p == 0) & (t == 0)).sum()),
        fp=int(((p == 1) & (t == 0)).sum()),
        fn=int(((p == 0) & (t == 1)).sum()),
        tp=int(((p == 1) & (t == 1)).sum()),
    )


def f1_binary(pred: Sequence[int], truth: Sequence[int]) -> float:
    """F1 = 2TP / (2TP + FP + FN); 1.0 when no positives exist on either side."""
    cm = confusion_matrix(pred, truth)
    denom = 2 * cm.tp + cm.fp + cm.fn
    if denom == 0:
        return 1.0
    return 2 * cm.tp / denom


@dataclass
class ModelScoreTable:
    """Per-model annotated score plus proxy scores, for one metric."""

    metric: str
    true_scores: dict[str, float] = field(default_factory=dict)
    proxy_scores: dict[str, dict[str, float]] = field(default_factory=dict)  # model -> method -> score

    def add(self, model_id: str, true_score: float | None, proxies: Mapping[str, float]) -> None:
        if true_score is not None:
            self.true_scores[model_id] = true_score
        self.proxy_scores.setdefault(model_id, {}).update(proxies)

    def methods(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for proxies in self.proxy_scores.values():
            for method in proxies:
                seen.setdefault(method)
        return tuple(seen)


def benchmark_fidelity(table: ModelScoreTable) -> dict[str, dict[str, float | None]]:
    """Per proxy method: Spearman and RMSE between proxy and annotated scores."""
    out: dict[str, dict[str, float | None]] = {}
    for method in table.methods():
        models = sorted(
            m
            for m, proxies in table.proxy_scores.items()
            if method in proxies and m in table.true_scores
        )
        if len(models) < 2:
            raise ValueError(f"need at least 2 models with scores for {method!r}")
        true_vec = [table.true_scores[m] for m in models]
        proxy_vec = [table.proxy_scores[m][method] for m in models]
        out[method] = {
            "spearman": spearman(proxy_vec, true_vec),
            "rmse": rmse(proxy_vec, true_vec),
            "n_models": len(models),
        }
    return out


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "tpr"])
        for fpr, tpr, threshold in curve.points:
            writer.writerow([repr(threshold), repr(fpr), repr(tpr)])
