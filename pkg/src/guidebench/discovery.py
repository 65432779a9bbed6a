"""Label-free analyses: clustering consistency features and mining the graph
nodes where a model's own rollouts disagree."""

from __future__ import annotations

import random
from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .graph import GuidelinePath, NodeRef
from .metrics import mode_path
from .seeds import derive_seed
from .stats import f1_binary
from .store import RolloutSet


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    n_iter: int


def _kmeans_once(X: np.ndarray, k: int, rng: random.Random, max_iter: int) -> KMeansResult:
    n = len(X)
    # k-means++ seeding.
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.randrange(n)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total == 0.0:
            centers[j] = X[rng.randrange(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r))
        idx = min(idx, n - 1)
        centers[j] = X[idx]
        closest = np.minimum(closest, ((X - centers[j]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    previous_inertia = np.inf
    for iteration in range(1, max_iter + 1):
        distances = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = distances.argmin(axis=1)
        inertia = float(distances[np.arange(n), labels].sum())
        assert inertia <= previous_inertia + 1e-9, "k-means objective increased"
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(axis=0)
            else:
                centers[j] = X[rng.randrange(n)]
        new_distances = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = new_distances.argmin(axis=1)
        if (new_labels == labels).all():
            inertia = float(new_distances[np.arange(n), new_labels].sum())
            return KMeansResult(labels=labels, centers=centers, inertia=inertia, n_iter=iteration)
        previous_inertia = inertia
    return KMeansResult(labels=labels, centers=centers, inertia=inertia, n_iter=max_iter)


def kmeans(
    X: np.ndarray, k: int = 2, seed: int = 0, n_restarts: int = 10, max_iter: int = 300
) -> KMeansResult:
    """Lloyd iterations from k-means++ starts; best of n_restarts by inertia,
    ties resolved toward the lowest restart index."""
    X = np.asarray(X, dtype=float)
    if len(X) < 2 * k:
        raise ValueError(f"need at least {2 * k} rows, got {len(X)}")
    if np.allclose(X, X[0]):
        raise ValueError("degenerate data: all rows identical")
    best: KMeansResult | None = None
    for restart in range(n_restarts):
        rng = random.Random(derive_seed(seed, "kmeans", restart))
        result = _kmeans_once(X, k, rng, max_iter)
        if best is None or result.inertia < best.inertia:
            best = result
    assert best is not None
    return best


@dataclass(frozen=True)
class SeparationResult:
    assignments: np.ndarray  # raw cluster ids
    mapped: np.ndarray  # 1 = predicted correct, 0 = predicted incorrect
    f1: float | None  # against truth, when provided
    correct_cluster: int


def kmeans_separate(
    X: np.ndarray,
    truth: Sequence[int] | None = None,
    seed: int = 0,
    n_restarts: int = 10,
) -> SeparationResult:
    """Cluster consistency features into correct/incorrect groups.

    With truth provided (evaluation mode) the cluster->label mapping maximizes
    F1; otherwise the higher-mean-consistency cluster is called correct.
    """
    result = kmeans(np.asarray(X, dtype=float), k=2, seed=seed, n_restarts=n_restarts)
    if truth is not None:
        best_f1, best_mapping = -1.0, None
        for correct_cluster in (0, 1):
            mapped = (result.labels == correct_cluster).astype(int)
            score = f1_binary(mapped.tolist(), list(truth))
            if score > best_f1:
                best_f1, best_mapping = score, correct_cluster
        assert best_mapping is not None
        return SeparationResult(
            assignments=result.labels,
            mapped=(result.labels == best_mapping).astype(int),
            f1=best_f1,
            correct_cluster=best_mapping,
        )
    means = [result.centers[j].mean() for j in (0, 1)]
    correct_cluster = int(np.argmax(means))
    return SeparationResult(
        assignments=result.labels,
        mapped=(result.labels == correct_cluster).astype(int),
        f1=None,
        correct_cluster=correct_cluster,
    )


@dataclass(frozen=True)
class ConfusionPoint:
    node: NodeRef
    divergence_count: int
    models_affected: frozenset[str]
    example_patient_ids: tuple[str, ...]


def mine_confusion_points(
    rollout_sets: Mapping[str, RolloutSet], page_level: bool = False
) -> list[ConfusionPoint]:
    """Nodes present in some but not all of a model's rollouts, tallied per
    patient and ranked by how often they mark a divergence."""
    counts: dict[NodeRef, int] = {}
    examples: dict[NodeRef, list[str]] = {}
    models: dict[NodeRef, set[str]] = {}
    for patient_id in sorted(rollout_sets):
        rollouts = rollout_sets[patient_id]
        paths = rollout_sets[patient_id].parsed_paths()
        if len(paths) < 2:
            continue
        node_sets = [p.node_set() for p in paths]
        union = frozenset().union(*node_sets)
        intersection = frozenset(node_sets[0]).intersection(*node_sets[1:])
        for ref in union - intersection:
            counts[ref] = counts.get(ref, 0) + 1
            examples.setdefault(ref, []).append(patient_id)
            models.setdefault(ref, set()).add(rollouts.model_id)

    if page_level:
        page_counts: dict[str, int] = {}
        page_examples: dict[str, list[str]] = {}
        page_models: dict[str, set[str]] = {}
        for ref, count in counts.items():
            page_counts[ref.page_id] = page_counts.get(ref.page_id, 0) + count
            page_examples.setdefault(ref.page_id, []).extend(examples[ref])
            page_models.setdefault(ref.page_id, set()).update(models[ref])
        points = [
            ConfusionPoint(
                node=NodeRef(page_id=page, node_ord=1),
                divergence_count=count,
                models_affected=frozenset(page_models[page]),
                example_patient_ids=tuple(sorted(set(page_examples[page]))[:5]),
            )
            for page, count in page_counts.items()
        ]
        points.sort(key=lambda p: (-p.divergence_count, p.node.page_id))
        return points

    points = [
        ConfusionPoint(
            node=ref,
            divergence_count=count,
            models_affected=frozenset(models[ref]),
            example_patient_ids=tuple(sorted(set(examples[ref]))[:5]),
        )
        for ref, count in counts.items()
    ]
    points.sort(key=lambda p: (-p.divergence_count, p.node.render()))
    return points


def error_nodes(
    prediction: GuidelinePath | None, annotation: GuidelinePath
) -> frozenset[NodeRef]:
    """Symmetric difference between a prediction's nodes and the annotation's."""
    if prediction is None:
        return annotation.node_set()
    return prediction.node_set() ^ annotation.node_set()


def error_coverage(
    confusion_points: Sequence[ConfusionPoint],
    rollout_sets: Mapping[str, RolloutSet],
    annotations: Mapping[str, GuidelinePath],
    top_n: int = 5,
) -> float | None:
    """Fraction of (patient, error-node) instances covered by the top-N
    confusion points; None when the cohort shows no errors."""
    top_refs = {p.node for p in confusion_points[:top_n]}
    covered = total = 0
    for patient_id in sorted(rollout_sets):
        annotation = annotations.get(patient_id)
        if annotation is None:
            continue
        paths = rollout_sets[patient_id].parsed_paths()
        prediction = mode_path(paths) if paths else None
        for ref in error_nodes(prediction, annotation):
            total += 1
            if ref in top_refs:
                covered += 1
    if total == 0:
        return None
    return covered / total
