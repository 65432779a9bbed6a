"""Path-level agreement metrics: node-set overlap and final-treatment match."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import AbstractSet, Iterable, Sequence

from .graph import GuidelinePath, NodeRef

PathCollection = Sequence[GuidelinePath]


class MetricKind(str, Enum):
    PATH_OVERLAP = "path_overlap"
    TREATMENT_MATCH = "treatment_match"


@dataclass(frozen=True)
class MetricScore:
    value: float
    metric: MetricKind
    k_used: int

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value out of [0,1]: {self.value}")


def jaccard_overlap(sets: Iterable[AbstractSet[NodeRef]]) -> float:
    """|intersection| / |union| over node sets; 1.0 when the union is empty."""
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one node set")
    union: frozenset[NodeRef] = frozenset().union(*sets)
    if not union:
        return 1.0
    intersection = frozenset(sets[0]).intersection(*sets[1:])
    return len(intersection) / len(union)


def path_overlap(collection: PathCollection) -> MetricScore:
    if not collection:
        raise ValueError("need at least one path")
    value = jaccard_overlap(p.node_set() for p in collection)
    return MetricScore(value=value, metric=MetricKind.PATH_OVERLAP, k_used=len(collection))


def pairwise_overlap(prediction: GuidelinePath, truth: GuidelinePath) -> float:
    """Overlap of a single prediction against an annotation (2-element collection)."""
    return jaccard_overlap([prediction.node_set(), truth.node_set()])


def treatment_match_gt(prediction: GuidelinePath, truth: GuidelinePath) -> MetricScore:
    """1 iff the final nodes agree exactly, else 0."""
    value = 1.0 if prediction.final == truth.final else 0.0
    return MetricScore(value=value, metric=MetricKind.TREATMENT_MATCH, k_used=1)


def treatment_match_consistency(collection: PathCollection) -> MetricScore:
    """Frequency of the mode final node among the rollouts."""
    if not collection:
        raise ValueError("need at least one path")
    counts = Counter(p.final for p in collection)
    value = max(counts.values()) / len(collection)
    return MetricScore(
        value=value, metric=MetricKind.TREATMENT_MATCH, k_used=len(collection)
    )


def mode_final_node(collection: PathCollection) -> NodeRef:
    """Most frequent final node; ties break on the smallest rendered form."""
    if not collection:
        raise ValueError("need at least one path")
    counts = Counter(p.final for p in collection)
    best = max(counts.values())
    return min((ref for ref, c in counts.items() if c == best), key=lambda r: r.render())

def mode_path(collection: PathCollection) -> GuidelinePath:
    """Representative of the most frequent exact node-set among the rollouts.

    Ties between node-sets, and between paths within the winning set, break
    on the smallest rendered path string.
    """
    if not collection:
        raise ValueError("need at least one path")
    counts: Counter[frozenset[NodeRef]] = Counter(p.node_set() for p in collection)
    best = max(counts.values())
    tied = {s for s, c in counts.items() if c == best}
    candidates = [p for p in collection if p.node_set() in tied]
    return min(candidates, key=lambda p: p.render())
