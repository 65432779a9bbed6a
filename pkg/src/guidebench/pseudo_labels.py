"""Consistency pseudo-labels and proxy benchmarks.

Self variants keep a patient when one model's k rollouts agree at or above
a threshold; rejected patients score 0 for that model. Cross variants keep
a patient when at least two models' mode labels coincide; everything else
is excluded outright.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .graph import GuidelinePath, NodeRef, parse_path_string
from .metrics import (
    MetricKind,
    jaccard_overlap,
    mode_final_node,
    mode_path,
    path_overlap,
    treatment_match_consistency,
)
from .store import RolloutSet

DEFAULT_DELTA = 0.9


class BenchmarkMethod(str, Enum):
    SELF_OVERLAP = "self_overlap"
    SELF_TREATMENT = "self_treatment"
    CROSS_OVERLAP = "cross_overlap"
    CROSS_TREATMENT = "cross_treatment"
    SYNTH_STRUCTURED = "synth_structured"
    SYNTH_UNSTRUCTURED = "synth_unstructured"

    @property
    def metric(self) -> MetricKind:
        if self in (BenchmarkMethod.SELF_OVERLAP, BenchmarkMethod.CROSS_OVERLAP):
            return MetricKind.PATH_OVERLAP
        return MetricKind.TREATMENT_MATCH


CONSISTENCY_METHODS = (
    BenchmarkMethod.SELF_OVERLAP,
    BenchmarkMethod.SELF_TREATMENT,
    BenchmarkMethod.CROSS_OVERLAP,
    BenchmarkMethod.CROSS_TREATMENT,
)


@dataclass(frozen=True)
class PseudoLabel:
    patient_id: str
    source: BenchmarkMethod
    agreement: float
    label_path: GuidelinePath | None = None
    label_treatment: NodeRef | None = None

    def label_key(self) -> str:
        """Canonical comparable form of the label value."""
        if self.label_treatment is not None:
            return self.label_treatment.render()
        assert self.label_path is not None
        return "|".join(sorted(r.render() for r in self.label_path.nodes))


@dataclass(frozen=True)
class LabelDecision:
    accepted: bool
    agreement: float
    label: PseudoLabel | None = None
    reason: str | None = None


@dataclass(frozen=True)
class BenchmarkEntry:
    case_id: str
    agreement: float
    label_path: GuidelinePath | None = None
    label_treatment: NodeRef | None = None
    note_text: str | None = None  # synthetic methods carry the input too


@dataclass
class ProxyBenchmark:
    method: BenchmarkMethod
    entries: list[BenchmarkEntry]
    zero_scored: list[str]
    source_model: str | None = None  # set for self variants

    def __post_init__(self):
        ids = [e.case_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("benchmark entries must have unique case ids")


def self_consistency_label(
    rollouts: RolloutSet, metric: MetricKind, delta: float = DEFAULT_DELTA
) -> LabelDecision:
    """Accept the mode label when agreement across parsed rollouts >= delta."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0,1], got {delta}")
    paths = rollouts.parsed_paths()
    if not paths:
        return LabelDecision(accepted=False, agreement=0.0, reason="no parseable rollouts")
    if metric is MetricKind.PATH_OVERLAP:
        agreement = path_overlap(paths).value
        label = PseudoLabel(
            patient_id=rollouts.patient_id,
            source=BenchmarkMethod.SELF_OVERLAP,
            agreement=agreement,
            label_path=mode_path(paths),
        )
    else:
        agreement = treatment_match_consistency(paths).value
        label = PseudoLabel(
            patient_id=rollouts.patient_id,
            source=BenchmarkMethod.SELF_TREATMENT,
            agreement=agreement,
            label_treatment=mode_final_node(paths),
        )
    if agreement >= delta:
        return LabelDecision(accepted=True, agreement=agreement, label=label)
    return LabelDecision(accepted=False, agreement=agreement, reason="below threshold")


def build_self_benchmark(
    rollout_sets: Mapping[str, RolloutSet],
    metric: MetricKind,
    delta: float = DEFAULT_DELTA,
) -> ProxyBenchmark:
    """One model's rollouts over a cohort -> accepted entries + zero-scored rest."""
    if not rollout_sets:
        raise ValueError("empty cohort")
    model_ids = {rs.model_id for rs in rollout_sets.values()}
    if len(model_ids) != 1:
        raise ValueError(f"rollout sets span multiple models: {sorted(model_ids)}")
    method = (
        BenchmarkMethod.SELF_OVERLAP
        if metric is MetricKind.PATH_OVERLAP
        else BenchmarkMethod.SELF_TREATMENT
    )
    entries: list[BenchmarkEntry] = []
    zero_scored: list[str] = []
    for patient_id in sorted(rollout_sets):
        decision = self_consistency_label(rollout_sets[patient_id], metric, delta)
        if decision.accepted and decision.label is not None:
            entries.append(
                BenchmarkEntry(
                    case_id=patient_id,
                    agreement=decision.agreement,
                    label_path=decision.label.label_path,
                    label_treatment=decision.label.label_treatment,
                )
            )
        else:
            zero_scored.append(patient_id)
    return ProxyBenchmark(
        method=method,
        entries=entries,
        zero_scored=zero_scored,
        source_model=next(iter(model_ids)),
    )


def model_mode_label(rollouts: RolloutSet, metric: MetricKind) -> PseudoLabel | None:
    """A model's own label for a patient: mode path or mode final node."""
    paths = rollouts.parsed_paths()
    if not paths:
        return None
    if metric is MetricKind.PATH_OVERLAP:
        return PseudoLabel(
            patient_id=rollouts.patient_id,
            source=BenchmarkMethod.CROSS_OVERLAP,
            agreement=path_overlap(paths).value,
            label_path=mode_path(paths),
        )
    return PseudoLabel(
        patient_id=rollouts.patient_id,
        source=BenchmarkMethod.CROSS_TREATMENT,
        agreement=treatment_match_consistency(paths).value,
        label_treatment=mode_final_node(paths),
    )


def cross_model_label(labels: Sequence[PseudoLabel]) -> PseudoLabel | None:
    """Aggregate per-model labels: plurality among values shared by >= 2 models.

    Ties break on the smallest canonical label form; returns None (excluded)
    when no value is shared by at least two models.
    """
    if len(labels) < 2:
        return None
    groups: dict[str, list[PseudoLabel]] = {}
    for label in labels:
        groups.setdefault(label.label_key(), []).append(label)
    best = max(len(g) for g in groups.values())
    if best < 2:
        return None
    winner_key = min(key for key, group in groups.items() if len(group) == best)
    winner = groups[winner_key][0]
    agreement = best / len(labels)
    return PseudoLabel(
        patient_id=winner.patient_id,
        source=winner.source,
        agreement=agreement,
        label_path=winner.label_path,
        label_treatment=winner.label_treatment,
    )


def build_cross_benchmark(
    rollout_sets_by_model: Mapping[str, Mapping[str, RolloutSet]],
    metric: MetricKind,
) -> ProxyBenchmark:
    """Aggregate all models' mode labels per patient; non-convergent excluded."""
    if len(rollout_sets_by_model) < 2:
        raise ValueError("cross-model labels need at least two models")
    method = (
        BenchmarkMethod.CROSS_OVERLAP
        if metric is MetricKind.PATH_OVERLAP
        else BenchmarkMethod.CROSS_TREATMENT
    )
    patient_ids: set[str] = set()
    for sets in rollout_sets_by_model.values():
        patient_ids.update(sets)
    entries: list[BenchmarkEntry] = []
    for patient_id in sorted(patient_ids):
        labels = []
        for model_id in sorted(rollout_sets_by_model):
            rollouts = rollout_sets_by_model[model_id].get(patient_id)
            if rollouts is None:
                continue
            label = model_mode_label(rollouts, metric)
            if label is not None:
                labels.append(label)
        aggregated = cross_model_label(labels)
        if aggregated is not None:
            entries.append(
                BenchmarkEntry(
                    case_id=patient_id,
                    agreement=aggregated.agreement,
                    label_path=aggregated.label_path,
                    label_treatment=aggregated.label_treatment,
                )
            )
    return ProxyBenchmark(method=method, entries=entries, zero_scored=[])


@dataclass(frozen=True)
class ProxyScore:
    mean: float
    stderr: float
    n_cases: int


def _entry_score(
    prediction: GuidelinePath | None, entry: BenchmarkEntry, metric: MetricKind
) -> float:
    if prediction is None:
        return 0.0
    if metric is MetricKind.PATH_OVERLAP:
        label = entry.label_path
        if label is None:
            raise ValueError(f"entry {entry.case_id} has no path label")
        return jaccard_overlap([prediction.node_set(), label.node_set()])
    target = entry.label_treatment
    if target is None:
        if entry.label_path is None:
            raise ValueError(f"entry {entry.case_id} has no label")
        target = entry.label_path.final
    return 1.0 if prediction.final == target else 0.0


def score_model_on_proxy(
    predictions: Mapping[str, GuidelinePath | None],
    benchmark: ProxyBenchmark,
    metric: MetricKind,
    model_id: str | None = None,
) -> ProxyScore:
    """Mean per-case score of a model's predictions against pseudo-labels.

    Zero-scored cases count as 0 when the scored model is the benchmark's
    own source model; other models are judged on accepted entries only.
    """
    if not benchmark.entries and not benchmark.zero_scored:
        raise ValueError("benchmark has no entries")
    scores: list[float] = []
    for entry in benchmark.entries:
        if entry.case_id not in predictions:
            continue
        scores.append(_entry_score(predictions[entry.case_id], entry, metric))
    if model_id is not None and model_id == benchmark.source_model:
        scores.extend(0.0 for pid in benchmark.zero_scored if pid in predictions)
    if not scores:
        raise ValueError("no overlapping cases between predictions and benchmark")
    n = len(scores)
    mean = sum(scores) / n
    if n > 1:
        var = sum((s - mean) ** 2 for s in scores) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    return ProxyScore(mean=mean, stderr=stderr, n_cases=n)


def mode_predictions(
    rollout_sets: Mapping[str, RolloutSet]
) -> dict[str, GuidelinePath | None]:
    """Each patient's representative prediction: the mode path of the rollouts."""
    out: dict[str, GuidelinePath | None] = {}
    for patient_id, rollouts in rollout_sets.items():
        paths = rollouts.parsed_paths()
        out[patient_id] = mode_path(paths) if paths else None
    return out


# -- benchmark files ---------------------------------------------------------

def write_benchmark(benchmark: ProxyBenchmark, path, sidecar_path=None) -> None:
    """JSONL entries {patient_id, method, label, agreement}; zero-scored sidecar."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in benchmark.entries:
            record: dict = {
                "patient_id": entry.case_id,
                "method": benchmark.method.value,
                "agreement": entry.agreement,
            }
            if entry.label_path is not None:
                record["label"] = entry.label_path.render()
            else:
                assert entry.label_treatment is not None
                record["label"] = entry.label_treatment.render()
            if entry.note_text is not None:
                record["note_text"] = entry.note_text
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    if sidecar_path is not None:
        sidecar = {
            "method": benchmark.method.value,
            "source_model": benchmark.source_model,
            "zero_scored": sorted(benchmark.zero_scored),
        }
        Path(sidecar_path).write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")


def read_benchmark(path, sidecar_path=None) -> ProxyBenchmark:
    entries: list[BenchmarkEntry] = []
    method: BenchmarkMethod | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            method = BenchmarkMethod(record["method"])
            label = record["label"]
            if "→" in label or method.metric is MetricKind.PATH_OVERLAP:
                label_path = parse_path_string(label)
                label_treatment = None
            else:
                label_path = None
                label_treatment = parse_path_string(label).nodes[0]
            entries.append(
                BenchmarkEntry(
                    case_id=record["patient_id"],
                    agreement=record["agreement"],
                    label_path=label_path,
                    label_treatment=label_treatment,
                    note_text=record.get("note_text"),
                )
            )
    if method is None:
        raise ValueError(f"benchmark file {path} is empty")
    zero_scored: list[str] = []
    source_model = None
    if sidecar_path is not None and Path(sidecar_path).exists():
        sidecar = json.loads(Path(sidecar_path).read_text())
        zero_scored = list(sidecar.get("zero_scored", []))
        source_model = sidecar.get("source_model")
    return ProxyBenchmark(
        method=method, entries=entries, zero_scored=zero_scored, source_model=source_model
    )
