"""Feature extraction for the correctness meta-classifier.

One row per (model, patient): per-sample self-consistency and cross-model
agreement, plus model-level benchmark scores broadcast to every row of that
model. The label marks whether the model's representative prediction ends
at the annotated final treatment node.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .graph import GuidelinePath
from .metrics import MetricKind, path_overlap, treatment_match_consistency
from .pseudo_labels import mode_predictions
from .store import RolloutSet

SELF_COLUMNS = ("self_path_overlap", "self_treatment_match")
SYNTH_COLUMNS = ("synth_structured", "synth_unstructured")
CONS_COLUMNS = (
    "cons_self_overlap",
    "cons_self_treatment",
    "cons_cross_overlap",
    "cons_cross_treatment",
)
CROSS_COLUMNS = ("cross_path_agreement", "cross_treatment_agreement")


class FeatureSet(str, Enum):
    BASE = "base"
    INTERNAL = "internal"
    AGGREGATED_ONLY = "aggregated_only"
    BASE_AGGREGATED = "base_aggregated"
    ALL = "all"


FEATURE_SETS: dict[FeatureSet, tuple[str, ...]] = {
    FeatureSet.BASE: SELF_COLUMNS,
    FeatureSet.INTERNAL: SELF_COLUMNS + SYNTH_COLUMNS + CONS_COLUMNS,
    FeatureSet.AGGREGATED_ONLY: CROSS_COLUMNS,
    FeatureSet.BASE_AGGREGATED: SELF_COLUMNS + CROSS_COLUMNS,
    FeatureSet.ALL: SELF_COLUMNS + SYNTH_COLUMNS + CONS_COLUMNS + CROSS_COLUMNS,
}

ALL_COLUMNS = FEATURE_SETS[FeatureSet.ALL]


@dataclass(frozen=True)
class FeatureRow:
    model_id: str
    patient_id: str
    values: Mapping[str, float]
    label: int | None

    def vector(self, columns: tuple[str, ...]) -> list[float]:
        return [self.values[c] for c in columns]


@dataclass
class FeatureTable:
    rows: list[FeatureRow] = field(default_factory=list)

    def labeled(self) -> "FeatureTable":
        return FeatureTable(rows=[r for r in self.rows if r.label is not None])

    def patient_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.patient_id)
        return list(seen)


def extract_features(
    rollout_sets_by_model: Mapping[str, Mapping[str, RolloutSet]],
    benchmark_scores: Mapping[str, Mapping[str, float]],
    annotations: Mapping[str, GuidelinePath],
) -> FeatureTable:
    """Compute every feature column; training selects subsets later.

    benchmark_scores maps model_id -> benchmark method -> model-level score;
    missing methods are filled with 0.0 so column layout stays stable.
    """
    models = sorted(rollout_sets_by_model)
    modes: dict[str, dict[str, GuidelinePath | None]] = {
        m: mode_predictions(rollout_sets_by_model[m]) for m in models
    }
    patient_ids = sorted({pid for m in models for pid in rollout_sets_by_model[m]})

    table = FeatureTable()
    for patient_id in patient_ids:
        path_keys: dict[str, str | None] = {}
        treat_keys: dict[str, str | None] = {}
        for m in models:
            mode = modes[m].get(patient_id)
            path_keys[m] = "|".join(r.render() for r in mode.nodes) if mode else None
            treat_keys[m] = mode.final.render() if mode else None
        n_models = len(models)

        for m in models:
            rollouts = rollout_sets_by_model[m].get(patient_id)
            if rollouts is None:
                continue
            paths = rollouts.parsed_paths()
            values: dict[str, float] = {
                "self_path_overlap": path_overlap(paths).value if paths else 0.0,
                "self_treatment_match": (
                    treatment_match_consistency(paths).value if paths else 0.0
                ),
            }
            # Self-inclusive agreement; unparseable modes match nothing.
            if path_keys[m] is None:
                values["cross_path_agreement"] = 0.0
                values["cross_treatment_agreement"] = 0.0
            else:
                values["cross_path_agreement"] = (
                    sum(1 for other in models if path_keys[other] == path_keys[m]) / n_models
                )
                values["cross_treatment_agreement"] = (
                    sum(1 for other in models if treat_keys[other] == treat_keys[m]) / n_models
                )
            scores = benchmark_scores.get(m, {})
            values["synth_structured"] = scores.get("synth_structured", 0.0)
            values["synth_unstructured"] = scores.get("synth_unstructured", 0.0)
            values["cons_self_overlap"] = scores.get("self_overlap", 0.0)
            values["cons_self_treatment"] = scores.get("self_treatment", 0.0)
            values["cons_cross_overlap"] = scores.get("cross_overlap", 0.0)
            values["cons_cross_treatment"] = scores.get("cross_treatment", 0.0)

            label: int | None = None
            annotated = annotations.get(patient_id)
            if annotated is not None:
                mode = modes[m].get(patient_id)
                label = int(mode is not None and mode.final == annotated.final)
            table.rows.append(
                FeatureRow(model_id=m, patient_id=patient_id, values=values, label=label)
            )
    return table


def stratified_split(
    table: FeatureTable, ratio: float = 0.70, seed: int = 0
) -> tuple[FeatureTable, FeatureTable]:
    """Partition by patient id (all of a patient's rows stay in one fold)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0,1), got {ratio}")
    patients = sorted(table.patient_ids())
    if len(patients) < 2:
        raise ValueError("need at least two patients to split")
    rng = random.Random(seed)
    rng.shuffle(patients)
    n_train = int(round(len(patients) * ratio))
    n_train = min(max(n_train, 1), len(patients) - 1)
    train_ids = set(patients[:n_train])
    train = FeatureTable(rows=[r for r in table.rows if r.patient_id in train_ids])
    test = FeatureTable(rows=[r for r in table.rows if r.patient_id not in train_ids])
    return train, test


_CSV_HEADER = ("model_id", "patient_id") + ALL_COLUMNS + ("label",)


def write_feature_csv(table: FeatureTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for row in table.rows:
            writer.writerow(
                [row.model_id, row.patient_id]
                + [repr(row.values[c]) for c in ALL_COLUMNS]
                + ["" if row.label is None else row.label]
            )


def read_feature_csv(path) -> FeatureTable:
    table = FeatureTable()
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _CSV_HEADER:
            raise ValueError(f"unexpected feature CSV header in {path}")
        for record in reader:
            model_id, patient_id = record[0], record[1]
            values = {c: float(v) for c, v in zip(ALL_COLUMNS, record[2:-1])}
            label = None if record[-1] == "" else int(record[-1])
            table.rows.append(
                FeatureRow(model_id=model_id, patient_id=patient_id, values=values, label=label)
            )
    return table
