"""Append-only JSONL rollout store with integrity re-validation.

One record per rollout: {model_id, patient_id, rollout_idx, seed, raw_text,
parsed_path, ts}. Appends are serialized through a lock so concurrent
producers share one writer.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import GuidebenchError
from .graph import GuidelinePath, extract_last_path, parse_path_string


@dataclass(frozen=True)
class Rollout:
    index: int
    raw_text: str
    parsed: GuidelinePath | None  # None marks an unparseable output


@dataclass(frozen=True)
class RolloutSet:
    """The k independent predictions of one model for one patient."""

    model_id: str
    patient_id: str
    rollouts: tuple[Rollout, ...]

    def __post_init__(self):
        indices = [r.index for r in self.rollouts]
        if sorted(indices) != list(range(len(indices))):
            raise ValueError(
                f"rollout indices must be dense and unique, got {indices}"
            )

    @property
    def k(self) -> int:
        return len(self.rollouts)

    def parsed_paths(self) -> list[GuidelinePath]:
        return [r.parsed for r in self.rollouts if r.parsed is not None]


@dataclass(frozen=True)
class RolloutRecord:
    model_id: str
    patient_id: str
    rollout_idx: int
    seed: int
    raw_text: str
    parsed_path: str | None
    ts: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_id": self.model_id,
                "patient_id": self.patient_id,
                "rollout_idx": self.rollout_idx,
                "seed": self.seed,
                "raw_text": self.raw_text,
                "parsed_path": self.parsed_path,
                "ts": self.ts,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "RolloutRecord":
        obj = json.loads(line)
        return cls(
            model_id=obj["model_id"],
            patient_id=obj["patient_id"],
            rollout_idx=obj["rollout_idx"],
            seed=obj["seed"],
            raw_text=obj["raw_text"],
            parsed_path=obj.get("parsed_path"),
            ts=obj["ts"],
        )


class RolloutStore:
    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, records: Iterable[RolloutRecord]) -> None:
        lines = [rec.to_json() + "\n" for rec in records]
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.writelines(lines)

    def read_records(self) -> list[RolloutRecord]:
        if not self.path.exists():
            return []
        records = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(RolloutRecord.from_json(line))
        return records

    def load_sets(self) -> dict[tuple[str, str], RolloutSet]:
        """Group records into RolloutSets keyed by (model_id, patient_id)."""
        grouped: dict[tuple[str, str], list[RolloutRecord]] = {}
        for rec in self.read_records():
            grouped.setdefault((rec.model_id, rec.patient_id), []).append(rec)
        sets = {}
        for key, recs in grouped.items():
            recs.sort(key=lambda r: r.rollout_idx)
            rollouts = tuple(
                Rollout(
                    index=r.rollout_idx,
                    raw_text=r.raw_text,
                    parsed=parse_path_string(r.parsed_path) if r.parsed_path else None,
                )
                for r in recs
            )
            sets[key] = RolloutSet(model_id=key[0], patient_id=key[1], rollouts=rollouts)
        return sets

    def validate(self) -> None:
        """Re-check invariants: dense indices, parse markers match raw text."""
        grouped: dict[tuple[str, str], list[RolloutRecord]] = {}
        for rec in self.read_records():
            grouped.setdefault((rec.model_id, rec.patient_id), []).append(rec)
        for (model_id, patient_id), recs in grouped.items():
            indices = sorted(r.rollout_idx for r in recs)
            if indices != list(range(len(recs))):
                raise GuidebenchError(
                    f"store {self.path}: non-dense rollout indices for "
                    f"({model_id}, {patient_id}): {indices}"
                )
            for rec in recs:
                reparsed = extract_last_path(rec.raw_text)
                stored = rec.parsed_path
                if (reparsed is None) != (stored is None):
                    raise GuidebenchError(
                        f"store {self.path}: parse marker mismatch for "
                        f"({model_id}, {patient_id}, {rec.rollout_idx})"
                    )
                if reparsed is not None and reparsed.render() != stored:
                    raise GuidebenchError(
                        f"store {self.path}: stored path {stored!r} does not match "
                        f"re-parse {reparsed.render()!r}"
                    )


def load_model_sets(path) -> dict[str, RolloutSet]:
    """Load a single-model store as patient_id -> RolloutSet."""
    sets = RolloutStore(path).load_sets()
    by_patient: dict[str, RolloutSet] = {}
    for (_, patient_id), rollout_set in sets.items():
        by_patient[patient_id] = rollout_set
    return by_patient
