"""Patient cases and cohort (JSONL) serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigError
from .graph import GuidelinePath, parse_path_string


@dataclass(frozen=True)
class PatientCase:
    patient_id: str
    note_text: str
    annotated_path: GuidelinePath | None = None
    compliant: bool | None = None

    def __post_init__(self):
        if not self.patient_id:
            raise ValueError("patient_id must be nonempty")
        if not self.note_text:
            raise ValueError("note_text must be nonempty")

    def to_record(self) -> dict:
        record: dict = {"patient_id": self.patient_id, "note_text": self.note_text}
        if self.annotated_path is not None:
            record["annotated_path"] = self.annotated_path.render()
        if self.compliant is not None:
            record["compliant"] = self.compliant
        return record

    @classmethod
    def from_record(cls, record: dict) -> "PatientCase":
        annotated = record.get("annotated_path")
        return cls(
            patient_id=record["patient_id"],
            note_text=record["note_text"],
            annotated_path=parse_path_string(annotated) if annotated else None,
            compliant=record.get("compliant"),
        )


def write_cohort(cases: Iterable[PatientCase], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case.to_record(), sort_keys=True) + "\n")


def read_cohort(path) -> list[PatientCase]:
    cases: list[PatientCase] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                case = PatientCase.from_record(json.loads(line))
            except (KeyError, ValueError) as exc:
                raise ConfigError(f"bad cohort record at line {line_no}: {exc}") from exc
            if case.patient_id in seen:
                raise ConfigError(f"duplicate patient_id {case.patient_id!r} at line {line_no}")
            seen.add(case.patient_id)
            cases.append(case)
    return cases
