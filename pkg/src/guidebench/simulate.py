"""Deterministic simulated cohorts for offline testing of the full pipeline.

Each patient gets a true pathway and, per model, a decoy pathway sharing a
prefix with the truth. Rollouts emit the truth with a per-(model, patient)
hit rate q = clamp(accuracy + consistency * u, 0, 1), where u is a patient
wobble drawn uniformly from [-0.5, 0.5); otherwise they emit the decoy.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .cases import PatientCase
from .errors import ConfigError
from .graph import GuidelineGraph, GuidelinePath, NodeKind, NodeRef, sample_random_path
from .predictors import DETERMINISTIC_TS
from .seeds import derive_seed
from .store import Rollout, RolloutRecord, RolloutSet, RolloutStore


@dataclass(frozen=True)
class SimModel:
    model_id: str
    accuracy: float
    consistency: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"accuracy must be in [0,1], got {self.accuracy}")
        if not 0.0 <= self.consistency <= 1.0:
            raise ConfigError(f"consistency must be in [0,1], got {self.consistency}")


@dataclass(frozen=True)
class SimCohortSpec:
    n_patients: int
    models: tuple[SimModel, ...]
    seed: int
    k: int = 10

    def __post_init__(self):
        if self.n_patients < 1:
            raise ConfigError("n_patients must be >= 1")
        if not self.models:
            raise ConfigError("need at least one simulated model")
        ids = [m.model_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ConfigError("model ids must be unique")


@dataclass(frozen=True)
class DecoyAudit:
    """Where the decoy departs from the truth: first differing node, if any."""

    decoy: GuidelinePath
    branch_node: NodeRef | None
    hit_rate: float


@dataclass
class SimCohort:
    cases: list[PatientCase]
    rollout_sets: dict[str, dict[str, RolloutSet]] = field(default_factory=dict)
    records: dict[str, list[RolloutRecord]] = field(default_factory=dict)
    decoys: dict[tuple[str, str], DecoyAudit] = field(default_factory=dict)

    def write_stores(self, directory) -> dict[str, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for model_id, records in sorted(self.records.items()):
            path = directory / f"{model_id}.jsonl"
            if path.exists():
                path.unlink()
            RolloutStore(path).append(records)
            paths[model_id] = path
        return paths


def clamped_hit_rate(accuracy: float, consistency: float, wobble: float) -> float:
    return min(1.0, max(0.0, accuracy + consistency * wobble))


def decoy_path(graph: GuidelineGraph, truth: GuidelinePath, rng: random.Random) -> GuidelinePath:
    """Branch off the truth at a uniformly chosen decision with an alternative.

    Returns the truth unchanged when no interior node offers a second child.
    """
    candidates = [
        i
        for i, ref in enumerate(truth.nodes[:-1])
        if len(graph.node(ref).children) >= 2
    ]
    if not candidates:
        return truth
    i = candidates[rng.randrange(len(candidates))]
    taken = truth.nodes[i + 1]
    alternatives = [c for c in graph.node(truth.nodes[i]).children if c != taken]
    alt = alternatives[rng.randrange(len(alternatives))]
    nodes = list(truth.nodes[: i + 1]) + [alt]
    node = graph.node(alt)
    while node.kind is not NodeKind.RECOMMENDATION:
        nxt = node.children[rng.randrange(len(node.children))]
        nodes.append(nxt)
        node = graph.node(nxt)
    return GuidelinePath(nodes=tuple(nodes), terminal_reached=True)


def _first_divergence(truth: GuidelinePath, decoy: GuidelinePath) -> NodeRef | None:
    for a, b in zip(truth.nodes, decoy.nodes):
        if a != b:
            return b
    if len(decoy.nodes) > len(truth.nodes):
        return decoy.nodes[len(truth.nodes)]
    return None


def _transcript(answer: GuidelinePath, considered: GuidelinePath | None, rng: random.Random) -> str:
    lines = []
    if considered is not None and considered.nodes != answer.nodes and rng.random() < 0.5:
        lines.append(f"Considered but rejected: {considered.render()}")
    lines.append(f"Final path: {answer.render()}")
    return "\n".join(lines)


def simulate_cohort(spec: SimCohortSpec, graph: GuidelineGraph) -> SimCohort:
    """Build cases, annotations, and per-model rollout sets; fully seeded."""
    from .synthetic import render_note

    cohort = SimCohort(cases=[])
    for m in spec.models:
        cohort.rollout_sets[m.model_id] = {}
        cohort.records[m.model_id] = []

    for i in range(spec.n_patients):
        patient_id = f"SIM-{i:04d}"
        rng_p = random.Random(derive_seed(spec.seed, "patient", patient_id))
        truth = sample_random_path(graph, rng=rng_p)
        wobble = rng_p.uniform(-0.5, 0.5)
        note = render_note(
            graph,
            truth,
            fields=None,
            exemplars=(),
            rng=random.Random(derive_seed(spec.seed, "note", patient_id)),
        )
        cohort.cases.append(
            PatientCase(
                patient_id=patient_id,
                note_text=note,
                annotated_path=truth,
                compliant=True,
            )
        )

        for m in spec.models:
            rng_m = random.Random(derive_seed(spec.seed, "decoy", m.model_id, patient_id))
            decoy = decoy_path(graph, truth, rng_m)
            q = clamped_hit_rate(m.accuracy, m.consistency, wobble)
            cohort.decoys[(m.model_id, patient_id)] = DecoyAudit(
                decoy=decoy, branch_node=_first_divergence(truth, decoy), hit_rate=q
            )
            rollouts = []
            records = []
            for idx in range(spec.k):
                rollout_seed = derive_seed(spec.seed, "rollout", m.model_id, patient_id, idx)
                rng_r = random.Random(rollout_seed)
                hit = rng_r.random() < q
                answer = truth if hit else decoy
                raw = _transcript(answer, decoy if hit else truth, rng_r)
                records.append(
                    RolloutRecord(
                        model_id=m.model_id,
                        patient_id=patient_id,
                        rollout_idx=idx,
                        seed=rollout_seed,
                        raw_text=raw,
                        parsed_path=answer.render(),
                        ts=DETERMINISTIC_TS,
                    )
                )
                rollouts.append(Rollout(index=idx, raw_text=raw, parsed=answer))
            cohort.records[m.model_id].extend(records)
            cohort.rollout_sets[m.model_id][patient_id] = RolloutSet(
                model_id=m.model_id, patient_id=patient_id, rollouts=tuple(rollouts)
            )
    return cohort
