"""Synthetic proxy benchmarks: notes generated from target pathways.

Structured mode fills a fixed clinical field schema first, keeps only cases
whose fields re-derive the target pathway, then writes the note. Unstructured
mode writes the note directly. Labels are kept only when a separate evaluator
model either regenerates the target exactly or picks it over its own
prediction in a position-agnostic two-way choice.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Mapping, Sequence

from .errors import BackendError
from .graph import (
    GuidelineGraph,
    GuidelinePath,
    NodeKind,
    NodeRef,
    extract_last_path,
    parse_path_string,
    sample_random_path,
)
from .predictors import (
    ChatRequest,
    PredictorSpec,
    get_backend,
    load_prompt,
    render_graph_for_prompt,
    render_prompt,
)
from .pseudo_labels import BenchmarkEntry, BenchmarkMethod, ProxyBenchmark
from .seeds import derive_seed

logger = logging.getLogger(__name__)

FIELD_KEYS = ("stage", "histology", "biomarkers", "prior_treatments", "performance_status")

_FIELD_STEMS = {
    "stage": "staging assessment completed",
    "histology": "morphology reviewed",
    "biomarkers": "molecular panel returned",
    "prior_treatments": "treatment history reconciled",
    "performance_status": "functional status documented",
}

_OPENERS = (
    "Clinic visit for ongoing oncologic evaluation.",
    "Seen today in follow-up of the thoracic finding.",
    "Multidisciplinary review of the current presentation.",
)

_STEP_TEMPLATES = (
    "Assessment documents {label}.",
    "Workup is consistent with {label}.",
    "Findings today indicate {label}.",
    "The record supports {label}.",
)

_CLOSERS = (
    "Plan discussed with the patient; return visit scheduled.",
    "Counseling provided; will proceed per the agreed plan.",
    "Care team aligned on next steps; follow-up arranged.",
)


class Provenance(str, Enum):
    STRUCTURED = "structured"
    UNSTRUCTURED = "unstructured"


class Verification(str, Enum):
    REGENERATED = "regenerated"
    PREFERENCE_SELECTED = "preference_selected"


@dataclass(frozen=True)
class SyntheticCase:
    case_id: str
    target_path: GuidelinePath
    note_text: str
    provenance: Provenance
    verification: Verification
    structured_fields: Mapping[str, str] | None = None

    def __post_init__(self):
        if not self.note_text:
            raise ValueError("note_text must be nonempty")
        if (self.structured_fields is not None) != (self.provenance is Provenance.STRUCTURED):
            raise ValueError("structured_fields present iff provenance is structured")


def load_exemplars() -> tuple[str, ...]:
    raw = resources.files("guidebench").joinpath("assets/exemplar_notes.jsonl").read_text("utf-8")
    notes = []
    for line in raw.splitlines():
        line = line.strip()
        if line:
            notes.append(json.loads(line)["note_text"])
    return tuple(notes)


def encode_fields(graph: GuidelineGraph, path: GuidelinePath) -> dict[str, str]:
    """Fill the fixed field schema so the chosen-child labels are recoverable."""
    fields = dict(_FIELD_STEMS)
    for i, ref in enumerate(path.nodes[1:]):
        label = graph.node(ref).label.lower()
        key = FIELD_KEYS[i % len(FIELD_KEYS)]
        fields[key] = f"{fields[key]}; {label}"
    return fields


def fields_to_text(fields: Mapping[str, str]) -> str:
    return "; ".join(f"{key}: {fields[key]}" for key in FIELD_KEYS if key in fields)


def render_note(
    graph: GuidelineGraph,
    path: GuidelinePath,
    fields: Mapping[str, str] | None = None,
    exemplars: Sequence[str] = (),
    rng: random.Random | None = None,
) -> str:
    """Narrative note embedding each chosen child's label, never node ids."""
    rng = rng or random.Random(0)
    lines = []
    if exemplars:
        exemplar = exemplars[rng.randrange(len(exemplars))]
        lines.append(exemplar.split(".")[0].strip() + ".")
    else:
        lines.append(_OPENERS[rng.randrange(len(_OPENERS))])
    for ref in path.nodes[1:]:
        template = _STEP_TEMPLATES[rng.randrange(len(_STEP_TEMPLATES))]
        lines.append(template.format(label=graph.node(ref).label.lower()))
    if fields is not None:
        lines.append("Structured record — " + fields_to_text(fields) + ".")
    lines.append(_CLOSERS[rng.randrange(len(_CLOSERS))])
    return " ".join(lines)


def trace_labels(
    graph: GuidelineGraph, text: str, rng: random.Random | None = None
) -> GuidelinePath | None:
    """Re-derive the pathway implied by free text via child-label matching.

    Strict mode (rng=None) returns None on any ambiguity; with an rng,
    unresolved decisions fall back to a uniform child choice.
    """
    lowered = text.lower()

    def resolve(matches: list[NodeRef]) -> NodeRef | None:
        if len(matches) == 1:
            return matches[0]
        # A path may pass through two siblings in a row (shared children in
        # the graph), so both labels appear. The decision point to take is
        # the match that leads to every other match.
        dominant = [
            c
            for c in matches
            if all(other == c or other in graph.descendants(c) for other in matches)
        ]
        if len(dominant) == 1:
            return dominant[0]
        return None

    def walk(root: NodeRef, strict: bool) -> GuidelinePath | None:
        nodes = [root]
        node = graph.node(root)
        while node.kind is not NodeKind.RECOMMENDATION:
            matches = [c for c in node.children if graph.node(c).label.lower() in lowered]
            child = resolve(matches) if matches else None
            if child is None:
                if strict:
                    return None
                if matches:
                    child = min(matches, key=lambda r: r.render())
                else:
                    assert rng is not None
                    child = node.children[rng.randrange(len(node.children))]
            nodes.append(child)
            node = graph.node(child)
        return GuidelinePath(nodes=tuple(nodes), terminal_reached=True)

    if rng is None:
        traces = [t for t in (walk(root, strict=True) for root in graph.roots) if t is not None]
        return traces[0] if len(traces) == 1 else None
    root = graph.roots[rng.randrange(len(graph.roots))] if len(graph.roots) > 1 else graph.roots[0]
    return walk(root, strict=False)


def find_ref_leaks(text: str, graph: GuidelineGraph) -> list[str]:
    """Node identifiers appearing verbatim in generated text (should be none)."""
    return sorted({n.ref.render() for n in graph.nodes() if n.ref.render() in text})


@dataclass(frozen=True)
class StructuredCaseResult:
    kept: bool
    target_path: GuidelinePath
    fields: Mapping[str, str] | None
    implied_path: GuidelinePath | None


def generate_structured_case(
    generator: PredictorSpec,
    graph: GuidelineGraph,
    target_path: GuidelinePath,
    seed: int,
    case_id: str = "CASE",
    graph_mode: str = "full",
) -> StructuredCaseResult:
    """Fill the field schema, then re-derive the implied pathway from the
    fields alone; mismatches are discarded."""
    prompt = render_prompt(
        load_prompt("structured_fill"),
        graph=render_graph_for_prompt(graph, graph_mode),
        path=target_path.render(),
    )
    raw = get_backend(generator).complete(
        ChatRequest(
            key_id=case_id,
            call_idx=0,
            prompt=prompt,
            seed=seed,
            kind="fields",
            context={"graph": graph, "target_path": target_path},
        )
    )
    try:
        fields = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise BackendError(f"{generator.model_id}: structured fill is not JSON: {exc}")
    if not isinstance(fields, dict) or not all(key in fields for key in FIELD_KEYS):
        raise BackendError(f"{generator.model_id}: structured fill missing schema keys")

    implied = _reconstruct(generator, graph, fields, derive_seed(seed, "reconstruct"), case_id)
    kept = implied is not None and implied.nodes == target_path.nodes
    return StructuredCaseResult(
        kept=kept, target_path=target_path, fields=dict(fields), implied_path=implied
    )


def _reconstruct(
    spec: PredictorSpec,
    graph: GuidelineGraph,
    fields: Mapping[str, str],
    seed: int,
    case_id: str,
) -> GuidelinePath | None:
    from .predictors import Backend

    text = fields_to_text(fields)
    if spec.backend is Backend.SIMULATED:
        return trace_labels(graph, text)
    prompt = render_prompt(
        load_prompt("predict_path"), graph=render_graph_for_prompt(graph), note=text
    )
    raw = get_backend(spec).complete(
        ChatRequest(
            key_id=case_id,
            call_idx=1,
            prompt=prompt,
            seed=seed,
            kind="predict",
            context={"graph": graph, "note": text},
        )
    )
    return extract_last_path(raw)


def generate_note(
    generator: PredictorSpec,
    graph: GuidelineGraph,
    target_path: GuidelinePath,
    structured_fields: Mapping[str, str] | None,
    exemplars: Sequence[str],
    seed: int,
    case_id: str = "CASE",
    graph_mode: str = "full",
) -> str:
    if not exemplars:
        raise ValueError("need at least one exemplar note")
    prompt = render_prompt(
        load_prompt("note_generation"),
        graph=render_graph_for_prompt(graph, graph_mode),
        path=target_path.render(),
        fields=fields_to_text(structured_fields) if structured_fields else "(none)",
        exemplars="\n---\n".join(exemplars),
    )
    raw = get_backend(generator).complete(
        ChatRequest(
            key_id=case_id,
            call_idx=2,
            prompt=prompt,
            seed=seed,
            kind="note",
            context={
                "graph": graph,
                "target_path": target_path,
                "fields": structured_fields,
                "exemplars": tuple(exemplars),
            },
        )
    )
    if not raw.strip():
        raise BackendError(f"{generator.model_id}: empty note output")
    return raw


@dataclass(frozen=True)
class PreferenceOutcome:
    accepted: bool
    verification: Verification | None
    predicted: GuidelinePath | None
    target_slot: str | None  # "A" or "B" when a choice was presented
    choice: str | None
    reason: str | None = None


def select_label_by_preference(
    evaluator: PredictorSpec,
    generator: PredictorSpec,
    graph: GuidelineGraph,
    note_text: str,
    target_path: GuidelinePath,
    seed: int,
    case_id: str = "CASE",
    graph_mode: str = "full",
) -> PreferenceOutcome:
    """Accept if the evaluator regenerates the target, or prefers it over its
    own prediction when both are shown in seeded random slot order."""
    if evaluator.model_id == generator.model_id:
        raise ValueError("evaluator and generator must be different models")

    prompt = render_prompt(
        load_prompt("predict_path"),
        graph=render_graph_for_prompt(graph, graph_mode),
        note=note_text,
    )
    raw = get_backend(evaluator).complete(
        ChatRequest(
            key_id=case_id,
            call_idx=3,
            prompt=prompt,
            seed=seed,
            kind="predict",
            context={"graph": graph, "note": note_text},
        )
    )
    predicted = extract_last_path(raw)
    if predicted is not None and predicted.nodes == target_path.nodes:
        return PreferenceOutcome(
            accepted=True,
            verification=Verification.REGENERATED,
            predicted=predicted,
            target_slot=None,
            choice=None,
        )
    if predicted is None:
        return PreferenceOutcome(
            accepted=False,
            verification=None,
            predicted=None,
            target_slot=None,
            choice=None,
            reason="evaluator prediction unparseable",
        )

    rng = random.Random(derive_seed(seed, "slots"))
    target_first = rng.random() < 0.5
    option_a, option_b = (
        (target_path, predicted) if target_first else (predicted, target_path)
    )
    target_slot = "A" if target_first else "B"
    prefer_prompt = render_prompt(
        load_prompt("preference_choice"),
        graph=render_graph_for_prompt(graph, graph_mode),
        note=note_text,
        option_a=option_a.render(),
        option_b=option_b.render(),
    )
    reply = get_backend(evaluator).complete(
        ChatRequest(
            key_id=case_id,
            call_idx=4,
            prompt=prefer_prompt,
            seed=derive_seed(seed, "prefer"),
            kind="prefer",
            context={
                "graph": graph,
                "note": note_text,
                "option_a": option_a,
                "option_b": option_b,
            },
        )
    )
    choice = reply.strip().upper()[:1]
    if choice not in ("A", "B"):
        raise BackendError(f"{evaluator.model_id}: preference reply {reply!r} is not A/B")
    chosen = option_a if choice == "A" else option_b
    accepted = chosen.nodes == target_path.nodes
    return PreferenceOutcome(
        accepted=accepted,
        verification=Verification.PREFERENCE_SELECTED if accepted else None,
        predicted=predicted,
        target_slot=target_slot,
        choice=choice,
        reason=None if accepted else "evaluator preferred its own path",
    )


@dataclass
class SyntheticBuildResult:
    benchmark: ProxyBenchmark
    cases: list[SyntheticCase]
    audit: list[dict]
    attempts: int

    @property
    def acceptance_rate(self) -> float:
        return len(self.cases) / self.attempts if self.attempts else 0.0


def build_synthetic_benchmark(
    mode: Provenance,
    n_cases: int,
    generator: PredictorSpec,
    evaluator: PredictorSpec,
    graph: GuidelineGraph,
    exemplars: Sequence[str] | None = None,
    seed: int = 0,
    attempt_budget: int | None = None,
    graph_mode: str = "full",
) -> SyntheticBuildResult:
    """Sample target pathways and run the generation/selection loop until
    n_cases are accepted or the attempt budget runs out."""
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    if exemplars is None:
        exemplars = load_exemplars()
    budget = attempt_budget if attempt_budget is not None else 5 * n_cases

    accepted: list[SyntheticCase] = []
    audit: list[dict] = []
    attempts = 0
    while len(accepted) < n_cases and attempts < budget:
        case_id = f"SYN-{mode.value[:1].upper()}-{attempts:04d}"
        attempts += 1
        target = sample_random_path(graph, seed=derive_seed(seed, "target", case_id))

        fields = None
        if mode is Provenance.STRUCTURED:
            result = generate_structured_case(
                generator, graph, target, derive_seed(seed, "fields", case_id),
                case_id=case_id, graph_mode=graph_mode,
            )
            if not result.kept:
                audit.append(
                    {
                        "case_id": case_id,
                        "stage": "reconstruction",
                        "outcome": "discarded",
                        "target_path": target.render(),
                        "implied_path": result.implied_path.render()
                        if result.implied_path
                        else None,
                    }
                )
                continue
            fields = result.fields

        note = generate_note(
            generator, graph, target, fields, exemplars,
            derive_seed(seed, "note", case_id), case_id=case_id, graph_mode=graph_mode,
        )
        outcome = select_label_by_preference(
            evaluator, generator, graph, note, target,
            derive_seed(seed, "select", case_id), case_id=case_id, graph_mode=graph_mode,
        )
        audit.append(
            {
                "case_id": case_id,
                "stage": "preference",
                "outcome": "accepted" if outcome.accepted else "rejected",
                "verification": outcome.verification.value if outcome.verification else None,
                "target_slot": outcome.target_slot,
                "choice": outcome.choice,
                "target_path": target.render(),
                "predicted_path": outcome.predicted.render() if outcome.predicted else None,
                "reason": outcome.reason,
            }
        )
        if outcome.accepted:
            assert outcome.verification is not None
            accepted.append(
                SyntheticCase(
                    case_id=case_id,
                    target_path=target,
                    note_text=note,
                    provenance=mode,
                    verification=outcome.verification,
                    structured_fields=fields,
                )
            )

    if len(accepted) < n_cases:
        logger.warning(
            "synthetic benchmark (%s): budget %d exhausted with %d/%d accepted",
            mode.value, budget, len(accepted), n_cases,
        )
    method = (
        BenchmarkMethod.SYNTH_STRUCTURED
        if mode is Provenance.STRUCTURED
        else BenchmarkMethod.SYNTH_UNSTRUCTURED
    )
    benchmark = ProxyBenchmark(
        method=method,
        entries=[
            BenchmarkEntry(
                case_id=c.case_id,
                agreement=1.0,
                label_path=c.target_path,
                note_text=c.note_text,
            )
            for c in accepted
        ],
        zero_scored=[],
    )
    return SyntheticBuildResult(
        benchmark=benchmark, cases=accepted, audit=audit, attempts=attempts
    )


def write_synthetic_cases(cases: Sequence[SyntheticCase], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            record = {
                "case_id": case.case_id,
                "note_text": case.note_text,
                "target_path": case.target_path.render(),
                "provenance": case.provenance.value,
                "verification": case.verification.value,
            }
            if case.structured_fields is not None:
                record["structured_fields"] = dict(case.structured_fields)
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_synthetic_cases(path) -> list[SyntheticCase]:
    cases = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            cases.append(
                SyntheticCase(
                    case_id=record["case_id"],
                    target_path=parse_path_string(record["target_path"]),
                    note_text=record["note_text"],
                    provenance=Provenance(record["provenance"]),
                    verification=Verification(record["verification"]),
                    structured_fields=record.get("structured_fields"),
                )
            )
    return cases


def write_audit(audit: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in audit:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
