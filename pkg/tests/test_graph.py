from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidebench.errors import CycleError, DanglingEdgeError, GraphSchemaError, PathParseError
from guidebench.graph import (
    GuidelinePath,
    NodeRef,
    extract_last_path,
    parse_graph,
    parse_path_string,
    sample_random_path,
    validate_path,
)

MINIMAL = {
    "pages": {
        "T-1": [
            {"id": "T-1-1", "label": "root", "kind": "decision", "children": ["T-1-2", "T-1-3"]},
            {"id": "T-1-2", "label": "left", "kind": "recommendation", "children": [], "treatment": "plan a"},
            {"id": "T-1-3", "label": "right", "kind": "recommendation", "children": [], "treatment": "plan b"},
        ]
    },
    "roots": ["T-1-1"],
}


class TestNodeRef:
    def test_parse_render_round_trip(self):
        ref = NodeRef.parse("NSCL-2-1")
        assert ref.page_id == "NSCL-2"
        assert ref.node_ord == 1
        assert NodeRef.parse(ref.render()) == ref

    @pytest.mark.parametrize("token", ["", "nscl-1-1", "NSCL-1-0", "NSCL--1", "NSCL", "A-B"])
    def test_rejects_malformed(self, token):
        with pytest.raises(PathParseError):
            NodeRef.parse(token)

    def test_invariants(self):
        with pytest.raises(ValueError):
            NodeRef(page_id="", node_ord=1)
        with pytest.raises(ValueError):
            NodeRef(page_id="A", node_ord=0)


@st.composite
def node_refs(draw):
    parts = draw(
        st.lists(st.from_regex(r"[A-Z0-9]{1,4}", fullmatch=True), min_size=1, max_size=3)
    )
    ordinal = draw(st.integers(min_value=1, max_value=99))
    return NodeRef(page_id="-".join(parts), node_ord=ordinal)


@settings(max_examples=200, deadline=None)
@given(refs=st.lists(node_refs(), min_size=1, max_size=8, unique=True))
def test_path_string_round_trip(refs):
    path = GuidelinePath(nodes=tuple(refs))
    assert parse_path_string(path.render()).nodes == path.nodes


class TestParsePathString:
    def test_spec_format(self):
        path = parse_path_string("NSCL-1-1 → NSCL-2-1")
        assert [r.render() for r in path.nodes] == ["NSCL-1-1", "NSCL-2-1"]

    def test_duplicate_rejected(self):
        with pytest.raises(PathParseError, match="duplicate"):
            parse_path_string("NSCL-1-1 -> NSCL-1-1")

    def test_whitespace_and_mixed_arrows(self):
        path = parse_path_string("  NSCL-4-2→NSCL-16-1 ")
        assert path.render() == "NSCL-4-2 → NSCL-16-1"
        assert parse_path_string("A-1=>B-2->C-3").render() == "A-1 → B-2 → C-3"

    def test_empty_and_malformed(self):
        with pytest.raises(PathParseError, match="empty"):
            parse_path_string("   ")
        with pytest.raises(PathParseError, match="position 2"):
            parse_path_string("A-1 → bogus → C-3")


class TestParseGraph:
    def test_minimal_graph(self):
        graph = parse_graph(json.dumps(MINIMAL))
        assert len(graph) == 3
        assert len(graph.recommendation_refs()) == 2

    def test_dangling_edge_names_ref(self):
        doc = json.loads(json.dumps(MINIMAL))
        doc["pages"]["T-1"][0]["children"] = ["T-1-2", "NSCL-9-1"]
        with pytest.raises(DanglingEdgeError, match="NSCL-9-1"):
            parse_graph(doc)

    def test_cycle_rejected(self):
        doc = {
            "pages": {
                "T-1": [
                    {"id": "T-1-1", "label": "a", "kind": "decision", "children": ["T-1-2"]},
                    {"id": "T-1-2", "label": "b", "kind": "decision", "children": ["T-1-1", "T-1-3"]},
                    {"id": "T-1-3", "label": "c", "kind": "recommendation", "children": [], "treatment": "x"},
                ]
            },
            "roots": ["T-1-1"],
        }
        with pytest.raises(CycleError):
            parse_graph(doc)

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.pop("roots"),
            lambda d: d["pages"]["T-1"][0].pop("label"),
            lambda d: d["pages"]["T-1"][1].pop("treatment"),
            lambda d: d["pages"]["T-1"][0].update(children=[]),
            lambda d: d["pages"]["T-1"][0].update(kind="branch"),
        ],
    )
    def test_schema_violations(self, mutate):
        doc = json.loads(json.dumps(MINIMAL))
        mutate(doc)
        with pytest.raises(GraphSchemaError):
            parse_graph(doc)

    def test_toy_fixture_counts(self, toy_graph):
        assert len(toy_graph) == 12
        assert len(toy_graph.recommendation_refs()) == 5

    def test_deleting_referenced_node_rejected(self, toy_graph):
        # Metamorphic: dropping any referenced node breaks the fixture.
        payload = toy_graph.to_payload()
        referenced = {c for page in payload["pages"].values() for n in page for c in n["children"]}
        for page_id, nodes in payload["pages"].items():
            for node in nodes:
                if node["id"] not in referenced:
                    continue
                mutated = json.loads(json.dumps(payload))
                mutated["pages"][page_id] = [
                    n for n in mutated["pages"][page_id] if n["id"] != node["id"]
                ]
                with pytest.raises(GraphSchemaError):
                    parse_graph(mutated)


class TestValidatePath:
    def test_all_ok(self, toy_graph):
        path = parse_path_string("ONC-1-1 → ONC-1-2 → ONC-2-2")
        report = validate_path(path, toy_graph, strict_edges=True)
        assert report.ok and report.terminal_reached

    def test_unknown_node_flagged(self, toy_graph):
        path = parse_path_string("ONC-1-1 → ONC-9-9")
        report = validate_path(path, toy_graph)
        assert [r.render() for r in report.missing] == ["ONC-9-9"]

    def test_non_adjacent_pair_flagged(self, toy_graph):
        path = parse_path_string("ONC-1-1 → ONC-2-3")
        lenient = validate_path(path, toy_graph, strict_edges=False)
        strict = validate_path(path, toy_graph, strict_edges=True)
        assert lenient.ok
        assert not strict.ok
        assert [(a.render(), b.render()) for a, b in strict.bad_edges] == [
            ("ONC-1-1", "ONC-2-3")
        ]


class TestSampleRandomPath:
    def test_single_chain_graph(self):
        doc = {
            "pages": {
                "C-1": [
                    {"id": "C-1-1", "label": "a", "kind": "decision", "children": ["C-1-2"]},
                    {"id": "C-1-2", "label": "b", "kind": "recommendation", "children": [], "treatment": "x"},
                ]
            },
            "roots": ["C-1-1"],
        }
        graph = parse_graph(doc)
        for seed in (0, 1, 99):
            assert sample_random_path(graph, seed=seed).render() == "C-1-1 → C-1-2"

    def test_deterministic(self, toy_graph):
        assert sample_random_path(toy_graph, seed=7) == sample_random_path(toy_graph, seed=7)

    def test_always_valid_and_terminal(self, toy_graph):
        for seed in range(200):
            path = sample_random_path(toy_graph, seed=seed)
            report = validate_path(path, toy_graph, strict_edges=True)
            assert report.ok and report.terminal_reached
            assert path.terminal_reached

    def test_root_child_split_near_uniform(self, toy_graph):
        # Root has exactly two children; binomial bound at n=10,000.
        rng = random.Random(1234)
        first_child_counts = {}
        n = 10_000
        for _ in range(n):
            path = sample_random_path(toy_graph, rng=rng)
            first_child_counts[path.nodes[1]] = first_child_counts.get(path.nodes[1], 0) + 1
        assert len(first_child_counts) == 2
        for count in first_child_counts.values():
            assert abs(count / n - 0.5) < 0.02


class TestExtractLastPath:
    def test_prose_then_answer(self):
        raw = "I think the case is X.\nFinal path: NSCL-1-1 → NSCL-5-2"
        assert extract_last_path(raw).render() == "NSCL-1-1 → NSCL-5-2"

    def test_last_sequence_wins(self):
        raw = "Candidate: A-1 -> B-1. But actually:\nA-1 => C-1 => D-4"
        assert extract_last_path(raw).render() == "A-1 → C-1 → D-4"

    def test_no_sequence(self):
        assert extract_last_path("no identifiers here") is None
        assert extract_last_path("") is None

    def test_invalid_last_sequence_is_failure(self):
        assert extract_last_path("A-1 -> A-1") is None
