from __future__ import annotations

import random

import pytest

from guidebench.graph import GuidelinePath, NodeRef
from guidebench.metrics import MetricKind
from guidebench.pseudo_labels import (
    BenchmarkEntry,
    BenchmarkMethod,
    ProxyBenchmark,
    PseudoLabel,
    build_cross_benchmark,
    build_self_benchmark,
    cross_model_label,
    mode_predictions,
    model_mode_label,
    read_benchmark,
    score_model_on_proxy,
    self_consistency_label,
    write_benchmark,
)
from guidebench.store import Rollout, RolloutSet


def path_of(*ids: str) -> GuidelinePath:
    return GuidelinePath(nodes=tuple(NodeRef.parse(t) for t in ids))


def rollout_set(model_id: str, patient_id: str, paths) -> RolloutSet:
    rollouts = tuple(
        Rollout(
            index=i,
            raw_text=f"Final path: {p.render()}" if p is not None else "no idea",
            parsed=p,
        )
        for i, p in enumerate(paths)
    )
    return RolloutSet(model_id=model_id, patient_id=patient_id, rollouts=rollouts)


P_MAIN = path_of("A-1", "B-1", "Z-1")
P_ALT = path_of("A-1", "B-2", "Y-1")


class TestSelfConsistencyLabel:
    def test_identical_rollouts_accepted(self):
        rs = rollout_set("m", "p", [P_MAIN] * 10)
        decision = self_consistency_label(rs, MetricKind.TREATMENT_MATCH)
        assert decision.accepted and decision.agreement == 1.0
        assert decision.label.label_treatment.render() == "Z-1"

    def test_nine_of_ten_boundary_inclusive(self):
        rs = rollout_set("m", "p", [P_MAIN] * 9 + [P_ALT])
        decision = self_consistency_label(rs, MetricKind.TREATMENT_MATCH, delta=0.9)
        assert decision.agreement == 0.9
        assert decision.accepted
        assert decision.label.label_treatment.render() == "Z-1"

    def test_six_of_ten_rejected(self):
        rs = rollout_set("m", "p", [P_MAIN] * 6 + [P_ALT] * 4)
        decision = self_consistency_label(rs, MetricKind.TREATMENT_MATCH, delta=0.9)
        assert not decision.accepted
        assert decision.agreement == 0.6

    def test_all_unparseable_rejected_with_reason(self):
        rs = rollout_set("m", "p", [None, None, None])
        decision = self_consistency_label(rs, MetricKind.PATH_OVERLAP)
        assert not decision.accepted
        assert "parseable" in decision.reason

    def test_overlap_variant_uses_mode_node_set(self):
        rs = rollout_set("m", "p", [P_MAIN] * 10)
        decision = self_consistency_label(rs, MetricKind.PATH_OVERLAP)
        assert decision.accepted
        assert decision.label.label_path.nodes == P_MAIN.nodes

    def test_agreement_over_parsed_rollouts_only(self):
        rs = rollout_set("m", "p", [P_MAIN] * 9 + [None])
        decision = self_consistency_label(rs, MetricKind.TREATMENT_MATCH)
        assert decision.accepted and decision.agreement == 1.0


class TestBuildSelfBenchmark:
    def test_all_accepted_no_zero_scored(self):
        sets = {f"p{i}": rollout_set("m", f"p{i}", [P_MAIN] * 5) for i in range(4)}
        bench = build_self_benchmark(sets, MetricKind.TREATMENT_MATCH)
        assert bench.zero_scored == []
        assert len(bench.entries) == 4
        assert bench.source_model == "m"

    def test_inconsistent_cases_zero_scored(self):
        sets = {
            "p0": rollout_set("m", "p0", [P_MAIN] * 5),
            "p1": rollout_set("m", "p1", [P_MAIN, P_ALT, P_MAIN, P_ALT, P_MAIN]),
        }
        bench = build_self_benchmark(sets, MetricKind.TREATMENT_MATCH, delta=0.9)
        assert bench.zero_scored == ["p1"]

    def test_delta_one_keeps_only_perfect(self):
        sets = {
            "p0": rollout_set("m", "p0", [P_MAIN] * 10),
            "p1": rollout_set("m", "p1", [P_MAIN] * 9 + [P_ALT]),
        }
        bench = build_self_benchmark(sets, MetricKind.TREATMENT_MATCH, delta=1.0)
        assert [e.case_id for e in bench.entries] == ["p0"]
        assert bench.zero_scored == ["p1"]

    def test_raising_delta_never_accepts_more(self):
        rng = random.Random(0)
        sets = {}
        for i in range(30):
            k = 10
            n_main = rng.randint(0, k)
            paths = [P_MAIN] * n_main + [P_ALT] * (k - n_main)
            rng.shuffle(paths)
            sets[f"p{i}"] = rollout_set("m", f"p{i}", paths)
        sizes = []
        for delta in (0.0, 0.25, 0.5, 0.75, 0.9, 1.0):
            bench = build_self_benchmark(sets, MetricKind.TREATMENT_MATCH, delta=delta)
            sizes.append(len(bench.entries))
        assert sizes == sorted(sizes, reverse=True)

    def test_empty_cohort(self):
        with pytest.raises(ValueError, match="empty"):
            build_self_benchmark({}, MetricKind.TREATMENT_MATCH)


def label_for(model: str, treatment: str) -> PseudoLabel:
    return PseudoLabel(
        patient_id="p",
        source=BenchmarkMethod.CROSS_TREATMENT,
        agreement=1.0,
        label_treatment=NodeRef.parse(treatment),
    )


class TestCrossModelLabel:
    def test_majority_convergence(self):
        labels = [label_for("a", "T-1"), label_for("b", "T-1"), label_for("c", "T-2")]
        aggregated = cross_model_label(labels)
        assert aggregated.label_treatment.render() == "T-1"
        assert aggregated.agreement == pytest.approx(2 / 3)

    def test_no_convergence_excluded(self):
        labels = [label_for("a", "T-1"), label_for("b", "T-2"), label_for("c", "T-3")]
        assert cross_model_label(labels) is None

    def test_single_model_excluded(self):
        assert cross_model_label([label_for("a", "T-1")]) is None

    def test_order_invariant(self):
        labels = [label_for("a", "T-1"), label_for("b", "T-2"), label_for("c", "T-1")]
        for _ in range(5):
            random.Random(1).shuffle(labels)
            assert cross_model_label(labels).label_treatment.render() == "T-1"

    def test_two_way_tie_breaks_lexicographically(self):
        labels = [
            label_for("a", "T-2"),
            label_for("b", "T-2"),
            label_for("c", "T-10"),
            label_for("d", "T-10"),
        ]
        assert cross_model_label(labels).label_treatment.render() == "T-10"


class TestBuildCrossBenchmark:
    def test_convergent_patients_only(self):
        sets = {
            "a": {"p0": rollout_set("a", "p0", [P_MAIN] * 3),
                  "p1": rollout_set("a", "p1", [P_MAIN] * 3)},
            "b": {"p0": rollout_set("b", "p0", [P_MAIN] * 3),
                  "p1": rollout_set("b", "p1", [P_ALT] * 3)},
            "c": {"p0": rollout_set("c", "p0", [P_ALT] * 3),
                  "p1": rollout_set("c", "p1", [path_of("A-1", "C-1", "X-1")] * 3)},
        }
        bench = build_cross_benchmark(sets, MetricKind.TREATMENT_MATCH)
        assert [e.case_id for e in bench.entries] == ["p0"]
        assert bench.entries[0].label_treatment.render() == "Z-1"
        assert bench.zero_scored == []

    def test_needs_two_models(self):
        with pytest.raises(ValueError):
            build_cross_benchmark({"a": {}}, MetricKind.TREATMENT_MATCH)


class TestScoreModelOnProxy:
    def _bench(self, entries, zero=(), source=None):
        return ProxyBenchmark(
            method=BenchmarkMethod.SELF_TREATMENT,
            entries=entries,
            zero_scored=list(zero),
            source_model=source,
        )

    def test_identical_predictions_scores_one(self):
        bench = self._bench(
            [BenchmarkEntry(case_id=f"p{i}", agreement=1.0, label_treatment=P_MAIN.final)
             for i in range(5)]
        )
        preds = {f"p{i}": P_MAIN for i in range(5)}
        score = score_model_on_proxy(preds, bench, MetricKind.TREATMENT_MATCH)
        assert score.mean == 1.0 and score.n_cases == 5

    def test_half_match(self):
        bench = self._bench(
            [BenchmarkEntry(case_id=f"p{i}", agreement=1.0, label_treatment=P_MAIN.final)
             for i in range(4)]
        )
        preds = {"p0": P_MAIN, "p1": P_MAIN, "p2": P_ALT, "p3": P_ALT}
        score = score_model_on_proxy(preds, bench, MetricKind.TREATMENT_MATCH)
        assert score.mean == 0.5

    def test_zero_scored_counts_for_source_model_only(self):
        bench = self._bench(
            [BenchmarkEntry(case_id="p0", agreement=1.0, label_treatment=P_MAIN.final)],
            zero=["p1"],
            source="m-self",
        )
        preds = {"p0": P_MAIN, "p1": P_MAIN}
        own = score_model_on_proxy(preds, bench, MetricKind.TREATMENT_MATCH, model_id="m-self")
        other = score_model_on_proxy(preds, bench, MetricKind.TREATMENT_MATCH, model_id="m-other")
        assert own.mean == 0.5 and own.n_cases == 2
        assert other.mean == 1.0 and other.n_cases == 1

    def test_unparseable_prediction_scores_zero(self):
        bench = self._bench(
            [BenchmarkEntry(case_id="p0", agreement=1.0, label_treatment=P_MAIN.final)]
        )
        score = score_model_on_proxy({"p0": None}, bench, MetricKind.TREATMENT_MATCH)
        assert score.mean == 0.0

    def test_no_overlap_raises(self):
        bench = self._bench(
            [BenchmarkEntry(case_id="p0", agreement=1.0, label_treatment=P_MAIN.final)]
        )
        with pytest.raises(ValueError, match="overlapping"):
            score_model_on_proxy({"q9": P_MAIN}, bench, MetricKind.TREATMENT_MATCH)


class TestFixedPoint:
    def test_perfect_model_all_methods_score_one(self, toy_graph):
        # A perfectly consistent, perfectly accurate model is a fixed point.
        from guidebench.simulate import SimCohortSpec, SimModel, simulate_cohort

        cohort = simulate_cohort(
            SimCohortSpec(
                n_patients=12,
                models=(SimModel("perfect", 1.0, 0.0), SimModel("other", 1.0, 0.0)),
                seed=5,
                k=10,
            ),
            toy_graph,
        )
        sets = cohort.rollout_sets
        preds = mode_predictions(sets["perfect"])
        for metric in (MetricKind.PATH_OVERLAP, MetricKind.TREATMENT_MATCH):
            bench = build_self_benchmark(sets["perfect"], metric)
            assert score_model_on_proxy(preds, bench, metric, model_id="perfect").mean == 1.0
            cross = build_cross_benchmark(sets, metric)
            assert score_model_on_proxy(preds, cross, metric, model_id="perfect").mean == 1.0
        truth = {c.patient_id: c.annotated_path for c in cohort.cases}
        assert all(preds[p].nodes == truth[p].nodes for p in preds)

    def test_accepted_label_is_mode_of_rollouts(self):
        rng = random.Random(4)
        for _ in range(100):
            n_main = rng.randint(0, 10)
            paths = [P_MAIN] * n_main + [P_ALT] * (10 - n_main)
            rng.shuffle(paths)
            rs = rollout_set("m", "p", paths)
            decision = self_consistency_label(rs, MetricKind.TREATMENT_MATCH, delta=0.0)
            counts = {"Z-1": n_main, "Y-1": 10 - n_main}
            expected = max(counts, key=lambda t: (counts[t], t == "Y-1"))
            # Counting oracle with the lexicographic tie rule (Y-1 < Z-1).
            if counts["Z-1"] == counts["Y-1"]:
                expected = "Y-1"
            assert decision.label.label_treatment.render() == expected


class TestBenchmarkFiles:
    def test_round_trip(self, tmp_path):
        bench = ProxyBenchmark(
            method=BenchmarkMethod.SELF_TREATMENT,
            entries=[BenchmarkEntry(case_id="p0", agreement=0.9, label_treatment=P_MAIN.final)],
            zero_scored=["p1"],
            source_model="m",
        )
        path = tmp_path / "bench.jsonl"
        sidecar = tmp_path / "bench.zero.json"
        write_benchmark(bench, path, sidecar)
        loaded = read_benchmark(path, sidecar)
        assert loaded.method is BenchmarkMethod.SELF_TREATMENT
        assert loaded.entries[0].label_treatment == P_MAIN.final
        assert loaded.zero_scored == ["p1"]
        assert loaded.source_model == "m"

    def test_mode_label_none_for_unparseable(self):
        rs = rollout_set("m", "p", [None, None])
        assert model_mode_label(rs, MetricKind.TREATMENT_MATCH) is None
