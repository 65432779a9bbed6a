from __future__ import annotations

import math
import random

import numpy as np
import pytest

from guidebench.stats import (
    ModelScoreTable,
    benchmark_fidelity,
    confusion_matrix,
    f1_binary,
    rank_average,
    rmse,
    roc_curve,
    spearman,
)


def spearman_rank_formula(a, b):
    # 1 - 6*sum(d^2)/(n(n^2-1)); valid only without ties.
    n = len(a)
    rank_a = {v: i + 1 for i, v in enumerate(sorted(a))}
    rank_b = {v: i + 1 for i, v in enumerate(sorted(b))}
    d2 = sum((rank_a[x] - rank_b[y]) ** 2 for x, y in zip(a, b))
    return 1 - 6 * d2 / (n * (n**2 - 1))


def auroc_concordance_oracle(scores, labels):
    # Pairwise concordance with ties counted one half.
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = len(pos) * len(neg)
    credit = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                credit += 1.0
            elif p == n:
                credit += 0.5
    return credit / total


class TestSpearman:
    def test_identical_ordering(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)

    def test_reversed(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_worked_example(self):
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)

    def test_matches_rank_formula_on_tie_free_vectors(self):
        rng = random.Random(42)
        for _ in range(300):
            n = rng.randint(2, 30)
            a = rng.sample(range(1000), n)
            b = rng.sample(range(1000), n)
            assert spearman(a, b) == pytest.approx(spearman_rank_formula(a, b), abs=1e-12)

    def test_zero_variance_returns_none(self):
        assert spearman([1, 1, 1], [1, 2, 3]) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            spearman([1, 2], [1, 2, 3])

    def test_monotone_transform_invariance(self):
        rng = random.Random(7)
        for _ in range(100):
            n = rng.randint(3, 20)
            a = [rng.random() for _ in range(n)]
            b = [rng.random() for _ in range(n)]
            transformed = [math.exp(3 * x) + 1 for x in a]
            assert spearman(transformed, b) == pytest.approx(spearman(a, b), abs=1e-12)

    def test_tie_ranks_are_averaged(self):
        assert list(rank_average([10, 20, 20, 30])) == [1.0, 2.5, 2.5, 4.0]


class TestRmse:
    def test_equal_vectors(self):
        assert rmse([0.2, 0.4], [0.2, 0.4]) == 0.0

    def test_unit_shift(self):
        assert rmse([0, 0], [1, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_single_element(self):
        assert rmse([0.3], [0.5]) == pytest.approx(0.2, abs=1e-12)

    def test_symmetry_and_direct_formula(self):
        rng = random.Random(3)
        for _ in range(200):
            n = rng.randint(1, 20)
            a = [rng.random() for _ in range(n)]
            b = [rng.random() for _ in range(n)]
            direct = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)) / n)
            assert rmse(a, b) == pytest.approx(direct, abs=1e-12)
            assert rmse(a, b) == rmse(b, a)


class TestRocCurve:
    def test_perfect_separation(self):
        curve = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert curve.auroc == pytest.approx(1.0)

    def test_all_scores_equal(self):
        curve = roc_curve([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert curve.auroc == pytest.approx(0.5)

    def test_worked_example(self):
        curve = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert curve.auroc == pytest.approx(0.75)

    def test_endpoints_and_monotone(self):
        rng = random.Random(11)
        for _ in range(100):
            n = rng.randint(2, 40)
            labels = [rng.randint(0, 1) for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            scores = [rng.choice([0.1, 0.2, 0.5, 0.9]) for _ in range(n)]
            curve = roc_curve(scores, labels)
            assert curve.points[0][:2] == (0.0, 0.0)
            assert curve.points[-1][:2] == (1.0, 1.0)
            fprs = [p[0] for p in curve.points]
            tprs = [p[1] for p in curve.points]
            assert fprs == sorted(fprs)
            assert tprs == sorted(tprs)

    def test_matches_concordance_oracle(self):
        rng = random.Random(2024)
        for _ in range(300):
            n = rng.randint(2, 50)
            labels = [rng.randint(0, 1) for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            scores = [round(rng.random(), 2) for _ in range(n)]  # force ties
            curve = roc_curve(scores, labels)
            assert curve.auroc == pytest.approx(
                auroc_concordance_oracle(scores, labels), abs=1e-12
            )

    def test_complement_symmetry(self):
        rng = random.Random(8)
        for _ in range(100):
            n = rng.randint(2, 30)
            labels = [rng.randint(0, 1) for _ in range(n)]
            if len(set(labels)) < 2:
                continue
            scores = [rng.random() for _ in range(n)]
            acc = roc_curve(scores, labels).auroc
            rev = roc_curve([-s for s in scores], labels).auroc
            assert acc + rev == pytest.approx(1.0, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_curve([0.1, 0.2], [1, 1])


class TestF1AndConfusion:
    def test_perfect(self):
        assert f1_binary([1, 0, 1], [1, 0, 1]) == 1.0

    def test_all_wrong(self):
        assert f1_binary([1, 0], [0, 1]) == 0.0

    def test_worked_example(self):
        # TP=2, FP=1, FN=1 -> 2/3.
        pred = [1, 1, 1, 0, 0]
        truth = [1, 1, 0, 1, 0]
        assert f1_binary(pred, truth) == pytest.approx(2 / 3)
        cm = confusion_matrix(pred, truth)
        assert (cm.tn, cm.fp, cm.fn, cm.tp) == (1, 1, 1, 2)


class TestBenchmarkFidelity:
    def _table(self, true, proxy_by_method):
        table = ModelScoreTable(metric="treatment_match")
        for i, value in enumerate(true):
            model = f"m{i}"
            table.add(model, value, {m: vec[i] for m, vec in proxy_by_method.items()})
        return table

    def test_fixed_point(self):
        true = [0.2, 0.5, 0.8]
        table = self._table(true, {"self_treatment": list(true)})
        out = benchmark_fidelity(table)["self_treatment"]
        assert out["spearman"] == pytest.approx(1.0)
        assert out["rmse"] == 0.0

    def test_constant_shift(self):
        true = [0.2, 0.5, 0.8]
        table = self._table(true, {"synth_unstructured": [v + 0.1 for v in true]})
        out = benchmark_fidelity(table)["synth_unstructured"]
        assert out["spearman"] == pytest.approx(1.0)
        assert out["rmse"] == pytest.approx(0.1, abs=1e-12)

    def test_insufficient_models(self):
        table = self._table([0.4], {"self_treatment": [0.4]})
        with pytest.raises(ValueError):
            benchmark_fidelity(table)


def test_rank_average_matches_numpy_argsort_on_unique():
    rng = np.random.default_rng(1)
    for _ in range(50):
        values = rng.permutation(20).astype(float)
        ranks = rank_average(values)
        assert list(np.argsort(ranks)) == list(np.argsort(values, kind="stable"))
