import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spcmh.evaluation import (
    PRCurve,
    average_precision,
    evaluate_retrieval,
    mean_average_precision,
    precision_recall,
    relevance_matrix,
    shuffled_map,
    write_metrics_json,
    write_pr_csv,
)
from spcmh.exceptions import MissingLabelsError, ParameterError, UndefinedCurveError
from spcmh.hashing import HashCodeMatrix

relevance_lists = st.lists(st.integers(0, 1), min_size=1, max_size=40)


def loop_ap(rel):
    hits = 0
    total = 0.0
    for k, r in enumerate(rel, start=1):
        if r:
            hits += 1
            total += hits / k
    return total / hits if hits else 0.0


def exhaustive_interpolated(rel, level):
    n_rel = sum(rel)
    best = 0.0
    for k in range(1, len(rel) + 1):
        hits = sum(rel[:k])
        if hits / n_rel >= level - 1e-12:
            best = max(best, hits / k)
    return best


class TestAveragePrecision:
    def test_formula(self):
        assert average_precision([1, 0, 1]) == pytest.approx(5 / 6, abs=1e-12)

    def test_perfect(self):
        assert average_precision([1, 1, 1, 1]) == 1.0

    def test_loop_oracle(self, rng):
        for _ in range(10):
            rel = rng.integers(0, 2, 50)
            assert average_precision(rel) == pytest.approx(loop_ap(rel.tolist()), abs=1e-12)

    def test_no_relevant(self):
        assert average_precision([0, 0, 0]) == 0.0

    def test_empty(self):
        with pytest.raises(ParameterError):
            average_precision([])

    def test_cutoff(self):
        assert average_precision([0, 1, 1, 1], cutoff=2) == pytest.approx(0.5)

    @settings(max_examples=80)
    @given(rel=relevance_lists)
    def test_perfect_iff_relevant_first(self, rel):
        if sum(rel) == 0:
            return
        first_irrelevant = rel.index(0) if 0 in rel else len(rel)
        sorted_ok = all(r == 0 for r in rel[first_irrelevant:])
        assert (average_precision(rel) == pytest.approx(1.0, abs=1e-12)) == sorted_ok

    @settings(max_examples=60)
    @given(rel=relevance_lists, seed=st.integers(0, 1000))
    def test_suffix_permutation_invariance(self, rel, seed):
        if sum(rel) == 0:
            return
        last = max(i for i, r in enumerate(rel) if r)
        suffix = rel[last + 1 :]
        shuffled = rel[: last + 1] + list(np.random.default_rng(seed).permutation(suffix))
        assert average_precision(shuffled) == pytest.approx(average_precision(rel), abs=1e-12)


class TestMAP:
    def test_single(self):
        assert mean_average_precision([[1, 0, 1]]) == pytest.approx(5 / 6)

    def test_mean(self):
        assert mean_average_precision([[1, 1], [0, 0]]) == 0.5

    def test_empty(self):
        with pytest.raises(ParameterError):
            mean_average_precision([])

    @settings(max_examples=40)
    @given(qs=st.lists(relevance_lists, min_size=1, max_size=6))
    def test_bounds_and_duplication(self, qs):
        m = mean_average_precision(qs)
        assert 0.0 <= m <= 1.0
        assert mean_average_precision(qs + qs) == pytest.approx(m, abs=1e-12)


class TestPrecisionRecall:
    def test_all_relevant_first(self):
        c = precision_recall([1, 1, 0, 0])
        assert c.precision[-1] == 1.0

    def test_late_relevant(self):
        c = precision_recall([0, 1], levels=[1.0])
        assert c.precision[0] == 0.5

    def test_undefined(self):
        with pytest.raises(UndefinedCurveError):
            precision_recall([0, 0])

    def test_default_grid(self):
        c = precision_recall([1, 0, 1])
        np.testing.assert_allclose(c.recall, np.linspace(0, 1, 11))

    def test_exhaustive_oracle(self, rng):
        for _ in range(10):
            rel = rng.integers(0, 2, 30)
            if rel.sum() == 0:
                continue
            c = precision_recall(rel)
            expected = [exhaustive_interpolated(rel.tolist(), t) for t in c.recall]
            np.testing.assert_allclose(c.precision, expected, atol=1e-12)
            assert np.all(np.diff(c.precision) <= 1e-15)

    @settings(max_examples=60)
    @given(rel=relevance_lists)
    def test_monotone(self, rel):
        if sum(rel) == 0:
            return
        c = precision_recall(rel)
        assert np.all(np.diff(c.precision) <= 0)
        assert np.all((0 <= c.precision) & (c.precision <= 1))

    def test_bad_levels(self):
        with pytest.raises(ParameterError):
            precision_recall([1, 0], levels=[0.5, 0.2])


class TestRetrieval:
    def test_relevance_matrix_orders_stably(self):
        D = np.array([[2, 0, 2, 1]])
        rel = relevance_matrix(D, np.array([7]), np.array([7, 3, 3, 7]))
        # order: idx1 (0), idx3 (1), idx0 (2), idx2 (2)
        assert rel.tolist() == [[0, 1, 1, 0]]

    def test_self_retrieval(self, rng):
        bits = np.repeat(np.eye(4, dtype=np.uint8), 3, axis=0)
        labels = np.repeat(np.arange(4), 3)
        codes = HashCodeMatrix.from_bits(bits)
        res = evaluate_retrieval(codes, codes, labels, labels)
        assert res["map"] == 1.0

    def test_identical_labels(self, rng):
        codes = HashCodeMatrix.from_bits(rng.integers(0, 2, (10, 16)))
        res = evaluate_retrieval(codes[list(range(3))], codes, np.zeros(3), np.zeros(10))
        assert res["map"] == 1.0

    def test_missing_labels(self, rng):
        codes = HashCodeMatrix.from_bits(rng.integers(0, 2, (3, 8)))
        with pytest.raises(MissingLabelsError):
            evaluate_retrieval(codes, codes, None, np.zeros(3))

    def test_chance_level(self):
        labels = np.repeat(np.arange(10), 60)
        chance = shuffled_map(np.arange(10), labels, n_shuffles=5)
        assert 0.08 < chance < 0.13

    def test_outputs(self, tmp_path, rng):
        codes = HashCodeMatrix.from_bits(rng.integers(0, 2, (6, 8)))
        labels = np.array([0, 0, 1, 1, 2, 2])
        res = evaluate_retrieval(codes, codes, labels, labels)
        doc = write_metrics_json({"i2t": res}, tmp_path / "m.json", config={"bits": 8})
        loaded = json.loads((tmp_path / "m.json").read_text())
        assert loaded == doc
        assert len(loaded["tasks"]["i2t"]["ap"]) == 6
        assert loaded["config"]["bits"] == 8
        recomputed = np.mean(loaded["tasks"]["i2t"]["ap"])
        assert recomputed == pytest.approx(loaded["tasks"]["i2t"]["map"])
        write_pr_csv({"i2t": res["pr_curve"]}, tmp_path / "pr.csv")
        lines = (tmp_path / "pr.csv").read_text().splitlines()
        assert lines[0] == "task,recall,precision" and len(lines) == 12
