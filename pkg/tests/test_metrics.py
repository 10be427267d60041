import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from mrgc.graph import Partition
from mrgc.metrics import MetricError, accuracy, ari, evaluate, kmeans, macro_f1, nmi

from helpers import brute_force_accuracy, brute_force_ari


def from_table(table):
    """Expand a cluster-by-class contingency table into label vectors."""
    pred, truth = [], []
    for i, row in enumerate(table):
        for j, c in enumerate(row):
            pred += [i] * c
            truth += [j] * c
    return np.array(pred), np.array(truth)


labels = st.lists(st.integers(0, 4), min_size=2, max_size=40)


class TestAccuracy:
    def test_identity_and_renaming(self):
        t = np.array([0, 1, 1, 2, 2, 2])
        assert accuracy(t, t) == 1.0
        assert accuracy(np.array([2, 0, 0, 1, 1, 1]), t) == 1.0

    def test_table(self):
        assert accuracy(*from_table([[5, 1], [2, 4]])) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            accuracy([0, 1], [0])

    def test_partition_input(self):
        assert accuracy(Partition([0, 1, 1], k=2), [1, 0, 0]) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000))
    def test_brute_force(self, seed):
        r = np.random.Generator(np.random.PCG64(seed))
        kp, kt = int(r.integers(1, 6)), int(r.integers(1, 6))
        n = int(r.integers(2, 30))
        pred, truth = r.integers(0, kp, n), r.integers(0, kt, n)
        assert accuracy(pred, truth) == brute_force_accuracy(pred, truth)


class TestNMI:
    def test_examples(self):
        assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)
        assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0
        assert nmi(*from_table([[2, 0], [0, 2]])) == pytest.approx(1.0)
        assert nmi(*from_table([[1, 1], [1, 1]])) == pytest.approx(0.0, abs=1e-15)

    def test_both_constant(self):
        assert nmi([0, 0, 0], [1, 1, 1]) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(labels, labels)
    def test_sklearn(self, a, b):
        n = min(len(a), len(b))
        a, b = a[:n], b[:n]
        if len(set(a)) == 1 and len(set(b)) == 1:
            return
        assert nmi(a, b) == pytest.approx(skm.normalized_mutual_info_score(b, a, average_method="arithmetic"),
                                          abs=1e-10)


class TestARI:
    def test_examples(self):
        assert ari([0, 1, 1, 0], [0, 1, 1, 0]) == 1.0
        assert ari([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_table_brute_force(self):
        pred, truth = from_table([[5, 1], [2, 4]])
        assert ari(pred, truth) == pytest.approx(brute_force_ari(pred, truth), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(labels, labels)
    def test_sklearn(self, a, b):
        n = min(len(a), len(b))
        assert ari(a[:n], b[:n]) == pytest.approx(skm.adjusted_rand_score(b[:n], a[:n]), abs=1e-10)


class TestF1:
    def test_perfect_and_permuted(self):
        assert macro_f1([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
        assert macro_f1([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0

    def test_single_cluster(self):
        assert macro_f1([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(1 / 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_best_f1_among_optimal_matchings(self, seed):
        # sklearn F1 under every accuracy-optimal cluster-to-class map; the library picks the best
        r = np.random.Generator(np.random.PCG64(seed))
        n = int(r.integers(3, 40))
        pred, truth = r.integers(0, 3, n), r.integers(0, 3, n)
        pv, tv = list(np.unique(pred)), list(np.unique(truth))
        slots = tv + [-1] * max(0, len(pv) - len(tv))
        best_hits, best_f1 = -1, 0.0
        for perm in itertools.permutations(slots, len(pv)):
            mapped = np.array([dict(zip(pv, perm))[p] for p in pred])
            hits = int((mapped == truth).sum())
            f1 = skm.f1_score(truth, mapped, labels=tv, average="macro", zero_division=0)
            if hits > best_hits or (hits == best_hits and f1 > best_f1):
                best_hits, best_f1 = hits, f1
        assert macro_f1(pred, truth) == pytest.approx(best_f1, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_relabel_invariance(seed):
    r = np.random.Generator(np.random.PCG64(seed))
    n = int(r.integers(2, 50))
    pred, truth = r.integers(0, 4, n), r.integers(0, 4, n)
    rename = r.permutation(4)
    a, b = evaluate(pred, truth), evaluate(rename[pred], truth)
    for m in ("acc", "nmi", "ari", "f1"):
        assert getattr(a, m) == pytest.approx(getattr(b, m), abs=1e-12)


class TestKMeans:
    def test_two_points(self):
        p = kmeans(np.array([[0.0, 0.0], [3.0, 4.0]]), 2, seed=0)
        assert sorted(p.assignments) == [0, 1] and p.inertia == 0.0

    def test_identical_points(self):
        p = kmeans(np.ones((5, 2)), 1, seed=0)
        assert (p.assignments == 0).all() and p.inertia == 0.0

    def test_too_few_points(self):
        with pytest.raises(MetricError):
            kmeans(np.zeros((2, 2)), 3)

    def test_empty_cluster_reseeded(self):
        p = kmeans(np.vstack([np.zeros((4, 2)), [[1.0, 1.0]]]), 3, seed=0, restarts=1)
        assert p.k == 3 and np.isfinite(p.centroids).all()

    @pytest.mark.parametrize("seed", range(5))
    def test_blobs(self, seed):
        r = np.random.Generator(np.random.PCG64(100 + seed))
        centers = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
        truth = np.repeat(np.arange(3), 100)
        pts = centers[truth] + r.normal(0, 0.05, (300, 2))
        assert accuracy(kmeans(pts, 3, seed=seed), truth) >= 0.99

    def test_deterministic(self, rng):
        pts = rng.standard_normal((50, 3))
        a, b = kmeans(pts, 4, seed=7), kmeans(pts, 4, seed=7)
        np.testing.assert_array_equal(a.assignments, b.assignments)
        assert a.inertia == b.inertia


def test_report_fields():
    rep = evaluate([0, 1, 1], [0, 1, 1], seed=3)
    assert rep.to_dict() == {"acc": 1.0, "nmi": pytest.approx(1.0), "ari": 1.0, "f1": 1.0, "k": 2, "seed": 3}
