import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mrgc.graph import (Graph, GraphDataset, GraphValidationError, Partition, degree_matrix,
                        normalize_adjacency, validate_graph)


def symmetric_nonneg(n):
    return arrays(np.float64, (n, n), elements=st.one_of(st.just(0.0), st.floats(1e-6, 5))).map(
        lambda a: np.triu(a, 1) + np.triu(a, 1).T)


class TestDegreeMatrix:
    def test_zero(self):
        np.testing.assert_array_equal(degree_matrix(np.zeros((2, 2))), np.zeros((2, 2)))

    def test_symmetric_pair(self):
        np.testing.assert_array_equal(degree_matrix([[0, 1], [1, 0]]), np.diag([1.0, 1.0]))

    def test_weighted(self):
        a = [[0, 0.5, 0.2], [0.5, 0, 0], [0.2, 0, 0]]
        np.testing.assert_allclose(degree_matrix(a), np.diag([0.7, 0.5, 0.2]), atol=1e-15)

    @pytest.mark.parametrize("bad", [np.zeros((2, 3)), -np.eye(2)])
    def test_rejects(self, bad):
        with pytest.raises(GraphValidationError):
            degree_matrix(bad)


class TestNormalizeAdjacency:
    def test_single_node(self):
        np.testing.assert_array_equal(normalize_adjacency(np.zeros((1, 1))), [[1.0]])

    def test_edge(self):
        np.testing.assert_allclose(normalize_adjacency([[0, 1], [1, 0]]), np.full((2, 2), 0.5), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 7).flatmap(symmetric_nonneg))
    def test_symmetric_and_pattern(self, a):
        a_hat = normalize_adjacency(a)
        assert np.abs(a_hat - a_hat.T).max() <= 1e-12
        np.testing.assert_array_equal(a_hat != 0, (a + np.eye(len(a))) != 0)
        assert (np.abs(a_hat).sum(axis=1) > 0).all()


class TestValidateGraph:
    def test_empty_ok(self):
        validate_graph(Graph(0, np.zeros((0, 2)), np.zeros((0, 1))))

    def test_endpoint_out_of_range(self):
        with pytest.raises(GraphValidationError, match="edge 0"):
            validate_graph(Graph(3, [[0, 5]], np.zeros((3, 1))))

    def test_attribute_rows(self):
        with pytest.raises(GraphValidationError, match="4 rows"):
            validate_graph(Graph(3, np.zeros((0, 2)), np.zeros((4, 1))))

    def test_self_loop_and_duplicate(self):
        with pytest.raises(GraphValidationError, match="self-loop"):
            validate_graph(Graph(2, [[1, 1]], np.zeros((2, 1))))
        with pytest.raises(GraphValidationError, match="duplicate"):
            validate_graph(Graph(2, [[0, 1], [1, 0]], np.zeros((2, 1))))

    def test_edge_feature_rows(self):
        with pytest.raises(GraphValidationError, match="edge_features"):
            validate_graph(Graph(2, [[0, 1]], np.zeros((2, 1)), edge_features=np.zeros((2, 3))))


def test_dataset_label_range():
    g = Graph(1, np.zeros((0, 2)), np.zeros((1, 1)))
    with pytest.raises(GraphValidationError):
        GraphDataset([g], [2], "x", num_classes=2)
    with pytest.raises(GraphValidationError):
        GraphDataset([g, g], [0], "x", num_classes=2)


def test_partition_range():
    with pytest.raises(ValueError):
        Partition([0, 3], k=2)
    assert Partition([0, 1], k=2).k == 2
