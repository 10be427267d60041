import numpy as np
import pytest

from mrgc.graph import Graph

ACCEPTANCE_RESULTS = []


def random_graph(rng, n_min=1, n_max=6, p=0.5, attr_dim=3, labels=None, edge_dim=0):
    n = int(rng.integers(n_min, n_max + 1))
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    x = rng.standard_normal((n, attr_dim))
    node_labels = rng.integers(0, labels, size=n) if labels else None
    ef = rng.standard_normal((len(edges), edge_dim)) if edge_dim else None
    return Graph(node_count=n, edges=edges, node_attributes=x, node_labels=node_labels, edge_features=ef)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)
