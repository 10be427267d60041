"""Core graph containers and adjacency helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class GraphValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph with dense per-node attributes.

    ``edges`` is an ``(m, 2)`` integer array, one row per undirected edge.
    Self-loops are never stored; they are only added during normalization.
    """

    node_count: int
    edges: np.ndarray
    node_attributes: np.ndarray
    node_labels: Optional[np.ndarray] = None
    edge_features: Optional[np.ndarray] = None
    edge_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        x = np.asarray(self.node_attributes, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if self.node_count else x.reshape(0, 0)
        object.__setattr__(self, "node_attributes", x)
        if self.node_labels is not None:
            object.__setattr__(self, "node_labels", np.asarray(self.node_labels, dtype=np.int64))
        if self.edge_features is not None:
            ef = np.asarray(self.edge_features, dtype=np.float64)
            ef = ef.reshape(len(ef), ef.shape[1] if ef.ndim == 2 else (1 if len(ef) else 0))
            object.__setattr__(self, "edge_features", ef)
        if self.edge_labels is not None:
            object.__setattr__(self, "edge_labels", np.asarray(self.edge_labels, dtype=np.int64))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        if self.edge_count:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        if self.edge_count:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def permute(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that old node ``perm[i]`` becomes new node ``i``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return Graph(
            node_count=self.node_count,
            edges=inv[self.edges] if self.edge_count else self.edges,
            node_attributes=self.node_attributes[perm],
            node_labels=None if self.node_labels is None else self.node_labels[perm],
            edge_features=self.edge_features,
            edge_labels=self.edge_labels,
        )


@dataclass(frozen=True, eq=False)
class GraphDataset:
    graphs: list
    class_labels: np.ndarray
    name: str
    num_classes: int
    node_label_vocab: Optional[list] = None
    edge_label_vocab: Optional[list] = None
    # attribute columns that came from a file (the rest are one-hot label columns)
    raw_attribute_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "class_labels", np.asarray(self.class_labels, dtype=np.int64))
        if len(self.class_labels) != len(self.graphs):
            raise GraphValidationError(
                f"{len(self.class_labels)} class labels for {len(self.graphs)} graphs")
        if self.num_classes < 1:
            raise GraphValidationError("num_classes must be positive")
        bad = (self.class_labels < 0) | (self.class_labels >= self.num_classes)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise GraphValidationError(
                f"class label {self.class_labels[i]} of graph {i} outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.graphs)

    def subset(self, indices) -> "GraphDataset":
        indices = list(indices)
        return GraphDataset(
            graphs=[self.graphs[i] for i in indices],
            class_labels=self.class_labels[indices],
            name=self.name,
            num_classes=self.num_classes,
            node_label_vocab=self.node_label_vocab,
            edge_label_vocab=self.edge_label_vocab,
            raw_attribute_dim=self.raw_attribute_dim,
        )


@dataclass
class Partition:
    assignments: np.ndarray
    k: int
    centroids: Optional[np.ndarray] = field(default=None, repr=False)
    inertia: Optional[float] = None

    def __post_init__(self):
        self.assignments = np.asarray(self.assignments, dtype=np.int64)
        if self.k < 1:
            raise ValueError("k must be positive")
        if len(self.assignments) and (self.assignments.min() < 0 or self.assignments.max() >= self.k):
            raise ValueError(f"assignments must lie in [0, {self.k})")


def _check_square_nonneg(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphValidationError(f"expected a square matrix, got shape {a.shape}")
    if (a < 0).any():
        raise GraphValidationError("adjacency has negative entries")
    return a


def degree_matrix(a) -> np.ndarray:
    a = _check_square_nonneg(a)
    return np.diag(a.sum(axis=1))


def normalize_adjacency(a) -> np.ndarray:
    """Symmetric normalization ``D^-1/2 (A + I) D^-1/2`` with D the degree of A + I."""
    a = _check_square_nonneg(a)
    a_hat = a + np.eye(len(a))
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d[:, None] * a_hat * d[None, :]


def validate_graph(g: Graph) -> None:
    n = g.node_count
    if n < 0:
        raise GraphValidationError("node_count must be nonnegative")
    edges = g.edges
    for i, (u, v) in enumerate(edges):
        if not (0 <= u < n and 0 <= v < n):
            raise GraphValidationError(f"edge {i} ({u}, {v}) has an endpoint outside [0, {n})")
        if u == v:
            raise GraphValidationError(f"edge {i} is a self-loop on node {u}")
    if len(edges):
        canon = np.sort(edges, axis=1)
        _, first = np.unique(canon, axis=0, return_index=True)
        if len(first) != len(edges):
            dup = sorted(set(range(len(edges))) - set(first.tolist()))[0]
            raise GraphValidationError(f"edge {dup} ({edges[dup][0]}, {edges[dup][1]}) is a duplicate")
    x = g.node_attributes
    if x.ndim != 2 or x.shape[0] != n:
        raise GraphValidationError(f"node_attributes has {x.shape[0] if x.ndim else 0} rows for {n} nodes")
    if g.node_labels is not None and len(g.node_labels) != n:
        raise GraphValidationError(f"node_labels has {len(g.node_labels)} entries for {n} nodes")
    if g.edge_features is not None and len(g.edge_features) != len(edges):
        raise GraphValidationError(
            f"edge_features has {len(g.edge_features)} rows for {len(edges)} edges")
    if g.edge_labels is not None and len(g.edge_labels) != len(edges):
        raise GraphValidationError(f"edge_labels has {len(g.edge_labels)} entries for {len(edges)} edges")
