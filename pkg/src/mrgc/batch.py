"""Disjoint-union batches: graphs stacked into one block-diagonal system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, normalize_adjacency
from .relations import RelationViewSet, build_relation_views, pairwise_distances


@dataclass(frozen=True, eq=False)
class PreparedGraph:
    x: np.ndarray
    views: RelationViewSet
    norm_phi: np.ndarray
    norm_r1: np.ndarray
    norm_r2: np.ndarray
    # structure-similarity distance factor, flattened row-major (n*n,)
    pair_dist: np.ndarray

    @property
    def n(self) -> int:
        return len(self.x)


def structure_distance_factor(descriptors: np.ndarray) -> np.ndarray:
    """``d_uv = |e_u - e_v|`` or all ones when every descriptor in the graph is equal."""
    n = len(descriptors)
    if n == 0:
        return np.zeros((0, 0))
    if np.all(descriptors == descriptors[0]):
        return np.ones((n, n))
    return pairwise_distances(descriptors)


def prepare_graph(g: Graph, top_k: int = 5, x=None, views: RelationViewSet | None = None) -> PreparedGraph:
    views = views if views is not None else build_relation_views(g, top_k)
    x = g.node_attributes if x is None else np.asarray(x, dtype=np.float64)
    return prepare_views(x, views)


def prepare_views(x: np.ndarray, views: RelationViewSet) -> PreparedGraph:
    if len(x) == 0:
        raise ValueError("graphs with zero nodes cannot be encoded")
    return PreparedGraph(
        x=np.asarray(x, dtype=np.float64),
        views=views,
        norm_phi=normalize_adjacency(views.original),
        norm_r1=normalize_adjacency(views.attribute_relation),
        norm_r2=normalize_adjacency(views.edge_relation),
        pair_dist=structure_distance_factor(views.descriptors).ravel(),
    )


@dataclass(eq=False)
class GraphBatch:
    x: np.ndarray
    sizes: np.ndarray
    node_graph: np.ndarray
    norm: dict  # view name -> sparse normalized adjacency
    raw_r1: sp.csr_matrix
    raw_r2: sp.csr_matrix
    deg_r1: np.ndarray  # (N, 1)
    deg_r2: np.ndarray
    members: sp.csr_matrix  # (B, N) 0/1
    members_mean: sp.csr_matrix  # (B, N) rows sum to 1
    members_t: sp.csr_matrix  # (N, B)
    pair_u: np.ndarray
    pair_v: np.ndarray
    pair_dist: np.ndarray  # (P, 1)
    pair_scale: sp.csr_matrix  # (N, P): column sum over v, divided by graph size

    @property
    def num_graphs(self) -> int:
        return len(self.sizes)

    @property
    def num_nodes(self) -> int:
        return len(self.x)

    @classmethod
    def from_prepared(cls, graphs) -> "GraphBatch":
        graphs = list(graphs)
        sizes = np.array([g.n for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        n_total = int(offsets[-1])
        node_graph = np.repeat(np.arange(len(graphs)), sizes)

        def block(key):
            rows, cols, vals = [], [], []
            for g, off in zip(graphs, offsets[:-1]):
                m = key(g)
                r, c = np.nonzero(m)
                rows.append(r + off)
                cols.append(c + off)
                vals.append(m[r, c])
            return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(n_total, n_total))

        a1 = block(lambda g: g.views.attribute_relation)
        a2 = block(lambda g: g.views.edge_relation)
        members = sp.csr_matrix((np.ones(n_total), (node_graph, np.arange(n_total))),
                                shape=(len(graphs), n_total))
        members_mean = sp.csr_matrix((1.0 / sizes[node_graph], (node_graph, np.arange(n_total))),
                                     shape=(len(graphs), n_total))

        pu, pv, pd = [], [], []
        for g, off in zip(graphs, offsets[:-1]):
            u, v = np.divmod(np.arange(g.n * g.n), g.n)
            pu.append(u + off)
            pv.append(v + off)
            pd.append(g.pair_dist)
        pair_u = np.concatenate(pu)
        pair_v = np.concatenate(pv)
        n_pairs = len(pair_u)
        # c_u = sum_v s_vu / n ; pairs are ordered (u, v) with s symmetric
        pair_scale = sp.csr_matrix((1.0 / sizes[node_graph[pair_u]], (pair_u, np.arange(n_pairs))),
                                   shape=(n_total, n_pairs))
        return cls(
            x=np.vstack([g.x for g in graphs]),
            sizes=sizes,
            node_graph=node_graph,
            norm={
                "phi": block(lambda g: g.norm_phi),
                "r1": block(lambda g: g.norm_r1),
                "r2": block(lambda g: g.norm_r2),
            },
            raw_r1=a1,
            raw_r2=a2,
            deg_r1=np.asarray(a1.sum(axis=1)).reshape(-1, 1),
            deg_r2=np.asarray(a2.sum(axis=1)).reshape(-1, 1),
            members=members,
            members_mean=members_mean,
            members_t=members.T.tocsr(),
            pair_u=pair_u,
            pair_v=pair_v,
            pair_dist=np.concatenate(pd).reshape(-1, 1),
            pair_scale=pair_scale,
        )
