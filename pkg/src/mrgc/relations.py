"""Per-graph relation views: attribute cosine, incident-edge descriptor, fusion."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Graph, GraphValidationError, validate_graph

DEFAULT_TOP_K = 5


@dataclass(frozen=True, eq=False)
class RelationViewSet:
    original: np.ndarray
    attribute_relation: np.ndarray
    edge_relation: np.ndarray
    fused: np.ndarray
    fusion_weights: np.ndarray
    # per-node incident-edge descriptors behind edge_relation, reused by pooling
    descriptors: np.ndarray

    @property
    def relations(self):
        return [self.attribute_relation, self.edge_relation]


def sparsify_top_k(scores: np.ndarray, top_k: int) -> np.ndarray:
    """Keep each row's ``top_k`` largest off-diagonal scores, symmetrize by max.

    Entries tied with the k-th largest value are all kept, so the result does
    not depend on node order.
    """
    if top_k < 1:
        raise ValueError("top_k must be positive")
    n = len(scores)
    s = scores.copy()
    np.fill_diagonal(s, 0.0)
    if n == 0:
        return s
    if top_k >= n:
        warnings.warn(f"top_k={top_k} >= node count {n}; using the dense similarity matrix",
                      stacklevel=3)
        return np.maximum(s, s.T)
    masked = s.copy()
    np.fill_diagonal(masked, -np.inf)
    kth = -np.sort(-masked, axis=1)[:, min(top_k, n - 1) - 1]
    keep = masked >= kth[:, None]
    out = np.where(keep, s, 0.0)
    out = np.maximum(out, out.T)
    np.fill_diagonal(out, 0.0)
    return out


def cosine_scores(x: np.ndarray) -> np.ndarray:
    """Raw pairwise cosines, clamped at 0; zero-norm rows score 0."""
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    u = x / safe[:, None]
    c = u @ u.T
    c[norms == 0, :] = 0.0
    c[:, norms == 0] = 0.0
    return np.clip(c, 0.0, 1.0)


def attribute_relation(x: np.ndarray, top_k: int = DEFAULT_TOP_K) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 1:
        raise GraphValidationError("attribute_relation needs at least one attribute row")
    return sparsify_top_k(cosine_scores(x), top_k)


def edge_descriptors(g: Graph) -> np.ndarray:
    """Mean incident edge-feature row per node, or the node degree as a 1-vector."""
    n = g.node_count
    if g.edge_features is not None and g.edge_features.shape[1] > 0:
        d = g.edge_features.shape[1]
        acc = np.zeros((n, d))
        cnt = np.zeros(n)
        for (u, v), row in zip(g.edges, g.edge_features):
            acc[u] += row
            acc[v] += row
            cnt[u] += 1
            cnt[v] += 1
        return acc / np.where(cnt > 0, cnt, 1.0)[:, None]
    return g.degrees().astype(np.float64).reshape(n, 1)


def pairwise_distances(d: np.ndarray) -> np.ndarray:
    diff = d[:, None, :] - d[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def edge_scores(g: Graph) -> np.ndarray:
    return np.exp(-pairwise_distances(edge_descriptors(g)))


def edge_relation(g: Graph, top_k: int = DEFAULT_TOP_K) -> np.ndarray:
    validate_graph(g)
    if g.node_count == 0:
        return np.zeros((0, 0))
    return sparsify_top_k(edge_scores(g), top_k)


def fusion_softmax(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64).ravel()
    e = np.exp(a - a.max())
    return e / e.sum()


def fuse_relations(views, alpha):
    """Softmax(alpha)-weighted sum of views.

    ``alpha`` may be an array (returns an array) or an ``autodiff.Tensor``
    of shape ``(1, R)`` (returns a Tensor, gradients flow into alpha).
    """
    views = [np.asarray(v, dtype=np.float64) for v in views]
    if not views:
        raise GraphValidationError("fuse_relations needs at least one view")
    shape = views[0].shape
    if any(v.shape != shape for v in views):
        raise GraphValidationError(f"view shapes differ: {[v.shape for v in views]}")
    if isinstance(alpha, ad.Tensor):
        if alpha.shape != (1, len(views)):
            raise GraphValidationError(f"alpha shape {alpha.shape} does not match {len(views)} views")
        w = ad.softmax_rows(alpha)
        out = None
        for r, v in enumerate(views):
            wr = ad.reshape(ad.gather_rows(ad.transpose(w), [r]), (1, 1))
            term = ad.mul(ad.constant(v), wr)
            out = term if out is None else ad.add(out, term)
        return out
    alpha = np.asarray(alpha, dtype=np.float64).ravel()
    if len(alpha) != len(views):
        raise GraphValidationError(f"{len(alpha)} fusion weights for {len(views)} views")
    w = fusion_softmax(alpha)
    return sum(wr * v for wr, v in zip(w, views))


def build_relation_views(g: Graph, top_k: int = DEFAULT_TOP_K, alpha=None) -> RelationViewSet:
    validate_graph(g)
    n = g.node_count
    alpha = np.zeros(2) if alpha is None else np.asarray(alpha, dtype=np.float64)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a1 = attribute_relation(g.node_attributes, top_k) if n else np.zeros((0, 0))
        a2 = edge_relation(g, top_k)
    return RelationViewSet(
        original=g.adjacency(),
        attribute_relation=a1,
        edge_relation=a2,
        fused=fuse_relations([a1, a2], alpha),
        fusion_weights=alpha,
        descriptors=edge_descriptors(g),
    )
