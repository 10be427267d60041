"""Graph kernels and the batch-level graph built from them.

The dynamic kernel compares node embeddings of two graphs; with the identity
feature map it collapses to a dot product of summed embeddings.  WL, SP and
RW are classic structural kernels used for the baseline/ablation modes.
"""
from __future__ import annotations

import hashlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .graph import Graph

KERNEL_KINDS = ("dynamic", "wl", "sp", "rw")


class KernelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GraphLevelGraph:
    weights: np.ndarray
    top_k: int
    source: str = "dynamic"


def _t(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.constant(x)


# ---------------------------------------------------------------------------
# embedding kernels


def embedding_kernel(h1, h2, feature_map: str = "identity", gamma: float | None = None) -> ad.Tensor:
    """``sum_{v1, v2} phi(h_v1) . phi(h_v2)`` as a ``(1, 1)`` Tensor.

    ``identity`` evaluates ``(sum rows h1) . (sum rows h2)``.  ``rbf`` uses
    ``exp(-gamma |h_v1 - h_v2|^2)`` with gamma defaulting to 1 / width.
    """
    h1, h2 = _t(h1), _t(h2)
    if h1.shape[1] != h2.shape[1]:
        raise KernelError(f"embedding widths differ: {h1.shape[1]} vs {h2.shape[1]}")
    if feature_map == "identity":
        return ad.matmul(ad.col_sum(h1), ad.transpose(ad.col_sum(h2)))
    if feature_map == "rbf":
        gamma = 1.0 / h1.shape[1] if gamma is None else gamma
        return ad.sum_all(_rbf_block(h1, h2, gamma))
    raise KernelError(f"unknown feature map {feature_map!r}")


def _rbf_block(a: ad.Tensor, b: ad.Tensor, gamma: float) -> ad.Tensor:
    na = ad.row_sum(ad.mul(a, a))
    nb = ad.transpose(ad.row_sum(ad.mul(b, b)))
    cross = ad.matmul(a, ad.transpose(b))
    sq = ad.add(ad.add(na, nb), ad.scalar_mul(cross, -2.0))
    return ad.exp(ad.scalar_mul(sq, -gamma))


def multi_relation_kernel(views_1: dict, views_2: dict, feature_map: str = "identity",
                          gamma: float | None = None) -> ad.Tensor:
    """Sum of :func:`embedding_kernel` over all ordered relation pairs."""
    if set(views_1) != set(views_2):
        raise KernelError(f"relation sets differ: {sorted(views_1)} vs {sorted(views_2)}")
    keys = sorted(views_1)
    total = None
    for r1 in keys:
        for r2 in keys:
            k = embedding_kernel(views_1[r1], views_2[r2], feature_map, gamma)
            total = k if total is None else ad.add(total, k)
    return total


def batch_kernel(h_by_relation: Sequence[ad.Tensor], batch, feature_map: str = "identity",
                 gamma: float | None = None) -> ad.Tensor:
    """Differentiable multi-relation Gram matrix ``(B, B)`` over a batch."""
    if feature_map == "identity":
        # sum over relation pairs factorizes: (sum_r U_r)(sum_r U_r)^T
        total = None
        for h in h_by_relation:
            total = h if total is None else ad.add(total, h)
        u = ad.spmm(batch.members, total)
        return ad.matmul(u, ad.transpose(u))
    if feature_map == "rbf":
        gamma = 1.0 / h_by_relation[0].shape[1] if gamma is None else gamma
        gram = None
        for ha in h_by_relation:
            for hb in h_by_relation:
                e = _rbf_block(ha, hb, gamma)
                g = ad.transpose(ad.spmm(batch.members, ad.transpose(ad.spmm(batch.members, e))))
                gram = g if gram is None else ad.add(gram, g)
        return gram
    raise KernelError(f"unknown feature map {feature_map!r}")


def cosine_normalize(k: ad.Tensor) -> ad.Tensor:
    """``K_ij / sqrt(K_ii K_jj)``; rows/columns with ``K_ii <= 0`` become 0."""
    diag = np.diag(k.value)
    ok = diag > 0
    n = len(diag)
    pick = np.zeros((n, n))
    pick[np.arange(n), np.arange(n)] = 1.0
    d = ad.row_sum(ad.mul(k, ad.constant(pick)))  # (n, 1) diagonal, differentiable
    safe = ad.add(ad.mul(d, ad.constant(ok[:, None].astype(float))), ad.constant((~ok)[:, None].astype(float)))
    inv = ad.power(ad.matmul(safe, ad.transpose(safe)), -0.5)
    return ad.mul(ad.mul(k, inv), ad.constant(np.outer(ok, ok).astype(float)))


def normalize_gram(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=np.float64)
    d = np.diag(k).copy()
    ok = d > 0
    denom = np.sqrt(np.outer(np.where(ok, d, 1.0), np.where(ok, d, 1.0)))
    return np.where(np.outer(ok, ok), k / denom, 0.0)


# ---------------------------------------------------------------------------
# structural kernels


def node_labels_or_degree(g: Graph) -> list:
    if g.node_labels is not None:
        return [int(v) for v in g.node_labels]
    return [int(d) for d in g.degrees()]


def _neighbors(g: Graph):
    nbrs = [[] for _ in range(g.node_count)]
    for u, v in g.edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    return nbrs


def _wl_signature(label, neighbor_labels) -> str:
    payload = f"{label}|{','.join(sorted(neighbor_labels))}"
    return hashlib.sha1(payload.encode()).hexdigest()


def wl_label_counts(g: Graph, iterations: int) -> Counter:
    """Counts of (round, label) over the initial labels and ``iterations`` refinements.

    Labels are content hashes of (own label, sorted neighbor labels), so
    counts from different graphs are directly comparable.
    """
    if iterations < 0:
        raise KernelError("WL iterations must be nonnegative")
    labels = [str(v) for v in node_labels_or_degree(g)]
    nbrs = _neighbors(g)
    counts = Counter((0, lab) for lab in labels)
    for it in range(1, iterations + 1):
        labels = [_wl_signature(labels[v], [labels[u] for u in nbrs[v]]) for v in range(g.node_count)]
        counts.update((it, lab) for lab in labels)
    return counts


def _dot_counts(a: Counter, b: Counter) -> float:
    if len(a) > len(b):
        a, b = b, a
    return float(sum(c * b[key] for key, c in a.items() if key in b))


def wl_kernel(g1: Graph, g2: Graph, iterations: int = 3) -> float:
    return _dot_counts(wl_label_counts(g1, iterations), wl_label_counts(g2, iterations))


def floyd_warshall(adj: np.ndarray) -> np.ndarray:
    n = len(adj)
    dist = np.where(adj > 0, 1.0, np.inf)
    np.fill_diagonal(dist, 0.0)
    for k in range(n):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    return dist


def sp_features(g: Graph, use_labels: bool = False) -> Counter:
    """Histogram of finite shortest-path lengths over unordered node pairs."""
    dist = floyd_warshall(g.adjacency())
    iu, ju = np.triu_indices(g.node_count, k=1)
    d = dist[iu, ju]
    finite = np.isfinite(d)
    if not use_labels:
        return Counter(int(x) for x in d[finite])
    labels = node_labels_or_degree(g)
    out = Counter()
    for i, j, dd in zip(iu[finite], ju[finite], d[finite]):
        a, b = sorted((labels[i], labels[j]))
        out[(a, b, int(dd))] += 1
    return out


def sp_kernel(g1: Graph, g2: Graph, use_labels: bool = False) -> float:
    return _dot_counts(sp_features(g1, use_labels), sp_features(g2, use_labels))


def rw_kernel(g1: Graph, g2: Graph, steps: int = 10, decay: float = 0.1) -> float:
    """Truncated geometric random-walk kernel on the direct product graph.

    ``sum_{t=0..steps} decay^t 1^T A_x^t 1`` where ``A_x = A1 (x) A2``; the
    product is applied as ``X -> A1 X A2`` without forming the Kronecker matrix.
    """
    a1, a2 = g1.adjacency(), g2.adjacency()
    x = np.ones((g1.node_count, g2.node_count))
    total, scale = 0.0, 1.0
    for _ in range(steps + 1):
        total += scale * x.sum()
        x = a1 @ x @ a2
        scale *= decay
    return float(total)


def structural_gram(graphs: Sequence[Graph], kind: str, wl_iterations: int = 3,
                    sp_labels: bool = False, workers: int = 1) -> np.ndarray:
    """Gram matrix of a structural kernel in dataset order.

    Per-graph features are computed independently (optionally in threads) and
    assembled by index, so the result does not depend on completion order.
    """
    graphs = list(graphs)
    n = len(graphs)
    if kind in ("wl", "sp"):
        feat = (lambda g: wl_label_counts(g, wl_iterations)) if kind == "wl" else \
            (lambda g: sp_features(g, sp_labels))
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                feats = list(pool.map(feat, graphs))
        else:
            feats = [feat(g) for g in graphs]
        vocab = {}
        for f in feats:
            for key in f:
                vocab.setdefault(key, len(vocab))
        m = np.zeros((n, len(vocab)))
        for i, f in enumerate(feats):
            for key, c in f.items():
                m[i, vocab[key]] = c
        return m @ m.T
    if kind == "rw":
        k = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                k[i, j] = k[j, i] = rw_kernel(graphs[i], graphs[j])
        return k
    raise KernelError(f"unknown structural kernel {kind!r}; expected wl, sp or rw")


# ---------------------------------------------------------------------------
# graph-level graph


def build_graph_level_graph(k, top_k: int = 10, source: str = "dynamic",
                            normalized: bool = False) -> GraphLevelGraph:
    """Cosine-normalize, drop the diagonal, keep each row's top_k, symmetrize by max.

    The result is a plain array, i.e. detached from any differentiation graph.
    Ties at the k-th value are broken by lower column index.
    """
    k = np.array(k.value if isinstance(k, ad.Tensor) else k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise KernelError(f"kernel matrix must be square, got {k.shape}")
    scale = max(1.0, float(np.abs(k).max())) if k.size else 1.0
    if k.size and np.abs(k - k.T).max() > 1e-9 * scale:
        raise KernelError("kernel matrix is not symmetric")
    kn = k if normalized else normalize_gram(k)
    kn = np.clip((kn + kn.T) / 2.0, 0.0, 1.0)
    n = len(kn)
    np.fill_diagonal(kn, 0.0)
    out = np.zeros_like(kn)
    if top_k > 0 and n > 1:
        kk = min(top_k, n - 1)
        for i in range(n):
            row = kn[i].copy()
            row[i] = -np.inf
            order = np.lexsort((np.arange(n), -row))[:kk]
            out[i, order] = kn[i, order]
        out = np.maximum(out, out.T)
        np.fill_diagonal(out, 0.0)
    return GraphLevelGraph(weights=out, top_k=top_k, source=source)
