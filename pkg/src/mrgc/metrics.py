"""k-means and external clustering metrics (ACC, NMI, ARI, macro-F1)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import Partition


class MetricError(ValueError):
    pass


@dataclass
class MetricReport:
    acc: float
    nmi: float
    ari: float
    f1: float
    k: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# k-means


def _kmeans_pp(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _sq_dists(points, centers):
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)


def _lloyd(points, centers, max_iters):
    k = len(centers)
    labels = None
    for _ in range(max_iters):
        d = _sq_dists(points, centers)
        new = d.argmin(axis=1)
        # empty clusters take the point farthest from its own centroid
        for c in range(k):
            if not np.any(new == c):
                own = d[np.arange(len(points)), new]
                counts = np.bincount(new, minlength=k)
                movable = counts[new] > 1
                if not movable.any():
                    continue
                far = int(np.flatnonzero(movable)[np.argmax(own[movable])])
                new[far] = c
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([points[labels == c].mean(axis=0) if np.any(labels == c) else centers[c]
                            for c in range(k)])
    d = _sq_dists(points, centers)
    inertia = float(d[np.arange(len(points)), labels].sum())
    return labels, centers, inertia


def kmeans(points, k: int, seed: int = 0, restarts: int = 10, max_iters: int = 100) -> Partition:
    """k-means++ seeded Lloyd iterations; the lowest-inertia restart wins.

    Ties in inertia go to the earliest restart.  The returned Partition
    carries ``centroids`` and ``inertia``.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = len(points)
    if k < 1:
        raise MetricError("k must be positive")
    if n < k:
        raise MetricError(f"k-means needs at least k={k} points, got {n}")
    children = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for child in children:
        rng = np.random.Generator(np.random.PCG64(child))
        labels, centers, inertia = _lloyd(points, _kmeans_pp(points, k, rng), max_iters)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    labels, centers, inertia = best
    return Partition(assignments=labels, k=k, centroids=centers, inertia=inertia)


# ---------------------------------------------------------------------------
# metrics


def _labels(x):
    if isinstance(x, Partition):
        return x.assignments
    return np.asarray(x, dtype=np.int64)


def _check(pred, truth):
    p, t = _labels(pred), _labels(truth)
    if len(p) != len(t):
        raise MetricError(f"prediction has {len(p)} entries, truth has {len(t)}")
    return p, t


def contingency(pred, truth) -> np.ndarray:
    """Table with rows = predicted clusters, columns = true classes (dense relabel)."""
    p, t = _check(pred, truth)
    _, pi = np.unique(p, return_inverse=True)
    _, ti = np.unique(t, return_inverse=True)
    table = np.zeros((pi.max() + 1 if len(pi) else 0, ti.max() + 1 if len(ti) else 0), dtype=np.int64)
    np.add.at(table, (pi, ti), 1)
    return table


def _matching(table):
    """Max-count cluster/class matching; ties go to the matching with the best macro F1.

    Per-pair F1 ``2 n_ij / (|cluster_i| + |class_j|)`` is additive over matched
    pairs and its total stays below k, so scaling it by ``1 / (k + 1)`` keeps
    the count objective primary.  This makes the choice independent of how
    clusters happen to be numbered.
    """
    k = max(table.shape) if table.size else 0
    padded = np.zeros((k, k), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    sizes = padded.sum(axis=1, keepdims=True) + padded.sum(axis=0, keepdims=True)
    f1 = np.where(padded > 0, 2.0 * padded / np.maximum(sizes, 1), 0.0)
    rows, cols = linear_sum_assignment(-(padded + f1 / (k + 1)))
    return padded, rows, cols


def accuracy(pred, truth) -> float:
    table = contingency(pred, truth)
    n = table.sum()
    if n == 0:
        return 0.0
    padded, rows, cols = _matching(table)
    return float(padded[rows, cols].sum() / n)


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(pred, truth) -> float:
    """Mutual information over the arithmetic mean of the two entropies."""
    table = contingency(pred, truth).astype(np.float64)
    n = table.sum()
    if n == 0:
        return 0.0
    hp = _entropy(table.sum(axis=1))
    ht = _entropy(table.sum(axis=0))
    if hp == 0 and ht == 0:
        return 1.0
    pij = table / n
    outer = pij.sum(axis=1, keepdims=True) @ pij.sum(axis=0, keepdims=True)
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    denom = (hp + ht) / 2.0
    return float(min(1.0, max(0.0, mi / denom))) if denom > 0 else 0.0


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def ari(pred, truth) -> float:
    table = contingency(pred, truth)
    n = table.sum()
    if n < 2:
        return 1.0
    index = _comb2(table).sum()
    a = _comb2(table.sum(axis=1)).sum()
    b = _comb2(table.sum(axis=0)).sum()
    expected = a * b / _comb2(n)
    max_index = (a + b) / 2.0
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def macro_f1(pred, truth) -> float:
    """Macro F1 over true classes after mapping clusters to classes by Hungarian matching."""
    p, t = _check(pred, truth)
    if len(p) == 0:
        return 0.0
    table = contingency(p, t)
    padded, rows, cols = _matching(table)
    n_classes = table.shape[1]
    pred_sizes = np.zeros(padded.shape[0])
    pred_sizes[: table.shape[0]] = table.sum(axis=1)
    class_sizes = table.sum(axis=0)
    cluster_of_class = {c: r for r, c in zip(rows, cols)}
    scores = []
    for c in range(n_classes):
        r = cluster_of_class[c]
        tp = padded[r, c]
        if tp == 0:
            scores.append(0.0)
            continue
        precision = tp / pred_sizes[r]
        recall = tp / class_sizes[c]
        scores.append(2 * precision * recall / (precision + recall))
    return float(np.mean(scores))


def evaluate(pred, truth, seed: int = 0) -> MetricReport:
    p, t = _check(pred, truth)
    k = pred.k if isinstance(pred, Partition) else int(len(np.unique(p)))
    return MetricReport(acc=accuracy(p, t), nmi=nmi(p, t), ari=ari(p, t), f1=macro_f1(p, t), k=k, seed=seed)
