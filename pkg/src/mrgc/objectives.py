"""Training losses and the k-means pseudo-label state behind the cluster loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .kernels import GraphLevelGraph
from .metrics import kmeans


class ObjectiveError(ValueError):
    pass


@dataclass
class PseudoLabelState:
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,)
    refresh_period: int = 5
    last_refresh_epoch: int = 0

    @property
    def k(self) -> int:
        return len(self.centroids)


@dataclass(frozen=True)
class LossWeights:
    lam: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        for name, v in (("lambda", self.lam), ("mu", self.mu)):
            if not (math.isfinite(v) and v >= 0):
                raise ObjectiveError(f"loss weight {name} must be finite and >= 0, got {v}")


def update_pseudo_labels(z, k: int, seed: int = 0, refresh_period: int = 5, epoch: int = 0,
                         restarts: int = 10) -> PseudoLabelState:
    """k-means on detached embeddings; centroids are held constant afterwards."""
    z = np.asarray(z.value if isinstance(z, ad.Tensor) else z, dtype=np.float64)
    if len(z) < k:
        raise ObjectiveError(
            f"pseudo-labelling needs at least k={k} graphs but got {len(z)}; use a larger batch")
    part = kmeans(z, k, seed=seed, restarts=restarts)
    return PseudoLabelState(centroids=part.centroids.copy(), assignments=part.assignments.copy(),
                            refresh_period=refresh_period, last_refresh_epoch=epoch)


def cluster_loss(z: ad.Tensor, centroids, assignments) -> ad.Tensor:
    """Mean cross-entropy of softmax over ``z . c_i`` against the pseudo-labels."""
    centroids = np.asarray(centroids, dtype=np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    n = z.shape[0]
    if len(assignments) != n:
        raise ObjectiveError(f"{len(assignments)} pseudo-labels for {n} embeddings")
    logits = ad.matmul(z, ad.constant(centroids.T))
    logp = ad.log_softmax_rows(logits)
    onehot = np.zeros((n, len(centroids)))
    onehot[np.arange(n), assignments] = 1.0
    return ad.scalar_mul(ad.sum_all(ad.mul(logp, ad.constant(onehot))), -1.0 / n)


def _weights(a) -> np.ndarray:
    return np.asarray(a.weights if isinstance(a, GraphLevelGraph) else a, dtype=np.float64)


def contrastive_loss(z: ad.Tensor, a_tilde) -> ad.Tensor:
    """``(1/n^2) sum_ij A_ij * mse(z_i, z_j)`` with A held constant."""
    a = _weights(a_tilde)
    n = z.shape[0]
    if a.shape != (n, n):
        raise ObjectiveError(f"graph-level graph is {a.shape}, batch has {n} graphs")
    # expand the squared distance per pair instead of the Gram identity: exact zeros stay zero
    rows, cols = np.nonzero(a)
    if len(rows) == 0:
        return ad.constant(np.zeros((1, 1))) if not z.requires_grad else ad.scalar_mul(ad.sum_all(z), 0.0)
    diff = ad.add(ad.gather_rows(z, rows), ad.neg(ad.gather_rows(z, cols)))
    msd = ad.scalar_mul(ad.row_sum(ad.mul(diff, diff)), 1.0 / z.shape[1])
    w = ad.constant(a[rows, cols].reshape(-1, 1))
    return ad.scalar_mul(ad.sum_all(ad.mul(msd, w)), 1.0 / (n * n))


def view_alignment(z_views, z_final: ad.Tensor) -> ad.Tensor:
    """Sum over views of the mean squared difference to the final embedding."""
    total = None
    for zv in z_views:
        diff = ad.add(zv, ad.neg(z_final))
        term = ad.mean_all(ad.mul(diff, diff))
        total = term if total is None else ad.add(total, term)
    return total


def similarity_loss(k_live: ad.Tensor, a_target) -> ad.Tensor:
    """Mean over off-diagonal pairs of ``(K_live - A)^2``.

    ``k_live`` is expected already cosine-normalized; ``a_target`` is constant.
    """
    a = _weights(a_target)
    n = k_live.shape[0]
    if k_live.shape != (n, n) or a.shape != (n, n):
        raise ObjectiveError(f"shape mismatch: kernel {k_live.shape}, target {a.shape}")
    if n < 2:
        return ad.scalar_mul(ad.sum_all(k_live), 0.0)
    off = 1.0 - np.eye(n)
    diff = ad.mul(ad.add(k_live, ad.constant(-a)), ad.constant(off))
    return ad.scalar_mul(ad.sum_all(ad.mul(diff, diff)), 1.0 / (n * (n - 1)))


def total_loss(l_clu: ad.Tensor, l_con: ad.Tensor, l_sim: ad.Tensor, weights: LossWeights) -> ad.Tensor:
    for t in (l_clu, l_con, l_sim):
        if t.shape != (1, 1):
            raise ObjectiveError(f"loss terms must be scalars, got {t.shape}")
    return ad.add(ad.add(l_clu, ad.scalar_mul(l_con, weights.lam)), ad.scalar_mul(l_sim, weights.mu))
