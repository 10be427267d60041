"""Similarity-aware pooling of node embeddings into graph vectors.

A graph vector is the sum of three node-weighted sums:

* importance: softmax over nodes of ``q . h_v``
* structure: ``s_uv = exp(-d_uv |h_u - h_v|^2 / tau)``, summed over v, divided by n
* node-to-graph cosine between ``h_v`` and the mean node embedding
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .batch import GraphBatch, structure_distance_factor


class PoolingConfigError(ValueError):
    pass


@dataclass
class PoolingParams:
    query: ad.Tensor  # (1, hidden)
    temperature: float = 1.0
    # None: all three term weights fixed at 1; otherwise (1, 3) logits, weights = 3 * softmax
    term_logits: Optional[ad.Tensor] = None

    def __post_init__(self):
        if not self.temperature > 0:
            raise PoolingConfigError(f"temperature must be positive, got {self.temperature}")

    def parameters(self):
        return [self.query] + ([self.term_logits] if self.term_logits is not None else [])


def init_pooling(hidden_dim: int, temperature: float = 1.0, seed: int = 0,
                 learnable_terms: bool = False) -> PoolingParams:
    rng = np.random.Generator(np.random.PCG64(seed))
    bound = np.sqrt(6.0 / (hidden_dim + 1))
    q = ad.parameter(rng.uniform(-bound, bound, size=(1, hidden_dim)))
    logits = ad.parameter(np.zeros((1, 3))) if learnable_terms else None
    return PoolingParams(query=q, temperature=temperature, term_logits=logits)


def _t(x) -> ad.Tensor:
    return x if isinstance(x, ad.Tensor) else ad.constant(x)


# ---------------------------------------------------------------------------
# single-graph reference path


def node_importance(h, q) -> ad.Tensor:
    """Softmax over nodes of ``q . h_v``; returns an ``(n, 1)`` column."""
    h, q = _t(h), _t(q)
    if h.shape[0] == 0:
        raise ad.ContractError("node_importance on an empty graph")
    q = q if q.shape[0] == 1 else ad.transpose(q)
    scores = ad.matmul(h, ad.transpose(q))  # (n, 1)
    return ad.transpose(ad.softmax_rows(ad.transpose(scores)))


def structure_similarity(h, descriptors, temperature: float) -> ad.Tensor:
    if not temperature > 0:
        raise PoolingConfigError(f"temperature must be positive, got {temperature}")
    h = _t(h)
    n = h.shape[0]
    dist = structure_distance_factor(np.asarray(descriptors, dtype=np.float64).reshape(n, -1))
    u, v = np.divmod(np.arange(n * n), n)
    diff = ad.add(ad.gather_rows(h, u), ad.neg(ad.gather_rows(h, v)))
    sq = ad.row_sum(ad.mul(diff, diff))
    s = ad.exp(ad.scalar_mul(ad.mul(sq, ad.constant(dist.reshape(-1, 1))), -1.0 / temperature))
    return ad.reshape(s, (n, n))


def _safe_cosine(a: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    dot = ad.row_sum(ad.mul(a, b))
    denom = ad.mul(ad.l2_norm_rows(a), ad.l2_norm_rows(b))
    guard = ad.constant((denom.value == 0).astype(np.float64))
    return ad.div(dot, ad.add(denom, guard))


def node_graph_similarity(h) -> ad.Tensor:
    """Cosine of each node embedding with the mean embedding, ``(n, 1)``; 0 where undefined."""
    h = _t(h)
    n = h.shape[0]
    mean = ad.scalar_mul(ad.col_sum(h), 1.0 / n)
    return _safe_cosine(h, ad.matmul(ad.constant(np.ones((n, 1))), mean))


def _term_weights(params: Optional[PoolingParams]):
    if params is None or params.term_logits is None:
        return None
    w = ad.scalar_mul(ad.transpose(ad.softmax_rows(params.term_logits)), 3.0)  # (3, 1)
    return [ad.gather_rows(w, [i]) for i in range(3)]


def pool_graph(h, s, S, sim, params: Optional[PoolingParams] = None) -> ad.Tensor:
    """``sum_v s_v h_v + (1/n) sum_{v,u} S_vu h_u + sum_v sim_v h_v`` as a ``(1, hidden)`` row."""
    h, s, S, sim = _t(h), _t(s), _t(S), _t(sim)
    n = h.shape[0]
    if s.shape != (n, 1) or sim.shape != (n, 1) or S.shape != (n, n):
        raise ad.ShapeError(f"pool_graph: shapes s={s.shape} S={S.shape} sim={sim.shape} for {n} nodes")
    t1 = ad.col_sum(ad.mul(h, s))
    col = ad.transpose(ad.col_sum(S))  # sum over v of S_vu, as (n, 1)
    t2 = ad.scalar_mul(ad.col_sum(ad.mul(h, col)), 1.0 / n)
    t3 = ad.col_sum(ad.mul(h, sim))
    w = _term_weights(params)
    if w is not None:
        t1, t2, t3 = ad.mul(t1, w[0]), ad.mul(t2, w[1]), ad.mul(t3, w[2])
    return ad.add(ad.add(t1, t2), t3)


def pool_single(h, descriptors, params: PoolingParams) -> ad.Tensor:
    h = _t(h)
    s = node_importance(h, params.query)
    S = structure_similarity(h, descriptors, params.temperature)
    sim = node_graph_similarity(h)
    return pool_graph(h, s, S, sim, params)


# ---------------------------------------------------------------------------
# batched path


def pool_batch(h: ad.Tensor, batch: GraphBatch, params: PoolingParams, mode: str = "aware") -> ad.Tensor:
    """Graph vectors ``(B, hidden)`` for every graph of a batch."""
    if mode == "mean":
        return ad.spmm(batch.members_mean, h)
    if mode != "aware":
        raise PoolingConfigError(f"unknown pooling mode {mode!r}")

    # importance: per-graph softmax, shifted by the per-graph max for stability
    scores = ad.matmul(h, ad.transpose(params.query))
    shift = np.full(batch.num_graphs, -np.inf)
    np.maximum.at(shift, batch.node_graph, scores.value[:, 0])
    e = ad.exp(ad.add(scores, ad.constant(-shift[batch.node_graph].reshape(-1, 1))))
    denom = ad.spmm(batch.members_t, ad.spmm(batch.members, e))
    s = ad.div(e, denom)
    t1 = ad.spmm(batch.members, ad.mul(h, s))

    # structure similarity over all within-graph ordered pairs
    diff = ad.add(ad.gather_rows(h, batch.pair_u), ad.neg(ad.gather_rows(h, batch.pair_v)))
    sq = ad.row_sum(ad.mul(diff, diff))
    pair_s = ad.exp(ad.scalar_mul(ad.mul(sq, ad.constant(batch.pair_dist)), -1.0 / params.temperature))
    col = ad.spmm(batch.pair_scale, pair_s)  # (N, 1), already divided by graph size
    t2 = ad.spmm(batch.members, ad.mul(h, col))

    # node-to-graph cosine
    mean_nodes = ad.spmm(batch.members_t, ad.spmm(batch.members_mean, h))
    sim = _safe_cosine(h, mean_nodes)
    t3 = ad.spmm(batch.members, ad.mul(h, sim))

    w = _term_weights(params)
    if w is not None:
        t1, t2, t3 = ad.mul(t1, w[0]), ad.mul(t2, w[1]), ad.mul(t3, w[2])
    return ad.add(ad.add(t1, t2), t3)
