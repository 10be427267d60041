"""Shared builders for gradient checks and small oracle corpora."""
import itertools
from collections import Counter

import numpy as np
import scipy.sparse as sp

from mrgc import autodiff as ad
from mrgc.batch import GraphBatch, prepare_graph
from mrgc.config import RunConfig
from mrgc.encoder import EncoderParams
from mrgc.graph import Graph
from mrgc.kernels import batch_kernel, build_graph_level_graph, cosine_normalize
from mrgc.objectives import (LossWeights, cluster_loss, contrastive_loss, similarity_loss, total_loss,
                             view_alignment)
from mrgc.pooling import PoolingParams
from mrgc.trainer import Model, forward


def _reduce(out, weight):
    # random linear functional so every output entry carries gradient
    return ad.sum_all(ad.mul(out, ad.constant(weight)))


def op_case(kind, rng):
    """``(build, points)`` for one op kind with fresh random inputs."""
    r, c, k = (int(v) for v in rng.integers(2, 5, size=3))

    def g(*shape):
        return rng.standard_normal(shape)

    def pos(*shape):
        return rng.uniform(0.5, 2.0, size=shape)

    unary = {
        "relu": (lambda a: ad.relu(a), [g(r, c)]),
        "exp": (lambda a: ad.exp(a), [g(r, c)]),
        "log": (lambda a: ad.log(a), [pos(r, c)]),
        "neg": (lambda a: ad.neg(a), [g(r, c)]),
        "transpose": (lambda a: ad.transpose(a), [g(r, c)]),
        "softmax_rows": (lambda a: ad.softmax_rows(a), [g(r, c)]),
        "log_softmax_rows": (lambda a: ad.log_softmax_rows(a), [g(r, c)]),
        "row_sum": (lambda a: ad.row_sum(a), [g(r, c)]),
        "col_sum": (lambda a: ad.col_sum(a), [g(r, c)]),
        "sum_all": (lambda a: ad.sum_all(a), [g(r, c)]),
        "mean_all": (lambda a: ad.mean_all(a), [g(r, c)]),
        "l2_norm_rows": (lambda a: ad.l2_norm_rows(a), [g(r, c)]),
        "squared_frobenius": (lambda a: ad.squared_frobenius(a), [g(r, c)]),
        "scalar_mul": (lambda a: ad.scalar_mul(a, -1.7), [g(r, c)]),
        "power": (lambda a: ad.power(a, -0.5), [pos(r, c)]),
        "reshape": (lambda a: ad.reshape(a, (c, r)), [g(r, c)]),
    }
    if kind in unary:
        fn, points = unary[kind]
        out_shape = fn(ad.Tensor(points[0])).shape
        weight = g(*out_shape)
        return (lambda a: _reduce(fn(a), weight)), points
    if kind in ("add", "mul", "div"):
        # cycle through the broadcast forms
        b_shape = [(r, c), (1, c), (r, 1), (1, 1)][int(rng.integers(0, 4))]
        b = pos(*b_shape) if kind == "div" else g(*b_shape)
        fn = getattr(ad, kind)
        weight = g(r, c)
        return (lambda a, bb: _reduce(fn(a, bb), weight)), [g(r, c), b]
    if kind == "div_scalar":
        weight = g(r, c)
        return (lambda a, s: _reduce(ad.div_scalar(a, s), weight)), [g(r, c), pos(1, 1)]
    if kind == "matmul":
        weight = g(r, k)
        return (lambda a, b: _reduce(ad.matmul(a, b), weight)), [g(r, c), g(c, k)]
    if kind == "spmm":
        m = sp.random(k, r, density=0.6, random_state=int(rng.integers(1 << 30)), format="csr")
        weight = g(k, c)
        return (lambda a: _reduce(ad.spmm(m, a), weight)), [g(r, c)]
    if kind == "concat_rows":
        weight = g(r + k, c)
        return (lambda a, b: _reduce(ad.concat_rows([a, b]), weight)), [g(r, c), g(k, c)]
    if kind == "concat_cols":
        weight = g(r, c + k)
        return (lambda a, b: _reduce(ad.concat_cols([a, b]), weight)), [g(r, c), g(r, k)]
    if kind == "gather_rows":
        idx = rng.integers(0, r, size=k + 2)  # repeats exercise scatter-add
        weight = g(len(idx), c)
        return (lambda a: _reduce(ad.gather_rows(a, idx), weight)), [g(r, c)]
    raise KeyError(kind)


def five_node_graph(seed=0, attr_dim=3):
    r = np.random.Generator(np.random.PCG64(seed))
    edges = [[0, 1], [1, 2], [2, 3], [3, 4], [0, 2]]
    return Graph(5, edges, r.standard_normal((5, attr_dim)), edge_features=r.standard_normal((5, 2)))


def composite_case(graphs, seed=0, hidden=4, depth=3, learnable_terms=False):
    """Full encoder, pooling and total-loss expression over every trainable parameter.

    Pseudo-labels and the graph-level graph target are fixed constants; only
    the parameters vary.
    """
    r = np.random.Generator(np.random.PCG64(seed))
    cfg = RunConfig()
    cfg.encoder.hidden_dim, cfg.encoder.depth = hidden, depth
    prepared = [prepare_graph(g, top_k=2) for g in graphs]
    batch = GraphBatch.from_prepared(prepared)
    in_dim = prepared[0].x.shape[1]
    points, d = [], in_dim
    for _ in range(depth):
        points += [r.uniform(-0.8, 0.8, (d, hidden)), r.uniform(-0.3, 0.3, (1, hidden))]
        d = hidden
    points += [r.uniform(-0.5, 0.5, (1, hidden)), r.uniform(-1, 1, (1, 2))]
    if learnable_terms:
        points.append(r.uniform(-1, 1, (1, 3)))
    n = len(graphs)
    centroids = r.standard_normal((2, hidden))
    assignments = np.arange(n) % 2
    target = build_graph_level_graph(np.eye(n) + 0.5 * (1 - np.eye(n)), top_k=n, normalized=True)

    def build(*ts):
        layers = [(ts[2 * i], ts[2 * i + 1]) for i in range(depth)]
        q, alpha = ts[2 * depth], ts[2 * depth + 1]
        logits = ts[2 * depth + 2] if learnable_terms else None
        model = Model(EncoderParams(layers), PoolingParams(q, 1.0, logits), alpha)
        out = forward(model, batch, cfg)
        z = out["z"]["f"]
        l_clu = cluster_loss(z, centroids, assignments)
        l_con = ad.add(contrastive_loss(z, target), view_alignment([out["z"]["phi"], out["z"]["r"]], z))
        k_live = cosine_normalize(batch_kernel([out["h"]["r1"], out["h"]["r2"]], batch))
        l_sim = similarity_loss(k_live, target)
        return total_loss(l_clu, l_con, l_sim, LossWeights(1.0, 1.0))

    return build, points


# ---------------------------------------------------------------------------
# kernel oracles, written independently of the library


def wl_oracle(g1: Graph, g2: Graph, h: int) -> int:
    """WL subtree kernel via nested canonical tuples instead of hashes."""

    def labels(g):
        base = list(g.node_labels) if g.node_labels is not None else list(g.degrees().astype(int))
        nbrs = [[] for _ in range(g.node_count)]
        for u, v in g.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        cur = [("base", int(x)) for x in base]
        per_round = [Counter(cur)]
        for _ in range(h):
            cur = [(cur[v], tuple(sorted(cur[u] for u in nbrs[v]))) for v in range(g.node_count)]
            per_round.append(Counter(cur))
        return per_round

    a, b = labels(g1), labels(g2)
    return sum(ca[key] * cb[key] for ca, cb in zip(a, b) for key in ca)


def sp_oracle(g1: Graph, g2: Graph) -> int:
    """Shortest-path kernel via BFS distance multisets over unordered pairs."""

    def dists(g):
        nbrs = [[] for _ in range(g.node_count)]
        for u, v in g.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        out = Counter()
        for s in range(g.node_count):
            seen = {s: 0}
            frontier = [s]
            while frontier:
                nxt = []
                for u in frontier:
                    for v in nbrs[u]:
                        if v not in seen:
                            seen[v] = seen[u] + 1
                            nxt.append(v)
                frontier = nxt
            for t, d in seen.items():
                if t > s:
                    out[d] += 1
        return out

    a, b = dists(g1), dists(g2)
    return sum(a[d] * b[d] for d in a)


def brute_force_accuracy(pred, truth):
    """Best matched fraction over every injective cluster-to-class map (padded)."""
    pv, tv = list(np.unique(pred)), list(np.unique(truth))
    slots = tv + [None] * max(0, len(pv) - len(tv))
    best = 0
    for perm in itertools.permutations(slots, len(pv)):
        mapping = dict(zip(pv, perm))
        best = max(best, sum(mapping[p] == t for p, t in zip(pred, truth)))
    return best / len(pred)


def brute_force_ari(pred, truth):
    n = len(pred)
    same_p = same_t = both = 0
    for i in range(n):
        for j in range(i + 1, n):
            sp_, st_ = pred[i] == pred[j], truth[i] == truth[j]
            same_p += sp_
            same_t += st_
            both += sp_ and st_
    pairs = n * (n - 1) / 2
    expected = same_p * same_t / pairs
    max_index = (same_p + same_t) / 2
    return (both - expected) / (max_index - expected)
