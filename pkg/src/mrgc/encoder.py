"""GIN-style encoder shared across the original, relation and fused views."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .batch import GraphBatch, prepare_views
from .relations import RelationViewSet

STREAMS = ("phi", "r", "f")


class EncoderConfigError(ValueError):
    pass


@dataclass
class EncoderParams:
    layers: list  # [(W, b)], W: (d_in, d_out), b: (1, d_out)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def hidden_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    def parameters(self):
        return [t for layer in self.layers for t in layer]


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_encoder(in_dim: int, hidden_dim: int = 32, depth: int = 3, seed: int = 0) -> EncoderParams:
    if depth < 1:
        raise EncoderConfigError(f"encoder depth must be at least 1, got {depth}")
    if hidden_dim < 1 or in_dim < 1:
        raise EncoderConfigError("encoder dimensions must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    layers, d = [], in_dim
    for _ in range(depth):
        layers.append((ad.parameter(xavier_uniform(rng, d, hidden_dim)), ad.parameter(np.zeros((1, hidden_dim)))))
        d = hidden_dim
    return EncoderParams(layers)


def _propagate(a_hat, h: ad.Tensor) -> ad.Tensor:
    if callable(a_hat):
        return a_hat(h)
    if isinstance(a_hat, ad.Tensor):
        return ad.matmul(a_hat, h)
    return ad.spmm(a_hat, h)


def gin_layer(h: ad.Tensor, a_hat, layer) -> ad.Tensor:
    """``relu((H + A_hat H) W + b)``.

    ``a_hat`` is a constant matrix (dense or sparse), a Tensor, or a callable
    that maps ``H`` to ``A_hat H``.
    """
    w, b = layer
    if h.shape[1] != w.shape[0]:
        raise ad.ShapeError(f"gin_layer: embeddings {h.shape} do not fit weight {w.shape}")
    agg = _propagate(a_hat, h)
    if agg.shape != h.shape:
        raise ad.ShapeError(f"gin_layer: adjacency does not match {h.shape[0]} nodes")
    return ad.relu(ad.add(ad.matmul(ad.add(h, agg), w), b))


def fused_propagator(batch: GraphBatch, alpha: ad.Tensor):
    """``H -> norm(w1 A1 + w2 A2) H`` without materializing the fused matrix.

    With ``d = (w1 deg1 + w2 deg2 + 1)^-1/2`` the normalized fused adjacency
    times H is ``d * (w1 A1 (d*H) + w2 A2 (d*H) + d*H)``; every factor stays
    differentiable in alpha.
    """
    w = ad.transpose(ad.softmax_rows(alpha))  # (2, 1)
    w1 = ad.gather_rows(w, [0])
    w2 = ad.gather_rows(w, [1])
    deg = ad.add(ad.add(ad.mul(ad.constant(batch.deg_r1), w1), ad.mul(ad.constant(batch.deg_r2), w2)),
                 ad.constant(np.ones((batch.num_nodes, 1))))
    d = ad.power(deg, -0.5)

    def apply(h):
        dh = ad.mul(h, d)
        mixed = ad.add(ad.add(ad.mul(ad.spmm(batch.raw_r1, dh), w1), ad.mul(ad.spmm(batch.raw_r2, dh), w2)), dh)
        return ad.mul(mixed, d)

    return apply


def encode_stack(x: ad.Tensor, a_hat, params: EncoderParams) -> ad.Tensor:
    h = x
    for layer in params.layers:
        h = gin_layer(h, a_hat, layer)
    return h


def encode_batch(batch: GraphBatch, params: EncoderParams, alpha: ad.Tensor,
                 streams=STREAMS) -> dict:
    """Node embeddings per view for a batch.

    Returns a dict with keys among ``phi``, ``r1``, ``r2``, ``r`` (mean of r1
    and r2) and ``f``, restricted to what ``streams`` needs.
    """
    x = ad.constant(batch.x)
    out = {}
    if "phi" in streams:
        out["phi"] = encode_stack(x, batch.norm["phi"], params)
    if "r" in streams:
        out["r1"] = encode_stack(x, batch.norm["r1"], params)
        out["r2"] = encode_stack(x, batch.norm["r2"], params)
        out["r"] = ad.scalar_mul(ad.add(out["r1"], out["r2"]), 0.5)
    if "f" in streams:
        out["f"] = encode_stack(x, fused_propagator(batch, alpha), params)
    return out


def encode_views(x, views: RelationViewSet, params: EncoderParams, alpha: ad.Tensor | None = None):
    """Encode one graph; returns ``(H_phi, H_r, H_f)`` as Tensors.

    ``alpha`` defaults to the view set's own fusion weights (held constant).
    """
    if params.depth < 1:
        raise EncoderConfigError("encoder depth must be at least 1")
    batch = GraphBatch.from_prepared([prepare_views(np.asarray(x, dtype=np.float64), views)])
    if alpha is None:
        alpha = ad.constant(np.asarray(views.fusion_weights, dtype=np.float64).reshape(1, -1))
    out = encode_batch(batch, params, alpha)
    return out["phi"], out["r"], out["f"]
