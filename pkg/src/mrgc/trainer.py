"""Training loop, multi-run experiments and ablation sweeps."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .batch import GraphBatch, prepare_graph
from .config import ConfigError, RunConfig
from .encoder import EncoderParams, encode_batch, init_encoder
from .graph import GraphDataset
from .kernels import (batch_kernel, build_graph_level_graph, cosine_normalize, normalize_gram,
                      structural_gram)
from .metrics import MetricReport, evaluate, kmeans
from .objectives import (LossWeights, cluster_loss, contrastive_loss, similarity_loss, total_loss,
                         update_pseudo_labels, view_alignment)
from .pooling import PoolingParams, init_pooling, pool_batch
from .tudataset import DatasetSpec, generate_synthetic, parse_tudataset

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
METRICS = ("acc", "nmi", "ari", "f1")
LOSS_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
ABLATION_MODES = ("sub-relation", "module", "kernel", "loss-grid")


class TrainingError(RuntimeError):
    pass


@dataclass
class Model:
    encoder: EncoderParams
    pooling: PoolingParams
    alpha: ad.Tensor  # (1, 2) fusion logits

    def parameters(self):
        return self.encoder.parameters() + self.pooling.parameters() + [self.alpha]


@dataclass
class TrainResult:
    embeddings: np.ndarray
    report: MetricReport
    loss_trace: list
    partition: object
    epochs_run: int
    wall_clock: float
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "metrics": self.report.to_dict(),
            "loss_trace": self.loss_trace,
            "epochs_run": self.epochs_run,
            "wall_clock_s": self.wall_clock,
            "assignments": self.partition.assignments.tolist(),
        }


@dataclass
class AggregateReport:
    runs: list
    mean: dict
    std: dict
    std_defined: bool
    config_hash: str
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "library_version": __version__,
            "created": datetime.now(timezone.utc).isoformat(),
            "config_hash": self.config_hash,
            "config": self.config,
            "mean": self.mean,
            "std": self.std,
            "std_defined": self.std_defined,
            "runs": [r.to_dict() for r in self.runs],
        }


# ---------------------------------------------------------------------------
# data


def load_dataset(cfg: RunConfig) -> GraphDataset:
    ds = cfg.dataset
    if ds.synthetic is not None:
        spec = DatasetSpec.from_dict(ds.synthetic) if isinstance(ds.synthetic, dict) \
            else DatasetSpec.from_json(ds.synthetic)
        return generate_synthetic(spec)
    if not (ds.dir and ds.name):
        raise ConfigError("set dataset.synthetic or both dataset.dir and dataset.name")
    return parse_tudataset(ds.dir, ds.name, max_degree=ds.max_degree)


def final_stream(enabled) -> str:
    for s in ("f", "r", "phi"):
        if s in enabled:
            return s
    raise ConfigError("no stream enabled")


def kernel_relations(enabled) -> list:
    """Node-embedding keys that enter the dynamic multi-relation kernel."""
    if "r" in enabled:
        return ["r1", "r2"]
    return [s for s in ("phi", "f") if s in enabled]


def init_model(in_dim: int, cfg: RunConfig, seed: int) -> Model:
    enc_seed = cfg.encoder.seed if cfg.encoder.seed is not None else seed
    ss = np.random.SeedSequence(enc_seed).spawn(2)
    encoder = init_encoder(in_dim, cfg.encoder.hidden_dim, cfg.encoder.depth,
                           seed=int(ss[0].generate_state(1)[0]))
    pooling = init_pooling(cfg.encoder.hidden_dim, cfg.pooling.temperature,
                           seed=int(ss[1].generate_state(1)[0]), learnable_terms=cfg.pooling.learnable_terms)
    return Model(encoder, pooling, ad.parameter(np.zeros((1, 2))))


def forward(model: Model, batch: GraphBatch, cfg: RunConfig) -> dict:
    enabled = list(cfg.relations.enabled)
    h = encode_batch(batch, model.encoder, model.alpha, streams=enabled)
    z = {s: pool_batch(h[s], batch, model.pooling, cfg.pooling.mode) for s in enabled}
    return {"h": h, "z": z, "final": final_stream(enabled)}


def embed_all(model: Model, prepared, cfg: RunConfig, chunk: int = 256):
    """No-grad pass over the whole dataset.

    Returns final graph embeddings ``(n, hidden)`` and, per graph, the node
    embeddings of each kernel relation (for the dynamic kernel snapshot).
    """
    rel_keys = kernel_relations(cfg.relations.enabled)
    zs, nodes = [], []
    with ad.no_grad():
        for lo in range(0, len(prepared), chunk):
            batch = GraphBatch.from_prepared(prepared[lo:lo + chunk])
            out = forward(model, batch, cfg)
            zs.append(out["z"][out["final"]].value)
            bounds = np.concatenate([[0], np.cumsum(batch.sizes)])
            for i in range(batch.num_graphs):
                nodes.append([out["h"][key].value[bounds[i]:bounds[i + 1]] for key in rel_keys])
    return np.vstack(zs), nodes


def snapshot_gram(nodes, idx, cfg: RunConfig) -> np.ndarray:
    sel = [nodes[i] for i in idx]
    if cfg.kernel.map == "identity":
        u = np.array([sum(h.sum(axis=0) for h in rels) for rels in sel])
        return u @ u.T
    width = sel[0][0].shape[1]
    gamma = cfg.kernel.gamma if cfg.kernel.gamma is not None else 1.0 / width
    n = len(sel)
    k = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            total = 0.0
            for a in sel[i]:
                for b in sel[j]:
                    d = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1)
                    total += np.exp(-gamma * d).sum()
            k[i, j] = k[j, i] = total
    return k


def _check_finite(name, value, batch_index, idx):
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {name} loss ({value}) at batch {batch_index}; graphs {[int(i) for i in idx]}")


def train(cfg: RunConfig, dataset: GraphDataset | None = None, seed: int | None = None) -> TrainResult:
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    dataset = load_dataset(cfg) if dataset is None else dataset
    n = len(dataset)
    k = cfg.k if cfg.k is not None else dataset.num_classes
    if n < k:
        raise ConfigError(f"dataset has {n} graphs, fewer than k={k}")
    if cfg.batch_size < k:
        raise ConfigError(f"batch_size {cfg.batch_size} is smaller than k={k}")

    prepared = [prepare_graph(g, cfg.relations.top_k) for g in dataset.graphs]
    in_dim = prepared[0].x.shape[1]
    model = init_model(in_dim, cfg, seed)
    params = model.parameters()
    opt = ad.OptimizerState(learning_rate=cfg.learning_rate)
    weights = LossWeights(cfg.loss.lam, cfg.loss.mu)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))

    struct_kind = cfg.kernel.kind if cfg.kernel.kind != "dynamic" else \
        (cfg.kernel.mix_kind if cfg.kernel.mix > 0 else None)
    struct = None
    if struct_kind is not None:
        struct = normalize_gram(structural_gram(dataset.graphs, struct_kind, cfg.kernel.wl_iterations,
                                                cfg.kernel.sp_labels))

    enabled = list(cfg.relations.enabled)
    rel_keys = kernel_relations(enabled)
    trace = []
    pseudo = None
    best, wait = math.inf, 0
    epochs_run = 0
    for epoch in range(cfg.epochs):
        z_all, nodes = embed_all(model, prepared, cfg)
        if pseudo is None or epoch - pseudo.last_refresh_epoch >= cfg.loss.refresh_period:
            pseudo = update_pseudo_labels(z_all, k, seed=seed + epoch, refresh_period=cfg.loss.refresh_period,
                                          epoch=epoch, restarts=cfg.kmeans_restarts)
        order = rng.permutation(n)
        sums = np.zeros(4)
        batches = 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            if len(idx) < 2:
                continue
            if cfg.kernel.kind == "dynamic":
                k_hat = normalize_gram(snapshot_gram(nodes, idx, cfg))
                if struct is not None:
                    k_hat = (1 - cfg.kernel.mix) * k_hat + cfg.kernel.mix * struct[np.ix_(idx, idx)]
            else:
                k_hat = struct[np.ix_(idx, idx)]
            a_tilde = build_graph_level_graph(k_hat, cfg.kernel.top_k, source=cfg.kernel.kind, normalized=True)

            batch = GraphBatch.from_prepared([prepared[i] for i in idx])
            out = forward(model, batch, cfg)
            z_final = out["z"][out["final"]]
            l_clu = cluster_loss(z_final, pseudo.centroids, pseudo.assignments[idx])
            l_con = contrastive_loss(z_final, a_tilde)
            others = [out["z"][s] for s in enabled if s != out["final"]]
            if cfg.loss.view_align and others:
                l_con = ad.add(l_con, view_alignment(others, z_final))
            k_live = cosine_normalize(batch_kernel([out["h"][r] for r in rel_keys], batch,
                                                   cfg.kernel.map, cfg.kernel.gamma))
            l_sim = similarity_loss(k_live, a_tilde)
            loss = total_loss(l_clu, l_con, l_sim, weights)
            vals = [l_clu.item(), l_con.item(), l_sim.item(), loss.item()]
            for name, v in zip(("cluster", "contrastive", "similarity", "total"), vals):
                _check_finite(name, v, b, idx)
            ad.zero_grad(params)
            ad.backward(loss)
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.value)
            ad.adam_step(params, opt)
            sums += vals
            batches += 1
        epochs_run = epoch + 1
        means = sums / max(batches, 1)
        trace.append({"epoch": epoch, "cluster": means[0], "contrastive": means[1],
                      "similarity": means[2], "total": means[3]})
        logger.debug("epoch %d total %.6f", epoch, means[3])
        if means[3] < best - cfg.early_stop_min_delta:
            best, wait = means[3], 0
        else:
            wait += 1
            if wait >= cfg.early_stop_patience:
                break

    z_all, _ = embed_all(model, prepared, cfg)
    assert z_all.shape == (n, cfg.encoder.hidden_dim)
    part = kmeans(z_all, k, seed=seed, restarts=cfg.kmeans_restarts)
    report = evaluate(part, dataset.class_labels, seed=seed)
    return TrainResult(embeddings=z_all, report=report, loss_trace=trace, partition=part,
                       epochs_run=epochs_run, wall_clock=time.perf_counter() - t0, seed=seed)


# ---------------------------------------------------------------------------
# experiments


def _run_one(args):
    flat, seed = args
    cfg = RunConfig.from_flat(flat)
    return train(cfg, seed=seed)


def aggregate(results, cfg: RunConfig) -> AggregateReport:
    values = {m: np.array([getattr(r.report, m) for r in results]) for m in METRICS}
    defined = len(results) > 1
    return AggregateReport(
        runs=list(results),
        mean={m: float(v.mean()) for m, v in values.items()},
        std={m: float(v.std(ddof=1)) if defined else 0.0 for m, v in values.items()},
        std_defined=defined,
        config_hash=cfg.config_hash(),
        config=cfg.to_flat(),
    )


def run_experiment(cfg: RunConfig, runs: int | None = None, dataset: GraphDataset | None = None) -> AggregateReport:
    """Train with seeds ``seed, seed+1, ...`` and aggregate mean and sample std."""
    cfg.validate()
    runs = cfg.runs if runs is None else runs
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    seeds = [cfg.seed + i for i in range(runs)]
    results = []
    if cfg.workers > 1 and dataset is None:
        flat = cfg.to_flat()
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(_run_one, (flat, s)) for s in seeds]
            for s, fut in zip(seeds, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise TrainingError(f"run with seed {s} failed: {exc}") from exc
    else:
        if dataset is None:
            dataset = load_dataset(cfg)
        for s in seeds:
            try:
                results.append(train(cfg, dataset=dataset, seed=s))
            except Exception as exc:
                raise TrainingError(f"run with seed {s} failed: {exc}") from exc
    return aggregate(results, cfg)


def ablation_cells(mode: str) -> list:
    """``[(cell name, {dotted key: value})]`` for an ablation mode."""
    if mode == "sub-relation":
        return [("phi", {"relations.enabled": ["phi"]}),
                ("r", {"relations.enabled": ["r"]}),
                ("f", {"relations.enabled": ["f"]}),
                ("all", {"relations.enabled": ["phi", "r", "f"]})]
    if mode == "module":
        return [("full", {}),
                ("no-multi-relation", {"relations.enabled": ["phi"]}),
                ("no-aware-pooling", {"pooling.mode": "mean"}),
                ("no-kernel-losses", {"loss.lambda": 0.0, "loss.mu": 0.0})]
    if mode == "kernel":
        return [(kind, {"kernel.kind": kind}) for kind in ("dynamic", "wl", "sp", "rw")]
    if mode == "loss-grid":
        return [(f"lambda={lam:g},mu={mu:g}", {"loss.lambda": lam, "loss.mu": mu})
                for lam in LOSS_GRID for mu in LOSS_GRID]
    raise ConfigError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")


def ablation(cfg: RunConfig, mode: str, runs: int | None = None, dataset: GraphDataset | None = None):
    cells = ablation_cells(mode)
    if dataset is None and cfg.workers <= 1:
        dataset = load_dataset(cfg.validate())
    table = []
    for name, overrides in cells:
        cell_cfg = cfg.copy()
        for key, value in overrides.items():
            cell_cfg.set(key, value)
        table.append((name, overrides, run_experiment(cell_cfg, runs, dataset=dataset)))
    return table


def write_summary_csv(table, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")] + ["runs", "config_hash"])
        for name, _, rep in table:
            w.writerow([name] + [f"{rep.mean[m]:.6f}" if s == "mean" else f"{rep.std[m]:.6f}"
                                 for m in METRICS for s in ("mean", "std")] + [len(rep.runs), rep.config_hash])
