"""Reader/writer for the TUDataset text format plus a synthetic generator.

File layout for a dataset ``NAME`` inside a directory::

    NAME_A.txt                one "i, j" line per directed edge, 1-based node ids
    NAME_graph_indicator.txt  line i holds the graph id of node i
    NAME_graph_labels.txt     line g holds the class of graph g (optional)
    NAME_node_labels.txt      one integer per node (optional)
    NAME_node_attributes.txt  comma separated reals per node (optional)
    NAME_edge_labels.txt      one integer per line of NAME_A.txt (optional)
    NAME_edge_attributes.txt  comma separated reals per line of NAME_A.txt (optional)
"""
from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .graph import Graph, GraphDataset, validate_graph

logger = logging.getLogger(__name__)

_SEP = re.compile(r"[,\s]+")

DEFAULT_MAX_DEGREE = 64


class TUFormatError(ValueError):
    pass


class SyntheticSpecError(ValueError):
    pass


def _read_rows(path: Path, kind=float):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rows.append([kind(tok) for tok in _SEP.split(line) if tok])
    return rows


def _read_ints(path: Path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(float(line.split(",")[0])))
            except ValueError as exc:
                raise TUFormatError(f"{path.name}:{lineno}: expected an integer, got {line!r}") from exc
    return out


def _one_hot(values, vocab):
    index = {v: i for i, v in enumerate(vocab)}
    out = np.zeros((len(values), len(vocab)))
    if len(values):
        out[np.arange(len(values)), [index[v] for v in values]] = 1.0
    return out


def degree_one_hot(degrees, max_degree: int = DEFAULT_MAX_DEGREE) -> np.ndarray:
    capped = np.minimum(np.asarray(degrees, dtype=np.int64), max_degree)
    out = np.zeros((len(capped), max_degree + 1))
    out[np.arange(len(capped)), capped] = 1.0
    return out


def parse_tudataset(directory, name: str, max_degree: int = DEFAULT_MAX_DEGREE) -> GraphDataset:
    """Load ``name`` from ``directory``.

    Node attributes are assembled as ``[real attributes | one-hot node labels]``.
    When a dataset has neither, a one-hot degree encoding capped at
    ``max_degree`` is used instead.
    """
    root = Path(directory)

    def f(suffix):
        return root / f"{name}_{suffix}.txt"

    for mandatory in ("A", "graph_indicator"):
        if not f(mandatory).exists():
            raise FileNotFoundError(f"missing mandatory file {f(mandatory)}")

    indicator = _read_ints(f("graph_indicator"))
    n_nodes = len(indicator)

    # graphs are numbered by first appearance
    graph_of_file_id = {}
    for gid in indicator:
        if gid not in graph_of_file_id:
            graph_of_file_id[gid] = len(graph_of_file_id)
    node_graph = np.array([graph_of_file_id[g] for g in indicator], dtype=np.int64)
    n_graphs = len(graph_of_file_id)
    local = np.zeros(n_nodes, dtype=np.int64)
    sizes = np.zeros(n_graphs, dtype=np.int64)
    for i, g in enumerate(node_graph):
        local[i] = sizes[g]
        sizes[g] += 1
    members = [[] for _ in range(n_graphs)]
    for i, g in enumerate(node_graph):
        members[g].append(i)

    # edges
    raw_edges = []
    with open(f("A")) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            toks = [t for t in _SEP.split(line) if t]
            if len(toks) != 2:
                raise TUFormatError(f"{name}_A.txt:{lineno}: expected two node ids, got {line!r}")
            u, v = int(toks[0]) - 1, int(toks[1]) - 1
            for node in (u, v):
                if not 0 <= node < n_nodes:
                    raise TUFormatError(
                        f"{name}_A.txt:{lineno}: node {node + 1} absent from graph_indicator")
            if node_graph[u] != node_graph[v]:
                raise TUFormatError(f"{name}_A.txt:{lineno}: edge ({u + 1}, {v + 1}) crosses two graphs")
            raw_edges.append((u, v, lineno))

    edge_attr_rows = _read_rows(f("edge_attributes")) if f("edge_attributes").exists() else None
    edge_label_rows = _read_ints(f("edge_labels")) if f("edge_labels").exists() else None
    for rows, what in ((edge_attr_rows, "edge_attributes"), (edge_label_rows, "edge_labels")):
        if rows is not None and len(rows) != len(raw_edges):
            raise TUFormatError(f"{name}_{what}.txt has {len(rows)} rows for {len(raw_edges)} edges")

    # merge directions; first occurrence wins for features
    seen = {}
    directed = set()
    per_graph_edges = [[] for _ in range(n_graphs)]
    for idx, (u, v, lineno) in enumerate(raw_edges):
        directed.add((u, v))
        if u == v:
            logger.warning("%s_A.txt:%d: dropping self-loop on node %d", name, lineno, u + 1)
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen[key] = idx
        per_graph_edges[node_graph[u]].append((key, idx))
    asym = sum(1 for (u, v) in directed if u != v and (v, u) not in directed)
    if asym:
        logger.warning("%s: %d directed edges have no reverse listing; treated as undirected", name, asym)

    node_label_vals = _read_ints(f("node_labels")) if f("node_labels").exists() else None
    node_attr_rows = _read_rows(f("node_attributes")) if f("node_attributes").exists() else None
    for rows, what in ((node_label_vals, "node_labels"), (node_attr_rows, "node_attributes")):
        if rows is not None and len(rows) != n_nodes:
            raise TUFormatError(f"{name}_{what}.txt has {len(rows)} rows for {n_nodes} nodes")
    node_vocab = sorted(set(node_label_vals)) if node_label_vals is not None else None
    edge_vocab = sorted(set(edge_label_rows)) if edge_label_rows is not None else None

    node_attrs = np.asarray(node_attr_rows, dtype=np.float64).reshape(n_nodes, -1) \
        if node_attr_rows is not None else None
    node_lab = np.asarray(node_label_vals, dtype=np.int64) if node_label_vals is not None else None
    node_onehot = _one_hot(node_label_vals, node_vocab) if node_vocab is not None else None
    edge_attrs = None
    if edge_attr_rows is not None:
        # with no edges the file is empty and the feature width is unknowable
        edge_attrs = np.asarray(edge_attr_rows, dtype=np.float64).reshape(len(raw_edges), -1) \
            if raw_edges else np.zeros((0, 0))
    edge_lab = np.asarray(edge_label_rows, dtype=np.int64) if edge_label_rows is not None else None

    raw_dim = node_attrs.shape[1] if node_attrs is not None else 0

    graphs = []
    for g in range(n_graphs):
        idx = np.asarray(members[g], dtype=np.int64)
        pairs = per_graph_edges[g]
        eidx = np.asarray([p[1] for p in pairs], dtype=np.int64)
        edges = np.asarray([[local[a], local[b]] for (a, b), _ in pairs], dtype=np.int64).reshape(-1, 2)
        parts = []
        if node_attrs is not None:
            parts.append(node_attrs[idx])
        if node_onehot is not None:
            parts.append(node_onehot[idx])
        if parts:
            x = np.hstack(parts)
        else:
            deg = np.zeros(len(idx), dtype=np.int64)
            if len(edges):
                np.add.at(deg, edges[:, 0], 1)
                np.add.at(deg, edges[:, 1], 1)
            x = degree_one_hot(deg, max_degree)
        graph = Graph(
            node_count=len(idx),
            edges=edges,
            node_attributes=x,
            node_labels=node_lab[idx] if node_lab is not None else None,
            edge_features=edge_attrs[eidx] if edge_attrs is not None else None,
            edge_labels=edge_lab[eidx] if edge_lab is not None else None,
        )
        graphs.append(graph)

    if f("graph_labels").exists():
        by_file_id = _read_ints(f("graph_labels"))
        labels_raw = []
        for file_id, g in sorted(graph_of_file_id.items(), key=lambda kv: kv[1]):
            if not 1 <= file_id <= len(by_file_id):
                raise TUFormatError(f"{name}_graph_labels.txt has no line for graph {file_id}")
            labels_raw.append(by_file_id[file_id - 1])
        vocab = sorted(set(labels_raw))
        remap = {v: i for i, v in enumerate(vocab)}
        class_labels = [remap[v] for v in labels_raw]
        num_classes = max(1, len(vocab))
    else:
        class_labels = [0] * n_graphs
        num_classes = 1

    return GraphDataset(
        graphs=graphs,
        class_labels=class_labels,
        name=name,
        num_classes=num_classes,
        node_label_vocab=node_vocab,
        edge_label_vocab=edge_vocab,
        raw_attribute_dim=raw_dim if (node_attrs is not None or node_vocab is not None) else None,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_tudataset(dataset: GraphDataset, directory) -> None:
    """Write ``dataset`` so that :func:`parse_tudataset` reproduces it.

    Every undirected edge is written in both directions; edge attributes and
    labels are repeated for both lines.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    if not os.access(root, os.W_OK):
        raise PermissionError(f"directory {root} is not writable")
    name = dataset.name
    for g in dataset.graphs:
        validate_graph(g)

    has_node_labels = any(g.node_labels is not None for g in dataset.graphs)
    has_edge_feats = any(g.edge_features is not None for g in dataset.graphs)
    has_edge_labels = any(g.edge_labels is not None for g in dataset.graphs)
    onehot_dim = len(dataset.node_label_vocab) if (has_node_labels and dataset.node_label_vocab) else 0
    write_attrs = not (dataset.raw_attribute_dim == 0 and has_node_labels)

    a_lines, ind_lines, nl_lines, na_lines, el_lines, ea_lines = [], [], [], [], [], []
    offset = 0
    for gi, g in enumerate(dataset.graphs):
        for _ in range(g.node_count):
            ind_lines.append(str(gi + 1))
        if g.node_labels is not None:
            nl_lines.extend(str(int(v)) for v in g.node_labels)
        if write_attrs:
            x = g.node_attributes
            if onehot_dim:
                x = x[:, : x.shape[1] - onehot_dim]
            na_lines.extend(", ".join(_fmt(v) for v in row) for row in x)
        for ei, (u, v) in enumerate(g.edges):
            for a, b in ((u, v), (v, u)):
                a_lines.append(f"{a + offset + 1}, {b + offset + 1}")
                if g.edge_features is not None:
                    ea_lines.append(", ".join(_fmt(t) for t in g.edge_features[ei]))
                if g.edge_labels is not None:
                    el_lines.append(str(int(g.edge_labels[ei])))
        offset += g.node_count

    def dump(suffix, lines):
        with open(root / f"{name}_{suffix}.txt", "w") as fh:
            fh.write("".join(line + "\n" for line in lines))

    dump("A", a_lines)
    dump("graph_indicator", ind_lines)
    dump("graph_labels", [str(int(c)) for c in dataset.class_labels])
    if has_node_labels:
        dump("node_labels", nl_lines)
    if write_attrs and dataset.graphs:
        dump("node_attributes", na_lines)
    if has_edge_feats:
        dump("edge_attributes", ea_lines)
    if has_edge_labels:
        dump("edge_labels", el_lines)


# ---------------------------------------------------------------------------
# synthetic datasets

FAMILY_KINDS = ("cycle", "complete", "path", "star")


def family_edges(kind: str, n: int) -> np.ndarray:
    if kind == "cycle":
        if n < 3:
            raise SyntheticSpecError("cycle needs at least 3 nodes")
        e = [(i, i + 1) for i in range(n - 1)] + [(0, n - 1)]
    elif kind == "complete":
        e = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "path":
        e = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        e = [(0, i) for i in range(1, n)]
    else:
        raise SyntheticSpecError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
    return np.asarray(e, dtype=np.int64).reshape(-1, 2)


@dataclass
class DatasetSpec:
    """Recipe for a synthetic dataset; family index is the class label.

    Random numbers come from numpy's PCG64 bit generator seeded with ``seed``,
    so a spec reproduces the same dataset on every platform.
    """

    family_sizes: list  # [(kind, count, (min_size, max_size)), ...]
    attribute_dim: int
    class_means: list
    noise_std: float = 0.0
    seed: int = 0
    edge_feature_dim: int = 0
    name: str = "SYNTH"

    def __post_init__(self):
        self.family_sizes = [(str(k), int(c), (int(r[0]), int(r[1]))) for k, c, r in self.family_sizes]
        self.class_means = [list(map(float, m)) for m in self.class_means]
        self.validate()

    def validate(self):
        if self.attribute_dim < 1:
            raise SyntheticSpecError("attribute_dim must be positive")
        if len(self.class_means) != len(self.family_sizes):
            raise SyntheticSpecError(
                f"{len(self.class_means)} class means for {len(self.family_sizes)} families")
        for m in self.class_means:
            if len(m) != self.attribute_dim:
                raise SyntheticSpecError(f"class mean {m} does not have {self.attribute_dim} entries")
        for kind, count, (lo, hi) in self.family_sizes:
            if kind not in FAMILY_KINDS:
                raise SyntheticSpecError(f"unknown family kind {kind!r}; expected one of {FAMILY_KINDS}")
            if count < 0:
                raise SyntheticSpecError("family count must be nonnegative")
            if lo > hi or lo < 1:
                raise SyntheticSpecError(f"size range ({lo}, {hi}) is empty")
        if self.noise_std < 0:
            raise SyntheticSpecError("noise_std must be nonnegative")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SyntheticSpecError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        d = dict(d)
        fams = d.pop("family_sizes", None) or d.pop("families", None)
        if fams is None:
            raise SyntheticSpecError("spec needs 'family_sizes'")
        norm = []
        for fam in fams:
            if isinstance(fam, dict):
                norm.append((fam["kind"], fam["count"], fam["size_range"]))
            else:
                norm.append(tuple(fam))
        known = {"attribute_dim", "class_means", "noise_std", "seed", "edge_feature_dim", "name"}
        unknown = set(d) - known
        if unknown:
            raise SyntheticSpecError(f"unknown spec fields {sorted(unknown)}")
        return cls(family_sizes=norm, **d)

    @classmethod
    def from_json(cls, path) -> "DatasetSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "family_sizes": [{"kind": k, "count": c, "size_range": list(r)} for k, c, r in self.family_sizes],
            "attribute_dim": self.attribute_dim,
            "class_means": self.class_means,
            "noise_std": self.noise_std,
            "seed": int(self.seed),
            "edge_feature_dim": self.edge_feature_dim,
            "name": self.name,
        }


def generate_synthetic(spec: DatasetSpec) -> GraphDataset:
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
    graphs, labels = [], []
    for cls_idx, (kind, count, (lo, hi)) in enumerate(spec.family_sizes):
        mean = np.asarray(spec.class_means[cls_idx])
        for _ in range(count):
            n = int(rng.integers(lo, hi + 1))
            edges = family_edges(kind, n)
            x = mean[None, :] + spec.noise_std * rng.standard_normal((n, spec.attribute_dim))
            ef = rng.standard_normal((len(edges), spec.edge_feature_dim)) if spec.edge_feature_dim else None
            graphs.append(Graph(node_count=n, edges=edges, node_attributes=x, edge_features=ef))
            labels.append(cls_idx)
    return GraphDataset(graphs=graphs, class_labels=labels, name=spec.name,
                        num_classes=max(1, len(spec.family_sizes)), raw_attribute_dim=spec.attribute_dim)


def two_family_spec(seed: int = 0, noise_std: float = 0.1, count: int = 50,
                    attribute_dim: int = 4, separation: float = 1.0) -> DatasetSpec:
    """Cycles C10..C14 versus cliques K5..K9 with class-separated attribute means."""
    m0 = [0.0] * attribute_dim
    m1 = [0.0] * attribute_dim
    m0[0] = separation
    m1[1 % attribute_dim] = separation
    return DatasetSpec(
        family_sizes=[("cycle", count, (10, 14)), ("complete", count, (5, 9))],
        attribute_dim=attribute_dim,
        class_means=[m0, m1],
        noise_std=noise_std,
        seed=seed,
    )
