"""Graphs, datasets, disjoint-union batching, JSON Lines I/O and generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DatasetError, ParseError, SchemaError, ValidationError
from .tensor import SegmentIndex, Tensor

TASKS = ("graph_regression", "graph_classification", "graph_multilabel",
         "node_classification")
FEAT_KINDS = ("categorical", "continuous", "none")


@dataclass
class Graph:
    """One graph with directed arc storage.

    Undirected edges are stored as two arcs (a self-loop as one); ``edge_feat``
    has one row per stored arc.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    node_feat: np.ndarray
    edge_feat: np.ndarray | None = None
    label: Any = None
    pe: np.ndarray | None = None

    def __post_init__(self):
        self.src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        self.dst = np.asarray(self.dst, dtype=np.int64).reshape(-1)
        self.node_feat = np.asarray(self.node_feat)
        if self.node_feat.ndim == 1:
            self.node_feat = self.node_feat.reshape(-1, 1)
        if self.edge_feat is not None:
            self.edge_feat = np.asarray(self.edge_feat)
            if self.edge_feat.ndim == 1:
                self.edge_feat = self.edge_feat.reshape(-1, 1)

    @classmethod
    def from_undirected(cls, num_nodes: int, edges, node_feat, edge_feat=None,
                        label=None) -> "Graph":
        """Mirror each listed edge ``(u, v)`` into arcs ``u->v`` and ``v->u``."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        src, dst, rows = [], [], []
        for i, (u, v) in enumerate(edges):
            src.append(u)
            dst.append(v)
            rows.append(i)
            if u != v:
                src.append(v)
                dst.append(u)
                rows.append(i)
        ef = None
        if edge_feat is not None:
            ef = np.asarray(edge_feat)
            if ef.ndim == 1:
                ef = ef.reshape(-1, 1)
            ef = ef[np.asarray(rows, dtype=np.int64)] if rows else ef[:0]
        return cls(num_nodes, np.asarray(src, dtype=np.int64),
                   np.asarray(dst, dtype=np.int64), node_feat, ef, label)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    def undirected_edges(self) -> tuple[np.ndarray, np.ndarray | None]:
        """Each stored arc pair once (``src <= dst``), with its features."""
        keep = self.src <= self.dst
        pairs = np.stack([self.src[keep], self.dst[keep]], axis=1)
        ef = self.edge_feat[keep] if self.edge_feat is not None else None
        return pairs, ef

    def validate(self, where: str = "graph") -> None:
        n = self.num_nodes
        if n < 0:
            raise ValidationError(f"{where}: negative node count")
        if self.src.size != self.dst.size:
            raise ValidationError(f"{where}: src/dst length mismatch")
        for arr in (self.src, self.dst):
            bad = arr[(arr < 0) | (arr >= n)]
            if bad.size:
                raise ValidationError(
                    f"{where}: edge endpoint {int(bad[0])} outside [0, {n})")
        if self.node_feat.shape[0] != n:
            raise ValidationError(f"{where}: {self.node_feat.shape[0]} feature rows "
                                  f"for {n} nodes")
        if self.edge_feat is not None and self.edge_feat.shape[0] != self.src.size:
            raise ValidationError(f"{where}: {self.edge_feat.shape[0]} edge feature "
                                  f"rows for {self.src.size} arcs")
        if self.pe is not None and self.pe.shape[0] != n:
            raise ValidationError(f"{where}: positional encoding rows != nodes")

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that old node ``perm[i]`` becomes node ``i``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(perm.size)
        label = self.label
        if isinstance(label, np.ndarray) and label.ndim == 1 and label.size == self.num_nodes \
                and label.dtype.kind in "iu":
            label = label[perm]
        return Graph(self.num_nodes, inv[self.src], inv[self.dst], self.node_feat[perm],
                     self.edge_feat, label,
                     None if self.pe is None else self.pe[perm])


@dataclass(frozen=True)
class DatasetMeta:
    """Feature schema and task shared by every graph of a dataset.

    For categorical features ``*_dim_or_vocab`` is a tuple of per-column
    vocabulary sizes; for continuous features it is the feature width.
    """

    task: str
    node_feat_kind: str
    node_feat_dim_or_vocab: Any
    edge_feat_kind: str = "none"
    edge_feat_dim_or_vocab: Any = 0
    num_outputs: int = 1

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        for kind in (self.node_feat_kind, self.edge_feat_kind):
            if kind not in FEAT_KINDS:
                raise ConfigError(f"unknown feature kind {kind!r}")
        if self.node_feat_kind == "none":
            raise ConfigError("node features are required")
        object.__setattr__(self, "node_feat_dim_or_vocab",
                           _norm_dims(self.node_feat_kind, self.node_feat_dim_or_vocab))
        object.__setattr__(self, "edge_feat_dim_or_vocab",
                           _norm_dims(self.edge_feat_kind, self.edge_feat_dim_or_vocab))
        if int(self.num_outputs) < 1:
            raise ConfigError("num_outputs must be positive")

    @property
    def has_edge_features(self) -> bool:
        return self.edge_feat_kind != "none"

    @property
    def edge_input_dim(self) -> int:
        """Width of the raw edge input (one-hot width for categorical)."""
        if self.edge_feat_kind == "categorical":
            return int(sum(self.edge_feat_dim_or_vocab))
        if self.edge_feat_kind == "continuous":
            return int(self.edge_feat_dim_or_vocab)
        return 0

    def to_json(self) -> dict:
        def enc(v):
            return list(v) if isinstance(v, tuple) else v
        return {"task": self.task, "node_feat_kind": self.node_feat_kind,
                "node_feat_dim_or_vocab": enc(self.node_feat_dim_or_vocab),
                "edge_feat_kind": self.edge_feat_kind,
                "edge_feat_dim_or_vocab": enc(self.edge_feat_dim_or_vocab),
                "num_outputs": int(self.num_outputs)}

    @classmethod
    def from_json(cls, d: dict) -> "DatasetMeta":
        return cls(d["task"], d["node_feat_kind"], d["node_feat_dim_or_vocab"],
                   d.get("edge_feat_kind", "none"), d.get("edge_feat_dim_or_vocab", 0),
                   d.get("num_outputs", 1))


def _norm_dims(kind: str, value):
    if kind == "categorical":
        vals = (value,) if np.isscalar(value) else tuple(value)
        vals = tuple(int(v) for v in vals)
        if not vals or min(vals) < 1:
            raise ConfigError(f"bad vocabulary sizes {value!r}")
        return vals
    if kind == "continuous":
        if not np.isscalar(value) or int(value) < 1:
            raise ConfigError(f"bad feature width {value!r}")
        return int(value)
    return 0


@dataclass
class Dataset:
    graphs: list[Graph]
    splits: dict[str, list[int]]
    meta: DatasetMeta

    @property
    def task(self) -> str:
        return self.meta.task

    def __len__(self) -> int:
        return len(self.graphs)

    def split(self, name: str) -> list[Graph]:
        if name not in self.splits:
            raise DatasetError(f"unknown split {name!r}; have {sorted(self.splits)}")
        return [self.graphs[i] for i in self.splits[name]]

    def validate(self) -> None:
        seen: set[int] = set()
        n = len(self.graphs)
        for name, idx in self.splits.items():
            for i in idx:
                if not 0 <= i < n:
                    raise ValidationError(f"split {name!r}: index {i} outside [0, {n})")
                if i in seen:
                    raise ValidationError(f"split {name!r}: index {i} appears in "
                                          "more than one split")
                seen.add(i)
        for k, g in enumerate(self.graphs):
            where = f"record {k}"
            g.validate(where)
            _check_schema(g, self.meta, where)
            _check_label(g, self.meta, where)


def _check_schema(g: Graph, meta: DatasetMeta, where: str) -> None:
    nf = g.node_feat
    if meta.node_feat_kind == "categorical":
        vocab = meta.node_feat_dim_or_vocab
        if nf.shape[1] != len(vocab) or nf.dtype.kind not in "iu":
            raise SchemaError(f"{where}: node features must be {len(vocab)} integer columns")
        if nf.size and ((nf < 0).any() or (nf >= np.asarray(vocab)).any()):
            raise SchemaError(f"{where}: node category outside vocabulary {vocab}")
    elif nf.shape[1] != meta.node_feat_dim_or_vocab:
        raise SchemaError(f"{where}: node feature width {nf.shape[1]} != "
                          f"{meta.node_feat_dim_or_vocab}")
    ef = g.edge_feat
    if meta.edge_feat_kind == "none":
        if ef is not None:
            raise SchemaError(f"{where}: unexpected edge features")
        return
    if ef is None:
        raise SchemaError(f"{where}: missing edge features")
    if meta.edge_feat_kind == "categorical":
        vocab = meta.edge_feat_dim_or_vocab
        if ef.shape[1] != len(vocab) or (ef.size and ef.dtype.kind not in "iu"):
            raise SchemaError(f"{where}: edge features must be {len(vocab)} integer columns")
        if ef.size and ((ef < 0).any() or (ef >= np.asarray(vocab)).any()):
            raise SchemaError(f"{where}: edge category outside vocabulary {vocab}")
    elif ef.shape[1] != meta.edge_feat_dim_or_vocab:
        raise SchemaError(f"{where}: edge feature width {ef.shape[1]} != "
                          f"{meta.edge_feat_dim_or_vocab}")


def _check_label(g: Graph, meta: DatasetMeta, where: str) -> None:
    y = g.label
    if meta.task == "node_classification":
        y = np.asarray(y)
        if y.shape != (g.num_nodes,):
            raise ValidationError(f"{where}: expected {g.num_nodes} node labels, "
                                  f"got shape {y.shape}")
        if y.size and (y.min() < 0 or y.max() >= meta.num_outputs):
            raise ValidationError(f"{where}: node label outside [0, {meta.num_outputs})")
    elif meta.task == "graph_classification":
        if not 0 <= int(y) < meta.num_outputs:
            raise ValidationError(f"{where}: class {y} outside [0, {meta.num_outputs})")
    else:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != meta.num_outputs:
            raise ValidationError(f"{where}: label width {y.size} != {meta.num_outputs}")


# ---------------------------------------------------------------------------
# batching

@dataclass
class GraphBatch:
    """Disjoint union of graphs with per-node graph ids."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    node_feat: np.ndarray
    edge_feat: np.ndarray | None
    graph_id: np.ndarray
    graph_sizes: np.ndarray
    edge_counts: np.ndarray
    labels: Any
    pe: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def num_graphs(self) -> int:
        return int(self.graph_sizes.size)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    @cached_property
    def src_index(self) -> SegmentIndex:
        return SegmentIndex(self.src, self.num_nodes)

    @cached_property
    def dst_index(self) -> SegmentIndex:
        return SegmentIndex(self.dst, self.num_nodes)

    @cached_property
    def graph_index(self) -> SegmentIndex:
        return SegmentIndex(self.graph_id, self.num_graphs)

    @cached_property
    def hat_degrees(self) -> np.ndarray:
        return compute_hat_degrees(self).data


def _stack_labels(labels: list, task: str | None, sizes: np.ndarray):
    if task is None:
        return labels
    if task == "node_classification":
        if not labels:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.asarray(y, dtype=np.int64).reshape(-1) for y in labels])
    if task == "graph_classification":
        return np.asarray([int(y) for y in labels], dtype=np.int64)
    return np.stack([np.asarray(y, dtype=float).reshape(-1) for y in labels])


def batch_graphs(graphs: Sequence[Graph], task: str | None = None) -> GraphBatch:
    """Disjoint union; node ids of graph ``k`` are offset by earlier sizes."""
    if len(graphs) == 0:
        raise ValueError("batch_graphs needs at least one graph")
    first = graphs[0]
    for k, g in enumerate(graphs[1:], start=1):
        if g.node_feat.shape[1] != first.node_feat.shape[1] \
                or g.node_feat.dtype.kind != first.node_feat.dtype.kind:
            raise SchemaError(f"graph {k}: node feature schema differs from graph 0")
        if (g.edge_feat is None) != (first.edge_feat is None) or (
                g.edge_feat is not None and g.edge_feat.shape[1] != first.edge_feat.shape[1]):
            raise SchemaError(f"graph {k}: edge feature schema differs from graph 0")
        if (g.pe is None) != (first.pe is None) or (
                g.pe is not None and g.pe.shape[1] != first.pe.shape[1]):
            raise SchemaError(f"graph {k}: positional encoding differs from graph 0")
    sizes = np.asarray([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    src = np.concatenate([g.src + o for g, o in zip(graphs, offsets)])
    dst = np.concatenate([g.dst + o for g, o in zip(graphs, offsets)])
    node_feat = np.concatenate([g.node_feat for g in graphs], axis=0)
    edge_feat = None
    if first.edge_feat is not None:
        edge_feat = np.concatenate([g.edge_feat for g in graphs], axis=0)
    pe = None
    if first.pe is not None:
        pe = np.concatenate([g.pe for g in graphs], axis=0)
    return GraphBatch(
        num_nodes=int(sizes.sum()), src=src, dst=dst, node_feat=node_feat,
        edge_feat=edge_feat, graph_id=np.repeat(np.arange(len(graphs)), sizes),
        graph_sizes=sizes, edge_counts=np.asarray([g.num_edges for g in graphs]),
        labels=_stack_labels([g.label for g in graphs], task, sizes), pe=pe)


def compute_hat_degrees(batch) -> Tensor:
    """``1 + in-degree`` per node (the implicit self-loop counts once)."""
    return Tensor(1.0 + np.bincount(batch.dst, minlength=batch.num_nodes))


# ---------------------------------------------------------------------------
# JSON Lines interchange

def _parse_label(raw, task: str):
    if task == "graph_classification":
        return int(raw)
    if task == "node_classification":
        return np.asarray(raw, dtype=np.int64).reshape(-1)
    return np.asarray(raw, dtype=float).reshape(-1)


def _feat_array(raw, kind: str, where: str):
    if kind == "none":
        if raw is not None:
            raise SchemaError(f"{where}: edge_feat given but header declares none")
        return None
    if raw is None:
        return None
    arr = np.asarray(raw, dtype=np.int64 if kind == "categorical" else float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def load_dataset(path) -> Dataset:
    """Read a JSON Lines dataset (header line, then one graph per line)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    if not records:
        raise ParseError(f"{path}: empty dataset file")
    lineno, header = records[0]
    try:
        meta = DatasetMeta.from_json(header)
        splits = {k: [int(i) for i in v] for k, v in header["splits"].items()}
    except (KeyError, TypeError, ConfigError) as exc:
        raise ParseError(f"{path}:{lineno}: bad header ({exc})") from None
    graphs = []
    for k, (lineno, rec) in enumerate(records[1:]):
        where = f"record {k} ({path.name}:{lineno})"
        try:
            n = int(rec["num_nodes"])
            edges = rec.get("edges", [])
            nf = _feat_array(rec["node_feat"], meta.node_feat_kind, where)
            ef = _feat_array(rec.get("edge_feat"), meta.edge_feat_kind, where)
            label = _parse_label(rec["label"], meta.task)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, SchemaError):
                raise
            raise ParseError(f"{path}:{lineno}: malformed record ({exc!r})") from None
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        bad = edges[(edges < 0) | (edges >= n)]
        if bad.size:
            raise ValidationError(f"{where}: edge references node {int(bad[0])} "
                                  f"of a {n}-node graph")
        if ef is not None and ef.shape[0] != edges.shape[0]:
            raise ValidationError(f"{where}: {ef.shape[0]} edge feature rows for "
                                  f"{edges.shape[0]} edges")
        graphs.append(Graph.from_undirected(n, edges, nf, ef, label))
    ds = Dataset(graphs, splits, meta)
    ds.validate()
    return ds


def _jsonable(a):
    if a is None:
        return None
    if isinstance(a, np.ndarray):
        return a.tolist()
    if isinstance(a, np.generic):
        return a.item()
    return a


def save_dataset(dataset: Dataset, path) -> None:
    header = dataset.meta.to_json()
    header["splits"] = {k: [int(i) for i in v] for k, v in dataset.splits.items()}
    out = [json.dumps(header, separators=(",", ":"))]
    for g in dataset.graphs:
        pairs, ef = g.undirected_edges()
        nf = g.node_feat
        if nf.shape[1] == 1 and dataset.meta.node_feat_kind == "categorical":
            nf = nf[:, 0]
        rec = {"num_nodes": int(g.num_nodes), "edges": pairs.tolist(),
               "node_feat": _jsonable(nf)}
        if ef is not None:
            rec["edge_feat"] = _jsonable(ef)
        label = g.label
        if dataset.task == "graph_regression" and np.asarray(label).size == 1:
            label = float(np.asarray(label).reshape(-1)[0])
        rec["label"] = _jsonable(label)
        out.append(json.dumps(rec, separators=(",", ":")))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def dataset_summary(dataset: Dataset) -> dict:
    """Counts in the style of a benchmark overview table."""
    n = len(dataset.graphs)
    nodes = [g.num_nodes for g in dataset.graphs]
    # undirected edge count, matching how benchmarks report it
    edges = [int(g.undirected_edges()[0].shape[0]) for g in dataset.graphs]
    return {"graphs": n, "avg_nodes": float(np.mean(nodes)) if n else 0.0,
            "avg_edges": float(np.mean(edges)) if n else 0.0,
            "task": dataset.task}


# ---------------------------------------------------------------------------
# synthetic generators

def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _split_indices(n: int, fractions=(0.8, 0.1, 0.1)) -> dict[str, list[int]]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    idx = list(range(n))
    return {"train": idx[:n_train], "val": idx[n_train:n_train + n_val],
            "test": idx[n_train + n_val:]}


def generate_sbm_node_task(num_graphs: int, nodes_per_graph: int, num_blocks: int,
                           p_intra: float, p_inter: float, feature_noise: float,
                           rng=0) -> Dataset:
    """Cluster-recovery node classification on stochastic block model graphs.

    Nodes are split into near-equal blocks; the label is the block id. Each
    node's single categorical feature is its block id, replaced by the extra
    "unknown" symbol ``num_blocks`` with probability ``feature_noise``.
    """
    if num_blocks < 2:
        raise ConfigError("num_blocks must be at least 2")
    if not 0.0 <= p_inter < p_intra <= 1.0:
        raise ConfigError(f"need 0 <= p_inter < p_intra <= 1, got "
                          f"p_inter={p_inter}, p_intra={p_intra}")
    if not 0.0 <= feature_noise <= 1.0:
        raise ConfigError("feature_noise must lie in [0, 1]")
    if num_graphs < 1 or nodes_per_graph < 1:
        raise ConfigError("need at least one graph with one node")
    rng = _as_rng(rng)
    n = nodes_per_graph
    iu, ju = np.triu_indices(n, k=1)
    base = np.arange(n) % num_blocks
    graphs = []
    for _ in range(num_graphs):
        blocks = rng.permutation(base)
        prob = np.where(blocks[iu] == blocks[ju], p_intra, p_inter)
        keep = rng.random(iu.size) < prob
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        hidden = rng.random(n) < feature_noise
        feat = np.where(hidden, num_blocks, blocks).astype(np.int64)
        graphs.append(Graph.from_undirected(n, edges, feat.reshape(-1, 1),
                                            label=blocks.astype(np.int64)))
    meta = DatasetMeta("node_classification", "categorical", (num_blocks + 1,),
                       num_outputs=num_blocks)
    ds = Dataset(graphs, _split_indices(num_graphs), meta)
    ds.validate()
    return ds


REGRESSION_VOCAB = 8


def triangle_density(num_nodes: int, edges) -> float:
    """Three times the triangle count divided by the node count."""
    if num_nodes == 0:
        return 0.0
    a = np.zeros((num_nodes, num_nodes), dtype=np.int64)
    for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        if u != v:
            a[u, v] = a[v, u] = 1
    triangles = int(np.trace(a @ a @ a)) // 6
    return 3.0 * triangles / num_nodes


def generate_regression_task(num_graphs: int, size_range=(6, 14), rng=0,
                             edge_prob: float = 0.3,
                             fractions=(0.8, 0.1, 0.1)) -> Dataset:
    """Erdős–Rényi graphs labelled with their triangle density.

    Node features are one categorical column holding the degree clipped to
    ``REGRESSION_VOCAB - 1``.
    """
    lo, hi = int(size_range[0]), int(size_range[1])
    if lo < 1 or hi < lo:
        raise ConfigError(f"bad size range {size_range!r}")
    rng = _as_rng(rng)
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(lo, hi + 1))
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < edge_prob
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        deg = np.bincount(edges.reshape(-1), minlength=n)
        feat = np.minimum(deg, REGRESSION_VOCAB - 1).astype(np.int64).reshape(-1, 1)
        graphs.append(Graph.from_undirected(n, edges, feat,
                                            label=np.array([triangle_density(n, edges)])))
    meta = DatasetMeta("graph_regression", "categorical", (REGRESSION_VOCAB,),
                       num_outputs=1)
    ds = Dataset(graphs, _split_indices(num_graphs, fractions), meta)
    ds.validate()
    return ds
