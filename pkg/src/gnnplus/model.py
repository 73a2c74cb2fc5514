"""End-to-end GNN+ model: encoders, optional RWSE fusion, layers, readout, head."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ParseError, StateError
from .graph import DatasetMeta, GraphBatch
from .layers import (
    BACKBONES,
    LayerParams,
    TechniqueFlags,
    glorot,
    init_layer_params,
    layer_forward,
)
from .tensor import (
    BatchNormState,
    ParameterStore,
    SegmentIndex,
    Tensor,
    abs_,
    bce_with_logits,
    cross_entropy,
    gather_rows,
    matmul,
    mean,
    scale_rows,
    segment_max,
    segment_sum,
)
from .rwse import fuse_pe

READOUTS = ("mean", "sum", "max", "node_level")
MIN_LAYERS, MAX_LAYERS = 3, 20


@dataclass(frozen=True)
class ModelConfig:
    backbone: str = "gcn"
    num_layers: int = 3
    hidden_dim: int = 64
    flags: TechniqueFlags = field(default_factory=TechniqueFlags)
    pe_steps: int = 0
    readout: str = "mean"
    seed: int = 0

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.backbone!r}")
        if not MIN_LAYERS <= self.num_layers <= MAX_LAYERS:
            raise ConfigError(f"num_layers must lie in [{MIN_LAYERS}, {MAX_LAYERS}], "
                              f"got {self.num_layers}")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be positive")
        if self.readout not in READOUTS:
            raise ConfigError(f"unknown readout {self.readout!r}")
        if self.flags.use_pe and self.pe_steps < 1:
            raise ConfigError("use_pe needs pe_steps >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["flags"] = asdict(self.flags)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["flags"] = TechniqueFlags(**d.get("flags", {}))
        return cls(**d)


@dataclass
class Prediction:
    values: Tensor
    task: str


class GNNPlus:
    """A built model. ``params`` holds every trainable tensor."""

    def __init__(self, config: ModelConfig, meta: DatasetMeta):
        check_compatible(config, meta)
        self.config = config
        self.meta = meta
        self.params = ParameterStore()
        self.layers: list[LayerParams] = []
        self.rng = np.random.default_rng([config.seed, 1])
        init_rng = np.random.default_rng([config.seed, 0])
        d = config.hidden_dim
        add = self.params.add

        if meta.node_feat_kind == "categorical":
            for j, vocab in enumerate(meta.node_feat_dim_or_vocab):
                add(f"encoder.node.{j}", glorot(init_rng, vocab, d))
        else:
            add("encoder.node.W", glorot(init_rng, meta.node_feat_dim_or_vocab, d))
            add("encoder.node.b", np.zeros(d))

        flags = config.flags
        edge_dim = 0
        if flags.use_edge_features:
            if config.backbone == "gatedgcn":
                if meta.edge_feat_kind == "categorical":
                    for j, vocab in enumerate(meta.edge_feat_dim_or_vocab):
                        add(f"encoder.edge.{j}", glorot(init_rng, vocab, d))
                else:
                    add("encoder.edge.W", glorot(init_rng, meta.edge_feat_dim_or_vocab, d))
                    add("encoder.edge.b", np.zeros(d))
                edge_dim = d
            else:
                edge_dim = meta.edge_input_dim

        if flags.use_pe:
            add("pe.W", glorot(init_rng, d + config.pe_steps, d))

        for i in range(config.num_layers):
            self.layers.append(init_layer_params(
                config.backbone, d, flags, init_rng, edge_dim=edge_dim,
                store=self.params, prefix=f"layers.{i}."))

        add("head.W", glorot(init_rng, d, meta.num_outputs))
        add("head.b", np.zeros(meta.num_outputs))

    # ------------------------------------------------------------------
    def buffers(self) -> dict[str, BatchNormState]:
        out = {}
        for i, layer in enumerate(self.layers):
            for key, state in layer.norms.items():
                out[f"layers.{i}.{key}"] = state
        return out

    def num_parameters(self) -> int:
        return self.params.num_parameters()

    def state(self) -> dict[str, np.ndarray]:
        """Copy of parameters plus running statistics."""
        out = self.params.snapshot()
        for name, st in self.buffers().items():
            out[f"{name}.running_mean"] = st.running_mean.copy()
            out[f"{name}.running_var"] = st.running_var.copy()
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        self.params.load({k: arrays[k] for k in self.params if k in arrays})
        for name, st in self.buffers().items():
            try:
                st.running_mean = np.array(arrays[f"{name}.running_mean"], dtype=float)
                st.running_var = np.array(arrays[f"{name}.running_var"], dtype=float)
            except KeyError:
                raise StateError(f"missing running statistics for {name}") from None

    # ------------------------------------------------------------------
    def _encode_categorical(self, feat: np.ndarray, prefix: str, vocab, batch, key) -> Tensor:
        idx = batch.cache.get(key)
        if idx is None:
            idx = [SegmentIndex(feat[:, j], v) for j, v in enumerate(vocab)]
            batch.cache[key] = idx
        h = gather_rows(self.params[f"{prefix}.0"], idx[0])
        for j in range(1, len(vocab)):
            h = h + gather_rows(self.params[f"{prefix}.{j}"], idx[j])
        return h

    def encode_nodes(self, batch: GraphBatch) -> Tensor:
        meta = self.meta
        if meta.node_feat_kind == "categorical":
            return self._encode_categorical(batch.node_feat, "encoder.node",
                                            meta.node_feat_dim_or_vocab, batch, "node_idx")
        x = Tensor(batch.node_feat)
        return matmul(x, self.params["encoder.node.W"]) + self.params["encoder.node.b"]

    def encode_edges(self, batch: GraphBatch) -> Tensor | None:
        if not self.config.flags.use_edge_features:
            return None
        meta = self.meta
        if batch.edge_feat is None:
            raise ConfigError("model uses edge features but the batch has none")
        if self.config.backbone == "gatedgcn":
            if meta.edge_feat_kind == "categorical":
                return self._encode_categorical(batch.edge_feat, "encoder.edge",
                                                meta.edge_feat_dim_or_vocab, batch, "edge_idx")
            x = Tensor(batch.edge_feat)
            return matmul(x, self.params["encoder.edge.W"]) + self.params["encoder.edge.b"]
        return Tensor(edge_input(batch, meta))

    def node_states(self, batch: GraphBatch, mode: str, rng=None) -> Tensor:
        """Final-layer node representations (before readout and head)."""
        rng = self.rng if rng is None else rng
        h = self.encode_nodes(batch)
        if self.config.flags.use_pe:
            k = self.config.pe_steps
            if batch.pe is None or batch.pe.shape[1] != k:
                raise StateError(f"model needs a {k}-step RWSE cache on the batch; "
                                 "call attach_rwse on the graphs first")
            h = fuse_pe(h, batch.pe, self.params["pe.W"])
        e = self.encode_edges(batch)
        for layer in self.layers:
            h, e = layer_forward(h, e, batch, layer, self.config.flags, mode, rng)
        return h

    def readout(self, h: Tensor, batch: GraphBatch) -> Tensor:
        kind = self.config.readout
        if kind == "node_level":
            return h
        g = batch.num_graphs
        if kind == "max":
            return segment_max(h, batch.graph_index, g)
        pooled = segment_sum(h, batch.graph_index, g)
        if kind == "mean":
            pooled = scale_rows(pooled, 1.0 / np.maximum(batch.graph_sizes, 1))
        return pooled

    def forward(self, batch: GraphBatch, mode: str = "eval", rng=None) -> Prediction:
        h = self.node_states(batch, mode, rng)
        out = matmul(self.readout(h, batch), self.params["head.W"]) + self.params["head.b"]
        return Prediction(out, self.meta.task)

    __call__ = forward


def edge_input(batch: GraphBatch, meta: DatasetMeta) -> np.ndarray:
    """Raw edge features: one-hot columns for categorical data, as-is otherwise."""
    cached = batch.cache.get("edge_raw")
    if cached is not None:
        return cached
    ef = batch.edge_feat
    if meta.edge_feat_kind == "categorical":
        vocab = meta.edge_feat_dim_or_vocab
        out = np.zeros((ef.shape[0], int(sum(vocab))))
        offset = 0
        rows = np.arange(ef.shape[0])
        for j, v in enumerate(vocab):
            out[rows, offset + ef[:, j]] = 1.0
            offset += v
    else:
        out = np.asarray(ef, dtype=float)
    batch.cache["edge_raw"] = out
    return out


def check_compatible(config: ModelConfig, meta: DatasetMeta) -> None:
    node_task = meta.task == "node_classification"
    if (config.readout == "node_level") != node_task:
        raise ConfigError(f"readout {config.readout!r} does not fit task {meta.task!r}: "
                          "node_level readout is used exactly for node classification")
    if config.flags.use_edge_features and not meta.has_edge_features:
        raise ConfigError("use_edge_features is set but the dataset has no edge features")


def build_model(config: ModelConfig, meta: DatasetMeta) -> GNNPlus:
    return GNNPlus(config, meta)


def loss(pred: Prediction, labels, task: str | None = None) -> Tensor:
    """Mean absolute error, softmax cross-entropy or per-label BCE by task."""
    task = task or pred.task
    out = pred.values
    if task == "graph_regression":
        y = np.asarray(labels, dtype=float)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if y.shape != out.shape:
            raise DimensionError(f"regression labels {y.shape} vs predictions {out.shape}")
        return mean(abs_(out - Tensor(y)))
    if task in ("graph_classification", "node_classification"):
        return cross_entropy(out, labels)
    if task == "graph_multilabel":
        y = np.asarray(labels, dtype=float)
        if y.size != out.data.size:
            raise DimensionError(f"multilabel targets {y.shape} vs logits {out.shape}")
        return bce_with_logits(out, y.reshape(out.shape))
    raise ConfigError(f"unknown task {task!r}")


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (little endian): magic, u32 version, u32 header length, JSON header
# {model, meta, extra}, u32 tensor count, then per tensor: u16 name length,
# name, u32 ndim, ndim * u64 dims, float64 payload.

_MAGIC = b"GNNPCKPT"
_VERSION = 1


def save_checkpoint(path, model: GNNPlus, state: dict[str, np.ndarray] | None = None,
                    extra: dict | None = None) -> None:
    state = model.state() if state is None else state
    header = json.dumps({"model": model.config.to_json(), "meta": model.meta.to_json(),
                         "extra": extra or {}}, sort_keys=True).encode("utf-8")
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(header)), header,
             struct.pack("<I", len(state))]
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if not buf.startswith(_MAGIC):
        raise ParseError(f"{path}: not a checkpoint file")
    pos = len(_MAGIC)
    version, hlen = struct.unpack_from("<II", buf, pos)
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    pos += 8
    header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos) \
            .reshape(shape).astype(np.float64)
        pos += 8 * size
    return header, arrays


def load_checkpoint(path) -> GNNPlus:
    header, arrays = read_checkpoint(path)
    model = build_model(ModelConfig.from_json(header["model"]),
                        DatasetMeta.from_json(header["meta"]))
    model.load_state(arrays)
    return model
