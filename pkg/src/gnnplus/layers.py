"""GCN+, GIN+ and GatedGCN+ layers.

Each layer computes its backbone aggregation and then runs the shared
enhancement pipeline:

    aggregate -> BN -> ReLU -> Dropout -> (+ input) -> FFN

where every stage except the activation can be switched off through
:class:`TechniqueFlags`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import (
    BatchNormState,
    ParameterStore,
    Tensor,
    batchnorm,
    div,
    dropout,
    gather_rows,
    matmul,
    relu,
    scale_rows,
    segment_sum,
    sigmoid,
)

BACKBONES = ("gcn", "gin", "gatedgcn")
GATE_EPS = 1e-6
GIN_EPS = 0.0
FFN_EXPANSION = 2


@dataclass(frozen=True)
class TechniqueFlags:
    use_edge_features: bool = False
    use_norm: bool = False
    dropout_rate: float = 0.0
    use_residual: bool = False
    use_ffn: bool = False
    use_pe: bool = False

    def __post_init__(self):
        if not 0.0 <= float(self.dropout_rate) < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass
class LayerParams:
    """Weights of one layer (by short name) and its batch-norm running stats."""

    backbone: str
    hidden: int
    weights: dict[str, Tensor] = field(default_factory=dict)
    norms: dict[str, BatchNormState] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.weights[name]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_layer_params(backbone: str, hidden: int, flags: TechniqueFlags,
                      rng: np.random.Generator, edge_dim: int = 0,
                      store: ParameterStore | None = None,
                      prefix: str = "") -> LayerParams:
    """Allocate one layer's weights, registering them in ``store`` if given.

    ``edge_dim`` is the width of the edge input: the raw edge features for
    GCN+/GIN+, the hidden edge state for GatedGCN+.
    """
    if backbone not in BACKBONES:
        raise ConfigError(f"unknown backbone {backbone!r}")
    p = LayerParams(backbone, hidden)
    d = hidden

    def new(name, data):
        data = np.asarray(data, dtype=np.float64)
        t = store.add(prefix + name, data) if store is not None \
            else Tensor(data, requires_grad=True)
        p.weights[name] = t

    def norm(key, dim):
        new(f"{key}.gamma", np.ones(dim))
        new(f"{key}.beta", np.zeros(dim))
        p.norms[key] = BatchNormState.fresh(dim)

    use_edge = flags.use_edge_features
    if use_edge and edge_dim < 1:
        raise ConfigError("edge features enabled but the edge input width is 0")
    if backbone == "gcn":
        new("W", glorot(rng, d, d))
        if use_edge:
            new("W_e", glorot(rng, edge_dim, d))
    elif backbone == "gin":
        new("mlp.W1", glorot(rng, d, d))
        new("mlp.b1", np.zeros(d))
        new("mlp.W2", glorot(rng, d, d))
        new("mlp.b2", np.zeros(d))
        if use_edge:
            new("W_e", glorot(rng, edge_dim, d))
    else:
        for name in ("W1", "W2", "W3", "W4"):
            new(name, glorot(rng, d, d))
        if use_edge:
            new("W5", glorot(rng, edge_dim, d))
    if flags.use_norm:
        norm("bn", d)
        if backbone == "gatedgcn" and use_edge:
            norm("bn_e", d)
    if flags.use_ffn:
        inner = FFN_EXPANSION * d
        new("ffn.W1", glorot(rng, d, inner))
        new("ffn.b1", np.zeros(inner))
        new("ffn.W2", glorot(rng, inner, d))
        new("ffn.b2", np.zeros(d))
        if flags.use_norm:
            norm("ffn.bn", d)
    return p


def _bn(x: Tensor, p: LayerParams, key: str, mode: str) -> Tensor:
    return batchnorm(x, p[f"{key}.gamma"], p[f"{key}.beta"], p.norms[key], mode)


def ffn_forward(h: Tensor, p: LayerParams, mode: str, use_norm: bool = True) -> Tensor:
    """``BN(ReLU(h W1 + b1) W2 + b2 + h)``; the BN is skipped when norms are off."""
    inner = relu(matmul(h, p["ffn.W1"]) + p["ffn.b1"])
    out = matmul(inner, p["ffn.W2"]) + p["ffn.b2"] + h
    if use_norm and "ffn.bn" in p.norms:
        out = _bn(out, p, "ffn.bn", mode)
    return out


def _pipeline(z: Tensor, h_in: Tensor, p: LayerParams, f: TechniqueFlags, mode: str,
              rng, norm_key: str = "bn") -> Tensor:
    if f.use_norm:
        z = _bn(z, p, norm_key, mode)
    z = relu(z)
    z = dropout(z, f.dropout_rate, mode, rng)
    if f.use_residual:
        z = z + h_in
    return z


def _check_edges(e, batch, f: TechniqueFlags) -> None:
    if f.use_edge_features:
        if e is None:
            raise ConfigError("use_edge_features is set but no edge features were given")
        if e.shape[0] != batch.num_edges:
            raise DimensionError(f"{e.shape[0]} edge rows for {batch.num_edges} edges")


def _gcn_coefficients(batch) -> tuple[np.ndarray, np.ndarray]:
    key = "gcn_coef"
    if key not in batch.cache:
        dhat = batch.hat_degrees
        batch.cache[key] = (1.0 / np.sqrt(dhat[batch.src] * dhat[batch.dst]), 1.0 / dhat)
    return batch.cache[key]


def gcn_plus_forward(h: Tensor, e: Tensor | None, batch, p: LayerParams,
                     f: TechniqueFlags, mode: str, rng=None) -> Tensor:
    _check_edges(e, batch, f)
    edge_coef, self_coef = _gcn_coefficients(batch)
    hw = matmul(h, p["W"])
    msg = gather_rows(hw, batch.src_index)
    if f.use_edge_features:
        msg = msg + matmul(e, p["W_e"])
    msg = scale_rows(msg, edge_coef)
    agg = segment_sum(msg, batch.dst_index, batch.num_nodes) + scale_rows(hw, self_coef)
    out = _pipeline(agg, h, p, f, mode, rng)
    if f.use_ffn:
        out = ffn_forward(out, p, mode, f.use_norm)
    return out


def gin_plus_forward(h: Tensor, e: Tensor | None, batch, p: LayerParams,
                     f: TechniqueFlags, mode: str, rng=None) -> Tensor:
    _check_edges(e, batch, f)
    msg = gather_rows(h, batch.src_index)
    if f.use_edge_features:
        msg = relu(msg + matmul(e, p["W_e"]))
    self_term = h if GIN_EPS == 0.0 else h * (1.0 + GIN_EPS)
    agg = self_term + segment_sum(msg, batch.dst_index, batch.num_nodes)
    z = matmul(relu(matmul(agg, p["mlp.W1"]) + p["mlp.b1"]), p["mlp.W2"]) + p["mlp.b2"]
    out = _pipeline(z, h, p, f, mode, rng)
    if f.use_ffn:
        out = ffn_forward(out, p, mode, f.use_norm)
    return out


def gatedgcn_plus_forward(h: Tensor, e: Tensor | None, batch, p: LayerParams,
                          f: TechniqueFlags, mode: str, rng=None
                          ) -> tuple[Tensor, Tensor | None]:
    """Returns updated node states and, with edge features on, edge states."""
    _check_edges(e, batch, f)
    n = batch.num_nodes
    self_part = matmul(h, p["W1"])
    neigh = matmul(h, p["W2"])
    gate = (gather_rows(matmul(h, p["W3"]), batch.dst_index)
            + gather_rows(matmul(h, p["W4"]), batch.src_index))
    if f.use_edge_features:
        gate = gate + matmul(e, p["W5"])
    eta = sigmoid(gate)
    num = segment_sum(eta * gather_rows(neigh, batch.src_index), batch.dst_index, n)
    den = segment_sum(eta, batch.dst_index, n) + GATE_EPS
    agg = self_part + div(num, den)
    out = _pipeline(agg, h, p, f, mode, rng)
    if f.use_ffn:
        out = ffn_forward(out, p, mode, f.use_norm)
    e_out = None
    if f.use_edge_features:
        e_out = _pipeline(gate, e, p, f, mode, rng, norm_key="bn_e")
    return out, e_out


def layer_forward(h, e, batch, p: LayerParams, f: TechniqueFlags, mode: str, rng=None):
    """Uniform entry point returning ``(node_states, edge_states)``.

    For GCN+/GIN+ the edge input passes through unchanged.
    """
    if p.backbone == "gcn":
        return gcn_plus_forward(h, e, batch, p, f, mode, rng), e
    if p.backbone == "gin":
        return gin_plus_forward(h, e, batch, p, f, mode, rng), e
    return gatedgcn_plus_forward(h, e, batch, p, f, mode, rng)
