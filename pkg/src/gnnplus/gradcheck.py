"""Finite-difference verification of the backward rules.

Two suites:

* per-op checks, one differentiable primitive at a time, so a broken rule is
  reported by name;
* whole-model checks over every backbone and every on/off combination of the
  six techniques, on small random graphs in train mode.

Every scalar objective is ``sum(out * r)`` for a fixed random ``r``; the
analytic side seeds ``backward`` with ``r`` directly so that no helper op is
involved in the per-op suite.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .graph import DatasetMeta, Graph, batch_graphs
from .layers import BACKBONES, TechniqueFlags
from .model import ModelConfig, build_model
from .rwse import attach_rwse

STEP = 1e-5
TOLERANCE = 1e-4
# Denominators below this are raised to it. Central differences at STEP carry
# about 1e-10 of rounding noise, so a tensor whose true gradient is (near)
# zero, e.g. a bias feeding straight into batch norm, is instead held to an
# absolute bound of TOLERANCE * DENOM_FLOOR = 1e-8.
DENOM_FLOOR = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    worst_tensor: str
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error)) and self.error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = float(np.linalg.norm(analytic - numeric))
    denom = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), DENOM_FLOOR)
    return diff / denom


def numeric_grad(f, x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2.0 * h)
    return g


def check_function(name: str, fn, inputs: dict[str, np.ndarray], rng) -> CheckResult:
    """Compare analytic and numeric gradients of ``sum(fn(**tensors) * r)``."""
    start = time.perf_counter()
    leaves = {k: T.Tensor(v.copy(), requires_grad=True) for k, v in inputs.items()}
    T.get_tape().clear()
    out = fn(**leaves)
    r = rng.standard_normal(out.shape)
    T.backward(out, grad_output=r)

    def objective():
        with T.no_grad():
            return float(np.sum(fn(**leaves).data * r))

    worst, worst_name = 0.0, ""
    for key, leaf in leaves.items():
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        err = relative_error(analytic, numeric_grad(objective, leaf.data))
        if not err <= worst:
            worst, worst_name = err, key
    return CheckResult(name, worst, worst_name, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# per-op suite

def _op_cases(rng):
    """(rule name, function, inputs) triples covering every backward rule."""
    m, d = 5, 3
    ids = np.array([0, 2, 2, 1, 0, 2])
    x = lambda *s: rng.standard_normal(s)
    away = lambda *s: rng.choice([-1.0, 1.0], size=s) * rng.uniform(0.2, 2.0, size=s)
    bn_state = T.BatchNormState.fresh(d)
    labels = rng.integers(0, d, size=m)
    targets = rng.integers(0, 2, size=(m, d)).astype(float)

    def dropout_fn(a):
        return T.dropout(a, 0.4, "train", np.random.default_rng(11))

    return [
        ("add", lambda a, b: T.add(a, b), {"a": x(m, d), "b": x(d)}),
        ("sub", lambda a, b: T.sub(a, b), {"a": x(m, d), "b": x(m, d)}),
        ("mul", lambda a, b: T.mul(a, b), {"a": x(m, d), "b": x(d)}),
        ("div", lambda a, b: T.div(a, b), {"a": x(m, d), "b": away(m, d)}),
        ("relu", lambda a: T.relu(a), {"a": away(m, d)}),
        ("sigmoid", lambda a: T.sigmoid(a), {"a": 3.0 * x(m, d)}),
        ("abs", lambda a: T.abs_(a), {"a": away(m, d)}),
        ("concat", lambda a, b: T.concat_last_dim(a, b), {"a": x(m, 2), "b": x(m, d)}),
        ("matmul", lambda a, b: T.matmul(a, b), {"a": x(m, 4), "b": x(4, d)}),
        ("scale_rows", lambda a: T.scale_rows(a, np.linspace(-1.0, 2.0, m)), {"a": x(m, d)}),
        ("segment_sum", lambda a: T.segment_sum(a, ids, 4), {"a": x(ids.size, d)}),
        ("gather_rows", lambda a: T.gather_rows(a, ids), {"a": x(4, d)}),
        ("segment_max", lambda a: T.segment_max(a, ids, 4), {"a": x(ids.size, d)}),
        ("reduce_sum", lambda a: T.reduce("sum", a, 0), {"a": x(m, d)}),
        ("reduce_mean", lambda a: T.reduce("mean", a, 1), {"a": x(m, d)}),
        ("reduce_max", lambda a: T.reduce("max", a, 1), {"a": x(m, d)}),
        ("batchnorm", lambda a, g, b: T.batchnorm(a, g, b, bn_state, "train"),
         {"a": x(m, d), "g": 1.0 + 0.3 * x(d), "b": x(d)}),
        ("dropout", dropout_fn, {"a": x(m, d)}),
        ("cross_entropy", lambda a: T.cross_entropy(a, labels), {"a": x(m, d)}),
        ("bce", lambda a: T.bce_with_logits(a, targets), {"a": 2.0 * x(m, d)}),
    ]


def check_ops(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check_function(name, fn, inputs, rng) for name, fn, inputs in _op_cases(rng)]


# ---------------------------------------------------------------------------
# whole-model suite

FLAG_NAMES = ("use_edge_features", "use_norm", "dropout", "use_residual", "use_ffn", "use_pe")


def flag_combinations():
    for bits in itertools.product((False, True), repeat=len(FLAG_NAMES)):
        on = dict(zip(FLAG_NAMES, bits))
        yield TechniqueFlags(use_edge_features=on["use_edge_features"], use_norm=on["use_norm"],
                             dropout_rate=0.3 if on["dropout"] else 0.0,
                             use_residual=on["use_residual"], use_ffn=on["use_ffn"],
                             use_pe=on["use_pe"])


def flags_label(f: TechniqueFlags) -> str:
    parts = [("E", f.use_edge_features), ("N", f.use_norm), ("D", f.dropout_rate > 0),
             ("R", f.use_residual), ("F", f.use_ffn), ("P", f.use_pe)]
    return "".join(c if on else "-" for c, on in parts)


def random_graphs(rng, meta: DatasetMeta, count: int = 2, max_nodes: int = 6):
    graphs = []
    for _ in range(count):
        n = int(rng.integers(2, max_nodes + 1))
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(iu.size) < 0.5
        keep[0] = True
        edges = np.stack([iu[keep], ju[keep]], axis=1)
        if meta.node_feat_kind == "categorical":
            feat = np.stack([rng.integers(0, v, size=n) for v in meta.node_feat_dim_or_vocab], 1)
        else:
            feat = rng.standard_normal((n, meta.node_feat_dim_or_vocab))
        if meta.edge_feat_kind == "categorical":
            ef = np.stack([rng.integers(0, v, size=len(edges))
                           for v in meta.edge_feat_dim_or_vocab], 1)
        else:
            ef = rng.standard_normal((len(edges), meta.edge_feat_dim_or_vocab))
        graphs.append(Graph.from_undirected(n, edges, feat, ef,
                                            label=rng.standard_normal(meta.num_outputs)))
    return graphs


def check_model(backbone: str, flags: TechniqueFlags, seed: int, hidden: int = 4,
                max_nodes: int = 6) -> CheckResult:
    """Train-mode gradient check of every parameter of one small model."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    if seed % 2:
        meta = DatasetMeta("graph_regression", "continuous", 3, "continuous", 2, num_outputs=2)
    else:
        meta = DatasetMeta("graph_regression", "categorical", (3, 2), "categorical", (3,),
                           num_outputs=2)
    readout = ("mean", "sum", "max")[seed % 3]
    config = ModelConfig(backbone, 3, hidden, flags, pe_steps=3 if flags.use_pe else 0,
                         readout=readout, seed=seed)
    model = build_model(config, meta)
    # zero-initialised biases can leave every ReLU input at exactly 0, where
    # central differences see the kink; jitter to a generic parameter point
    for _, p in model.params.items():
        p.data += 0.2 * rng.standard_normal(p.data.shape)
    graphs = random_graphs(rng, meta, max_nodes=max_nodes)
    if flags.use_pe:
        attach_rwse(graphs, config.pe_steps)
    batch = batch_graphs(graphs, meta.task)

    def forward():
        # a fresh generator per call keeps the dropout mask fixed
        return model.forward(batch, "train", np.random.default_rng([seed, 99])).values

    T.get_tape().clear()
    out = forward()
    r = rng.standard_normal(out.shape)
    T.backward(out, grad_output=r)
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for k, p in model.params.items()}
    model.params.zero_grad()

    def objective():
        with T.no_grad():
            return float(np.sum(forward().data * r))

    worst, worst_name = 0.0, ""
    for name, p in model.params.items():
        err = relative_error(analytic[name], numeric_grad(objective, p.data))
        if not err <= worst:
            worst, worst_name = err, name
    label = f"{backbone}[{flags_label(flags)}]"
    return CheckResult(label, worst, worst_name, time.perf_counter() - start)


def check_models(backbones=BACKBONES, seed: int = 0, hidden: int = 4, max_nodes: int = 6,
                 progress=None) -> list[CheckResult]:
    results = []
    for b_i, backbone in enumerate(backbones):
        for f_i, flags in enumerate(flag_combinations()):
            res = check_model(backbone, flags, seed + 64 * b_i + f_i, hidden, max_nodes)
            results.append(res)
            if progress is not None:
                progress(res)
    return results
