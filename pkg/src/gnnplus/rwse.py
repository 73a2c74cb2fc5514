"""Random-walk structural encoding and its fusion with node features."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError
from .tensor import Tensor, concat_last_dim, matmul


def transition_matrix(num_nodes: int, src, dst) -> sp.csr_matrix:
    """Row-normalized adjacency ``D^-1 A``; isolated nodes get zero rows."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    adj = sp.csr_matrix((np.ones(src.size), (src, dst)), shape=(num_nodes, num_nodes))
    deg = np.asarray(adj.sum(axis=1)).reshape(-1)
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    return sp.diags(inv) @ adj


def compute_rwse(graph, k: int) -> np.ndarray:
    """Return probabilities ``(P^s)_vv`` for ``s = 1..k`` as an ``N x k`` array."""
    if k < 1:
        raise ConfigError(f"number of walk steps must be >= 1, got {k}")
    n = graph.num_nodes
    out = np.zeros((n, k))
    if n == 0:
        return out
    p = transition_matrix(n, graph.src, graph.dst)
    power = p.toarray()
    out[:, 0] = power.diagonal()
    for step in range(1, k):
        power = np.asarray(p @ power)
        out[:, step] = power.diagonal()
    return out


def attach_rwse(graphs, k: int) -> None:
    """Cache a ``k``-step encoding on every graph that lacks one."""
    for g in graphs:
        if g.pe is None or g.pe.shape[1] != k:
            g.pe = compute_rwse(g, k)


def fuse_pe(x, pe, w_pe) -> Tensor:
    """``[x || pe] @ W_PE``; ``pe`` is treated as a constant."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    pe = Tensor(pe.data if isinstance(pe, Tensor) else pe)
    if x.ndim != 2 or pe.ndim != 2 or x.shape[0] != pe.shape[0]:
        raise DimensionError(f"fuse_pe: features {x.shape} vs encoding {pe.shape}")
    return matmul(concat_last_dim(x, pe), w_pe)
