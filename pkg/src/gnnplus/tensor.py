"""Dense fp64 tensors with tape-based reverse-mode differentiation.

Every differentiable primitive records one entry on the thread's tape. The
backward rules live in ``BACKWARD_RULES`` keyed by op name and are looked up
at backward time, so a rule can be swapped out (the gradient checker's
negative control relies on this).
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ConfigError, SegmentIndexError, StateError

DTYPE = np.float64


class Tensor:
    """A float64 array that may participate in the differentiation tape."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_gen")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self._gen = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# tape

@dataclass
class _Entry:
    op: str
    inputs: tuple
    out: Tensor
    ctx: dict


class Tape:
    """Ordered record of differentiable operations for one thread."""

    def __init__(self):
        self.entries: list[_Entry] = []
        self.generation = 0
        self.enabled = True

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, inputs: tuple, out: Tensor, ctx: dict) -> None:
        out.node_id = len(self.entries)
        out._gen = self.generation
        self.entries.append(_Entry(op, inputs, out, ctx))

    def owns(self, t: Tensor) -> bool:
        return t.node_id is not None and t._gen == self.generation

    def clear(self) -> None:
        self.entries = []
        self.generation += 1


_local = threading.local()


def get_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = _local.tape = Tape()
    return tape


@contextmanager
def no_grad():
    """Run operations without recording them."""
    tape = get_tape()
    prev = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = prev


BackwardRule = Callable[[dict, np.ndarray, tuple, tuple], Sequence]
BACKWARD_RULES: dict[str, BackwardRule] = {}


def _rule(name: str):
    def register(fn):
        BACKWARD_RULES[name] = fn
        return fn
    return register


def _emit(op: str, data: np.ndarray, inputs: tuple, ctx: dict | None = None) -> Tensor:
    tape = get_tape()
    requires = tape.enabled and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        tape.record(op, inputs, out, ctx if ctx is not None else {})
    return out


def backward(loss: Tensor, retain_tape: bool = False,
             grad_output: np.ndarray | None = None) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on.

    ``grad_output`` seeds the traversal with an explicit upstream gradient,
    which makes a vector-Jacobian product of a non-scalar output. The tape is
    cleared afterwards unless ``retain_tape`` is set.
    """
    if grad_output is None:
        if loss.data.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        seed = np.ones_like(loss.data)
    else:
        seed = np.array(grad_output, dtype=DTYPE)
        if seed.shape != loss.shape:
            raise DimensionError(f"grad_output shape {seed.shape} does not match {loss.shape}")
    if not loss.requires_grad:
        return
    tape = get_tape()
    if not tape.owns(loss):
        loss.grad = seed if loss.grad is None else loss.grad + seed
        return
    grads: dict[int, np.ndarray] = {loss.node_id: seed}
    entries = tape.entries
    for idx in range(loss.node_id, -1, -1):
        g = grads.pop(idx, None)
        if g is None:
            continue
        entry = entries[idx]
        entry.out.grad = g
        needs = tuple(t.requires_grad for t in entry.inputs)
        in_grads = BACKWARD_RULES[entry.op](entry.ctx, g, entry.inputs, needs)
        for t, gi, need in zip(entry.inputs, in_grads, needs):
            if not need or gi is None:
                continue
            if tape.owns(t):
                prev = grads.get(t.node_id)
                grads[t.node_id] = gi if prev is None else prev + gi
            else:
                t.grad = np.array(gi, dtype=DTYPE) if t.grad is None else t.grad + gi
    if not retain_tape:
        tape.clear()


# ---------------------------------------------------------------------------
# elementwise

def _check_broadcast(sa: tuple, sb: tuple, op: str) -> None:
    if sa == sb:
        return
    small, big = (sb, sa) if len(sb) <= len(sa) else (sa, sb)
    if all(d == 1 for d in small):
        return
    if big[len(big) - len(small):] == small:
        return
    raise DimensionError(f"{op}: shapes {sa} and {sb} are not broadcast-compatible "
                         "(only scalar and trailing-dimension broadcast supported)")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if all(d == 1 for d in shape):
        return np.asarray(g.sum()).reshape(shape)
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "add")
    return _emit("add", a.data + b.data, (a, b))


@_rule("add")
def _add_backward(ctx, g, inputs, needs):
    a, b = inputs
    return (_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "sub")
    return _emit("sub", a.data - b.data, (a, b))


@_rule("sub")
def _sub_backward(ctx, g, inputs, needs):
    a, b = inputs
    return (_unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "mul")
    return _emit("mul", a.data * b.data, (a, b))


@_rule("mul")
def _mul_backward(ctx, g, inputs, needs):
    a, b = inputs
    return (_unbroadcast(g * b.data, a.shape) if needs[0] else None,
            _unbroadcast(g * a.data, b.shape) if needs[1] else None)


def div(a, b) -> Tensor:
    """Elementwise quotient; ``b`` must match ``a`` or be a scalar."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape, "div")
    return _emit("div", a.data / b.data, (a, b))


@_rule("div")
def _div_backward(ctx, g, inputs, needs):
    a, b = inputs
    ga = _unbroadcast(g / b.data, a.shape) if needs[0] else None
    gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if needs[1] else None
    return ga, gb


def relu(x) -> Tensor:
    x = as_tensor(x)
    return _emit("relu", np.maximum(x.data, 0.0), (x,))


@_rule("relu")
def _relu_backward(ctx, g, inputs, needs):
    return (g * (inputs[0].data > 0),)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # split by sign so exp never overflows
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _emit("sigmoid", out, (x,), {"y": out})


@_rule("sigmoid")
def _sigmoid_backward(ctx, g, inputs, needs):
    y = ctx["y"]
    return (g * y * (1.0 - y),)


def abs_(x) -> Tensor:
    x = as_tensor(x)
    return _emit("abs", np.abs(x.data), (x,))


@_rule("abs")
def _abs_backward(ctx, g, inputs, needs):
    return (g * np.sign(inputs[0].data),)


def concat_last_dim(*operands) -> Tensor:
    ts = tuple(as_tensor(t) for t in operands)
    if not ts:
        raise DimensionError("concat_last_dim needs at least one operand")
    lead = ts[0].shape[:-1]
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or t.shape[:-1] != lead:
            raise DimensionError(f"concat_last_dim: shapes {[t.shape for t in ts]} "
                                 "disagree outside the last dimension")
    data = np.concatenate([t.data for t in ts], axis=-1)
    widths = [t.shape[-1] for t in ts]
    return _emit("concat", data, ts, {"splits": np.cumsum(widths)[:-1]})


@_rule("concat")
def _concat_backward(ctx, g, inputs, needs):
    return tuple(np.split(g, ctx["splits"], axis=-1))


def elementwise(kind: str, *operands) -> Tensor:
    """Dispatch by name to the pointwise primitives."""
    table = {"add": add, "sub": sub, "mul": mul, "div": div, "relu": relu,
             "sigmoid": sigmoid, "abs": abs_, "concat_last_dim": concat_last_dim}
    try:
        fn = table[kind]
    except KeyError:
        raise ConfigError(f"unknown elementwise kind {kind!r}") from None
    return fn(*operands)


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    return _emit("matmul", a.data @ b.data, (a, b))


@_rule("matmul")
def _matmul_backward(ctx, g, inputs, needs):
    a, b = inputs
    return (g @ b.data.T if needs[0] else None,
            a.data.T @ g if needs[1] else None)


def scale_rows(x, coeffs: np.ndarray) -> Tensor:
    """Multiply row ``i`` of ``x`` by the constant ``coeffs[i]``."""
    x = as_tensor(x)
    c = np.asarray(coeffs, dtype=DTYPE)
    if c.ndim != 1 or c.shape[0] != x.shape[0]:
        raise DimensionError(f"scale_rows: {c.shape} coefficients for {x.shape} rows")
    c2 = c.reshape((-1,) + (1,) * (x.ndim - 1))
    return _emit("scale_rows", x.data * c2, (x,), {"c": c2})


@_rule("scale_rows")
def _scale_rows_backward(ctx, g, inputs, needs):
    return (g * ctx["c"],)


# ---------------------------------------------------------------------------
# segment ops

class SegmentIndex:
    """Validated integer ids with a cached sparse scatter matrix.

    ``matrix`` has shape ``(num_segments, len(ids))`` with a single one per
    column, so ``matrix @ values`` is the segment sum. CSR products visit
    entries in a fixed order, which keeps results bit-reproducible.
    """

    def __init__(self, ids, num_segments: int):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        num_segments = int(num_segments)
        if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
            bad = ids[(ids < 0) | (ids >= num_segments)][0]
            raise SegmentIndexError(f"segment id {bad} outside [0, {num_segments})")
        self.ids = ids
        self.num_segments = num_segments
        self._matrix = None
        self._counts = None

    def __len__(self) -> int:
        return self.ids.size

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            n = self.ids.size
            self._matrix = sp.csr_matrix(
                (np.ones(n, dtype=DTYPE), (self.ids, np.arange(n))),
                shape=(self.num_segments, n))
        return self._matrix

    @property
    def counts(self) -> np.ndarray:
        if self._counts is None:
            self._counts = np.bincount(self.ids, minlength=self.num_segments)
        return self._counts

    def scatter(self, values: np.ndarray) -> np.ndarray:
        rest = values.shape[1:]
        if self.ids.size == 0:
            return np.zeros((self.num_segments,) + rest, dtype=DTYPE)
        flat = values.reshape(values.shape[0], -1)
        return np.asarray(self.matrix @ flat).reshape((self.num_segments,) + rest)


def _as_index(ids, num_segments: int) -> SegmentIndex:
    if isinstance(ids, SegmentIndex):
        if ids.num_segments != num_segments:
            raise DimensionError(f"segment index built for {ids.num_segments} "
                                 f"segments, used with {num_segments}")
        return ids
    return SegmentIndex(ids, num_segments)


def segment_sum(values, segment_ids, num_segments: int) -> Tensor:
    """``out[s] = sum of values[i] over i with segment_ids[i] == s``."""
    values = as_tensor(values)
    index = _as_index(segment_ids, num_segments)
    if values.shape[0] != len(index):
        raise DimensionError(f"segment_sum: {values.shape[0]} rows but "
                             f"{len(index)} segment ids")
    return _emit("segment_sum", index.scatter(values.data), (values,), {"index": index})


@_rule("segment_sum")
def _segment_sum_backward(ctx, g, inputs, needs):
    return (g[ctx["index"].ids],)


def gather_rows(src, index) -> Tensor:
    """``out[i] = src[index[i]]``; duplicate indices accumulate in backward."""
    src = as_tensor(src)
    if src.ndim < 1:
        raise DimensionError("gather_rows needs at least a 1-D source")
    index = _as_index(index, src.shape[0])
    return _emit("gather_rows", src.data[index.ids], (src,), {"index": index})


@_rule("gather_rows")
def _gather_rows_backward(ctx, g, inputs, needs):
    return (ctx["index"].scatter(g),)


def segment_max(values, segment_ids, num_segments: int) -> Tensor:
    """Per-segment column-wise maximum; empty segments give zero rows.

    The gradient goes to the lowest-index row attaining the maximum.
    """
    values = as_tensor(values)
    index = _as_index(segment_ids, num_segments)
    if values.ndim != 2 or values.shape[0] != len(index):
        raise DimensionError(f"segment_max: values {values.shape} vs {len(index)} ids")
    n, d = values.shape
    out = np.zeros((num_segments, d), dtype=DTYPE)
    winners = np.full((num_segments, d), -1, dtype=np.int64)
    if n:
        order = np.argsort(index.ids, kind="stable")
        sorted_ids = index.ids[order]
        vals = values.data[order]
        starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
        present = sorted_ids[starts]
        seg_max = np.maximum.reduceat(vals, starts, axis=0)
        out[present] = seg_max
        # first row (in original order) equal to the max, per segment and column
        rank_of = np.repeat(np.arange(starts.size), np.diff(np.r_[starts, n]))
        hit = vals == seg_max[rank_of]
        pos = np.where(hit, order[:, None], np.iinfo(np.int64).max)
        winners[present] = np.minimum.reduceat(pos, starts, axis=0)
    return _emit("segment_max", out, (values,), {"winners": winners, "n": n})


@_rule("segment_max")
def _segment_max_backward(ctx, g, inputs, needs):
    winners = ctx["winners"]
    d = winners.shape[1]
    gx = np.zeros((ctx["n"], d), dtype=DTYPE)
    seg, col = np.nonzero(winners >= 0)
    np.add.at(gx, (winners[seg, col], col), g[seg, col])
    return (gx,)


# ---------------------------------------------------------------------------
# reductions

def reduce(kind: str, x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"reduce: axis {axis} invalid for shape {x.shape}")
    if kind == "sum":
        return _emit("reduce_sum", np.sum(x.data, axis=axis), (x,), {"axis": axis})
    if kind == "mean":
        count = x.data.size if axis is None else x.shape[axis]
        return _emit("reduce_mean", np.mean(x.data, axis=axis), (x,),
                     {"axis": axis, "count": count})
    if kind == "max":
        if axis is None:
            flat = int(np.argmax(x.data))
            return _emit("reduce_max", x.data.reshape(-1)[flat], (x,),
                         {"axis": None, "arg": flat})
        arg = np.argmax(x.data, axis=axis)
        out = np.take_along_axis(x.data, np.expand_dims(arg, axis), axis=axis)
        return _emit("reduce_max", np.squeeze(out, axis=axis), (x,),
                     {"axis": axis, "arg": arg})
    raise ConfigError(f"unknown reduction {kind!r}")


def _expand(g, shape, axis):
    if axis is None:
        return np.broadcast_to(g, shape)
    return np.broadcast_to(np.expand_dims(g, axis), shape)


@_rule("reduce_sum")
def _reduce_sum_backward(ctx, g, inputs, needs):
    return (np.array(_expand(g, inputs[0].shape, ctx["axis"])),)


@_rule("reduce_mean")
def _reduce_mean_backward(ctx, g, inputs, needs):
    return (np.array(_expand(g, inputs[0].shape, ctx["axis"])) / ctx["count"],)


@_rule("reduce_max")
def _reduce_max_backward(ctx, g, inputs, needs):
    x = inputs[0]
    gx = np.zeros_like(x.data)
    axis = ctx["axis"]
    if axis is None:
        gx.reshape(-1)[ctx["arg"]] = g
    else:
        np.put_along_axis(gx, np.expand_dims(ctx["arg"], axis),
                          np.expand_dims(g, axis), axis=axis)
    return (gx,)


def sum_(x) -> Tensor:
    return reduce("sum", x)


def mean(x) -> Tensor:
    return reduce("mean", x)


# ---------------------------------------------------------------------------
# normalization and dropout

@dataclass
class BatchNormState:
    """Running statistics; variance is stored as the biased estimate."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, dim: int) -> "BatchNormState":
        return cls(np.zeros(dim, dtype=DTYPE), np.ones(dim, dtype=DTYPE))


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batchnorm(x, gamma, beta, state: BatchNormState, mode: str,
              momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError(f"batchnorm: x {x.shape}, gamma {gamma.shape}, "
                             f"beta {beta.shape}")
    if mode == "train":
        n = x.shape[0]
        if n == 0:
            raise DimensionError("batchnorm in train mode needs a non-empty batch")
        mu = x.data.mean(axis=0)
        centered = x.data - mu
        var = (centered * centered).mean(axis=0)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv
        state.running_mean = (1.0 - momentum) * state.running_mean + momentum * mu
        state.running_var = (1.0 - momentum) * state.running_var + momentum * var
    elif mode == "eval":
        inv = 1.0 / np.sqrt(state.running_var + eps)
        xhat = (x.data - state.running_mean) * inv
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    out = xhat * gamma.data + beta.data
    return _emit("batchnorm", out, (x, gamma, beta),
                 {"xhat": xhat, "inv": inv, "train": mode == "train"})


@_rule("batchnorm")
def _batchnorm_backward(ctx, g, inputs, needs):
    _, gamma, _ = inputs
    xhat, inv = ctx["xhat"], ctx["inv"]
    gx = None
    g_sum = g.sum(axis=0)
    g_xhat = np.einsum("ij,ij->j", g, xhat)
    if needs[0]:
        scale = gamma.data * inv
        if ctx["train"]:
            n = g.shape[0]
            # fold the two batch-statistic terms into per-column coefficients
            gx = xhat * (-g_xhat / n)
            gx += g
            gx -= g_sum / n
            gx *= scale
        else:
            gx = g * scale
    return gx, (g_xhat if needs[1] else None), (g_sum if needs[2] else None)


def dropout(x, rate: float, mode: str, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x
    if mode != "train":
        raise ConfigError(f"unknown mode {mode!r}")
    if rng is None:
        raise StateError("dropout in train mode needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit("dropout", x.data * mask, (x,), {"mask": mask})


@_rule("dropout")
def _dropout_backward(ctx, g, inputs, needs):
    return (g * ctx["mask"],)


# ---------------------------------------------------------------------------
# fused losses

def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of integer ``labels`` against ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs "
                             f"{labels.size} labels")
    n = labels.size
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(n), labels]
    loss = np.mean(logsum - picked) if n else 0.0
    return _emit("cross_entropy", np.asarray(loss), (logits,),
                 {"z": z, "logsum": logsum, "labels": labels})


@_rule("cross_entropy")
def _cross_entropy_backward(ctx, g, inputs, needs):
    probs = np.exp(ctx["z"] - ctx["logsum"][:, None])
    n = probs.shape[0]
    probs[np.arange(n), ctx["labels"]] -= 1.0
    return (probs * (g / max(n, 1)),)


def bce_with_logits(logits, targets) -> Tensor:
    """Mean binary cross-entropy over every (item, label) entry."""
    logits = as_tensor(logits)
    y = np.asarray(targets, dtype=DTYPE)
    if y.shape != logits.shape:
        raise DimensionError(f"bce_with_logits: logits {logits.shape} vs "
                             f"targets {y.shape}")
    x = logits.data
    terms = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    loss = terms.mean() if terms.size else 0.0
    return _emit("bce", np.asarray(loss), (logits,), {"y": y})


@_rule("bce")
def _bce_backward(ctx, g, inputs, needs):
    x = inputs[0].data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return ((s - ctx["y"]) * (g / max(x.size, 1)),)


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ParameterStore:
    """Named trainable tensors plus AdamW moment buffers.

    Moment buffers are created lazily on the first optimizer step.
    """

    params: "OrderedDict[str, Tensor]" = field(default_factory=OrderedDict)
    exp_avg: dict = field(default_factory=dict)
    exp_avg_sq: dict = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, data) -> Tensor:
        if name in self.params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(data, dtype=DTYPE), requires_grad=True)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def num_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(arrays)
        if missing:
            raise StateError(f"missing parameters: {sorted(missing)}")
        for k, t in self.params.items():
            a = np.asarray(arrays[k], dtype=DTYPE)
            if a.shape != t.shape:
                raise DimensionError(f"parameter {k}: shape {a.shape} != {t.shape}")
            t.data = a.copy()
