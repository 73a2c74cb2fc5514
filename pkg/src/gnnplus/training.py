"""AdamW, the warmup/cosine schedule, evaluation and the epoch loop."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DatasetError, StateError
from .graph import Dataset, batch_graphs
from .metrics import HIGHER_IS_BETTER, compute_metrics
from .model import GNNPlus, Prediction, loss
from .rwse import attach_rwse
from .tensor import ParameterStore, Tensor, backward, get_tape, no_grad

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 64
DEFAULT_METRIC = {"graph_regression": "mae", "graph_classification": "accuracy",
                  "graph_multilabel": "average_precision",
                  "node_classification": "accuracy"}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    warmup_epochs: int = 5
    weight_decay: float = 0.0
    batch_size: int = 32
    seed: int = 0
    eval_metric: str | None = None
    selection: str | None = None
    grad_clip: float | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epochs and warmup_epochs must be non-negative")
        if self.warmup_epochs > self.epochs:
            raise ConfigError("warmup_epochs cannot exceed epochs")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.eval_metric is not None and self.eval_metric not in HIGHER_IS_BETTER:
            raise ConfigError(f"unknown eval_metric {self.eval_metric!r}")
        if self.selection not in (None, "max", "min"):
            raise ConfigError("selection must be 'max' or 'min'")

    def metric_for(self, task: str) -> tuple[str, str]:
        name = self.eval_metric or DEFAULT_METRIC[task]
        mode = self.selection or ("max" if HIGHER_IS_BETTER[name] else "min")
        return name, mode

    def to_json(self) -> dict:
        return asdict(self)


def adamw_step(store: ParameterStore, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """One AdamW update with decoupled weight decay; clears gradients."""
    for name, p in store.items():
        if p.grad is None:
            raise StateError(f"parameter {name!r} has no gradient")
    b1, b2 = betas
    store.step += 1
    t = store.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in store.items():
        g = p.grad
        if name not in store.exp_avg:
            store.exp_avg[name] = np.zeros_like(p.data)
            store.exp_avg_sq[name] = np.zeros_like(p.data)
        m = store.exp_avg[name]
        v = store.exp_avg_sq[name]
        if weight_decay:
            p.data *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += eps
        p.data -= (lr / c1) * m / denom
        p.grad = None


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Linear warmup to the base rate, then cosine decay towards zero."""
    base = config.learning_rate
    w, total = config.warmup_epochs, config.epochs
    if epoch < w:
        return base * (epoch + 1) / w
    if total == w:
        return base
    return base * 0.5 * (1.0 + math.cos(math.pi * (epoch - w) / (total - w)))


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(p.grad * p.grad)) for _, p in store.items()
                          if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, p in store.items():
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def _num_items(batch, task: str) -> int:
    return batch.num_nodes if task == "node_classification" else batch.num_graphs


def make_batches(graphs, task: str, batch_size: int = EVAL_BATCH_SIZE):
    return [batch_graphs(graphs[i:i + batch_size], task)
            for i in range(0, len(graphs), batch_size)]


def predict(model: GNNPlus, batches) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode outputs and labels concatenated over ``batches``."""
    outs, labels = [], []
    with no_grad():
        for b in batches:
            outs.append(model.forward(b, "eval").values.data)
            labels.append(np.asarray(b.labels))
    return np.concatenate(outs, axis=0), np.concatenate(labels, axis=0)


def evaluate(model: GNNPlus, batches) -> dict:
    """Metrics plus mean loss over pre-built eval batches."""
    if not batches:
        raise DatasetError("cannot evaluate an empty split")
    task = model.meta.task
    out, labels = predict(model, batches)
    with no_grad():
        value = loss(Prediction(Tensor(out), task), labels).item()
    metrics = compute_metrics(out, labels, task, model.meta.num_outputs)
    metrics["loss"] = value
    return metrics


@dataclass
class TrainResult:
    best_state: dict
    log: list = field(default_factory=list)
    best_epoch: int | None = None
    val_metric: float | None = None
    test_metric: float | None = None
    metric: str = ""


def train(model: GNNPlus, dataset: Dataset, config: TrainConfig, verbose: bool = False
          ) -> TrainResult:
    """Run the epoch loop and keep the checkpoint with the best validation metric.

    On return the model holds the selected parameters.
    """
    task = dataset.task
    for split in ("train", "val", "test"):
        if not dataset.splits.get(split):
            raise DatasetError(f"split {split!r} is empty or missing")
    if model.config.flags.use_pe:
        attach_rwse(dataset.graphs, model.config.pe_steps)
    metric, mode = config.metric_for(task)
    train_graphs = dataset.split("train")
    val_batches = make_batches(dataset.split("val"), task)
    test_batches = make_batches(dataset.split("test"), task)

    result = TrainResult(best_state=model.state(), metric=metric)
    better = (lambda a, b: a > b) if mode == "max" else (lambda a, b: a < b)
    get_tape().clear()
    for epoch in range(config.epochs):
        lr = lr_at(epoch, config)
        order = np.random.default_rng([config.seed, epoch]).permutation(len(train_graphs))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = batch_graphs([train_graphs[i] for i in order[start:start + config.batch_size]],
                                 task)
            pred = model.forward(batch, "train")
            value = loss(pred, batch.labels, task)
            backward(value)
            if config.grad_clip:
                clip_grad_norm(model.params, config.grad_clip)
            adamw_step(model.params, lr, weight_decay=config.weight_decay)
            n = _num_items(batch, task)
            total += value.item() * n
            count += n
        val = evaluate(model, val_batches)[metric]
        test = evaluate(model, test_batches)[metric]
        row = {"epoch": epoch, "lr": lr, "train_loss": total / max(count, 1),
               "val_metric": val, "test_metric": test}
        result.log.append(row)
        if verbose:
            logger.info("epoch %d lr %.3g loss %.5f val %.5f test %.5f",
                        epoch, lr, row["train_loss"], val, test)
        if result.best_epoch is None or better(val, result.val_metric):
            result.best_epoch = epoch
            result.val_metric = val
            result.test_metric = test
            result.best_state = model.state()
    model.load_state(result.best_state)
    return result
