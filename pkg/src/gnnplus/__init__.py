"""Classic message-passing GNNs (GCN, GIN, GatedGCN) with a shared set of
architectural enhancements, built on a small numpy autodiff core."""

from .errors import (
    ConfigError,
    DatasetError,
    DimensionError,
    GNNPlusError,
    ParseError,
    SchemaError,
    SegmentIndexError,
    StateError,
    UndefinedMetricError,
    ValidationError,
)
from .graph import (
    Dataset,
    DatasetMeta,
    Graph,
    GraphBatch,
    batch_graphs,
    generate_regression_task,
    generate_sbm_node_task,
    load_dataset,
    save_dataset,
)
from .layers import TechniqueFlags
from .model import GNNPlus, ModelConfig, build_model, load_checkpoint, loss, save_checkpoint
from .rwse import attach_rwse, compute_rwse
from .training import TrainConfig, adamw_step, compute_metrics, evaluate, lr_at, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DatasetError", "DimensionError", "GNNPlusError", "ParseError",
    "SchemaError", "SegmentIndexError", "StateError", "UndefinedMetricError",
    "ValidationError", "Dataset", "DatasetMeta", "Graph", "GraphBatch", "batch_graphs",
    "generate_regression_task", "generate_sbm_node_task", "load_dataset", "save_dataset",
    "TechniqueFlags", "GNNPlus", "ModelConfig", "build_model", "load_checkpoint", "loss",
    "save_checkpoint", "attach_rwse", "compute_rwse", "TrainConfig", "adamw_step",
    "compute_metrics", "evaluate", "lr_at", "train",
]
