"""Similarity scoring and anomaly detection for temporal graph signals."""

from .adapters import DATASET_KINDS, DATASET_SHAPES, adapt_dataset
from .anomaly import (
    AlarmPolicy,
    AnomalyEvent,
    detect,
    detect_with_thresholds,
    score_stream,
)
from .autodiff import Tape, Tensor, backward, grad_check
from .baselines import (
    BaselinePrediction,
    baseline_report,
    ols_fit,
    random_baseline,
    tsr_baseline,
)
from .data import (
    NodeBounds,
    TemporalGraphSignal,
    load_canonical,
    node_bounds,
    normalize_features,
    normalized_adjacency,
    write_canonical,
)
from .errors import (
    AdapterError,
    ConfigError,
    ContractError,
    DimensionError,
    ParseError,
    TgsimError,
    TrainingError,
)
from .model import (
    Checkpoint,
    ModelConfig,
    ModelParams,
    Provenance,
    forward,
    forward_pass,
    load_checkpoint,
    save_checkpoint,
)
from .noise import (
    Bucket,
    LabeledBucket,
    NoiseSpec,
    bucketize,
    inject_noise,
    load_labeled_buckets,
    write_labeled_buckets,
)
from .training import (
    Adam,
    FoldResult,
    MetricsReport,
    Sgd,
    TrainConfig,
    compute_metrics,
    cross_validate,
    evaluate,
    kfold_split,
    load_report,
    train,
    write_report,
    write_report_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "Adam",
    "AlarmPolicy",
    "AnomalyEvent",
    "BaselinePrediction",
    "Bucket",
    "Checkpoint",
    "ConfigError",
    "ContractError",
    "DATASET_KINDS",
    "DATASET_SHAPES",
    "DimensionError",
    "FoldResult",
    "LabeledBucket",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "NodeBounds",
    "NoiseSpec",
    "ParseError",
    "Provenance",
    "Sgd",
    "Tape",
    "TemporalGraphSignal",
    "Tensor",
    "TgsimError",
    "TrainConfig",
    "TrainingError",
    "adapt_dataset",
    "backward",
    "baseline_report",
    "bucketize",
    "compute_metrics",
    "cross_validate",
    "detect",
    "detect_with_thresholds",
    "evaluate",
    "forward",
    "forward_pass",
    "grad_check",
    "inject_noise",
    "kfold_split",
    "load_canonical",
    "load_checkpoint",
    "load_labeled_buckets",
    "load_report",
    "node_bounds",
    "normalize_features",
    "normalized_adjacency",
    "ols_fit",
    "random_baseline",
    "save_checkpoint",
    "score_stream",
    "train",
    "tsr_baseline",
    "write_canonical",
    "write_labeled_buckets",
    "write_report",
    "write_report_csv",
]
