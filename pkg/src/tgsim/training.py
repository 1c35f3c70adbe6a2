"""Training loop, cross-validation protocol, and metrics reporting.

The model module stays purely functional; everything stateful about a run
(optimizer moments, epoch shuffles, fold assignment) lives here.  Every
source of randomness is seeded, so a (buckets, config) pair pins the
resulting report down to the byte.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .data import NodeBounds, normalize_features, normalized_adjacency
from .errors import ConfigError, ContractError, ParseError, TrainingError
from .model import Checkpoint, ModelConfig, ModelParams, Provenance, forward, forward_pass

OPTIMIZER_KINDS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    `bucket_length` is recorded here even though the buckets are built
    elsewhere; train() checks the two agree so a report's config echo can
    be trusted.
    """

    epochs: int = 30
    learning_rate: float = 0.01
    bucket_length: int = 10
    folds: int = 3
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 1

    def __post_init__(self):
        if not isinstance(self.epochs, int) or isinstance(self.epochs, bool) or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if not (self.learning_rate > 0):
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate!r}")
        if not isinstance(self.bucket_length, int) or self.bucket_length < 2:
            raise ConfigError(f"bucket length must be an integer >= 2, got {self.bucket_length!r}")
        if not isinstance(self.folds, int) or self.folds < 2:
            raise ConfigError(f"need at least 2 folds, got {self.folds!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        kind = self.optimizer.lower() if isinstance(self.optimizer, str) else self.optimizer
        if kind not in OPTIMIZER_KINDS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}, expected one of {OPTIMIZER_KINDS}")
        object.__setattr__(self, "optimizer", kind)
        if not (0.0 <= self.beta1 < 1.0) or not (0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got ({self.beta1!r}, {self.beta2!r})")
        if not (self.epsilon > 0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.batch_size != 1:
            # the update rule is defined per bucket; batching would change it
            raise ConfigError(f"only batch_size=1 is supported, got {self.batch_size!r}")


class Sgd:
    """Plain gradient descent on a fixed list of tensors."""

    def __init__(self, tensors, learning_rate: float):
        self.tensors = list(tensors)
        self.learning_rate = float(learning_rate)

    def step(self) -> None:
        for t in self.tensors:
            t.value -= self.learning_rate * t.grad


class Adam:
    """Moment-corrected gradient steps.

    State arrays are kept parallel to the tensor list; `steps` counts
    completed updates and drives the bias correction.
    """

    def __init__(self, tensors, learning_rate: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.tensors = list(tensors)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.first = [np.zeros_like(t.value) for t in self.tensors]
        self.second = [np.zeros_like(t.value) for t in self.tensors]
        self.steps = 0

    def step(self) -> None:
        self.steps += 1
        first_correction = 1.0 - self.beta1 ** self.steps
        second_correction = 1.0 - self.beta2 ** self.steps
        for t, m, v in zip(self.tensors, self.first, self.second):
            m *= self.beta1
            m += (1.0 - self.beta1) * t.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * t.grad ** 2
            t.value -= self.learning_rate * (m / first_correction) / (
                np.sqrt(v / second_correction) + self.epsilon
            )


def make_optimizer(params: ModelParams, config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(params.tensors(), config.learning_rate)
    return Adam(params.tensors(), config.learning_rate, config.beta1, config.beta2, config.epsilon)


def compute_metrics(preds, labels) -> tuple[float, float, float]:
    """Mean squared error, mean absolute error, and root MSE as plain floats."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.ndim != 1 or y.ndim != 1:
        raise ContractError(f"expected flat sequences, got shapes {p.shape} and {y.shape}")
    if p.shape != y.shape:
        raise ContractError(f"{p.size} predictions vs {y.size} labels")
    if p.size == 0:
        raise ContractError("cannot compute metrics over zero samples")
    err = p - y
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    return mse, mae, math.sqrt(mse)


def kfold_split(buckets, folds: int, seed: int, shuffle: bool = True):
    """Partition buckets into (train, test) pairs, one per fold.

    A seeded shuffle precedes the split, then the shuffled order is cut
    into near-equal contiguous chunks (the first n mod K chunks take the
    extra element).  With shuffle=False the chunks are contiguous in the
    original order, which keeps overlapping windows out of each other's
    folds at the cost of a temporal-distribution mismatch.
    """
    buckets = list(buckets)
    n = len(buckets)
    if folds < 2:
        raise ContractError(f"need at least 2 folds, got {folds}")
    if folds > n:
        raise ContractError(f"cannot split {n} buckets into {folds} folds")
    order = np.random.default_rng(seed).permutation(n) if shuffle else np.arange(n)
    base, extra = divmod(n, folds)
    chunks = []
    at = 0
    for i in range(folds):
        size = base + (1 if i < extra else 0)
        chunks.append([int(j) for j in order[at:at + size]])
        at += size
    pairs = []
    for i in range(folds):
        test = [buckets[j] for j in chunks[i]]
        train = [buckets[j] for k, chunk in enumerate(chunks) if k != i for j in chunk]
        pairs.append((train, test))
    return pairs


@dataclass(frozen=True)
class FoldResult:
    """Metrics plus the raw predictions behind them for one test fold."""

    mse: float
    mae: float
    rmse: float
    sample_count: int
    predictions: tuple[float, ...]
    labels: tuple[float, ...]
    starts: tuple[int, ...]

    def __post_init__(self):
        if self.sample_count < 1:
            raise ContractError("a fold must hold at least one sample")
        lengths = {len(self.predictions), len(self.labels), len(self.starts), self.sample_count}
        if len(lengths) != 1:
            raise ContractError(f"fold arrays disagree on sample count: {sorted(lengths)}")
        if abs(self.rmse - math.sqrt(self.mse)) > 1e-12:
            raise ContractError(f"rmse {self.rmse!r} is not the square root of mse {self.mse!r}")
        if self.mae > self.rmse + 1e-12:
            raise ContractError(f"mae {self.mae!r} exceeds rmse {self.rmse!r}")


@dataclass(frozen=True)
class MetricsReport:
    """Per-fold metrics with their mean, plus enough config to rerun."""

    dataset: str
    model: str
    folds: tuple[FoldResult, ...]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.folds:
            raise ContractError("a report needs at least one fold")
        object.__setattr__(self, "folds", tuple(self.folds))

    @property
    def mean_mse(self) -> float:
        return float(np.mean([f.mse for f in self.folds]))

    @property
    def mean_mae(self) -> float:
        return float(np.mean([f.mae for f in self.folds]))

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([f.rmse for f in self.folds]))

    @property
    def total_samples(self) -> int:
        return sum(f.sample_count for f in self.folds)


def bounds_from_buckets(buckets) -> NodeBounds:
    """Per node-and-channel min and max over every snapshot in the buckets."""
    buckets = list(buckets)
    if not buckets:
        raise ContractError("cannot derive bounds from zero buckets")
    stacked = np.concatenate([b.snapshots for b in buckets], axis=0)
    return NodeBounds(mins=stacked.min(axis=0), maxs=stacked.max(axis=0))


def _check_buckets(buckets, config: TrainConfig, model_config: ModelConfig):
    if not buckets:
        raise ContractError("need at least one bucket")
    signal = buckets[0].bucket.signal
    n, channels = signal.num_nodes, signal.num_channels
    if channels != model_config.input_channels:
        raise ConfigError(
            f"buckets carry {channels} channels, model expects {model_config.input_channels}"
        )
    for b in buckets:
        s = b.bucket.signal
        if (s.num_nodes, s.num_channels) != (n, channels):
            raise ContractError(
                f"bucket at start {b.bucket.start} has shape ({s.num_nodes}, {s.num_channels}), "
                f"expected ({n}, {channels})"
            )
        if b.bucket.length != config.bucket_length:
            raise ContractError(
                f"bucket at start {b.bucket.start} has length {b.bucket.length}, "
                f"config says {config.bucket_length}"
            )
    return signal


def train(train_set, config: TrainConfig, model_config: ModelConfig, *,
          bounds: NodeBounds | None = None, initial: ModelParams | None = None,
          resample=None):
    """Fit a model on labeled buckets; returns (checkpoint, loss history).

    One optimizer step per bucket, squared error against the bucket label,
    buckets visited in a fresh seeded shuffle each epoch.  `bounds` defaults
    to the min and max of the training windows themselves and is stored in
    the checkpoint so later scoring normalizes identically.  `resample`,
    when given, is called with the epoch index before each epoch and must
    return the bucket list to use for that epoch (fresh corruption draws,
    typically).  The loss history holds one mean per epoch.
    """
    train_set = list(train_set)
    signal = _check_buckets(train_set, config, model_config)
    if bounds is None:
        bounds = bounds_from_buckets(train_set)
    if bounds.mins.shape != (signal.num_nodes, signal.num_channels):
        raise ContractError(
            f"bounds cover {bounds.mins.shape}, buckets need "
            f"({signal.num_nodes}, {signal.num_channels})"
        )
    a_hat = normalized_adjacency(signal)

    if initial is None:
        params = ModelParams.initialize(model_config, config.seed)
    else:
        if initial.config != model_config:
            raise ConfigError("initial parameters were built for a different model config")
        params = initial
    optimizer = make_optimizer(params, config)
    tensors = params.tensors()

    history = []
    for epoch in range(config.epochs):
        epoch_set = train_set
        if resample is not None:
            epoch_set = list(resample(epoch))
            _check_buckets(epoch_set, config, model_config)
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(epoch_set))
        epoch_losses = []
        for position, index in enumerate(order):
            bucket = epoch_set[int(index)]
            window = normalize_features(bucket.snapshots, bounds)
            ad.zero_grads(tensors)
            with Tape():
                out = forward_pass(window, a_hat, params, model_config)
                loss = ad.square(ad.subtract(out, Tensor([[bucket.label]])))
                backward(loss)
            value = float(loss.value[0, 0])
            if not math.isfinite(value):
                raise TrainingError(
                    f"loss became non-finite ({value}) at epoch {epoch}, "
                    f"bucket {position} (window start {bucket.bucket.start})"
                )
            optimizer.step()
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)))

    checkpoint = Checkpoint(
        config=model_config,
        params=params,
        feature_bounds=bounds,
        provenance=Provenance(
            dataset=signal.name,
            seed=config.seed,
            epochs=config.epochs,
            final_loss=history[-1],
        ),
    )
    return checkpoint, history


def evaluate(checkpoint: Checkpoint, test_set) -> MetricsReport:
    """Score every bucket with the checkpoint and wrap the metrics in a report."""
    test_set = list(test_set)
    if not test_set:
        raise ContractError("need at least one bucket")
    signal = test_set[0].bucket.signal
    a_hat = normalized_adjacency(signal)
    preds = [forward(b, checkpoint, a_hat=a_hat) for b in test_set]
    labels = [b.label for b in test_set]
    fold = fold_result(preds, labels, [b.bucket.start for b in test_set])
    echo = {
        "cell_kind": checkpoint.config.cell_kind,
        "input_channels": checkpoint.config.input_channels,
        "embed_dim": checkpoint.config.embed_dim,
        "attention_dim": checkpoint.config.attention_dim,
        "seed": checkpoint.provenance.seed,
        "epochs": checkpoint.provenance.epochs,
    }
    return MetricsReport(
        dataset=signal.name, model=checkpoint.config.cell_kind, folds=(fold,), config=echo,
    )


def fold_result(preds, labels, starts) -> FoldResult:
    mse, mae, rmse = compute_metrics(preds, labels)
    return FoldResult(
        mse=mse, mae=mae, rmse=rmse, sample_count=len(list(preds)),
        predictions=tuple(float(p) for p in preds),
        labels=tuple(float(y) for y in labels),
        starts=tuple(int(s) for s in starts),
    )


def fold_seed(seed: int, index: int) -> int:
    # distinct but reproducible stream per fold
    return int(np.random.SeedSequence([seed, 2, index]).generate_state(1)[0])


def cross_validate(labeled, config: TrainConfig, model_config: ModelConfig, *,
                   shuffle: bool = True, resample=None):
    """K-fold protocol: train on K-1 chunks, test on the held-out one.

    Returns (report, checkpoints) with one checkpoint per fold.  Each fold
    trains from its own derived seed so fold models are independent draws.
    """
    labeled = list(labeled)
    pairs = kfold_split(labeled, config.folds, config.seed, shuffle=shuffle)
    dataset = labeled[0].bucket.signal.name
    folds = []
    checkpoints = []
    for index, (train_buckets, test_buckets) in enumerate(pairs):
        fold_config = replace(config, seed=fold_seed(config.seed, index))
        checkpoint, _ = train(
            train_buckets, fold_config, model_config, resample=resample,
        )
        report = evaluate(checkpoint, test_buckets)
        folds.append(report.folds[0])
        checkpoints.append(checkpoint)
    echo = dict(asdict(config))
    echo.update(
        cell_kind=model_config.cell_kind,
        input_channels=model_config.input_channels,
        embed_dim=model_config.embed_dim,
        attention_dim=model_config.attention_dim,
    )
    report = MetricsReport(
        dataset=dataset, model=model_config.cell_kind, folds=tuple(folds), config=echo,
    )
    return report, checkpoints


def write_report(report: MetricsReport, path) -> None:
    """Stable JSON form: sorted keys, two-space indent, trailing newline."""
    doc = {
        "dataset": report.dataset,
        "model": report.model,
        "config": report.config,
        "folds": [
            {
                "mse": f.mse,
                "mae": f.mae,
                "rmse": f.rmse,
                "sample_count": f.sample_count,
                "predictions": list(f.predictions),
                "labels": list(f.labels),
                "starts": list(f.starts),
            }
            for f in report.folds
        ],
        "mean": {
            "mse": report.mean_mse,
            "mae": report.mean_mae,
            "rmse": report.mean_rmse,
            "sample_count": report.total_samples,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report(path) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    try:
        folds = tuple(
            FoldResult(
                mse=float(f["mse"]),
                mae=float(f["mae"]),
                rmse=float(f["rmse"]),
                sample_count=int(f["sample_count"]),
                predictions=tuple(float(p) for p in f["predictions"]),
                labels=tuple(float(y) for y in f["labels"]),
                starts=tuple(int(s) for s in f["starts"]),
            )
            for f in doc["folds"]
        )
        report = MetricsReport(
            dataset=doc["dataset"], model=doc["model"], folds=folds,
            config=dict(doc["config"]),
        )
        stored_mean = doc["mean"]
    except ContractError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed report ({exc})") from None
    for name, value in (("mse", report.mean_mse), ("mae", report.mean_mae),
                        ("rmse", report.mean_rmse)):
        if abs(float(stored_mean[name]) - value) > 1e-12:
            raise ParseError(
                f"{path}: stored mean {name} {stored_mean[name]!r} does not match folds"
            )
    return report


def write_report_csv(report: MetricsReport, path) -> None:
    """One row per fold plus a mean row, ready for bar charts."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fold", "sample_count", "mse", "mae", "rmse"])
        for i, f in enumerate(report.folds):
            writer.writerow([i, f.sample_count, f.mse, f.mae, f.rmse])
        writer.writerow(
            ["mean", report.total_samples, report.mean_mse, report.mean_mae, report.mean_rmse]
        )
