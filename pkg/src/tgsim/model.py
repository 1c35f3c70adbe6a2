"""Similarity model over snapshot windows.

The forward pass embeds every snapshot of a window through one graph
convolution, runs a recurrent cell across the sequence (with optional
temporal attention over the per-step states), mean-pools the final node
states, and maps the pooled vector through a fixed three-layer dense head
to a logistic similarity score in (0, 1).

All arithmetic is built from the `autodiff` operations, so the same code
path serves both training (on a tape) and plain evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import NodeBounds, normalize_features, normalized_adjacency
from .errors import ConfigError, ContractError, ParseError

CELL_KINDS = ("gconv_gru", "tgcn", "a3tgcn")

# dense head is fixed: d -> 32 -> 64 -> 1, relu between, logistic output
HEAD_WIDTHS = (32, 64, 1)


def _canonical_kind(kind: str) -> str:
    key = str(kind).lower().replace("-", "_")
    if key == "gconvgru":
        key = "gconv_gru"
    if key not in CELL_KINDS:
        raise ConfigError(f"unknown cell kind {kind!r}; expected one of {', '.join(CELL_KINDS)}")
    return key


@dataclass(frozen=True)
class ModelConfig:
    cell_kind: str
    input_channels: int
    embed_dim: int = 32
    attention_dim: int = 32

    def __post_init__(self):
        object.__setattr__(self, "cell_kind", _canonical_kind(self.cell_kind))
        for name in ("input_channels", "embed_dim", "attention_dim"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, int]]:
    """Every parameter's (rows, cols), in a fixed order shared by init,
    serialization, and the optimizers."""
    f, d, a = config.input_channels, config.embed_dim, config.attention_dim
    shapes = {"w_in": (f, d), "b_in": (1, d)}
    if config.cell_kind == "gconv_gru":
        for gate in ("z", "r", "h"):
            shapes[f"w_{gate}"] = (d, d)
            shapes[f"u_{gate}"] = (d, d)
            shapes[f"b_{gate}"] = (1, d)
    else:  # tgcn step, shared by a3tgcn
        shapes["w_g"] = (d, d)
        for gate in ("u", "r", "c"):
            shapes[f"w_{gate}"] = (2 * d, d)
            shapes[f"b_{gate}"] = (1, d)
    if config.cell_kind == "a3tgcn":
        shapes["w_a"] = (d, a)
        shapes["b_a"] = (1, a)
        shapes["v_a"] = (a, 1)
    widths = (d,) + HEAD_WIDTHS
    for i in range(len(HEAD_WIDTHS)):
        shapes[f"w_head{i + 1}"] = (widths[i], widths[i + 1])
        shapes[f"b_head{i + 1}"] = (1, widths[i + 1])
    return shapes


class ModelParams:
    """Named parameter tensors, all tracked for gradients.

    `initialize` draws each weight matrix uniform in
    +-sqrt(6 / (fan_in + fan_out)) and zeros the biases, so two runs with
    the same config and seed start from identical parameters.
    """

    def __init__(self, config: ModelConfig, values: dict[str, np.ndarray]):
        expected = parameter_shapes(config)
        if set(values) != set(expected):
            missing = sorted(set(expected) - set(values))
            extra = sorted(set(values) - set(expected))
            raise ConfigError(
                f"parameter set mismatch for {config.cell_kind}: missing {missing}, extra {extra}"
            )
        self.config = config
        self._tensors = {}
        for name, shape in expected.items():
            value = np.asarray(values[name], dtype=np.float64)
            if value.shape != shape:
                raise ConfigError(f"parameter {name!r} has shape {value.shape}, expected {shape}")
            self._tensors[name] = Tensor(value, requires_grad=True)

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int) -> "ModelParams":
        rng = np.random.default_rng([seed, 0])
        values = {}
        for name, shape in parameter_shapes(config).items():
            if name.startswith("b_"):
                values[name] = np.zeros(shape)
            else:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                values[name] = rng.uniform(-limit, limit, size=shape)
        return cls(config, values)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls(config, {name: np.zeros(shape) for name, shape in parameter_shapes(config).items()})

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def items(self):
        return self._tensors.items()

    def tensors(self):
        return list(self._tensors.values())

    def values_dict(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self._tensors.items()}


@dataclass(frozen=True)
class Provenance:
    """Where a checkpoint came from: enough to reproduce the training run."""

    dataset: str = ""
    seed: int = 0
    epochs: int = 0
    final_loss: float | None = None


@dataclass(frozen=True)
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    feature_bounds: NodeBounds | None = None
    provenance: Provenance = field(default_factory=Provenance)


def _constant(value) -> Tensor:
    return Tensor(value)


def gcn_embed(x, a_hat, params: ModelParams) -> Tensor:
    """One graph-convolution stage: relu(A_hat x W_in + b_in), N x d."""
    x = x if isinstance(x, Tensor) else _constant(x)
    a_hat = a_hat if isinstance(a_hat, Tensor) else _constant(a_hat)
    mixed = ad.matmul(a_hat, x)
    return ad.relu(ad.add(ad.matmul(mixed, params["w_in"]), params["b_in"]))


def _gconv_gru_step(h0, h_prev, a_hat, params):
    mixed_in = ad.matmul(a_hat, h0)
    mixed_prev = ad.matmul(a_hat, h_prev)
    z = ad.sigmoid(
        ad.add(
            ad.add(ad.matmul(mixed_in, params["w_z"]), ad.matmul(mixed_prev, params["u_z"])),
            params["b_z"],
        )
    )
    r = ad.sigmoid(
        ad.add(
            ad.add(ad.matmul(mixed_in, params["w_r"]), ad.matmul(mixed_prev, params["u_r"])),
            params["b_r"],
        )
    )
    gated_prev = ad.matmul(a_hat, ad.multiply(r, h_prev))
    candidate = ad.tanh(
        ad.add(
            ad.add(ad.matmul(mixed_in, params["w_h"]), ad.matmul(gated_prev, params["u_h"])),
            params["b_h"],
        )
    )
    ones = _constant(np.ones(z.shape))
    return ad.add(ad.multiply(z, h_prev), ad.multiply(ad.subtract(ones, z), candidate))


def _tgcn_step(h0, h_prev, a_hat, params):
    g = ad.relu(ad.matmul(ad.matmul(a_hat, h0), params["w_g"]))
    joint = ad.concat_columns(g, h_prev)
    u = ad.sigmoid(ad.add(ad.matmul(joint, params["w_u"]), params["b_u"]))
    r = ad.sigmoid(ad.add(ad.matmul(joint, params["w_r"]), params["b_r"]))
    gated = ad.concat_columns(g, ad.multiply(r, h_prev))
    candidate = ad.tanh(ad.add(ad.matmul(gated, params["w_c"]), params["b_c"]))
    ones = _constant(np.ones(u.shape))
    return ad.add(ad.multiply(u, h_prev), ad.multiply(ad.subtract(ones, u), candidate))


def cell_step(kind: str, h0, h_prev, a_hat, params: ModelParams) -> Tensor:
    """One recurrent update from state H_{t-1} to H_t, both N x d."""
    kind = _canonical_kind(kind)
    h0 = h0 if isinstance(h0, Tensor) else _constant(h0)
    h_prev = h_prev if isinstance(h_prev, Tensor) else _constant(h_prev)
    a_hat = a_hat if isinstance(a_hat, Tensor) else _constant(a_hat)
    if kind == "gconv_gru":
        return _gconv_gru_step(h0, h_prev, a_hat, params)
    # the attention variant runs the same per-step recurrence
    return _tgcn_step(h0, h_prev, a_hat, params)


def temporal_attention(states, params: ModelParams) -> Tensor:
    """Blend the per-step states into one N x d context.

    Per node, each step gets a scalar score tanh(H_t W_a + b_a) v_a; the
    scores are softmax-normalized over steps and the states combined as a
    weighted sum with those per-node weights.
    """
    states = [s if isinstance(s, Tensor) else _constant(s) for s in states]
    if not states:
        raise ContractError("temporal attention needs at least one state")
    scores = None
    for state in states:
        score = ad.matmul(ad.tanh(ad.add(ad.matmul(state, params["w_a"]), params["b_a"])), params["v_a"])
        scores = score if scores is None else ad.concat_columns(scores, score)
    alpha = ad.softmax_rows(scores)  # N x L, rows sum to 1

    length = len(states)
    d = states[0].shape[1]
    tile = _constant(np.ones((1, d)))
    context = None
    for t, state in enumerate(states):
        unit = np.zeros((length, 1))
        unit[t, 0] = 1.0
        column = ad.matmul(alpha, _constant(unit))  # N x 1, the step-t weights
        weighted = ad.multiply(ad.matmul(column, tile), state)
        context = weighted if context is None else ad.add(context, weighted)
    return context


def attention_weights(states, params: ModelParams) -> np.ndarray:
    """The N x L softmax weights the attention blend uses, as plain values.

    Pure-numpy diagnostic twin of `temporal_attention`; records nothing,
    safe to call under an active tape.
    """
    if not states:
        raise ContractError("temporal attention needs at least one state")
    w_a, b_a, v_a = params["w_a"].value, params["b_a"].value, params["v_a"].value
    columns = []
    for state in states:
        value = state.value if isinstance(state, Tensor) else np.asarray(state, dtype=np.float64)
        columns.append(np.tanh(value @ w_a + b_a) @ v_a)
    scores = np.concatenate(columns, axis=1)
    shifted = np.exp(scores - scores.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def forward_pass(snapshots, a_hat, params: ModelParams, config: ModelConfig) -> Tensor:
    """Score a window of snapshots; returns a 1x1 tensor in (0, 1).

    `snapshots` is an L x N x F array (or list of N x F arrays); gradients
    flow when called under an active tape.
    """
    snapshots = np.asarray(snapshots, dtype=np.float64)
    if snapshots.ndim != 3 or snapshots.shape[2] != config.input_channels:
        raise ConfigError(
            f"snapshots must be L x N x {config.input_channels}, got shape {snapshots.shape}"
        )
    n = snapshots.shape[1]
    a_hat_t = a_hat if isinstance(a_hat, Tensor) else _constant(a_hat)
    if a_hat_t.shape != (n, n):
        raise ConfigError(f"adjacency is {a_hat_t.shape}, snapshots have {n} nodes")

    state = _constant(np.zeros((n, config.embed_dim)))
    states = []
    for t in range(snapshots.shape[0]):
        embedded = gcn_embed(snapshots[t], a_hat_t, params)
        state = cell_step(config.cell_kind, embedded, state, a_hat_t, params)
        states.append(state)

    final = temporal_attention(states, params) if config.cell_kind == "a3tgcn" else state
    pooled = ad.mean_rows(final)
    hidden = ad.relu(ad.add(ad.matmul(pooled, params["w_head1"]), params["b_head1"]))
    hidden = ad.relu(ad.add(ad.matmul(hidden, params["w_head2"]), params["b_head2"]))
    logit = ad.add(ad.matmul(hidden, params["w_head3"]), params["b_head3"])
    return ad.sigmoid(logit)


def forward(bucket, checkpoint: Checkpoint, a_hat: np.ndarray | None = None) -> float:
    """Similarity score for a bucket under a trained checkpoint.

    Normalizes the window with the checkpoint's stored feature bounds when
    present, then runs the forward pass without a tape.  Pass a precomputed
    `a_hat` to skip rebuilding the adjacency per call.
    """
    signal = bucket.bucket.signal if hasattr(bucket, "bucket") else bucket.signal
    config = checkpoint.config
    if signal.num_channels != config.input_channels:
        raise ConfigError(
            f"bucket has {signal.num_channels} channels, checkpoint expects {config.input_channels}"
        )
    snapshots = bucket.snapshots
    if checkpoint.feature_bounds is not None:
        if checkpoint.feature_bounds.mins.shape != (signal.num_nodes, signal.num_channels):
            raise ConfigError(
                f"checkpoint bounds cover {checkpoint.feature_bounds.mins.shape}, "
                f"bucket needs ({signal.num_nodes}, {signal.num_channels})"
            )
        snapshots = normalize_features(snapshots, checkpoint.feature_bounds)
    if a_hat is None:
        a_hat = normalized_adjacency(signal)
    return forward_pass(snapshots, a_hat, checkpoint.params, config).item()


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    """Self-describing JSON: config, flat row-major parameters, provenance."""
    doc = {
        "config": {
            "cell_kind": checkpoint.config.cell_kind,
            "input_channels": checkpoint.config.input_channels,
            "embed_dim": checkpoint.config.embed_dim,
            "attention_dim": checkpoint.config.attention_dim,
        },
        "params": {
            name: {"shape": list(t.shape), "data": t.value.reshape(-1).tolist()}
            for name, t in checkpoint.params.items()
        },
        "feature_bounds": None
        if checkpoint.feature_bounds is None
        else {
            "mins": checkpoint.feature_bounds.mins.tolist(),
            "maxs": checkpoint.feature_bounds.maxs.tolist(),
        },
        "provenance": {
            "dataset": checkpoint.provenance.dataset,
            "seed": checkpoint.provenance.seed,
            "epochs": checkpoint.provenance.epochs,
            "final_loss": checkpoint.provenance.final_loss,
        },
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    try:
        raw_config = doc["config"]
        config = ModelConfig(
            cell_kind=raw_config["cell_kind"],
            input_channels=raw_config["input_channels"],
            embed_dim=raw_config["embed_dim"],
            attention_dim=raw_config["attention_dim"],
        )
        values = {}
        for name, entry in doc["params"].items():
            shape = tuple(entry["shape"])
            data = np.asarray(entry["data"], dtype=np.float64)
            if data.shape != (shape[0] * shape[1],):
                raise ParseError(
                    f"{path}: parameter {name!r} carries {data.shape[0]} values "
                    f"for shape {shape}"
                )
            values[name] = data.reshape(shape)
        params = ModelParams(config, values)
        bounds = None
        if doc.get("feature_bounds") is not None:
            bounds = NodeBounds(
                mins=np.asarray(doc["feature_bounds"]["mins"], dtype=np.float64),
                maxs=np.asarray(doc["feature_bounds"]["maxs"], dtype=np.float64),
            )
        raw_prov = doc.get("provenance", {})
        provenance = Provenance(
            dataset=raw_prov.get("dataset", ""),
            seed=raw_prov.get("seed", 0),
            epochs=raw_prov.get("epochs", 0),
            final_loss=raw_prov.get("final_loss"),
        )
    except (KeyError, TypeError, ValueError, ConfigError, ContractError) as exc:
        raise ParseError(f"{path}: malformed checkpoint: {exc}") from exc
    return Checkpoint(config=config, params=params, feature_bounds=bounds, provenance=provenance)
