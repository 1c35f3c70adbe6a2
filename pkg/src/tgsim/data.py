"""Static-topology temporal graph signals.

A signal is one fixed graph plus an S x N x F feature tensor: S snapshots,
N nodes, F feature channels per node.  The topology never changes across
snapshots.  This module owns the canonical JSON format for such signals,
the degree-normalized adjacency used by the graph convolutions, and
per-node-channel feature bounds with min-max normalization.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError

REQUIRED_FIELDS = ("name", "num_nodes", "edges", "frequency", "features")
OPTIONAL_FIELDS = ("weights",)


@dataclass(frozen=True, eq=False)
class TemporalGraphSignal:
    """A fixed weighted graph observed over S snapshots of node features.

    Arrays are copied in and locked read-only, so a loaded signal can be
    shared across threads without defensive copies.
    """

    name: str
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    weights: np.ndarray | None
    features: np.ndarray
    frequency: str = "unknown"

    def __post_init__(self):
        n = self.num_nodes
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ContractError(f"num_nodes must be a positive integer, got {n!r}")

        edges = tuple((int(s), int(d)) for s, d in self.edges)
        for s, d in edges:
            if not (0 <= s < n and 0 <= d < n):
                raise ContractError(f"edge ({s}, {d}) out of range for {n} nodes")

        weights = self.weights
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.array(weights, dtype=np.float64)
        if weights.shape != (len(edges),):
            raise ContractError(
                f"expected {len(edges)} edge weights, got shape {weights.shape}"
            )
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ContractError("edge weights must be finite and nonnegative")

        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 3:
            raise ContractError(
                f"features must be an S x N x F array, got shape {features.shape}"
            )
        if features.shape[1] != n:
            raise ContractError(
                f"features have {features.shape[1]} node rows, signal has {n} nodes"
            )
        if features.shape[0] < 1 or features.shape[2] < 1:
            raise ContractError(
                f"need at least one snapshot and one channel, got shape {features.shape}"
            )
        if not np.isfinite(features).all():
            raise ContractError("features contain non-finite values")

        weights.setflags(write=False)
        features.setflags(write=False)
        # frozen dataclass, so assign the validated copies through object
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "features", features)

    @property
    def num_snapshots(self) -> int:
        return self.features.shape[0]

    @property
    def num_channels(self) -> int:
        return self.features.shape[2]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def snapshot(self, t: int) -> np.ndarray:
        """Read-only N x F view of snapshot t."""
        return self.features[t]

    def with_features(self, features) -> "TemporalGraphSignal":
        """Same topology and metadata, new S' x N x F' feature tensor."""
        return TemporalGraphSignal(
            self.name, self.num_nodes, self.edges, self.weights, features, self.frequency
        )


@dataclass(frozen=True, eq=False)
class NodeBounds:
    """Per (node, channel) feature minima and maxima, both N x F arrays."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.array(self.mins, dtype=np.float64)
        maxs = np.array(self.maxs, dtype=np.float64)
        if mins.ndim != 2 or mins.shape != maxs.shape:
            raise ContractError(
                f"bounds must be matching N x F arrays, got {mins.shape} and {maxs.shape}"
            )
        if not (np.isfinite(mins).all() and np.isfinite(maxs).all()):
            raise ContractError("bounds must be finite")
        if (mins > maxs).any():
            raise ContractError("every minimum must be <= its maximum")
        mins.setflags(write=False)
        maxs.setflags(write=False)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def num_nodes(self) -> int:
        return self.mins.shape[0]

    @property
    def num_channels(self) -> int:
        return self.mins.shape[1]


def _fail(path, where, what):
    raise ParseError(f"{path}: {where}: {what}")


def _parse_index(value, n, where, path):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, where, f"expected an integer node index, got {value!r}")
    if not 0 <= value < n:
        _fail(path, where, f"node index {value} out of range for {n} nodes")
    return value


def _parse_number(value, where, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, where, f"expected a number, got {value!r}")
    return float(value)


def _locate_ragged(raw, n, path):
    # slow scan used only after the vectorized conversion failed
    width = None
    for i, snap in enumerate(raw):
        if not isinstance(snap, list):
            _fail(path, f"features[{i}]", "expected an array of node rows")
        if len(snap) != n:
            _fail(path, f"features[{i}]", f"expected {n} node rows, found {len(snap)}")
        for j, row in enumerate(snap):
            if not isinstance(row, list):
                _fail(path, f"features[{i}][{j}]", "expected an array of channel values")
            if width is None:
                width = len(row)
            elif len(row) != width:
                _fail(
                    path,
                    f"features[{i}][{j}]",
                    f"expected {width} channel values, found {len(row)}",
                )
            for k, value in enumerate(row):
                _parse_number(value, f"features[{i}][{j}][{k}]", path)


def load_canonical(path, strict: bool = True) -> TemporalGraphSignal:
    """Load and validate a canonical-format signal file.

    Malformed input is rejected with a `ParseError` naming the offending
    location, never repaired.  Unknown top-level fields are an error when
    `strict`, a warning otherwise.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc

    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top-level value must be an object")
    for name in REQUIRED_FIELDS:
        if name not in doc:
            raise ParseError(f"{path}: missing required field '{name}'")
    for name in doc:
        if name in REQUIRED_FIELDS or name in OPTIONAL_FIELDS:
            continue
        if strict:
            raise ParseError(f"{path}: unknown field '{name}'")
        warnings.warn(f"{path}: ignoring unknown field '{name}'")

    if not isinstance(doc["name"], str):
        _fail(path, "name", f"expected a string, got {doc['name']!r}")
    if not isinstance(doc["frequency"], str):
        _fail(path, "frequency", f"expected a string, got {doc['frequency']!r}")
    n = doc["num_nodes"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        _fail(path, "num_nodes", f"expected a positive integer, got {n!r}")

    raw_edges = doc["edges"]
    if not isinstance(raw_edges, list):
        _fail(path, "edges", "expected an array of [src, dst] pairs")
    edges = []
    for i, pair in enumerate(raw_edges):
        if not isinstance(pair, list) or len(pair) != 2:
            _fail(path, f"edges[{i}]", f"expected a [src, dst] pair, got {pair!r}")
        src = _parse_index(pair[0], n, f"edges[{i}]", path)
        dst = _parse_index(pair[1], n, f"edges[{i}]", path)
        edges.append((src, dst))

    weights = None
    if "weights" in doc:
        raw_weights = doc["weights"]
        if not isinstance(raw_weights, list):
            _fail(path, "weights", "expected an array of numbers")
        if len(raw_weights) != len(edges):
            _fail(
                path,
                "weights",
                f"expected {len(edges)} entries to match edges, found {len(raw_weights)}",
            )
        weights = []
        for i, value in enumerate(raw_weights):
            value = _parse_number(value, f"weights[{i}]", path)
            if not np.isfinite(value):
                _fail(path, f"weights[{i}]", f"non-finite value {value!r}")
            if value < 0:
                _fail(path, f"weights[{i}]", f"negative weight {value!r}")
            weights.append(value)

    raw_features = doc["features"]
    if not isinstance(raw_features, list) or not raw_features:
        _fail(path, "features", "expected a non-empty array of snapshots")
    try:
        features = np.asarray(raw_features, dtype=np.float64)
    except (TypeError, ValueError):
        features = None
    if features is None or features.ndim != 3:
        _locate_ragged(raw_features, n, path)
        _fail(path, "features", "expected an S x N x F array")
    if features.shape[1] != n:
        _fail(
            path, "features[0]", f"expected {n} node rows, found {features.shape[1]}"
        )
    if features.shape[2] < 1:
        _fail(path, "features[0][0]", "expected at least one channel value")
    bad = ~np.isfinite(features)
    if bad.any():
        i, j, k = np.argwhere(bad)[0]
        _fail(
            path,
            f"features[{i}][{j}][{k}]",
            f"non-finite value {features[i, j, k]!r}",
        )

    return TemporalGraphSignal(
        name=doc["name"],
        num_nodes=n,
        edges=tuple(edges),
        weights=weights,
        features=features,
        frequency=doc["frequency"],
    )


def write_canonical(signal: TemporalGraphSignal, path) -> None:
    """Write a signal in the canonical format; inverse of `load_canonical`."""
    doc = {
        "name": signal.name,
        "num_nodes": signal.num_nodes,
        "frequency": signal.frequency,
        "edges": [[s, d] for s, d in signal.edges],
        "weights": signal.weights.tolist(),
        "features": signal.features.tolist(),
    }
    path = Path(path)
    path.write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def normalized_adjacency(signal: TemporalGraphSignal, symmetrize: bool = True) -> np.ndarray:
    """Degree-normalized adjacency D^(-1/2) (A + I) D^(-1/2) as a dense N x N array.

    `symmetrize` folds each edge into both directions (by maximum weight),
    the default reading for the bundled datasets; pass False to keep a
    directed adjacency.  Nodes that already carry a self-loop keep its
    weight: the +I fills in only the missing diagonal entries, so an
    isolated node never divides by zero.
    """
    n = signal.num_nodes
    adj = np.zeros((n, n))
    if signal.num_edges:
        src = np.fromiter((s for s, _ in signal.edges), dtype=np.intp)
        dst = np.fromiter((d for _, d in signal.edges), dtype=np.intp)
        np.add.at(adj, (src, dst), signal.weights)
    if symmetrize:
        adj = np.maximum(adj, adj.T)
    diag = np.arange(n)
    adj[diag, diag] = np.where(adj[diag, diag] == 0.0, 1.0, adj[diag, diag])
    inv_sqrt_degree = 1.0 / np.sqrt(adj.sum(axis=1))
    return inv_sqrt_degree[:, None] * adj * inv_sqrt_degree[None, :]


def node_bounds(signal: TemporalGraphSignal, start: int = 0, stop: int | None = None) -> NodeBounds:
    """Per-(node, channel) min and max of the features over snapshots [start, stop)."""
    total = signal.num_snapshots
    if stop is None:
        stop = total
    if not 0 <= start < stop <= total:
        raise ContractError(
            f"empty snapshot range [{start}, {stop}) for {total} snapshots"
        )
    window = signal.features[start:stop]
    return NodeBounds(mins=window.min(axis=0), maxs=window.max(axis=0))


def normalize_features(values: np.ndarray, bounds: NodeBounds) -> np.ndarray:
    """Map values to (x - min) / (max - min) per node-channel.

    Accepts any array whose trailing axes are (N, F).  A degenerate
    node-channel with max = min maps to 0.0.  Out-of-range inputs are
    allowed and land outside [0, 1].
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-2:] != bounds.mins.shape:
        raise ContractError(
            f"bounds cover {bounds.mins.shape[0]} nodes x {bounds.mins.shape[1]} channels, "
            f"features have shape {values.shape}"
        )
    span = bounds.maxs - bounds.mins
    shifted = values - bounds.mins
    out = np.zeros_like(shifted)
    np.divide(shifted, span, out=out, where=span > 0)
    return out


def min_max_normalize(signal: TemporalGraphSignal, bounds: NodeBounds) -> TemporalGraphSignal:
    """Signal with every snapshot min-max normalized against `bounds`."""
    return signal.with_features(normalize_features(signal.features, bounds))
