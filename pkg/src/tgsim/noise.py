"""Labeled training buckets via synthetic candidate-snapshot corruption.

A bucket is a window of L consecutive snapshots: the first L-1 are history,
the last is the candidate under evaluation.  Corruption redraws every feature
channel of a few randomly chosen nodes of the candidate, uniformly within
that node-channel's observed range, and labels the bucket with the surviving
fraction of nodes: Y = 1 - k/N for k changed nodes.  A node counts as changed
when selected, even if its redrawn value happens to coincide with the
original.  Labels are carried as exact rationals so Y*N + k == N holds
without rounding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .data import NodeBounds, TemporalGraphSignal
from .errors import ContractError, ParseError


@dataclass(frozen=True, eq=False)
class Bucket:
    """A view over snapshots [start, start + length) of one signal."""

    signal: TemporalGraphSignal
    start: int
    length: int

    def __post_init__(self):
        if self.length < 2:
            raise ContractError(f"bucket length must be >= 2, got {self.length}")
        if self.start < 0 or self.start + self.length > self.signal.num_snapshots:
            raise ContractError(
                f"bucket [{self.start}, {self.start + self.length}) does not fit in "
                f"{self.signal.num_snapshots} snapshots"
            )

    @property
    def history(self) -> np.ndarray:
        """The first length - 1 snapshots, (length-1) x N x F, read-only."""
        return self.signal.features[self.start : self.start + self.length - 1]

    @property
    def candidate(self) -> np.ndarray:
        """The last snapshot of the window, N x F, read-only."""
        return self.signal.features[self.start + self.length - 1]

    @property
    def snapshots(self) -> np.ndarray:
        """All length snapshots, length x N x F, read-only."""
        return self.signal.features[self.start : self.start + self.length]


@dataclass(frozen=True, eq=False)
class LabeledBucket:
    """A bucket whose candidate snapshot was materialized, possibly corrupted.

    `label_exact` is the rational 1 - k/N for k perturbed nodes; `label` is
    its float value.  History snapshots always come straight from the source
    signal and are never modified.
    """

    bucket: Bucket
    candidate: np.ndarray
    perturbed_nodes: frozenset[int]
    label_exact: Fraction = field(init=False)

    def __post_init__(self):
        n = self.bucket.signal.num_nodes
        candidate = np.array(self.candidate, dtype=np.float64)
        if candidate.shape != self.bucket.candidate.shape:
            raise ContractError(
                f"candidate shape {candidate.shape} does not match "
                f"the bucket's {self.bucket.candidate.shape}"
            )
        perturbed = frozenset(int(i) for i in self.perturbed_nodes)
        if any(not 0 <= i < n for i in perturbed):
            raise ContractError(f"perturbed node indices out of range for {n} nodes")
        candidate.setflags(write=False)
        object.__setattr__(self, "candidate", candidate)
        object.__setattr__(self, "perturbed_nodes", perturbed)
        object.__setattr__(self, "label_exact", Fraction(n - len(perturbed), n))

    @property
    def label(self) -> float:
        return float(self.label_exact)

    @property
    def history(self) -> np.ndarray:
        return self.bucket.history

    @property
    def snapshots(self) -> np.ndarray:
        """All length snapshots with the materialized candidate swapped in."""
        return np.concatenate([self.bucket.history, self.candidate[None]], axis=0)


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption parameters: per-bucket probability and the rng seed."""

    corrupt_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        p = self.corrupt_probability
        if not (isinstance(p, (int, float)) and 0.0 <= p <= 1.0):
            raise ContractError(f"corrupt probability must be in [0, 1], got {p!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ContractError(f"seed must be a nonnegative integer, got {self.seed!r}")


def bucketize(signal: TemporalGraphSignal, length: int, stride: int = 1) -> list[Bucket]:
    """Windows of `length` snapshots at starts 0, stride, 2*stride, ...

    Every start with start + length <= num_snapshots is included, in order.
    """
    total = signal.num_snapshots
    if not isinstance(length, int) or isinstance(length, bool) or length < 2:
        raise ContractError(f"bucket length must be an integer >= 2, got {length!r}")
    if length > total:
        raise ContractError(
            f"bucket length {length} exceeds the signal's {total} snapshots"
        )
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise ContractError(f"stride must be a positive integer, got {stride!r}")
    return [Bucket(signal, start, length) for start in range(0, total - length + 1, stride)]


def inject_noise(buckets, bounds: NodeBounds, spec: NoiseSpec) -> list[LabeledBucket]:
    """Independently corrupt each bucket's candidate with the spec's probability.

    A corrupted bucket draws k uniform over {1..N}, picks k distinct nodes,
    and redraws all their candidate channels uniformly within that
    node-channel's bounds.  Bucket i consumes the random stream derived from
    (seed, i) and nothing else, so generation order cannot change the output.
    """
    labeled = []
    for index, bucket in enumerate(buckets):
        n = bucket.signal.num_nodes
        if bounds.mins.shape != (n, bucket.signal.num_channels):
            raise ContractError(
                f"bounds shape {bounds.mins.shape} does not cover the signal's "
                f"({n}, {bucket.signal.num_channels})"
            )
        rng = np.random.default_rng([spec.seed, index])
        candidate = bucket.candidate.copy()
        perturbed = frozenset()
        if rng.random() < spec.corrupt_probability:
            k = int(rng.integers(1, n + 1))
            nodes = rng.choice(n, size=k, replace=False)
            for node in nodes:
                candidate[node] = rng.uniform(bounds.mins[node], bounds.maxs[node])
            perturbed = frozenset(int(i) for i in nodes)
        labeled.append(LabeledBucket(bucket, candidate, perturbed))
    return labeled


def write_labeled_buckets(labeled, path, spec: NoiseSpec | None = None) -> None:
    """Serialize a frozen training set: one record per bucket.

    Pass the generating `spec` to record it alongside the buckets, so
    downstream reports can refuse to compare sets drawn under different
    corruption settings.
    """
    labeled = list(labeled)
    if not labeled:
        raise ContractError("refusing to write an empty training set")
    lengths = {item.bucket.length for item in labeled}
    names = {item.bucket.signal.name for item in labeled}
    if len(lengths) != 1 or len(names) != 1:
        raise ContractError(
            f"training set mixes bucket lengths {sorted(lengths)} or datasets {sorted(names)}"
        )
    doc = {
        "dataset": labeled[0].bucket.signal.name,
        "length": labeled[0].bucket.length,
        "buckets": [
            {
                "start": item.bucket.start,
                "label": item.label,
                "perturbed_nodes": sorted(item.perturbed_nodes),
                "candidate": item.candidate.tolist(),
            }
            for item in labeled
        ],
    }
    if spec is not None:
        doc["noise"] = {"corrupt_probability": spec.corrupt_probability, "seed": spec.seed}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")


def bucket_file_noise(path) -> NoiseSpec | None:
    """The recorded noise settings of a bucket file, if any were stored."""
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    stored = doc.get("noise") if isinstance(doc, dict) else None
    if stored is None:
        return None
    try:
        return NoiseSpec(
            corrupt_probability=stored["corrupt_probability"], seed=stored["seed"],
        )
    except (KeyError, TypeError, ContractError) as exc:
        raise ParseError(f"{path}: bad noise record: {exc}") from exc


def load_labeled_buckets(path, signal: TemporalGraphSignal) -> list[LabeledBucket]:
    """Rebuild a frozen training set against its source signal.

    The stored float label is checked against the label recomputed from the
    perturbed-node list, so a tampered file cannot smuggle in an
    inconsistent pair.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON: {exc}") from exc

    if not isinstance(doc, dict) or "buckets" not in doc or "length" not in doc:
        raise ParseError(f"{path}: expected an object with 'dataset', 'length', 'buckets'")
    if doc.get("dataset") != signal.name:
        raise ParseError(
            f"{path}: training set is for dataset {doc.get('dataset')!r}, "
            f"signal is {signal.name!r}"
        )

    length = doc["length"]
    labeled = []
    for i, record in enumerate(doc["buckets"]):
        try:
            bucket = Bucket(signal, record["start"], length)
            item = LabeledBucket(
                bucket,
                np.asarray(record["candidate"], dtype=np.float64),
                frozenset(record["perturbed_nodes"]),
            )
        except (KeyError, TypeError, ValueError, ContractError) as exc:
            raise ParseError(f"{path}: buckets[{i}]: {exc}") from exc
        if abs(item.label - record.get("label", item.label)) > 1e-12:
            raise ParseError(
                f"{path}: buckets[{i}]: stored label {record['label']!r} does not match "
                f"the perturbed-node count"
            )
        labeled.append(item)
    return labeled
