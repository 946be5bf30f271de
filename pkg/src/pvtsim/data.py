"""Datasets and client partitioning.

Synthetic data is a Gaussian-blob classification task: class k gets its mean
on a scaled simplex (separation * e_k when the feature dimension allows,
otherwise seeded unit directions of norm ``separation``) with unit-variance
noise. separation=0 collapses every class onto the origin.

Partitions assign disjoint example-index shards to clients. IID is a seeded
permutation cut into near-equal shards. Non-IID is Dirichlet label skew:
for each class, client proportions are drawn from Dirichlet(alpha) and the
class's examples are split accordingly; smaller alpha means more skew.

The CSV interface: UTF-8, comma-separated, one header row, feature columns
as decimal floats, integer label in the last column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    features: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels disagree on N")
        if len(self.features) < 1:
            raise ValueError("dataset must be non-empty")
        if self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


@dataclass
class Partition:
    shards: list[np.ndarray]  # disjoint index arrays, one per client

    @property
    def n_clients(self) -> int:
        return len(self.shards)


def synth_gaussian(
    n_classes: int,
    n_features: int,
    per_class: int,
    separation: float,
    seed: int,
) -> Dataset:
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if n_features < 1:
        raise ValueError("need at least 1 feature")
    rng = np.random.default_rng(np.random.SeedSequence([n_classes, n_features, seed]))
    if n_classes <= n_features:
        means = np.zeros((n_classes, n_features))
        means[np.arange(n_classes), np.arange(n_classes)] = separation
    else:
        directions = rng.standard_normal((n_classes, n_features))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = separation * directions
    features = np.concatenate(
        [means[k] + rng.standard_normal((per_class, n_features)) for k in range(n_classes)]
    )
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(features=features, labels=labels)


def partition_iid(dataset: Dataset, n_clients: int, seed: int) -> Partition:
    if n_clients > len(dataset):
        raise ValueError(f"{n_clients} clients but only {len(dataset)} examples")
    rng = np.random.default_rng(np.random.SeedSequence([len(dataset), n_clients, seed]))
    order = rng.permutation(len(dataset))
    return Partition(shards=list(np.array_split(order, n_clients)))


def partition_noniid(
    dataset: Dataset, n_clients: int, concentration: float, seed: int
) -> Partition:
    """Dirichlet(concentration) label-skew split; empty shards are repaired
    by donating one example from the largest shard."""
    if concentration <= 0:
        raise ValueError("concentration must be > 0")
    if n_clients > len(dataset):
        raise ValueError(f"{n_clients} clients but only {len(dataset)} examples")
    rng = np.random.default_rng(
        np.random.SeedSequence([len(dataset), n_clients, seed, 1])
    )
    shards: list[list[int]] = [[] for _ in range(n_clients)]
    for k in range(dataset.n_classes):
        class_idx = rng.permutation(np.flatnonzero(dataset.labels == k))
        if len(class_idx) == 0:
            continue
        proportions = rng.dirichlet(np.full(n_clients, concentration))
        counts = np.floor(proportions * len(class_idx)).astype(int)
        # hand out the rounding remainder to the largest proportions
        remainder = len(class_idx) - counts.sum()
        for c in np.argsort(-proportions)[:remainder]:
            counts[c] += 1
        offsets = np.concatenate([[0], np.cumsum(counts)])
        for c in range(n_clients):
            shards[c].extend(class_idx[offsets[c] : offsets[c + 1]].tolist())

    arrays = [np.asarray(sorted(s), dtype=np.int64) for s in shards]
    for c in range(n_clients):
        while len(arrays[c]) == 0:
            donor = max(range(n_clients), key=lambda j: len(arrays[j]))
            arrays[c] = arrays[donor][-1:]
            arrays[donor] = arrays[donor][:-1]
    return Partition(shards=arrays)


class CsvFormatError(ValueError):
    """Malformed dataset file; the message names the offending line."""


def load_csv(path: str | Path, n_features: int | None = None) -> Dataset:
    """Read a dataset file, preserving row order.

    ``n_features`` optionally pins the expected feature-column count.
    """
    path = Path(path)
    features: list[list[float]] = []
    labels: list[int] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise CsvFormatError(f"{path}: need at least one feature column and a label")
        if n_features is not None and width != n_features + 1:
            raise CsvFormatError(
                f"{path}: expected {n_features} feature columns, header has {width - 1}"
            )
        for line_no, row in enumerate(reader, start=2):
            if len(row) != width:
                raise CsvFormatError(
                    f"{path}: line {line_no}: expected {width} columns, got {len(row)}"
                )
            try:
                features.append([float(v) for v in row[:-1]])
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {line_no}: non-numeric feature value"
                ) from None
            try:
                labels.append(int(row[-1]))
            except ValueError:
                raise CsvFormatError(
                    f"{path}: line {line_no}: non-integer label {row[-1]!r}"
                ) from None
    if not features:
        raise CsvFormatError(f"{path}: no data rows")
    return Dataset(features=np.array(features), labels=np.array(labels))


def save_csv(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset in the load_csv format (floats via repr, lossless)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(dataset.n_features)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
