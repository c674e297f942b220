"""Datasets, synthetic generators, CSV ingestion and device partitioning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ConfigError(f"features must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ConfigError(f"{y.shape[0]} labels for {X.shape[0]} samples")
        if X.shape[0] and (y.min() < 0 or y.max() >= self.n_classes):
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.n_classes)


def make_blobs(
    n_train: int,
    n_test: int,
    n_features: int,
    n_classes: int,
    spread: float = 1.0,
    clusters_per_class: int = 1,
    center_scale: float = 2.0,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Gaussian-blob classification task, returned as ``(train, test)``.

    Each class is a mixture of ``clusters_per_class`` isotropic Gaussians with
    standard deviation ``spread``; cluster centers are drawn from
    ``N(0, center_scale^2 I)``. Train and test share the centers. Labels are
    drawn uniformly at random.
    """
    if n_classes < 1 or n_features < 1 or clusters_per_class < 1:
        raise ConfigError("n_classes, n_features and clusters_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(n_classes, clusters_per_class, n_features))

    def draw(n):
        labels = rng.integers(0, n_classes, size=n)
        which = rng.integers(0, clusters_per_class, size=n)
        X = centers[labels, which] + rng.normal(0.0, spread, size=(n, n_features))
        return Dataset(X, labels, n_classes)

    return draw(n_train), draw(n_test)


def load_csv(path: str | Path, n_classes: int | None = None) -> Dataset:
    """Read a CSV with a header row; the ``label`` column holds integer classes.

    All other columns are features, in file order. ``n_classes`` defaults to
    ``max(label) + 1``.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "label" not in header:
            raise ConfigError(f"{path}: no 'label' column in header")
        li = header.index("label")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    table = np.array(rows, dtype=np.float64)
    labels = table[:, li]
    if not np.all(labels == np.round(labels)):
        raise ConfigError(f"{path}: labels must be integers")
    labels = labels.astype(np.int64)
    X = np.delete(table, li, axis=1)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return Dataset(X, labels, n_classes)


def train_test_split(data: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError("test_fraction must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(data))
    n_test = max(1, int(round(test_fraction * len(data))))
    if n_test >= len(data):
        raise ConfigError("test split leaves no training samples")
    return data.subset(np.sort(perm[n_test:])), data.subset(np.sort(perm[:n_test]))


@dataclass
class PartitionPlan:
    """Sample indices owned by each device. ``concentration`` is None for IID."""

    assignments: list[np.ndarray]
    concentration: float | None = None
    proportions: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def n_devices(self) -> int:
        return len(self.assignments)

    def sizes(self) -> list[int]:
        return [len(a) for a in self.assignments]


def iid_partition(n_samples: int, n_devices: int, seed: int) -> PartitionPlan:
    """Shuffle and cut into ``n_devices`` nearly equal shards."""
    _check_devices(n_samples, n_devices)
    perm = np.random.default_rng(seed).permutation(n_samples)
    return PartitionPlan([np.sort(s) for s in np.array_split(perm, n_devices)])


def dirichlet_partition(data: Dataset, n_devices: int, concentration: float, seed: int) -> PartitionPlan:
    """Label-skewed split: each class is divided across devices by a Dirichlet draw.

    For every class present (ascending label order) the class's indices are
    shuffled, proportions ``p ~ Dir(concentration * 1)`` are drawn, and the
    shuffled indices are cut at ``floor(cumsum(p) * n_class)``. Both draws use
    one generator seeded with ``seed``, in that order.

    Devices left empty are repaired afterwards, in id order: each takes the last
    index of the currently largest device (lowest id on ties).
    """
    _check_devices(len(data), n_devices)
    if concentration <= 0:
        raise ConfigError(f"dirichlet concentration must be > 0, got {concentration}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(n_devices)]
    proportions = {}
    for c in np.unique(data.labels):
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        p = rng.dirichlet(np.full(n_devices, float(concentration)))
        proportions[int(c)] = p
        cuts = (np.cumsum(p) * len(idx)).astype(np.int64)[:-1]
        for dev, part in enumerate(np.split(idx, cuts)):
            buckets[dev].extend(part.tolist())

    for dev in range(n_devices):
        if not buckets[dev]:
            donor = max(range(n_devices), key=lambda j: (len(buckets[j]), -j))
            buckets[dev].append(buckets[donor].pop())
    return PartitionPlan(
        [np.sort(np.array(b, dtype=np.int64)) for b in buckets],
        concentration=float(concentration),
        proportions=proportions,
    )


def _check_devices(n_samples: int, n_devices: int) -> None:
    if n_devices < 1:
        raise ConfigError("n_devices must be >= 1")
    if n_devices > n_samples:
        raise ConfigError(f"{n_devices} devices but only {n_samples} samples")
