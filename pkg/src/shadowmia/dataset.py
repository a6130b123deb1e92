"""Labelled feature data: CSV ingestion, synthetic generation and splitting.

All randomness goes through numpy's ``PCG64`` bit generator (a 128-bit state
permuted congruential generator emitting 64-bit words), so a seed pins a
split or a synthetic draw exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DataError


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable table of feature vectors and integer class labels.

    Parameters
    ----------
    features : array of shape (n_samples, feature_dim)
    labels : array of shape (n_samples,), values in ``[0, class_count)``
    class_count : int
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, copy=True)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"labels must be 1-D with {X.shape[0]} entries, got shape {y.shape}"
            )
        if y.size and not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise DataError("labels must be integers")
        y = y.astype(np.int64)
        C = int(self.class_count)
        if C < 1:
            raise DataError(f"class_count must be >= 1, got {C}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        if y.size and (y.min() < 0 or y.max() >= C):
            raise DataError(f"labels must lie in [0, {C}), got range [{y.min()}, {y.max()}]")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_count", C)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.class_count)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], class_count: int, feature_dim: int | None = None):
        if not samples:
            return cls(np.zeros((0, feature_dim or 0)), np.zeros(0, dtype=np.int64), class_count)
        X = np.stack([np.asarray(s.features, dtype=np.float64) for s in samples])
        y = np.array([s.label for s in samples], dtype=np.int64)
        return cls(X, y, class_count)


@dataclass(frozen=True)
class SynthConfig:
    class_count: int = 5
    feature_dim: int = 20
    per_class_counts: tuple = (653, 652, 652, 652, 653)
    class_separation: float = 1.0
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "per_class_counts", tuple(int(c) for c in self.per_class_counts))
        if self.class_count < 1 or self.feature_dim < 1:
            raise DataError("class_count and feature_dim must be >= 1")
        if len(self.per_class_counts) != self.class_count:
            raise DataError(
                f"per_class_counts has {len(self.per_class_counts)} entries, expected {self.class_count}"
            )
        if any(c < 0 for c in self.per_class_counts):
            raise DataError("per_class_counts entries must be >= 0")
        if sum(self.per_class_counts) == 0:
            raise DataError("per_class_counts must sum to a positive total")
        if not (self.noise_scale > 0 and math.isfinite(self.noise_scale)):
            raise DataError(f"noise_scale must be positive, got {self.noise_scale}")
        if not (self.class_separation >= 0 and math.isfinite(self.class_separation)):
            raise DataError(f"class_separation must be >= 0, got {self.class_separation}")
        if self.class_count > self.feature_dim and self.class_separation > 0:
            # centers sit on coordinate axes; more classes than axes would collide
            raise DataError("class_count may not exceed feature_dim when class_separation > 0")


@dataclass(frozen=True)
class SplitSpec:
    n_victim_train: int = 1500
    n_victim_test: int = 462
    n_shadow_pool: int = 1300
    seed: int = 0

    def __post_init__(self):
        for name in ("n_victim_train", "n_victim_test", "n_shadow_pool"):
            if int(getattr(self, name)) <= 0:
                raise DataError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def total(self) -> int:
        return self.n_victim_train + self.n_victim_test + self.n_shadow_pool


@dataclass(frozen=True)
class DatasetSplit:
    victim_train: Dataset
    victim_test: Dataset
    shadow_pool: Dataset
    # positions in the source dataset, in assignment order
    indices: dict = field(default_factory=dict, compare=False)


def class_centers(config: SynthConfig) -> np.ndarray:
    centers = np.zeros((config.class_count, config.feature_dim))
    for k in range(config.class_count):
        centers[k, k % config.feature_dim] = config.class_separation
    return centers


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw an isotropic Gaussian blob per class.

    Class ``k`` contributes exactly ``config.per_class_counts[k]`` rows centred
    at ``class_separation * e_k``; rows are laid out class by class.
    """
    rng = make_rng(config.seed)
    centers = class_centers(config)
    blocks, labels = [], []
    for k, n_k in enumerate(config.per_class_counts):
        noise = rng.standard_normal((n_k, config.feature_dim))
        blocks.append(centers[k] + config.noise_scale * noise)
        labels.append(np.full(n_k, k, dtype=np.int64))
    return Dataset(np.concatenate(blocks), np.concatenate(labels), config.class_count)


def split_three_way(dataset: Dataset, spec: SplitSpec) -> DatasetSplit:
    """Shuffle with a seeded permutation and cut into victim-train, victim-test
    and shadow-pool parts of the exact requested sizes. Leftover rows are
    dropped."""
    n = len(dataset)
    if spec.total > n:
        raise DataError(f"split counts sum to {spec.total}, dataset has only {n} samples")
    perm = make_rng(spec.seed).permutation(n)
    a = spec.n_victim_train
    b = a + spec.n_victim_test
    c = b + spec.n_shadow_pool
    idx = {"victim_train": perm[:a], "victim_test": perm[a:b], "shadow_pool": perm[b:c]}
    return DatasetSplit(
        victim_train=dataset.subset(idx["victim_train"]),
        victim_test=dataset.subset(idx["victim_test"]),
        shadow_pool=dataset.subset(idx["shadow_pool"]),
        indices=idx,
    )


def class_histogram(dataset: Dataset) -> dict[int, int]:
    if len(dataset) == 0:
        raise DataError("cannot histogram an empty dataset")
    counts = np.bincount(dataset.labels, minlength=dataset.class_count)
    return {k: int(counts[k]) for k in range(dataset.class_count)}


def load_csv(path, class_count: int | None = None) -> Dataset:
    """Read a ``f0,...,f{d-1},label`` CSV file.

    Errors name the 1-based line number of the offending row (the header is
    line 1).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        expected = [f"f{i}" for i in range(d)] + ["label"]
        if d < 1 or header != expected:
            raise DataError(f"{path}: header must be f0,...,f{{d-1}},label, got {','.join(header)}")
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise DataError(f"{path}: row {lineno} has {len(row)} fields, expected {d + 1}")
            try:
                feats = [float(v) for v in row[:d]]
            except ValueError:
                raise DataError(f"{path}: row {lineno} has a non-numeric feature value") from None
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"{path}: row {lineno} has a non-finite feature value")
            try:
                label = int(row[d].strip())
            except ValueError:
                raise DataError(f"{path}: row {lineno} has non-integer label {row[d]!r}") from None
            if label < 0:
                raise DataError(f"{path}: row {lineno} has negative label {label}")
            rows.append(feats)
            labels.append(label)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    y = np.array(labels, dtype=np.int64)
    if class_count is None:
        class_count = int(y.max()) + 1 if y.size else 1
    elif y.size and y.max() >= class_count:
        raise DataError(f"{path}: label {int(y.max())} exceeds class_count {class_count}")
    return Dataset(X, y, class_count)


def write_csv(dataset: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{i}" for i in range(dataset.feature_dim)] + ["label"])
        for x, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(label)])
