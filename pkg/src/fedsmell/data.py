"""Dataset ingestion, normalization, rebalancing, chunking and synthesis.

Datasets are 16 numeric code metrics per class instance plus a binary
god-class label, stored as numpy arrays. All randomized operations take
explicit seeds and are reproducible.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, ParseError, SchemaError, StructuralError

FEATURE_NAMES = (
    "TLOC", "NCLOC", "CLOC", "EXEC", "DC", "NOT", "NOTa", "NOTc",
    "NOTe", "RFC", "WMC", "DIT", "NOC", "DIP", "LCOM", "NOA",
)
NUM_FEATURES = len(FEATURE_NAMES)
LABEL_COLUMN = "is_god_class"

OVERSAMPLE = "oversample"
UNDERSAMPLE = "undersample"
NO_REBALANCE = "none"
REBALANCE_MODES = (OVERSAMPLE, UNDERSAMPLE, NO_REBALANCE)

# Synthetic geometry: two unit-variance Gaussian clusters this far apart
# along a fixed unit axis. A second, orthogonal axis carries the context
# component of cross-organization distribution shifts.
CLASS_SEPARATION = 5.0
CLASS_AXIS = np.ones(NUM_FEATURES) / math.sqrt(NUM_FEATURES)
CONTEXT_AXIS = np.array([1.0, -1.0] * (NUM_FEATURES // 2)) / math.sqrt(NUM_FEATURES)
_SHIFT_CLASS_FRACTION = 2.0 / 3.0


@dataclass(frozen=True)
class Sample:
    """One class instance: 16 metric features and a binary label."""

    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Named collection of samples backed by dense arrays."""

    name: str
    features: np.ndarray  # (n, NUM_FEATURES) float64
    labels: np.ndarray  # (n,) int64 with values in {0, 1}

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[1] != NUM_FEATURES:
            raise StructuralError(
                f"features must be (n, {NUM_FEATURES}), got {self.features.shape}"
            )
        if self.labels.shape != (self.features.shape[0],):
            raise StructuralError("labels must align 1:1 with feature rows")
        if len(self.labels) == 0:
            raise StructuralError("dataset must contain at least one sample")
        if not np.all(np.isfinite(self.features)):
            raise NumericError(f"dataset {self.name!r} contains non-finite features")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise StructuralError(f"dataset {self.name!r} labels must be 0 or 1")

    def __len__(self) -> int:
        return len(self.labels)

    def class_counts(self) -> tuple[int, int]:
        pos = int(self.labels.sum())
        return len(self.labels) - pos, pos

    def subset(self, indices, name: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(name or self.name, self.features[idx], self.labels[idx])

    def samples(self) -> list[Sample]:
        return [Sample(self.features[i].copy(), int(self.labels[i])) for i in range(len(self))]


def concat_datasets(name: str, datasets) -> Dataset:
    datasets = list(datasets)
    if not datasets:
        raise StructuralError("cannot concatenate zero datasets")
    return Dataset(
        name,
        np.concatenate([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
    )


def load_csv(path, schema=FEATURE_NAMES) -> Dataset:
    """Read a dataset from CSV.

    The header must contain every schema column (case-insensitive) plus
    the label column; extra columns are ignored and file row order is
    preserved. Blank lines are skipped.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(line_no, row) for line_no, row in enumerate(csv.reader(fh), start=1)
                    if any(cell.strip() for cell in row)]
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not rows:
        raise StructuralError(f"{path}: empty file")

    _, header = rows[0]
    lower = {cell.strip().lower(): idx for idx, cell in enumerate(header)}
    feature_idx = []
    for column in schema:
        if column.lower() not in lower:
            raise SchemaError(f"{path}: missing required column {column!r}")
        feature_idx.append(lower[column.lower()])
    if LABEL_COLUMN not in lower:
        raise SchemaError(f"{path}: missing required column {LABEL_COLUMN!r}")
    label_idx = lower[LABEL_COLUMN]

    features = []
    labels = []
    for line_no, row in rows[1:]:
        try:
            features.append([float(row[i]) for i in feature_idx])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: row {line_no}: non-numeric feature cell ({exc})") from exc
        try:
            label = int(float(row[label_idx]))
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: row {line_no}: bad label cell ({exc})") from exc
        if label not in (0, 1):
            raise ParseError(f"{path}: row {line_no}: label must be 0 or 1, got {label}")
        labels.append(label)
    if not features:
        raise StructuralError(f"{path}: no data rows")
    return Dataset(path.stem, np.array(features), np.array(labels))


def save_csv(dataset: Dataset, path) -> None:
    """Write a dataset in the canonical CSV layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FEATURE_NAMES) + [LABEL_COLUMN])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


@dataclass(frozen=True)
class NormalizationStats:
    """Per-feature mean and standard deviation fitted on training data."""

    mean: np.ndarray
    std: np.ndarray  # constant features stored with std 1.0


def fit_normalizer(train: Dataset) -> NormalizationStats:
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return NormalizationStats(mean=mean, std=std)


def apply_normalizer(d: Dataset, stats: NormalizationStats) -> Dataset:
    return Dataset(d.name, (d.features - stats.mean) / stats.std, d.labels)


def denormalize(d: Dataset, stats: NormalizationStats) -> Dataset:
    return Dataset(d.name, d.features * stats.std + stats.mean, d.labels)


def split_train_test(d: Dataset, test_fraction: float, seed: int):
    """Deterministic stratified split; returns (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise StructuralError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    test_indices = []
    for cls in (0, 1):
        cls_idx = np.flatnonzero(d.labels == cls)
        if len(cls_idx) < 2:
            raise StructuralError(
                f"dataset {d.name!r}: class {cls} has fewer than 2 samples, cannot stratify"
            )
        n_test = int(math.floor(test_fraction * len(cls_idx) + 0.5))
        perm = rng.permutation(len(cls_idx))
        test_indices.extend(cls_idx[perm[:n_test]])
    test_mask = np.zeros(len(d), dtype=bool)
    test_mask[np.asarray(test_indices, dtype=int)] = True
    train = d.subset(np.flatnonzero(~test_mask), f"{d.name}-train")
    test = d.subset(np.flatnonzero(test_mask), f"{d.name}-test")
    return train, test


@dataclass(frozen=True)
class PartitionPlan:
    """Assignment of every sample index of a source dataset to one chunk."""

    source: str
    k: int
    chunks: tuple[tuple[int, ...], ...]

    def to_json(self) -> str:
        return json.dumps({
            "source": self.source,
            "k": self.k,
            "chunks": [list(chunk) for chunk in self.chunks],
        })

    @classmethod
    def from_json(cls, text: str) -> "PartitionPlan":
        raw = json.loads(text)
        return cls(
            source=raw["source"],
            k=int(raw["k"]),
            chunks=tuple(tuple(int(i) for i in chunk) for chunk in raw["chunks"]),
        )


def partition_chunks(d: Dataset, k: int, seed: int) -> PartitionPlan:
    """Shuffle then deal samples round-robin into k near-equal chunks.

    Membership is random (no stratification), so chunk class ratios vary;
    chunk sizes differ by at most one. Indices within a chunk are kept
    sorted so materialized chunks preserve source row order.
    """
    if k < 1:
        raise StructuralError("chunk count must be >= 1")
    if k > len(d):
        raise StructuralError(f"cannot split {len(d)} samples into {k} chunks")
    perm = np.random.default_rng(seed).permutation(len(d))
    chunks = tuple(tuple(int(i) for i in sorted(perm[j::k])) for j in range(k))
    return PartitionPlan(source=d.name, k=k, chunks=chunks)


def extract_chunks(d: Dataset, plan: PartitionPlan) -> list[Dataset]:
    return [d.subset(chunk, f"{d.name}-chunk{j}") for j, chunk in enumerate(plan.chunks)]


def rebalance(d: Dataset, mode: str, seed: int) -> Dataset:
    """Equalize class counts by duplicating minority or dropping majority rows."""
    if mode not in REBALANCE_MODES:
        raise StructuralError(f"unknown rebalance mode {mode!r}")
    neg, pos = d.class_counts()
    if neg == 0 or pos == 0:
        raise StructuralError(f"dataset {d.name!r} has a single class, cannot rebalance")
    if mode == NO_REBALANCE or neg == pos:
        return d
    rng = np.random.default_rng(seed)
    minority = 1 if pos < neg else 0
    minority_idx = np.flatnonzero(d.labels == minority)
    majority_idx = np.flatnonzero(d.labels != minority)
    if mode == OVERSAMPLE:
        extra = rng.integers(0, len(minority_idx), size=len(majority_idx) - len(minority_idx))
        indices = np.concatenate([np.arange(len(d)), minority_idx[extra]])
    else:
        kept = rng.choice(majority_idx, size=len(minority_idx), replace=False)
        indices = np.sort(np.concatenate([minority_idx, kept]))
    return d.subset(indices)


def domain_shift(magnitude: float) -> np.ndarray:
    """Translation vector modeling another organization's drifted metrics.

    Splits the requested magnitude between the class axis (moves the
    population toward a foreign decision boundary) and the orthogonal
    context axis (moves it off the training support), so shifted data
    degrades a naively transferred model while remaining separable for a
    model trained on both populations.
    """
    along = _SHIFT_CLASS_FRACTION
    ortho = math.sqrt(1.0 - along ** 2)
    return float(magnitude) * (along * CLASS_AXIS + ortho * CONTEXT_AXIS)


def synth_generate(n: int, positive_rate: float, shift, seed: int,
                   name: str | None = None) -> Dataset:
    """Generate a two-cluster Gaussian surrogate dataset.

    Labels are i.i.d. Bernoulli(positive_rate); features are unit-variance
    Gaussians centered +-CLASS_SEPARATION/2 along CLASS_AXIS, then the
    whole population is translated by `shift` (scalar or 16-vector).
    """
    if n < 10:
        raise StructuralError("synthetic datasets need at least 10 samples")
    if not 0.0 < positive_rate < 1.0:
        raise StructuralError("positive_rate must be in (0, 1)")
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (NUM_FEATURES,))
    rng = np.random.default_rng(seed)
    labels = (rng.random(n) < positive_rate).astype(np.int64)
    signs = labels * 2 - 1
    centers = signs[:, None] * (CLASS_SEPARATION / 2.0) * CLASS_AXIS
    features = centers + rng.standard_normal((n, NUM_FEATURES)) + shift
    return Dataset(name or f"synth{seed}", features, labels)
