"""Shared fixture builders for the test suite."""

import numpy as np

from fedsmell.data import NUM_FEATURES, Dataset


def make_dataset(features, labels, name="fixture") -> Dataset:
    return Dataset(name, np.asarray(features, dtype=float), np.asarray(labels, dtype=int))


def random_dataset(n, n_positive, seed, name="fixture") -> Dataset:
    """Gaussian features with an exact positive count, shuffled deterministically."""
    rng = np.random.default_rng(seed)
    labels = np.zeros(n, dtype=int)
    labels[:n_positive] = 1
    rng.shuffle(labels)
    return Dataset(name, rng.standard_normal((n, NUM_FEATURES)), labels)


def rows_multiset(d: Dataset):
    """Sorted (features..., label) tuples for multiset comparisons."""
    rows = [tuple(d.features[i]) + (int(d.labels[i]),) for i in range(len(d))]
    return sorted(rows)
