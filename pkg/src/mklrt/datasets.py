"""Synthetic problems for demos and tests."""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError
from .kernels import rbf_from_distance


def random_psd(n: int, rank: int | None = None, rng=None) -> np.ndarray:
    """Random PSD matrix ``A A^T / rank`` with ``A`` standard normal ``n x rank``."""
    rng = np.random.default_rng(rng)
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank))
    k = a @ a.T / rank
    return (k + k.T) / 2


def random_labels(n: int, n_classes: int, rng=None) -> np.ndarray:
    """Labels ``0..n_classes-1`` with every class present."""
    if not 1 <= n_classes <= n:
        raise InvalidInputError(f"cannot fill {n_classes} classes with {n} items")
    rng = np.random.default_rng(rng)
    y = rng.integers(0, n_classes, n)
    y[rng.permutation(n)[:n_classes]] = np.arange(n_classes)
    return y


def two_blobs(n_per_class: int = 40, separation: float = 10.0, rng=None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Two unit-variance 2-D Gaussian blobs whose means are ``separation`` apart."""
    rng = np.random.default_rng(rng)
    means = np.array([[0.0, 0.0], [separation, 0.0]])
    y = np.repeat([0, 1], n_per_class)
    x = means[y] + rng.standard_normal((2 * n_per_class, 2))
    return x, y


def rbf_kernels(train, test=None) -> tuple[np.ndarray, np.ndarray | None]:
    """Distance-based RBF kernel on ``train`` and, optionally, test-vs-train rows.

    The bandwidth is the mean off-diagonal training distance.
    """
    d = cdist(train, train)
    k = rbf_from_distance(d)
    if test is None:
        return k, None
    n = d.shape[0]
    eta = (d.sum() - np.trace(d)) / (n * (n - 1))
    return k, rbf_from_distance(cdist(test, train), eta=eta)


def noisy_feature_kernels(n_per_class: int = 10, n_classes: int = 3, rng=None
                          ) -> tuple[list[np.ndarray], np.ndarray]:
    """Three RBF kernels: two on label-informative features, one on pure noise.

    Returns ``(kernels, labels)``; the noise kernel is the last one.
    """
    rng = np.random.default_rng(rng)
    y = np.repeat(np.arange(n_classes), n_per_class)
    centers = 3.0 * rng.standard_normal((n_classes, 2))
    feats = [centers[y] + rng.standard_normal((y.size, 2)),
             centers[y] + 2.0 * rng.standard_normal((y.size, 2)),
             rng.standard_normal((y.size, 2))]
    return [rbf_kernels(f)[0] for f in feats], y
