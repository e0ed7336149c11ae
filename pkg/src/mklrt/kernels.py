"""Kernel matrices: validation, convex combination, centering and distances.

All operations here are pure functions on dense ``numpy`` arrays.  The
:class:`KernelMatrix` and :class:`CrossKernelMatrix` containers only attach
item identifiers to a matrix; they are what the file layer reads and writes
and what :func:`mklrt.instances.project` uses to check train/test alignment.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-8
SIMPLEX_ATOL = 1e-12


@dataclass(frozen=True)
class KernelMatrix:
    """Square Gram matrix over ``item_ids`` (row order == column order)."""

    values: np.ndarray
    item_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        check_symmetric(values, "kernel")
        ids = tuple(str(i) for i in self.item_ids)
        if not ids:
            ids = tuple(str(i) for i in range(values.shape[0]))
        if len(ids) != values.shape[0]:
            raise InvalidInputError(
                f"{len(ids)} item ids for a {values.shape[0]}x{values.shape[0]} kernel")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "item_ids", ids)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CrossKernelMatrix:
    """Kernel evaluations between test items (rows) and training items (columns)."""

    values: np.ndarray
    test_ids: tuple[str, ...] = field(default=())
    train_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.ndim != 2:
            raise InvalidInputError("cross kernel must be a 2-D array")
        test_ids = tuple(str(i) for i in self.test_ids) or tuple(
            str(i) for i in range(values.shape[0]))
        train_ids = tuple(str(i) for i in self.train_ids) or tuple(
            str(i) for i in range(values.shape[1]))
        if len(test_ids) != values.shape[0] or len(train_ids) != values.shape[1]:
            raise InvalidInputError(
                f"id counts ({len(test_ids)}, {len(train_ids)}) do not match "
                f"cross kernel shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "test_ids", test_ids)
        object.__setattr__(self, "train_ids", train_ids)


def as_array(k) -> np.ndarray:
    if isinstance(k, (KernelMatrix, CrossKernelMatrix)):
        return k.values
    return np.asarray(k, dtype=float)


def check_symmetric(k, name: str = "matrix", rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Return ``k`` as a float array, raising unless it is square and symmetric.

    Symmetry is judged relative to the largest absolute entry.
    """
    k = as_array(k)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise InvalidInputError(f"{name} must be square, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise InvalidInputError(f"{name} has non-finite entries")
    scale = np.max(np.abs(k)) if k.size else 0.0
    if np.max(np.abs(k - k.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise InvalidInputError(f"{name} is not symmetric")
    return k


def min_eigenvalue(k) -> float:
    k = as_array(k)
    return float(np.linalg.eigvalsh((k + k.T) / 2)[0])


def is_psd(k, rtol: float = PSD_RTOL) -> bool:
    """Whether the smallest eigenvalue is at least ``-rtol * trace(k) / N``."""
    k = check_symmetric(k, "kernel")
    n = k.shape[0]
    if n == 0:
        return True
    slack = rtol * abs(np.trace(k)) / n
    return min_eigenvalue(k) >= -slack


def check_simplex(mu, m: int | None = None) -> np.ndarray:
    """Validate a weight vector on the probability simplex and return it."""
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size == 0:
        raise InvalidInputError("weight vector is empty")
    if m is not None and mu.size != m:
        raise InvalidInputError(f"expected {m} weights, got {mu.size}")
    if np.any(~np.isfinite(mu)) or np.any(mu < 0):
        raise InvalidInputError("kernel weights must be finite and nonnegative")
    if abs(mu.sum() - 1.0) > SIMPLEX_ATOL * max(1, mu.size):
        raise InvalidInputError(f"kernel weights sum to {mu.sum()!r}, not 1")
    return mu


def combine_kernels(mu, kernels: Sequence, symmetrize: bool = True) -> np.ndarray:
    """Convex combination ``sum_m mu[m] * kernels[m]``.

    Parameters
    ----------
    mu : array_like, shape (M,)
        Simplex weights.
    kernels : sequence of M arrays of identical shape
        Base kernels (or cross kernels when ``symmetrize=False``).
    symmetrize : bool
        Return ``(K + K.T) / 2`` so that the result is exactly symmetric.
    """
    if len(kernels) == 0:
        raise InvalidInputError("no kernels to combine")
    mu = check_simplex(mu, len(kernels))
    mats = [as_array(k) for k in kernels]
    shape = mats[0].shape
    for i, k in enumerate(mats):
        if k.shape != shape:
            raise InvalidInputError(
                f"kernel {i} has shape {k.shape}, expected {shape}")
    out = np.zeros(shape)
    for w, k in zip(mu, mats):
        if w != 0.0:
            out += w * k
    if symmetrize:
        if shape[0] != shape[1]:
            raise InvalidInputError("cannot symmetrize a non-square combination")
        out = (out + out.T) / 2
    return out


def distance_from_kernel(k) -> np.ndarray:
    """Kernel-induced distances ``sqrt(K_ii + K_jj - K_ij - K_ji)``.

    Negative squared distances (indefinite inputs) are clamped to zero and
    the number of clamped entries is logged.
    """
    k = check_symmetric(k, "kernel")
    diag = np.diag(k)
    d2 = diag[:, None] + diag[None, :] - k - k.T
    np.fill_diagonal(d2, 0.0)
    neg = d2 < 0
    n_clamped = int(np.count_nonzero(neg))
    if n_clamped:
        logger.warning("clamped %d negative squared distances (min %.3g)",
                       n_clamped, d2.min())
        d2[neg] = 0.0
    d = np.sqrt(d2)
    d = (d + d.T) / 2
    np.fill_diagonal(d, 0.0)
    return d


def mean_offdiagonal(d) -> float:
    d = as_array(d)
    n = d.shape[0]
    if n < 2:
        return 0.0
    return float((d.sum() - np.trace(d)) / (n * (n - 1)))


def rbf_from_distance(d, eta: float | None = None) -> np.ndarray:
    """Kernel ``exp(-d / eta)`` with ``eta`` the mean off-diagonal distance.

    ``eta`` may be given explicitly, which is how test-vs-train distance rows
    are mapped with the bandwidth estimated on the training block.  In that
    case ``d`` need not be square.
    """
    d = as_array(d)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidInputError("distances must be finite and nonnegative")
    if eta is None:
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidInputError("bandwidth estimation needs a square distance matrix")
        eta = mean_offdiagonal(d)
    if not eta > 0:
        raise InvalidInputError("distance matrix has no positive off-diagonal entry")
    return np.exp(-d / eta)


def center_train(k) -> np.ndarray:
    """Double-center a training kernel: ``H K H`` with ``H = I - 11^T / N``."""
    k = check_symmetric(k, "kernel")
    col_means = k.mean(axis=0)
    row_means = k.mean(axis=1)
    out = k - col_means[None, :] - row_means[:, None] + k.mean()
    return (out + out.T) / 2


def center_cross(kt, k_train) -> np.ndarray:
    """Center test-vs-train kernel rows consistently with :func:`center_train`.

    Computes ``(K_t - 1 1^T K / N) H``.
    """
    if isinstance(kt, CrossKernelMatrix) and isinstance(k_train, KernelMatrix):
        if kt.train_ids != k_train.item_ids:
            raise InvalidInputError("cross kernel columns do not match training ids")
    kt = np.atleast_2d(as_array(kt))
    k_train = check_symmetric(k_train, "training kernel")
    if kt.shape[1] != k_train.shape[0]:
        raise InvalidInputError(
            f"cross kernel has {kt.shape[1]} columns, training kernel is {k_train.shape[0]}")
    return center_cross_from_means(kt, k_train.mean(axis=0))


def center_cross_from_means(kt, train_col_means) -> np.ndarray:
    """Same as :func:`center_cross` given only the training column means."""
    kt = np.atleast_2d(as_array(kt))
    col_means = np.asarray(train_col_means, dtype=float)
    shifted = kt - col_means[None, :]
    return shifted - shifted.mean(axis=1, keepdims=True)


def normalize_trace(k) -> np.ndarray:
    """Rescale so that ``trace(K) == N``."""
    k = check_symmetric(k, "kernel")
    tr = np.trace(k)
    if not tr > 0:
        raise InvalidInputError(f"trace normalization needs a positive trace, got {tr}")
    return k * (k.shape[0] / tr)
