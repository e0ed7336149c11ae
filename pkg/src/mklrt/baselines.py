"""Fixed kernel combinations used as comparators to learned weights.

Each returns a single kernel that is fed through the same pencil solver as
the learned combination (use ``mu=[1]`` with :func:`mklrt.instances.fit_instance`).
"""
from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError
from .kernels import as_array, is_psd

logger = logging.getLogger(__name__)


def _stack(kernels: Sequence) -> np.ndarray:
    if len(kernels) == 0:
        raise InvalidInputError("no kernels")
    mats = [as_array(k) for k in kernels]
    shape = mats[0].shape
    if any(k.shape != shape for k in mats):
        raise InvalidInputError("kernels have different shapes")
    return np.stack(mats)


def average_kernel(kernels: Sequence) -> np.ndarray:
    """Entrywise arithmetic mean of the base kernels."""
    return _stack(kernels).mean(axis=0)


def product_kernel(kernels: Sequence, check_psd: bool = False) -> np.ndarray:
    """Entrywise geometric mean ``(prod_m K^m)^(1/M)``.

    All entries must be strictly positive.  The result need not be PSD; with
    ``check_psd=True`` a warning is logged when it is not.
    """
    stack = _stack(kernels)
    if np.any(stack <= 0):
        raise InvalidInputError("geometric mean kernel needs strictly positive entries")
    out = np.exp(np.log(stack).mean(axis=0))
    if stack.shape[0] == 1:
        out = stack[0].copy()
    if check_psd and out.shape[0] == out.shape[1] and not is_psd(out):
        logger.warning("geometric mean kernel is not positive semi-definite")
    return out


def best_individual_kernel(kernels: Sequence, selector: Callable[[np.ndarray], float]
                           ) -> tuple[int, np.ndarray]:
    """Kernel with the highest ``selector`` score (0-based index, ties to the first).

    ``selector`` receives one kernel matrix and returns a score where larger
    is better, typically a cross-validated accuracy or MAP.
    """
    if len(kernels) == 0:
        raise InvalidInputError("no kernels")
    scores = np.array([float(selector(as_array(k))) for k in kernels])
    finite = np.isfinite(scores)
    if not finite.any():
        raise InvalidInputError("selector returned no finite score")
    scores[~finite] = -np.inf
    best = int(np.argmax(scores))
    logger.info("best individual kernel %d, scores %s", best, np.round(scores, 4))
    return best, as_array(kernels[best])
