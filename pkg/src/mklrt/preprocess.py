"""Training-time kernel preprocessing that can be replayed on test rows.

The optional steps run in a fixed order: distance-to-RBF conversion, trace
normalization, centering.  :func:`prepare_train` returns the processed kernel
and a JSON-friendly record of the fitted parameters; :func:`prepare_cross`
applies the same parameters to test-vs-train rows.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .kernels import center_cross_from_means, center_train, mean_offdiagonal, rbf_from_distance


def prepare_train(values, *, from_distance: bool = False, normalize: bool = False,
                  center: bool = False) -> tuple[np.ndarray, dict]:
    k = np.asarray(values, dtype=float)
    record = {"eta": None, "scale": 1.0, "col_means": None}
    if from_distance:
        record["eta"] = mean_offdiagonal(k)
        k = rbf_from_distance(k)
    if normalize:
        tr = float(np.trace(k))
        if not tr > 0:
            raise InvalidInputError(f"trace normalization needs a positive trace, got {tr}")
        record["scale"] = k.shape[0] / tr
        k = k * record["scale"]
    if center:
        record["col_means"] = k.mean(axis=0).tolist()
        k = center_train(k)
    return k, record


def prepare_cross(values, record: dict | None) -> np.ndarray:
    kt = np.atleast_2d(np.asarray(values, dtype=float))
    if not record:
        return kt
    if record.get("eta") is not None:
        kt = rbf_from_distance(kt, eta=record["eta"])
    kt = kt * record.get("scale", 1.0)
    if record.get("col_means") is not None:
        kt = center_cross_from_means(kt, record["col_means"])
    return kt
