"""KFDA, KCCA and labeled KCCA as ratio-trace instances, plus projection.

Each builder returns the pair ``(L, Lp)`` that, together with the combined
first-view kernel, defines the pencil solved in :mod:`mklrt.ratio_trace`.
Class labels may be any hashable values; classes are ordered by
``numpy.unique``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, NumericalError
from .kernels import (CrossKernelMatrix, KernelMatrix, as_array, check_simplex, check_symmetric,
                      combine_kernels)
from .ratio_trace import GevdResult, RatioTraceInstance, check_sigma, solve_gevd_pencil

logger = logging.getLogger(__name__)

TASKS = ("kfda", "kcca", "lkcca")
KFDA_VARIANTS = ("A", "B")


@dataclass(frozen=True)
class InstanceSpec:
    """Which ratio-trace instance to build and how.

    ``task`` is one of ``"kfda"``, ``"kcca"``, ``"lkcca"``.  For KFDA,
    ``kfda_variant`` ``"A"`` uses ``L = I - L'`` and ``"B"`` uses ``L = I``.
    ``dims=None`` keeps P - 1 dimensions for KFDA/LKCCA and every nonzero
    eigenvalue for KCCA.
    """

    task: str = "kfda"
    sigma: float = 0.5
    dims: int | None = None
    kfda_variant: str = "A"

    def __post_init__(self):
        task = self.task.lower().replace("-", "")
        if task in ("kfdaa", "kfdab"):
            object.__setattr__(self, "kfda_variant", task[-1].upper())
            task = "kfda"
        if task not in TASKS:
            raise InvalidInputError(f"unknown task {self.task!r}; expected one of {TASKS}")
        object.__setattr__(self, "task", task)
        check_sigma(self.sigma)
        if self.dims is not None and int(self.dims) < 1:
            raise InvalidInputError(f"dims must be >= 1, got {self.dims}")
        if self.kfda_variant not in KFDA_VARIANTS:
            raise InvalidInputError(f"kfda_variant must be 'A' or 'B', got {self.kfda_variant!r}")

    def with_sigma(self, sigma: float) -> "InstanceSpec":
        return replace(self, sigma=sigma)


@dataclass(frozen=True)
class RatioTraceModel:
    """A solved instance: kernel weights plus latent projections.

    ``gamma`` maps first-view kernel rows to latent coordinates; ``xi`` does
    the same for the second view (KCCA/LKCCA only).
    """

    task: str
    sigma: float
    mu: np.ndarray
    gamma: np.ndarray
    lambdas: np.ndarray
    xi: np.ndarray | None = None
    train_ids: tuple[str, ...] = ()
    second_ids: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.xi is not None and self.xi.shape[1] != self.gamma.shape[1]:
            raise InvalidInputError("xi and gamma must have the same number of columns")
        if np.any(self.lambdas <= 0):
            raise InvalidInputError("model eigenvalues must be strictly positive")

    @property
    def dims(self) -> int:
        return self.gamma.shape[1]

    @property
    def objective(self) -> float:
        return float(np.sum(self.lambdas))


def encode_labels(y) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(classes, codes)`` with ``classes[codes] == y``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise InvalidInputError("labels must be a nonempty 1-D sequence")
    classes, codes = np.unique(y, return_inverse=True)
    return classes, codes


def membership(codes: np.ndarray, n_classes: int) -> np.ndarray:
    """``N x P`` indicator matrix with columns ``1[y == p]``."""
    out = np.zeros((codes.size, n_classes))
    out[np.arange(codes.size), codes] = 1.0
    return out


def build_kfda(y, variant: str = "A") -> tuple[np.ndarray, np.ndarray]:
    """``L' = sum_p 1_p 1_p^T / N_p`` and ``L = I - L'`` (A) or ``I`` (B)."""
    if variant not in KFDA_VARIANTS:
        raise InvalidInputError(f"variant must be 'A' or 'B', got {variant!r}")
    classes, codes = encode_labels(y)
    Y = membership(codes, classes.size)
    counts = Y.sum(axis=0)
    Lp = (Y / counts[None, :]) @ Y.T
    eye = np.eye(codes.size)
    L = eye - Lp if variant == "A" else eye
    return L, Lp


def _regularized_solve(M, rhs, assume_a):
    try:
        return linalg.solve(M, rhs, assume_a=assume_a)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"linear solve failed: {exc}") from exc


def _symmetrize_logged(m, what):
    asym = np.max(np.abs(m - m.T), initial=0.0)
    scale = max(np.max(np.abs(m), initial=0.0), np.finfo(float).tiny)
    if asym > 1e-6 * scale:
        logger.warning("%s asymmetry %.3g before symmetrization (scale %.3g)", what, asym, scale)
    else:
        logger.debug("%s asymmetry %.3g before symmetrization", what, asym)
    return (m + m.T) / 2


def build_kcca(Kz, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """``L' = Kz ((1 - sigma) Kz + sigma I)^{-1}`` and ``L = I``."""
    sigma = check_sigma(sigma)
    Kz = check_symmetric(Kz, "Kz")
    n = Kz.shape[0]
    system = (1 - sigma) * Kz + sigma * np.eye(n)
    # Kz commutes with the system matrix, so solving from the left is exact.
    Lp = _regularized_solve(system, Kz, "sym")
    return np.eye(n), _symmetrize_logged(Lp, "KCCA L'")


@dataclass(frozen=True)
class LabeledPairing:
    """Bookkeeping for pairs formed by shared labels across two views."""

    E: np.ndarray
    Dx: np.ndarray
    Dz: np.ndarray
    classes: np.ndarray


def label_pairing(y, w) -> LabeledPairing:
    """Pairing matrix ``E`` and degree vectors for labels ``y`` (view x), ``w`` (view z)."""
    y = np.asarray(y)
    w = np.asarray(w)
    cy, cw = set(np.unique(y).tolist()), set(np.unique(w).tolist())
    if cy != cw:
        raise InvalidInputError(
            f"classes differ between views: only in x {sorted(cy - cw, key=str)}, "
            f"only in z {sorted(cw - cy, key=str)}")
    classes, codes = np.unique(np.concatenate([y, w]), return_inverse=True)
    Yx = membership(codes[:y.size], classes.size)
    Yz = membership(codes[y.size:], classes.size)
    nx, nz = Yx.sum(axis=0), Yz.sum(axis=0)
    return LabeledPairing(E=Yx @ Yz.T, Dx=Yx @ nz, Dz=Yz @ nx, classes=classes)


def build_lkcca(y, w, Kz, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Labeled KCCA without replicating samples.

    ``L' = E Kz (sigma I + (1 - sigma) Dz Kz)^{-1} E^T`` and ``L = Dx``.
    """
    sigma = check_sigma(sigma)
    Kz = check_symmetric(Kz, "Kz")
    pairing = label_pairing(y, w)
    if Kz.shape[0] != pairing.Dz.size:
        raise InvalidInputError(f"Kz is {Kz.shape[0]}x{Kz.shape[0]} but w has {pairing.Dz.size} labels")
    nz = Kz.shape[0]
    system = sigma * np.eye(nz) + (1 - sigma) * pairing.Dz[:, None] * Kz
    # Kz S^{-1} = (S^{-T} Kz)^T
    KzSinv = _regularized_solve(system.T, Kz, "gen").T
    Lp = pairing.E @ KzSinv @ pairing.E.T
    return np.diag(pairing.Dx), _symmetrize_logged(Lp, "LKCCA L'")


def _check_lambdas(lambdas):
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas <= 0):
        raise InvalidInputError("eigenvalues must be strictly positive")
    return lambdas


def compute_xi_kcca(Kz, Kx, gamma, lambdas, sigma: float) -> np.ndarray:
    """Second-view coefficients ``((1 - sigma) Kz + sigma I)^{-1} Kx Gamma Lambda^{-1/2}``."""
    sigma = check_sigma(sigma)
    lambdas = _check_lambdas(lambdas)
    Kz, Kx = as_array(Kz), as_array(Kx)
    rhs = Kx @ np.asarray(gamma, float) / np.sqrt(lambdas)[None, :]
    system = (1 - sigma) * Kz + sigma * np.eye(Kz.shape[0])
    return _regularized_solve(system, rhs, "sym")


def compute_xi_lkcca(Kz, Kx, E, Dz, gamma, lambdas, sigma: float) -> np.ndarray:
    """``((1 - sigma) Dz Kz + sigma I)^{-1} E^T Kx Gamma Lambda^{-1/2}``.

    ``Dz`` may be the diagonal matrix or its diagonal as a vector.
    """
    sigma = check_sigma(sigma)
    lambdas = _check_lambdas(lambdas)
    Kz, Kx, E = as_array(Kz), as_array(Kx), as_array(E)
    dz = np.asarray(Dz, float)
    if dz.ndim == 2:
        dz = np.diag(dz)
    rhs = E.T @ Kx @ np.asarray(gamma, float) / np.sqrt(lambdas)[None, :]
    system = (1 - sigma) * dz[:, None] * Kz + sigma * np.eye(Kz.shape[0])
    return _regularized_solve(system, rhs, "gen")


def default_dims(spec: InstanceSpec, n_classes: int | None) -> int | None:
    if spec.dims is not None:
        return int(spec.dims)
    if spec.task in ("kfda", "lkcca"):
        return max(n_classes - 1, 1)
    return None


def build_pair(spec: InstanceSpec, *, labels=None, Kz=None, labels_z=None):
    """Dispatch to the builder for ``spec.task``; returns ``(L, Lp, n_classes)``."""
    if spec.task == "kfda":
        if labels is None:
            raise InvalidInputError("KFDA needs class labels")
        L, Lp = build_kfda(labels, spec.kfda_variant)
        return L, Lp, np.unique(labels).size
    if Kz is None:
        raise InvalidInputError(f"{spec.task.upper()} needs a second-view kernel")
    if spec.task == "kcca":
        L, Lp = build_kcca(Kz, spec.sigma)
        return L, Lp, None
    if labels is None or labels_z is None:
        raise InvalidInputError("LKCCA needs labels for both views")
    L, Lp = build_lkcca(labels, labels_z, Kz, spec.sigma)
    return L, Lp, np.unique(labels).size


def fit_instance(spec: InstanceSpec, kernels_x: Sequence, mu=None, *, labels=None,
                 Kz=None, labels_z=None, pair=None) -> RatioTraceModel:
    """Combine first-view kernels with ``mu`` and solve the instance's pencil.

    Parameters
    ----------
    spec : InstanceSpec
    kernels_x : sequence of (N, N) arrays
        First-view base kernels.
    mu : array_like, optional
        Simplex weights; uniform when omitted.
    labels : array_like, optional
        First-view class labels (KFDA, LKCCA).
    Kz : (Nz, Nz) array, optional
        Second-view kernel (KCCA, LKCCA).
    labels_z : array_like, optional
        Second-view class labels (LKCCA).
    pair : tuple, optional
        Precomputed ``(L, Lp, n_classes)`` from :func:`build_pair`.
    """
    if len(kernels_x) == 0:
        raise InvalidInputError("no first-view kernels")
    if mu is None:
        mu = np.full(len(kernels_x), 1.0 / len(kernels_x))
    mu = check_simplex(mu, len(kernels_x))
    K = combine_kernels(mu, kernels_x)
    if pair is None:
        pair = build_pair(spec, labels=labels, Kz=Kz, labels_z=labels_z)
    L, Lp, n_classes = pair
    gevd = solve_gevd_pencil(RatioTraceInstance(K, L, Lp, spec.sigma),
                             dims=default_dims(spec, n_classes))
    return model_from_gevd(spec, mu, K, gevd, Kz=Kz, labels=labels, labels_z=labels_z,
                           train_ids=_ids_of(kernels_x[0]),
                           second_ids=_ids_of(Kz) if Kz is not None else ())


def _ids_of(k) -> tuple[str, ...]:
    return k.item_ids if isinstance(k, KernelMatrix) else ()


def model_from_gevd(spec: InstanceSpec, mu, K, gevd: GevdResult, *, Kz=None,
                    labels=None, labels_z=None, train_ids=(), second_ids=()) -> RatioTraceModel:
    if gevd.dims == 0:
        raise NumericalError("pencil has no positive generalized eigenvalue")
    xi = None
    if spec.task == "kcca":
        xi = compute_xi_kcca(Kz, K, gevd.gamma, gevd.lambdas, spec.sigma)
    elif spec.task == "lkcca":
        pairing = label_pairing(labels, labels_z)
        xi = compute_xi_lkcca(Kz, K, pairing.E, pairing.Dz, gevd.gamma, gevd.lambdas, spec.sigma)
    meta = dict(gevd.meta)
    if spec.task == "kfda":
        meta["kfda_variant"] = spec.kfda_variant
    return RatioTraceModel(task=spec.task, sigma=spec.sigma, mu=np.asarray(mu, float),
                           gamma=gevd.gamma, lambdas=gevd.lambdas, xi=xi,
                           train_ids=tuple(train_ids), second_ids=tuple(second_ids), meta=meta)


def project(model: RatioTraceModel, cross_kernels: Sequence, view: str = "first") -> np.ndarray:
    """Latent coordinates (one row per test item) for test-vs-train kernels.

    For the first view, ``cross_kernels`` holds one ``(N_test, N)`` matrix per
    base kernel and is combined with ``model.mu``.  For the second view a
    single ``(N_test, N_z)`` matrix is expected.
    """
    if view not in ("first", "second"):
        raise InvalidInputError(f"view must be 'first' or 'second', got {view!r}")
    if view == "first":
        coef, expected_ids = model.gamma, model.train_ids
        if len(cross_kernels) != model.mu.size:
            raise InvalidInputError(
                f"model combines {model.mu.size} kernels, got {len(cross_kernels)}")
    else:
        if model.xi is None:
            raise InvalidInputError(f"{model.task} model has no second view")
        coef, expected_ids = model.xi, model.second_ids
        if len(cross_kernels) != 1:
            raise InvalidInputError("second view takes exactly one cross kernel")
    for k in cross_kernels:
        if isinstance(k, CrossKernelMatrix) and expected_ids and k.train_ids != tuple(expected_ids):
            raise InvalidInputError("cross kernel columns are not in training item order")
    mats = [np.atleast_2d(k.values if isinstance(k, CrossKernelMatrix) else np.asarray(k, float))
            for k in cross_kernels]
    for k in mats:
        if k.shape[1] != coef.shape[0]:
            raise InvalidInputError(
                f"cross kernel has {k.shape[1]} columns, model expects {coef.shape[0]}")
    if view == "first":
        Kt = combine_kernels(model.mu, mats, symmetrize=False)
    else:
        Kt = mats[0]
    return Kt @ coef
