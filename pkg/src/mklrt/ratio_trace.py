"""Ratio-trace problems and their generalized eigenvalue solutions.

The kernelized problem maximizes

    trace[(G^T B G)^{-1} (G^T A G)],   A = K L' K,   B = (1 - sigma) K L K + sigma K

over coefficient matrices ``G``; the optimum is spanned by the generalized
eigenvectors of the pencil ``(A, B)`` with nonzero eigenvalues and the optimal
value is the sum of those eigenvalues.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import InvalidInputError, NumericalError
from .kernels import check_symmetric

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10


@dataclass(frozen=True)
class GevdResult:
    """Generalized eigenpairs of a ratio-trace pencil.

    Attributes
    ----------
    gamma : ndarray, shape (N, r)
        Eigenvectors as columns, normalized so that ``gamma.T @ B @ gamma = I``.
    lambdas : ndarray, shape (r,)
        Strictly positive eigenvalues in descending order.
    meta : dict
        Solver diagnostics (rank of the kernel range used, jitter added).
    """

    gamma: np.ndarray
    lambdas: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(np.sum(self.lambdas))

    @property
    def dims(self) -> int:
        return self.lambdas.size


@dataclass(frozen=True)
class RatioTraceInstance:
    """One kernelized ratio-trace problem ``(K, L, L', sigma)``."""

    K: np.ndarray
    L: np.ndarray
    Lp: np.ndarray
    sigma: float

    def __post_init__(self):
        check_sigma(self.sigma)
        K = check_symmetric(self.K, "K")
        L = check_symmetric(self.L, "L")
        Lp = check_symmetric(self.Lp, "L'")
        if not (K.shape == L.shape == Lp.shape):
            raise InvalidInputError(
                f"shape mismatch: K {K.shape}, L {L.shape}, L' {Lp.shape}")
        if not np.any(L):
            logger.info("L is zero; the pencil reduces to (K L' K, sigma K)")
        for name, v in (("K", K), ("L", L), ("Lp", Lp)):
            object.__setattr__(self, name, v)

    @property
    def pencil(self) -> tuple[np.ndarray, np.ndarray]:
        """The explicit matrices ``(A, B)``."""
        K, s = self.K, self.sigma
        A = K @ self.Lp @ K
        B = (1 - s) * (K @ self.L @ K) + s * K
        return (A + A.T) / 2, (B + B.T) / 2


def check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not 0.0 < sigma < 1.0:
        raise InvalidInputError(f"sigma must lie in (0, 1), got {sigma}")
    return sigma


@dataclass(frozen=True)
class PsdFactor:
    """Square-root factors of the two PSD matrices of a ratio-trace instance.

    ``G @ G.T`` reproduces ``L`` and ``H @ H.T`` reproduces ``L'``; the columns
    of ``H`` are the vectors ``h_i``.
    """

    G: np.ndarray
    H: np.ndarray

    @property
    def l(self) -> int:
        return self.G.shape[1]

    @property
    def lp(self) -> int:
        return self.H.shape[1]

    @classmethod
    def from_matrices(cls, L, Lp, tol: float = RANK_TOL) -> "PsdFactor":
        return cls(G=psd_sqrt_factor(L, tol), H=psd_sqrt_factor(Lp, tol))


def psd_eigenfactor(m, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric PSD matrix above the relative rank tolerance.

    Returns ``(values, vectors)`` with values descending and only those
    exceeding ``tol * max(lambda_max, 0)`` kept.  Each eigenvector's sign is
    fixed so that its largest-magnitude entry is positive.
    """
    m = check_symmetric(m)
    if m.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 0))
    w, v = linalg.eigh((m + m.T) / 2)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    keep = w > tol * max(w[0], 0.0)
    w, v = w[keep], _fix_signs(v[:, keep])
    return w, v


def psd_sqrt_factor(m, tol: float = RANK_TOL) -> np.ndarray:
    """``N x rank`` matrix with columns ``sqrt(alpha_i) u_i``."""
    w, v = psd_eigenfactor(m, tol)
    if v.size == 0:
        return np.zeros((np.shape(m)[0], 0))
    return v * np.sqrt(w)[None, :]


def _fix_signs(v: np.ndarray) -> np.ndarray:
    if v.size == 0:
        return v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs[None, :]


def _sorted_positive(w, v, tol, dims, floor=0.0):
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    if w.size == 0 or not w[0] > floor:
        return w[:0], v[:, :0]
    keep = w > max(tol * w[0], floor)
    w, v = w[keep], v[:, keep]
    if dims is not None:
        if dims < 1:
            raise InvalidInputError(f"dims must be a positive integer, got {dims}")
        w, v = w[:dims], v[:, :dims]
    return w, v


def solve_generic_ratio_trace(S1, S2, dims: int | None = None,
                              tol: float = RANK_TOL) -> GevdResult:
    """Maximize ``trace[(W^T S1 W)^{-1} W^T S2 W]`` for positive definite ``S1``."""
    S1 = check_symmetric(S1, "S1")
    S2 = check_symmetric(S2, "S2")
    if S1.shape != S2.shape:
        raise InvalidInputError(f"shape mismatch {S1.shape} vs {S2.shape}")
    try:
        w, v = linalg.eigh(S2, S1)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"S1 is not positive definite: {exc}") from exc
    w, v = _sorted_positive(w, v, tol, dims)
    return GevdResult(gamma=_fix_signs(v), lambdas=w, meta={"jitter": 0.0})


def solve_gevd_pencil(inst: RatioTraceInstance, dims: int | None = None,
                      tol: float = RANK_TOL) -> GevdResult:
    """Generalized eigenpairs of ``(K L' K, (1 - sigma) K L K + sigma K)``.

    The pencil is reduced onto the range of ``K``: with ``K = F F^T`` and
    ``F = U diag(sqrt(kappa))`` over eigenvalues above the rank tolerance,
    ``gamma = U diag(kappa^{-1/2}) phi`` where ``phi`` solves the reduced pencil

        F^T L' F phi = lambda ((1 - sigma) F^T L F + sigma I) phi.

    The reduced right-hand matrix is bounded below by ``sigma I`` so its
    Cholesky factor always exists; directions in the null space of ``K``
    only carry zero eigenvalues and are discarded.  If the reduced factor
    still fails, a relative jitter of ``1e-10 * trace / n`` is added once.
    """
    sigma = inst.sigma
    kappa, U = psd_eigenfactor(inst.K, tol)
    n = inst.K.shape[0]
    if kappa.size == 0:
        raise NumericalError("combined kernel has no positive eigenvalue")
    root = np.sqrt(kappa)
    F = U * root[None, :]
    Ar = F.T @ inst.Lp @ F
    Br = (1 - sigma) * (F.T @ inst.L @ F) + sigma * np.eye(kappa.size)
    Ar = (Ar + Ar.T) / 2
    Br = (Br + Br.T) / 2
    jitter = 0.0
    try:
        w, phi = linalg.eigh(Ar, Br)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(Br) / Br.shape[0]
        logger.warning("reduced pencil not positive definite; adding jitter %.3g", jitter)
        try:
            w, phi = linalg.eigh(Ar, Br + jitter * np.eye(Br.shape[0]))
        except linalg.LinAlgError as exc:
            raise NumericalError(f"pencil not factorizable after jitter: {exc}") from exc
    # reduced eigenvalues are at most kappa_max |L'| / sigma; far below that is round-off
    floor = 8 * n * np.finfo(float).eps * kappa[0] * np.linalg.norm(inst.Lp) / sigma
    w, phi = _sorted_positive(w, phi, tol, dims, floor)
    gamma = U @ (phi / root[:, None])
    return GevdResult(gamma=_fix_signs(gamma), lambdas=w,
                      meta={"jitter": jitter, "kernel_rank": int(kappa.size), "n": n})


def ratio_trace_value(gamma, A, B) -> float:
    """``trace[(G^T B G)^{-1} (G^T A G)]`` evaluated directly."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape[1] == 0:
        return 0.0
    gb = gamma.T @ B @ gamma
    ga = gamma.T @ A @ gamma
    return float(np.trace(linalg.solve((gb + gb.T) / 2, ga, assume_a="sym")))
