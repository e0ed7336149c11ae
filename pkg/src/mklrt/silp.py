"""Convex kernel-weight learning for ratio-trace problems.

The optimal simplex weights solve a semi-infinite LP: maximize ``zeta`` subject
to ``sum_m mu_m S_m(eta) >= zeta`` for every ``eta``, where each ``S_m`` is a
convex quadratic in ``eta`` built from the square-root factors of ``L`` and
``L'``.  :func:`column_generation` solves it by repeatedly adding the most
violated constraint (an unconstrained quadratic minimization, i.e. one SPD
linear solve) and re-solving the finite restricted LP over ``(mu, zeta)``.

At any ``mu`` the minimum of ``sum_m mu_m S_m`` equals ``sigma`` times the
optimal ratio-trace value of the combined kernel, which the test-suite uses
as an independent cross-check of both halves.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import InvalidInputError, NumericalError
from .instances import (InstanceSpec, RatioTraceModel, build_pair, default_dims, model_from_gevd,
                        _ids_of)
from .kernels import as_array, check_simplex, combine_kernels
from .ratio_trace import (RANK_TOL, GevdResult, PsdFactor, RatioTraceInstance, check_sigma,
                          solve_gevd_pencil)

logger = logging.getLogger(__name__)

SELECT_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SolverConfig:
    """Column-generation settings.

    ``epsilon`` is the relative duality-gap tolerance of the stopping rule,
    ``max_iters`` the iteration cap, ``rank_tol`` the relative eigenvalue
    cutoff used when factoring ``L`` and ``L'``, and ``select_threshold`` the
    weight above which a kernel counts as selected.
    """

    epsilon: float = 1e-4
    max_iters: int = 500
    rank_tol: float = RANK_TOL
    select_threshold: float = SELECT_THRESHOLD

    def __post_init__(self):
        for name in ("epsilon", "rank_tol", "select_threshold"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if int(self.max_iters) < 1:
            raise InvalidInputError("max_iters must be >= 1")


def constraint_score(eta, Km, factor: PsdFactor, sigma: float) -> float:
    """Value of one kernel's constraint function at ``eta`` (shape ``l x l'``).

    ``(1/sigma) sum_i [|eta_i|^2 / (4 (1-sigma)) + eta_i^T G^T K G eta_i / (4 sigma)
    - eta_i^T G^T K h_i] + trace(K L')``, with the trace taken as
    ``sum_i h_i^T K h_i``.
    """
    sigma = check_sigma(sigma)
    Km = as_array(Km)
    eta = np.asarray(eta, dtype=float).reshape(factor.l, factor.lp)
    G, H = factor.G, factor.H
    KG, KH = Km @ G, Km @ H
    quad_id = np.sum(eta * eta) / (4 * (1 - sigma))
    quad_k = np.sum(eta * (G.T @ KG @ eta)) / (4 * sigma)
    lin = np.sum(eta * (G.T @ KH))
    return float((quad_id + quad_k - lin) / sigma + np.sum(H * KH))


def most_violated_constraint(K, factor: PsdFactor, sigma: float) -> np.ndarray:
    """Minimizer over ``eta`` of the constraint function of kernel ``K``.

    Solves ``(I / (2(1-sigma)) + G^T K G / (2 sigma)) eta_i = G^T K h_i`` for all
    columns at once with a Cholesky factorization.
    """
    sigma = check_sigma(sigma)
    K = as_array(K)
    G, H = factor.G, factor.H
    return _solve_eta(G.T @ K @ G, G.T @ K @ H, sigma)


def _solve_eta(gkg, gkh, sigma):
    l = gkg.shape[0]
    if l == 0:
        return np.zeros((0, gkh.shape[1]))
    system = np.eye(l) / (2 * (1 - sigma)) + (gkg + gkg.T) / (4 * sigma)
    if not np.all(np.isfinite(system)):
        raise NumericalError("non-finite entries in the constraint-generation system")
    try:
        return linalg.cho_solve(linalg.cho_factor(system, lower=True), gkh)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"constraint-generation system not positive definite: {exc}") from exc


class KernelScores:
    """Per-kernel blocks ``G^T K^m G``, ``G^T K^m H`` and ``trace(K^m L')``.

    Caching these makes every constraint evaluation and every
    most-violated-constraint solve independent of the sample count.
    """

    def __init__(self, kernels: Sequence, factor: PsdFactor, sigma: float):
        self.sigma = check_sigma(sigma)
        self.factor = factor
        G, H = factor.G, factor.H
        gkg, gkh, tr = [], [], []
        for k in kernels:
            k = as_array(k)
            if k.shape != (G.shape[0], G.shape[0]):
                raise InvalidInputError(
                    f"kernel of shape {k.shape} does not match factor size {G.shape[0]}")
            KG, KH = k @ G, k @ H
            gkg.append(G.T @ KG)
            gkh.append(G.T @ KH)
            tr.append(np.sum(H * KH))
        self.gkg = np.stack(gkg) if gkg else np.zeros((0, factor.l, factor.l))
        self.gkh = np.stack(gkh) if gkh else np.zeros((0, factor.l, factor.lp))
        self.trace_lp = np.asarray(tr)

    @property
    def n_kernels(self) -> int:
        return self.trace_lp.size

    def scores(self, eta) -> np.ndarray:
        """Vector of all M constraint values at ``eta``."""
        s = self.sigma
        quad_id = np.sum(eta * eta) / (4 * (1 - s))
        quad_k = np.einsum("ij,mik,kj->m", eta, self.gkg, eta) / (4 * s)
        lin = np.einsum("ij,mij->m", eta, self.gkh)
        out = (quad_id + quad_k - lin) / s + self.trace_lp
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite constraint values")
        return out

    def most_violated(self, mu) -> np.ndarray:
        gkg = np.tensordot(mu, self.gkg, axes=1)
        gkh = np.tensordot(mu, self.gkh, axes=1)
        return _solve_eta(gkg, gkh, self.sigma)


def solve_restricted_master(scores) -> tuple[np.ndarray, float]:
    """Maximize ``zeta`` over the simplex subject to ``scores @ mu >= zeta``.

    ``scores`` has one row per stored constraint and one column per kernel.
    Among optimal solutions, the lexicographically smallest ``mu`` is
    returned (minimize ``mu_1``, then ``mu_2``, ... on the optimal face).
    The returned ``zeta`` is ``min_c scores[c] @ mu`` at that ``mu``.
    """
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    n_con, m = S.shape
    if n_con == 0 or m == 0:
        raise InvalidInputError("restricted master needs at least one constraint and one kernel")
    if not np.all(np.isfinite(S)):
        raise NumericalError("non-finite constraint scores")
    if m == 1:
        return np.ones(1), float(S[:, 0].min())
    scale = max(np.max(np.abs(S)), 1e-300)
    Sn = S / scale
    # Variables x = (mu_1..mu_M, zeta); zeta - S_c . mu <= 0.
    A_ub = np.hstack([-Sn, np.ones((n_con, 1))])
    b_ub = np.zeros(n_con)
    A_eq = np.hstack([np.ones((1, m)), np.zeros((1, 1))])
    bounds = [(0, None)] * m + [(None, None)]
    options = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
    c = np.zeros(m + 1)
    c[-1] = -1.0
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds,
                           method="highs", options=options)
    if res.status != 0:
        raise NumericalError(f"restricted master LP failed: {res.message}")
    zeta_n = -res.fun
    mu = _clean_simplex(res.x[:m])
    # Lexicographic tie-breaking on the optimal face.
    face_tol = 1e-10 * max(1.0, abs(zeta_n))
    for j in range(m - 1):
        obj = np.zeros(m)
        obj[j] = 1.0
        rows = [-Sn]
        rhs = [np.full(n_con, -(zeta_n - face_tol))]
        for k in range(j):
            e = np.zeros((1, m))
            e[0, k] = 1.0
            rows.append(e)
            rhs.append([mu[k] + 1e-12])
        A_lex = np.vstack(rows)
        b_lex = np.concatenate([np.asarray(r, float) for r in rhs])
        lex = optimize.linprog(obj, A_ub=A_lex, b_ub=b_lex, A_eq=np.ones((1, m)), b_eq=[1.0],
                               bounds=[(0, None)] * m, method="highs", options=options)
        if lex.status != 0:
            break
        mu = _clean_simplex(lex.x)
    zeta = float(np.min(S @ mu))
    return mu, zeta


def _clean_simplex(x) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    x[x < 1e-14] = 0.0
    return x / x.sum()


@dataclass
class SilpState:
    """Progress of :func:`column_generation`.

    ``history`` holds one record per iteration with keys ``iteration``,
    ``zeta`` (restricted-master value before the iteration's check), ``value``
    (``sum_m mu_m S_m(eta*)``), ``gap`` and ``mu``.
    """

    mu: np.ndarray
    zeta: float = math.inf
    iteration: int = 0
    converged: bool = False
    etas: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.history[-1]["gap"] if self.history else 1.0

    def trace_rows(self) -> list[dict]:
        """Flat rows ``iteration, zeta, value, gap, mu_1..mu_M`` for CSV export."""
        rows = []
        for rec in self.history:
            row = {k: rec[k] for k in ("iteration", "zeta", "value", "gap")}
            row.update({f"mu_{m + 1}": float(w) for m, w in enumerate(rec["mu"])})
            rows.append(row)
        return rows


def relative_gap(value: float, zeta: float) -> float:
    """``|1 - value / zeta|``; 1 when ``zeta`` is still infinite."""
    if math.isinf(zeta):
        return 1.0
    if zeta == 0.0:
        return 0.0 if value == 0.0 else math.inf
    return abs(1.0 - value / zeta)


def column_generation(kernels: Sequence, factor: PsdFactor, sigma: float,
                      cfg: SolverConfig | None = None) -> SilpState:
    """Solve the kernel-weight SILP by adding most-violated constraints.

    Starts from uniform weights with ``zeta = +inf``, so the first iteration
    always adds a constraint.  If ``cfg.max_iters`` is reached before the gap
    drops below ``cfg.epsilon``, the weights with the best lower bound seen
    are returned with ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    m = len(kernels)
    if m == 0:
        raise InvalidInputError("no kernels")
    cache = KernelScores(kernels, factor, sigma)
    state = SilpState(mu=np.full(m, 1.0 / m))
    best_mu, best_value = state.mu.copy(), -math.inf
    for t in range(1, int(cfg.max_iters) + 1):
        state.iteration = t
        eta = cache.most_violated(state.mu)
        s = cache.scores(eta)
        value = float(state.mu @ s)
        gap = relative_gap(value, state.zeta)
        state.history.append({"iteration": t, "zeta": state.zeta, "value": value,
                              "gap": gap, "mu": state.mu.copy()})
        if value > best_value:
            best_mu, best_value = state.mu.copy(), value
        if gap < cfg.epsilon:
            state.converged = True
            break
        state.etas.append(eta)
        state.scores.append(s)
        state.mu, state.zeta = solve_restricted_master(np.vstack(state.scores))
    if not state.converged:
        logger.warning("column generation stopped after %d iterations with gap %.3g",
                       state.iteration, state.gap)
        state.mu = best_mu
    return state


@dataclass(frozen=True)
class MklSolution:
    """Result of :func:`mkl_rt_fit`.

    ``objective`` is the full ratio-trace value (sum of every nonzero
    eigenvalue) at the learned weights; ``model`` keeps only the requested
    number of dimensions.
    """

    mu: np.ndarray
    model: RatioTraceModel
    objective: float
    selected: tuple[int, ...]
    state: SilpState
    combined_kernel: np.ndarray

    @property
    def converged(self) -> bool:
        return self.state.converged


def selected_kernels(mu, threshold: float = SELECT_THRESHOLD) -> tuple[int, ...]:
    """Indices of kernels whose weight exceeds ``threshold``."""
    return tuple(int(i) for i in np.flatnonzero(np.asarray(mu) > threshold))


def _truncate(gevd: GevdResult, dims: int | None) -> GevdResult:
    if dims is None or dims >= gevd.dims:
        return gevd
    return GevdResult(gamma=gevd.gamma[:, :dims], lambdas=gevd.lambdas[:dims], meta=gevd.meta)


def mkl_rt_fit(spec: InstanceSpec, kernels: Sequence, *, labels=None, Kz=None, labels_z=None,
               cfg: SolverConfig | None = None) -> MklSolution:
    """Learn kernel weights for ``spec`` and solve the pencil at the optimum.

    Parameters
    ----------
    spec : InstanceSpec
    kernels : sequence of (N, N) arrays
        First-view base kernels.
    labels, Kz, labels_z
        Side information required by the task (see :func:`mklrt.instances.build_pair`).
    cfg : SolverConfig, optional
    """
    cfg = cfg or SolverConfig()
    if len(kernels) == 0:
        raise InvalidInputError("no kernels")
    L, Lp, n_classes = build_pair(spec, labels=labels, Kz=Kz, labels_z=labels_z)
    factor = PsdFactor.from_matrices(L, Lp, cfg.rank_tol)
    state = column_generation(kernels, factor, spec.sigma, cfg)
    mu = check_simplex(state.mu, len(kernels))
    K = combine_kernels(mu, kernels)
    full = solve_gevd_pencil(RatioTraceInstance(K, L, Lp, spec.sigma))
    model = model_from_gevd(spec, mu, K, _truncate(full, default_dims(spec, n_classes)),
                            Kz=Kz, labels=labels, labels_z=labels_z,
                            train_ids=_ids_of(kernels[0]),
                            second_ids=_ids_of(Kz) if Kz is not None else ())
    model.meta.update({"converged": state.converged, "iterations": state.iteration,
                       "gap": state.gap})
    return MklSolution(mu=mu, model=model, objective=full.objective,
                       selected=selected_kernels(mu, cfg.select_threshold), state=state,
                       combined_kernel=K)
