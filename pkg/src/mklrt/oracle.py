"""Brute-force check of learned kernel weights over a simplex grid.

The learned weights should (up to grid resolution) maximize the ratio-trace
value of the combined kernel, evaluated here by solving the pencil directly
at every lattice point.
"""
from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .kernels import combine_kernels
from .ratio_trace import RatioTraceInstance, solve_gevd_pencil


def grid_simplex(m: int, step: float) -> np.ndarray:
    """All simplex points whose coordinates are multiples of ``step``.

    Rows are ordered lexicographically ascending.
    """
    if m < 1:
        raise InvalidInputError("need at least one coordinate")
    n = round(1.0 / step)
    if n < 1 or abs(n * step - 1.0) > 1e-12:
        raise InvalidInputError(f"step {step} does not divide 1")
    if m == 1:
        return np.ones((1, 1))
    # compositions of n into m nonnegative parts via stars and bars
    points = []
    for bars in itertools.combinations(range(n + m - 1), m - 1):
        parts = np.diff((-1,) + bars + (n + m - 1,)) - 1
        points.append(parts)
    grid = np.array(points, dtype=float) / n
    order = np.lexsort(grid.T[::-1])
    return grid[order]


def n_grid_points(m: int, step: float) -> int:
    n = round(1.0 / step)
    return math.comb(n + m - 1, m - 1)


def objective_at_mu(mu, kernels: Sequence, L, Lp, sigma: float) -> float:
    """Optimal ratio-trace value (sum of nonzero eigenvalues) of the combined kernel."""
    K = combine_kernels(mu, kernels)
    return solve_gevd_pencil(RatioTraceInstance(K, L, Lp, sigma)).objective


def brute_force_mkl(kernels: Sequence, L, Lp, sigma: float, step: float = 0.05
                    ) -> tuple[np.ndarray, float, np.ndarray]:
    """Exhaustive grid maximization of :func:`objective_at_mu`.

    Returns
    -------
    best_mu : ndarray, shape (M,)
        Lexicographically smallest maximizer on the grid; values within
        ``1e-12`` relative of the maximum count as ties, so round-off in
        the combined kernel cannot reorder a flat table.
    best_objective : float
    table : ndarray, shape (n_points, M + 1)
        Grid points with their objective in the last column.
    """
    grid = grid_simplex(len(kernels), step)
    values = np.array([objective_at_mu(mu, kernels, L, Lp, sigma) for mu in grid])
    top = values.max()
    best = int(np.flatnonzero(values >= top - 1e-12 * abs(top))[0])
    return grid[best].copy(), float(values[best]), np.column_stack([grid, values])


def check_against_grid(silp_objective: float, grid_best: float, rtol: float = 1e-3) -> bool:
    """Whether the learned objective reaches the grid maximum within ``rtol``."""
    return silp_objective >= grid_best - rtol * abs(grid_best)
