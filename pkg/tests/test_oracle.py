import numpy as np
import pytest
from scipy.spatial.distance import cdist

from mklrt.datasets import random_labels, random_psd
from mklrt.errors import InvalidInputError
from mklrt.instances import InstanceSpec, build_kfda
from mklrt.kernels import center_train, combine_kernels, rbf_from_distance
from mklrt.oracle import (brute_force_mkl, check_against_grid, grid_simplex, n_grid_points,
                          objective_at_mu)
from mklrt.ratio_trace import RatioTraceInstance, ratio_trace_value, solve_gevd_pencil
from mklrt.silp import mkl_rt_fit


class TestGrid:
    def test_two_half(self):
        g = grid_simplex(2, 0.5)
        assert sorted(map(tuple, g)) == [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]

    def test_one(self):
        np.testing.assert_array_equal(grid_simplex(1, 0.05), [[1.0]])

    def test_three_half(self):
        assert len(grid_simplex(3, 0.5)) == 6

    @pytest.mark.parametrize("m,step", [(2, 0.1), (3, 0.05), (4, 0.25), (5, 0.5)])
    def test_counts_and_simplex(self, m, step):
        g = grid_simplex(m, step)
        assert len(g) == n_grid_points(m, step)
        assert len({tuple(r) for r in g}) == len(g)
        np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)
        assert g.min() >= 0

    def test_lexicographic(self):
        g = grid_simplex(3, 0.25)
        assert [tuple(r) for r in g] == sorted(tuple(r) for r in g)

    def test_bad_step(self):
        with pytest.raises(InvalidInputError):
            grid_simplex(2, 0.3)
        with pytest.raises(InvalidInputError):
            grid_simplex(0, 0.5)


class TestObjective:
    def test_identity(self):
        val = objective_at_mu([1.0], [np.eye(3)], np.eye(3), np.diag([2.0, 1.0, 0.0]), 0.3)
        assert val == pytest.approx(3.0)

    def test_duplicated_flat(self, rng):
        K = random_psd(6, rng=rng)
        L, Lp = build_kfda(random_labels(6, 2, rng))
        _, best, table = brute_force_mkl([K, K], L, Lp, 0.5, step=0.25)
        np.testing.assert_allclose(table[:, -1], best, rtol=1e-10)
        np.testing.assert_array_equal(table[0, :-1], [0.0, 1.0])
        best_mu, _, _ = brute_force_mkl([K, K], L, Lp, 0.5, step=0.25)
        np.testing.assert_array_equal(best_mu, [0.0, 1.0])

    def test_definition_recheck(self, rng):
        for _ in range(5):
            ks = [random_psd(8, rng=rng) for _ in range(3)]
            L, Lp = build_kfda(random_labels(8, 3, rng))
            mu = rng.dirichlet(np.ones(3))
            K = combine_kernels(mu, ks)
            inst = RatioTraceInstance(K, L, Lp, 0.4)
            r = solve_gevd_pencil(inst)
            A, B = inst.pencil
            assert objective_at_mu(mu, ks, L, Lp, 0.4) == pytest.approx(
                ratio_trace_value(r.gamma, A, B), rel=1e-8)


class TestBruteForce:
    def test_aligned_vs_noise(self):
        rng = np.random.default_rng(2)
        y = np.repeat([0, 1, 2], 8)
        aligned = 4 * rng.standard_normal((3, 2))[y] + 0.3 * rng.standard_normal((24, 2))
        noise = rng.standard_normal((24, 2))
        ks = [center_train(rbf_from_distance(cdist(f, f))) for f in (aligned, noise)]
        L, Lp = build_kfda(y)
        best_mu, _, _ = brute_force_mkl(ks, L, Lp, 0.5, step=0.05)
        assert best_mu[0] >= 0.95

    def test_silp_reaches_grid(self, rng):
        for _ in range(3):
            ks = [random_psd(10, int(rng.integers(1, 11)), rng) for _ in range(3)]
            y = random_labels(10, 3, rng)
            L, Lp = build_kfda(y)
            sol = mkl_rt_fit(InstanceSpec("kfda", 0.5), ks, labels=y)
            _, grid_best, _ = brute_force_mkl(ks, L, Lp, 0.5, step=0.1)
            assert check_against_grid(sol.objective, grid_best)
            assert objective_at_mu(sol.mu, ks, L, Lp, 0.5) == pytest.approx(sol.objective, rel=1e-8)

    def test_check_one_sided(self):
        assert check_against_grid(1.0, 1.0005)
        assert not check_against_grid(1.0, 1.01)
        assert check_against_grid(2.0, 1.0)
