import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mklrt.datasets import random_psd, two_blobs, rbf_kernels
from mklrt.errors import InvalidInputError, NumericalError
from mklrt.instances import (InstanceSpec, build_kcca, build_kfda, build_lkcca,
                             compute_xi_kcca, compute_xi_lkcca, fit_instance, label_pairing,
                             project)
from mklrt.kernels import CrossKernelMatrix, KernelMatrix, center_train
from mklrt.ratio_trace import RatioTraceInstance, solve_gevd_pencil

from replication import replicated_kcca

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def two_view_draw(rng):
    p = int(rng.integers(1, 4))
    nx = int(rng.integers(p, 9))
    nz = int(rng.integers(p, 9))
    y = np.concatenate([np.arange(p), rng.integers(0, p, nx - p)])
    w = np.concatenate([np.arange(p), rng.integers(0, p, nz - p)])
    rng.shuffle(y)
    rng.shuffle(w)
    Kx = random_psd(nx, int(rng.integers(1, nx + 1)), rng)
    Kz = random_psd(nz, int(rng.integers(1, nz + 1)), rng)
    return y, w, Kx, Kz, float(rng.uniform(0.1, 0.9))


class TestSpec:
    def test_aliases(self):
        s = InstanceSpec("KFDA-B")
        assert s.task == "kfda" and s.kfda_variant == "B"
        assert InstanceSpec("LKCCA").task == "lkcca"

    def test_rejects(self):
        with pytest.raises(InvalidInputError):
            InstanceSpec("pca")
        with pytest.raises(InvalidInputError):
            InstanceSpec("kfda", dims=0)
        with pytest.raises(InvalidInputError):
            InstanceSpec("kfda", sigma=1.0)


class TestKfda:
    def test_three_items(self):
        L, Lp = build_kfda([1, 1, 2], "A")
        expected = np.array([[.5, .5, 0], [.5, .5, 0], [0, 0, 1]])
        np.testing.assert_allclose(Lp, expected)
        np.testing.assert_allclose(L, np.eye(3) - expected)

    def test_singletons_degenerate(self):
        L, Lp = build_kfda([1, 2], "A")
        np.testing.assert_allclose(Lp, np.eye(2))
        np.testing.assert_allclose(L, 0.0)

    def test_variant_b(self):
        L, _ = build_kfda([1, 1, 2], "B")
        np.testing.assert_array_equal(L, np.eye(3))

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, n=st.integers(1, 30), p=st.integers(1, 6))
    def test_structure(self, seed, n, p):
        rng = np.random.default_rng(seed)
        p = min(p, n)
        y = np.concatenate([np.arange(p), rng.integers(0, p, n - p)])
        rng.shuffle(y)
        _, Lp = build_kfda(y)
        assert np.trace(Lp) == pytest.approx(p, abs=1e-12)
        assert np.linalg.matrix_rank(Lp) == p
        assert np.linalg.eigvalsh(Lp).min() >= -1e-12
        same = y[:, None] == y[None, :]
        counts = np.bincount(y)[y]
        np.testing.assert_allclose(Lp, np.where(same, 1.0 / counts[:, None], 0.0))


class TestKcca:
    def test_identity(self):
        L, Lp = build_kcca(np.eye(3), 0.5)
        np.testing.assert_allclose(Lp, np.eye(3))
        np.testing.assert_array_equal(L, np.eye(3))

    def test_diagonal(self):
        _, Lp = build_kcca(np.diag([1.0, 0.0]), 0.5)
        np.testing.assert_allclose(Lp, np.diag([1.0, 0.0]), atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds, n=st.integers(1, 20), sigma=st.floats(0.05, 0.95))
    def test_spectral_map(self, seed, n, sigma):
        rng = np.random.default_rng(seed)
        Kz = random_psd(n, int(rng.integers(1, n + 1)), rng)
        _, Lp = build_kcca(Kz, sigma)
        assert np.array_equal(Lp, Lp.T)
        d = np.linalg.eigvalsh(Kz)
        mapped = np.sort(d / ((1 - sigma) * d + sigma))
        ev = np.linalg.eigvalsh(Lp)
        np.testing.assert_allclose(ev, mapped, atol=1e-9)
        assert ev.min() >= -1e-9 and ev.max() < 1 / (1 - sigma)


class TestLkcca:
    def test_counting(self):
        pr = label_pairing([1, 2], [2, 1, 2])
        np.testing.assert_array_equal(pr.E, [[0, 1, 0], [1, 0, 1]])
        np.testing.assert_array_equal(pr.Dx, [1, 2])
        np.testing.assert_array_equal(pr.Dz, [1, 1, 1])

    def test_identity_kernel(self):
        L, Lp = build_lkcca([1, 2], [2, 1, 2], np.eye(3), 0.5)
        np.testing.assert_allclose(Lp, [[1, 0], [0, 2]], atol=1e-15)
        np.testing.assert_array_equal(L, np.diag([1.0, 2.0]))

    def test_class_missing_from_view(self):
        with pytest.raises(InvalidInputError):
            build_lkcca([1, 2], [1, 1], np.eye(2), 0.5)

    def test_kz_size_mismatch(self):
        with pytest.raises(InvalidInputError):
            build_lkcca([1, 2], [1, 2], np.eye(3), 0.5)

    def test_two_class_toy_matches_replication(self):
        y, w = np.array([1, 2]), np.array([2, 1, 2])
        rng = np.random.default_rng(3)
        Kx, Kz = random_psd(2, rng=rng), random_psd(3, rng=rng)
        L, Lp = build_lkcca(y, w, Kz, 0.5)
        ours = solve_gevd_pencil(RatioTraceInstance(Kx, L, Lp, 0.5))
        ref, _, _ = replicated_kcca(y, w, Kx, Kz, 0.5)
        assert ours.objective == pytest.approx(ref.objective, rel=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(seed=seeds)
    def test_replication_oracle(self, seed):
        y, w, Kx, Kz, sigma = two_view_draw(np.random.default_rng(seed))
        L, Lp = build_lkcca(y, w, Kz, sigma)
        np.testing.assert_allclose(Lp, Lp.T, atol=1e-12)
        assert np.linalg.eigvalsh(Lp).min() >= -1e-8 * max(np.abs(Lp).max(), 1)
        ours = solve_gevd_pencil(RatioTraceInstance(Kx, L, Lp, sigma))
        ref, _, _ = replicated_kcca(y, w, Kx, Kz, sigma)
        assert ours.objective == pytest.approx(ref.objective, rel=1e-6)

    def test_latent_codes_match_replication(self):
        checked = 0
        for seed in range(30):
            rng = np.random.default_rng(seed)
            y, w, Kx, Kz, sigma = two_view_draw(rng)
            model = fit_instance(InstanceSpec("lkcca", sigma, dims=None), [Kx], [1.0],
                                 labels=y, Kz=Kz, labels_z=w)
            ref, xr, zr = replicated_kcca(y, w, Kx, Kz, sigma, dims=model.dims)
            lam = ref.lambdas
            gaps = np.abs(np.diff(np.r_[lam, 0.0])) / lam
            if np.any(gaps < 1e-6):
                continue  # eigenvectors not unique
            checked += 1
            x_ours = project(model, [Kx])
            z_ours = project(model, [Kz], view="second")
            for j in range(model.dims):
                s = np.sign(x_ours[:, j] @ xr[:, j]) or 1.0
                np.testing.assert_allclose(x_ours[:, j], s * xr[:, j], atol=1e-7)
                np.testing.assert_allclose(z_ours[:, j], s * zr[:, j], atol=1e-7)
        assert checked >= 10


class TestXi:
    def test_identity_kernels(self, rng):
        gamma = rng.standard_normal((3, 2))
        lam = np.array([4.0, 1.0])
        for sigma in (0.2, 0.7):
            xi = compute_xi_kcca(np.eye(3), np.eye(3), gamma, lam, sigma)
            np.testing.assert_allclose(xi, gamma / np.sqrt(lam))

    def test_unit_lambdas(self, rng):
        Kz, Kx = random_psd(4, rng=rng), random_psd(4, rng=rng)
        gamma = rng.standard_normal((4, 2))
        xi = compute_xi_kcca(Kz, Kx, gamma, np.ones(2), 0.3)
        np.testing.assert_allclose(xi, np.linalg.solve(0.7 * Kz + 0.3 * np.eye(4), Kx @ gamma))

    def test_residual(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 10))
            Kz, Kx = random_psd(n, rng=rng), random_psd(n, rng=rng)
            gamma = rng.standard_normal((n, 3))
            lam = rng.uniform(0.1, 2.0, 3)
            sigma = float(rng.uniform(0.1, 0.9))
            xi = compute_xi_kcca(Kz, Kx, gamma, lam, sigma)
            lhs = ((1 - sigma) * Kz + sigma * np.eye(n)) @ xi
            np.testing.assert_allclose(lhs, Kx @ gamma / np.sqrt(lam), atol=1e-9)

    def test_nonpositive_lambda(self):
        with pytest.raises(InvalidInputError):
            compute_xi_kcca(np.eye(2), np.eye(2), np.eye(2), [1.0, 0.0], 0.5)

    def test_lkcca_unit_system(self, rng):
        E = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]])
        Kx = random_psd(2, rng=rng)
        gamma = rng.standard_normal((2, 1))
        lam = np.array([2.0])
        xi = compute_xi_lkcca(np.eye(3), Kx, E, np.eye(3), gamma, lam, 0.5)
        np.testing.assert_allclose(xi, E.T @ Kx @ gamma / np.sqrt(lam))

    def test_lkcca_reduces_to_kcca_form(self, rng):
        n = 4
        Kz, Kx = random_psd(n, rng=rng), random_psd(n, rng=rng)
        gamma = rng.standard_normal((n, 2))
        lam = np.array([1.5, 0.5])
        a = compute_xi_lkcca(Kz, Kx, np.eye(n), np.ones(n), gamma, lam, 0.4)
        b = compute_xi_kcca(Kz, Kx, gamma, lam, 0.4)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestFitAndProject:
    def test_kfda_dims(self):
        rng = np.random.default_rng(0)
        x, y = two_blobs(10, rng=rng)
        K, _ = rbf_kernels(x)
        m = fit_instance(InstanceSpec("kfda"), [center_train(K)], [1.0], labels=y)
        assert m.dims == 1 and m.xi is None

    def test_kfda_class_means_separated(self):
        rng = np.random.default_rng(1)
        x, y = two_blobs(15, rng=rng)
        K = center_train(rbf_kernels(x)[0])
        m = fit_instance(InstanceSpec("kfda"), [K], labels=y)
        z = project(m, [K])
        means = [z[y == c].mean(axis=0) for c in np.unique(y)]
        assert np.linalg.norm(means[0] - means[1]) > 0

    def test_kcca_self_pairing_spectrum(self, rng):
        for _ in range(5):
            n = int(rng.integers(3, 12))
            K = random_psd(n, rng=rng)
            m = fit_instance(InstanceSpec("kcca", 0.5), [K], Kz=K)
            d = np.linalg.eigvalsh(K).max()
            assert m.lambdas[0] == pytest.approx(d**2 / (0.5 * d + 0.5) ** 2, rel=1e-8)

    def test_project_training_rows(self, rng):
        K = random_psd(6, rng=rng)
        m = fit_instance(InstanceSpec("kfda"), [K], labels=[0, 0, 1, 1, 2, 2])
        np.testing.assert_allclose(project(m, [K]), (m.gamma.T @ K).T, atol=1e-12)

    def test_zero_row(self, rng):
        K = random_psd(6, rng=rng)
        m = fit_instance(InstanceSpec("kfda"), [K], labels=[0, 0, 1, 1, 2, 2])
        np.testing.assert_array_equal(project(m, [np.zeros((1, 6))]), 0.0)

    def test_one_hot_weights(self, rng):
        K1, K2 = random_psd(6, rng=rng), random_psd(6, rng=rng)
        y = [0, 0, 1, 1, 2, 2]
        m2 = fit_instance(InstanceSpec("kfda"), [K1, K2], [1.0, 0.0], labels=y)
        m1 = fit_instance(InstanceSpec("kfda"), [K1], [1.0], labels=y)
        rows = rng.standard_normal((3, 6))
        np.testing.assert_allclose(project(m2, [rows, rows * 7]), project(m1, [rows]), atol=1e-12)

    def test_id_mismatch(self, rng):
        K = KernelMatrix(random_psd(3, rng=rng), ("a", "b", "c"))
        m = fit_instance(InstanceSpec("kfda"), [K], labels=[0, 1, 1])
        good = CrossKernelMatrix(np.ones((1, 3)), ("t",), ("a", "b", "c"))
        bad = CrossKernelMatrix(np.ones((1, 3)), ("t",), ("c", "b", "a"))
        project(m, [good])
        with pytest.raises(InvalidInputError):
            project(m, [bad])

    def test_project_errors(self, rng):
        K = random_psd(4, rng=rng)
        m = fit_instance(InstanceSpec("kfda"), [K], labels=[0, 0, 1, 1])
        with pytest.raises(InvalidInputError):
            project(m, [K, K])
        with pytest.raises(InvalidInputError):
            project(m, [np.ones((1, 3))])
        with pytest.raises(InvalidInputError):
            project(m, [K], view="second")

    def test_missing_side_information(self, rng):
        K = random_psd(4, rng=rng)
        with pytest.raises(InvalidInputError):
            fit_instance(InstanceSpec("kfda"), [K])
        with pytest.raises(InvalidInputError):
            fit_instance(InstanceSpec("kcca"), [K])
        with pytest.raises(InvalidInputError):
            fit_instance(InstanceSpec("lkcca"), [K], Kz=K, labels=[0, 0, 1, 1])

    def test_no_positive_eigenvalue(self):
        # a single class gives L' = 11^T/N; a constant kernel direction is orthogonal after centering
        K = center_train(np.eye(3))
        with pytest.raises(NumericalError):
            fit_instance(InstanceSpec("kfda"), [K], labels=[0, 0, 0])
