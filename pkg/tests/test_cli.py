import json

import numpy as np
import pytest

from mklrt.cli import main
from mklrt.datasets import random_psd, rbf_kernels, two_blobs
from mklrt.io import load_model, read_latent, write_labels, write_latent, write_matrix


@pytest.fixture
def blobs(tmp_path):
    """Training and held-out RBF kernels for the two-blob toy, with item ids."""
    rng = np.random.default_rng(0)
    x, y = two_blobs(20, rng=rng)
    xt, yt = two_blobs(5, rng=rng)
    K, Kt = rbf_kernels(x, xt)
    ids = [f"tr{i}" for i in range(len(y))]
    tids = [f"te{i}" for i in range(len(yt))]
    write_matrix(tmp_path / "k.mkl", K, ids)
    write_matrix(tmp_path / "kt.mkl", Kt, tids, ids)
    write_matrix(tmp_path / "ktr.mkl", K, ids, ids)
    write_labels(tmp_path / "y.csv", ids, y)
    write_labels(tmp_path / "yt.csv", tids, yt)
    cfg = {"task": "kfda", "kernels": ["k.mkl"], "labels": "y.csv", "sigma": 0.5,
           "center": True, "seed": 7}
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    return tmp_path, K


def run(*argv):
    return main([str(a) for a in argv])


def test_train_single_kernel(blobs, capsys):
    d, _ = blobs
    assert run("train", "--config", d / "exp.json", "--out", d / "m.json", "--trace", d / "t.csv") == 0
    model, doc = load_model(d / "m.json")
    assert model.mu.tolist() == [1.0] and model.dims == 1
    assert doc["config"]["seed"] == 7 and doc["selected"] == [0]
    assert "mu=[1.0]" in capsys.readouterr().out
    assert (d / "t.csv").read_text().startswith("iteration,zeta,value,gap,mu_1")


def test_project_training_rows(blobs):
    d, K = blobs
    run("train", "--config", d / "exp.json", "--out", d / "m.json")
    assert run("project", "--model", d / "m.json", "--kernels", d / "ktr.mkl", "--out", d / "z.csv") == 0
    model, _ = load_model(d / "m.json")
    ids, z = read_latent(d / "z.csv")
    Kc = K - K.mean(0) - K.mean(1)[:, None] + K.mean()
    np.testing.assert_allclose(z, Kc @ model.gamma, atol=1e-9)
    assert ids[0] == "tr0"


def test_classify_end_to_end(blobs, capsys):
    d, _ = blobs
    run("train", "--config", d / "exp.json", "--out", d / "m.json")
    capsys.readouterr()
    code = run("evaluate", "--mode", "classify", "--model", d / "m.json",
               "--train-kernels", d / "ktr.mkl", "--test-kernels", d / "kt.mkl",
               "--train-labels", d / "y.csv", "--test-labels", d / "yt.csv",
               "--out", d / "per_class.csv")
    assert code == 0
    assert "mean per-class accuracy: 1.000000" in capsys.readouterr().out


def test_byte_identical_reruns(blobs):
    d, _ = blobs
    run("train", "--config", d / "exp.json", "--out", d / "a.json", "--sigma", 0.2, 0.5)
    run("train", "--config", d / "exp.json", "--out", d / "b.json", "--sigma", 0.2, 0.5)
    assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()


def test_sigma_cross_validation_recorded(blobs):
    d, _ = blobs
    run("train", "--config", d / "exp.json", "--out", d / "m.json", "--sigma", 0.2, 0.5, "--folds", 3)
    _, doc = load_model(d / "m.json")
    assert set(doc["config"]["cv_scores"]) == {"0.2", "0.5"}


@pytest.mark.parametrize("method", ["ak", "pk", "bik"])
def test_baselines(blobs, tmp_path, method, capsys):
    d, K = blobs
    write_matrix(d / "k2.mkl", K ** 2, [f"tr{i}" for i in range(K.shape[0])])
    code = run("baseline", "--method", method, "--config", d / "exp.json",
               "--kernels", d / "k.mkl", d / "k2.mkl", "--out", d / "b.json", "--folds", 3)
    assert code == 0
    model, doc = load_model(d / "b.json")
    assert model.mu.size == 2 and doc["config"]["method"] == method
    out = capsys.readouterr().out
    assert ("kernel=" in out) == (method == "bik")


def test_oracle_identical_kernels(blobs, capsys):
    d, _ = blobs
    code = run("oracle", "--config", d / "exp.json", "--kernels", d / "k.mkl", d / "k.mkl",
               "--step", 0.25, "--out", d / "grid.csv")
    assert code == 0
    assert "verdict=PASS" in capsys.readouterr().out
    table = np.loadtxt(d / "grid.csv", delimiter=",", skiprows=1)
    assert table.shape == (5, 3)
    np.testing.assert_allclose(table[:, -1], table[0, -1], rtol=1e-10)


def test_retrieve_ap_example(tmp_path, capsys):
    write_latent(tmp_path / "q.csv", [[1.0, 0.0]], ["q"])
    write_latent(tmp_path / "g.csv", [[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]], ["a", "b", "c"])
    write_labels(tmp_path / "ql.csv", ["q"], ["x"])
    write_labels(tmp_path / "gl.csv", ["a", "b", "c"], ["x", "y", "x"])
    code = run("evaluate", "--mode", "retrieve", "--query-latent", tmp_path / "q.csv",
               "--gallery-latent", tmp_path / "g.csv", "--query-labels", tmp_path / "ql.csv",
               "--gallery-labels", tmp_path / "gl.csv", "--summary", tmp_path / "s.txt")
    assert code == 0
    assert f"MAP: {5 / 6:.6f}" in capsys.readouterr().out
    assert (tmp_path / "s.txt").exists()


def test_inspect(blobs, capsys):
    d, _ = blobs
    run("train", "--config", d / "exp.json", "--out", d / "m.json")
    capsys.readouterr()
    assert run("inspect", "--model", d / "m.json") == 0
    out = capsys.readouterr().out
    assert "mu: 1.0" in out and "selected (mu > 0.001): [1]" in out and "eigenvalues:" in out


def test_kcca_train_and_retrieve(tmp_path, capsys):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((16, 2))
    z = x + 0.05 * rng.standard_normal((16, 2))
    Kx, Kz = rbf_kernels(x)[0], rbf_kernels(z)[0]
    write_matrix(tmp_path / "kx.csv", Kx)
    write_matrix(tmp_path / "kz.csv", Kz)
    code = run("train", "--task", "kcca", "--kernels", tmp_path / "kx.csv", "--kernels-z",
               tmp_path / "kz.csv", "--dims", 2, "--center", "--out", tmp_path / "m.json")
    assert code == 0
    model, _ = load_model(tmp_path / "m.json")
    assert model.xi.shape == (16, 2)
    assert run("project", "--model", tmp_path / "m.json", "--kernels", tmp_path / "kz.csv",
               "--view", "second", "--out", tmp_path / "zz.csv") == 0


class TestExitCodes:
    def test_missing_file(self, tmp_path, capsys):
        code = run("train", "--kernels", tmp_path / "nope.mkl", "--labels", tmp_path / "y.csv",
                   "--out", tmp_path / "m.json")
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["exit_code"] == 1 and "nope" in err["message"]

    def test_bad_sigma(self, blobs):
        d, _ = blobs
        assert run("train", "--config", d / "exp.json", "--sigma", 1.5, "--out", d / "m.json") == 1

    def test_unknown_config_key(self, blobs):
        d, _ = blobs
        (d / "bad.json").write_text(json.dumps({"kernels": ["k.mkl"], "colour": 1}))
        assert run("train", "--config", d / "bad.json", "--out", d / "m.json") == 1

    def test_numerical_failure(self, tmp_path, capsys):
        write_matrix(tmp_path / "k.csv", np.zeros((3, 3)))
        write_labels(tmp_path / "y.csv", ["0", "1", "2"], [0, 1, 1])
        code = run("train", "--kernels", tmp_path / "k.csv", "--labels", tmp_path / "y.csv",
                   "--out", tmp_path / "m.json")
        assert code == 2
        assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "NumericalError"

    def test_unconverged(self, tmp_path):
        rng = np.random.default_rng(1)
        paths = []
        for m in range(3):
            write_matrix(tmp_path / f"k{m}.csv", random_psd(12, 6, rng))
            paths.append(tmp_path / f"k{m}.csv")
        write_labels(tmp_path / "y.csv", [str(i) for i in range(12)], np.arange(12) % 3)
        code = run("train", "--kernels", *paths, "--labels", tmp_path / "y.csv",
                   "--epsilon", 1e-15, "--max-iters", 1, "--out", tmp_path / "m.json")
        assert code == 3
        assert (tmp_path / "m.json").exists()

    def test_thread_env(self, blobs, monkeypatch):
        d, _ = blobs
        monkeypatch.setenv("MKLRT_THREADS", "zero")
        assert run("inspect", "--model", d / "missing.json") == 1
        monkeypatch.setenv("MKLRT_THREADS", "1")
        run("train", "--config", d / "exp.json", "--out", d / "m.json")
        assert run("inspect", "--model", d / "m.json") == 0


def test_product_baseline_projects_consistently(blobs):
    d, K = blobs
    ids = [f"tr{i}" for i in range(K.shape[0])]
    write_matrix(d / "k2.mkl", K ** 3, ids)
    write_matrix(d / "k2tr.mkl", K ** 3, ids, ids)
    assert run("baseline", "--method", "pk", "--config", d / "exp.json",
               "--kernels", d / "k.mkl", d / "k2.mkl", "--out", d / "b.json") == 0
    assert run("project", "--model", d / "b.json", "--kernels", d / "ktr.mkl", d / "k2tr.mkl",
               "--out", d / "z.csv") == 0
    model, _ = load_model(d / "b.json")
    P = K ** 2  # geometric mean of K and K^3
    Pc = P - P.mean(0) - P.mean(1)[:, None] + P.mean()
    np.testing.assert_allclose(read_latent(d / "z.csv")[1], Pc @ model.gamma, atol=1e-9)
