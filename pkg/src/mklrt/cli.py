"""``mklrt`` command line: train, baseline, project, evaluate, oracle, inspect.

Experiment settings come from an optional JSON config (``--config``) whose
keys match the long option names (``kernels``, ``labels``, ``sigma`` ...);
options given on the command line override it.  Relative paths inside a
config file are resolved against the config file's directory.

Exit codes: 0 success, 1 validation error, 2 numerical failure (or a failed
oracle verdict), 3 column generation did not converge.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .baselines import average_kernel, best_individual_kernel, product_kernel
from .errors import InvalidInputError, MklRtError, NumericalError
from .evaluation import (EvalReport, cross_validate_sigma, cv_kernel_selector,
                         mean_per_class_accuracy, nn_classify, retrieval_report)
from .instances import InstanceSpec, RatioTraceModel, fit_instance, project
from .io import (align_labels, load_model, read_labels, read_latent, read_matrix, save_model,
                 write_csv, write_latent)
from .oracle import brute_force_mkl, check_against_grid
from .preprocess import prepare_cross, prepare_train
from .silp import SolverConfig, mkl_rt_fit, selected_kernels
from .instances import build_pair
from .kernels import KernelMatrix

logger = logging.getLogger("mklrt")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_UNCONVERGED = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    task: str = "kfda"
    kernels: list = field(default_factory=list)
    kernels_z: str | None = None
    labels: str | None = None
    labels_z: str | None = None
    sigma: object = 0.5
    dims: int | None = None
    epsilon: float = 1e-4
    max_iters: int = 500
    center: bool = False
    normalize: bool = False
    from_distance: bool = False
    kfda_variant: str = "A"
    metric: str | None = None
    folds: int = 5
    seed: int = 0

    @property
    def sigma_grid(self) -> list[float]:
        s = self.sigma
        return [float(v) for v in s] if isinstance(s, (list, tuple)) else [float(s)]

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_PATH_KEYS = ("kernels_z", "labels", "labels_z")


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    data = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise InvalidInputError(f"no such config file: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{p}: invalid JSON ({exc})") from exc
        base = p.parent
        if "kernels" in data:
            data["kernels"] = [str(base / k) for k in data["kernels"]]
        for key in _PATH_KEYS:
            if data.get(key):
                data[key] = str(base / data[key])
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if k in known and v is not None})
    cfg = ExperimentConfig(**data)
    for s in cfg.sigma_grid:
        if not 0 < s < 1:
            raise InvalidInputError(f"sigma must lie in (0, 1), got {s}")
    if not cfg.kernels:
        raise InvalidInputError("no kernel files given")
    for f in list(cfg.kernels) + [cfg.kernels_z, cfg.labels, cfg.labels_z]:
        if f is not None and not Path(f).exists():
            raise InvalidInputError(f"no such file: {f}")
    return cfg


@dataclass
class Experiment:
    kernels: list
    transforms: list
    item_ids: tuple
    labels: np.ndarray | None = None
    Kz: np.ndarray | None = None
    transform_z: dict | None = None
    ids_z: tuple = ()
    labels_z: np.ndarray | None = None


def _load_kernel_block(path, cfg):
    values, row_ids, _ = read_matrix(path)
    k, record = prepare_train(values, from_distance=cfg.from_distance,
                              normalize=cfg.normalize, center=cfg.center)
    KernelMatrix(k)  # validates shape and symmetry
    return k, record, row_ids


def load_experiment(cfg: ExperimentConfig) -> Experiment:
    kernels, transforms, ids = [], [], None
    explicit_ids = False
    for path in cfg.kernels:
        k, record, row_ids = _load_kernel_block(path, cfg)
        if ids is None:
            ids, explicit_ids = row_ids or tuple(str(i) for i in range(k.shape[0])), bool(row_ids)
        elif k.shape[0] != len(ids) or (row_ids and tuple(row_ids) != tuple(ids)):
            raise InvalidInputError(f"{path}: items differ from the first kernel file")
        kernels.append(k)
        transforms.append(record)
    exp = Experiment(kernels=kernels, transforms=transforms, item_ids=tuple(ids))
    if cfg.labels:
        lid, lab = read_labels(cfg.labels)
        exp.labels = align_labels(lid, lab, exp.item_ids, explicit_ids)
    if cfg.kernels_z:
        kz, record, row_ids = _load_kernel_block(cfg.kernels_z, cfg)
        exp.Kz, exp.transform_z = kz, record
        exp.ids_z = tuple(row_ids) or tuple(str(i) for i in range(kz.shape[0]))
        if cfg.task == "kcca" and kz.shape[0] != len(exp.item_ids):
            raise InvalidInputError("KCCA views must have the same number of paired items")
        if cfg.labels_z:
            lid, lab = read_labels(cfg.labels_z)
            exp.labels_z = align_labels(lid, lab, exp.ids_z, bool(row_ids))
    return exp


def _spec(cfg: ExperimentConfig, sigma: float) -> InstanceSpec:
    return InstanceSpec(task=cfg.task, sigma=sigma, dims=cfg.dims, kfda_variant=cfg.kfda_variant)


def _solver(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(epsilon=cfg.epsilon, max_iters=cfg.max_iters)


def _side(exp: Experiment) -> dict:
    return {"labels": exp.labels, "Kz": exp.Kz, "labels_z": exp.labels_z}


def _pick_sigma(cfg, exp, mu=None) -> tuple[float, dict]:
    grid = cfg.sigma_grid
    if len(grid) == 1:
        return grid[0], {}
    best, scores = cross_validate_sigma(_spec(cfg, grid[0]), exp.kernels, grid, cfg.folds,
                                        mu=mu, cfg=_solver(cfg), seed=cfg.seed,
                                        metric=cfg.metric, **_side(exp))
    logger.info("cross-validated sigma %g from %s", best, scores)
    return best, {str(k): v for k, v in scores.items()}


def _with_ids(model: RatioTraceModel, exp: Experiment, mu=None) -> RatioTraceModel:
    changes = {"train_ids": exp.item_ids,
               "second_ids": exp.ids_z if model.xi is not None else ()}
    if mu is not None:
        changes["mu"] = np.asarray(mu, dtype=float)
    return replace(model, **changes)


def _save(args, cfg, model, *, selected, combination="linear", extra_meta=None, exp,
          combined_transform=None):
    config = cfg.echo()
    if extra_meta:
        config.update(extra_meta)
    save_model(args.out, model, selected=selected, combination=combination,
               transforms=exp.transforms, transform_z=exp.transform_z,
               combined_transform=combined_transform, config=config)


def cmd_train(args) -> int:
    cfg = load_config(args.config, vars(args))
    exp = load_experiment(cfg)
    sigma, cv_scores = _pick_sigma(cfg, exp)
    sol = mkl_rt_fit(_spec(cfg, sigma), exp.kernels, cfg=_solver(cfg), **_side(exp))
    model = _with_ids(sol.model, exp)
    _save(args, cfg, model, selected=sol.selected, exp=exp,
          extra_meta={"cv_scores": cv_scores, "objective": sol.objective})
    if args.trace:
        write_csv(args.trace, sol.state.trace_rows())
    print(f"task={model.task} sigma={sigma!r} mu={[round(float(m), 6) for m in sol.mu]} "
          f"selected={list(sol.selected)} objective={sol.objective!r} "
          f"iterations={sol.state.iteration} converged={sol.converged} seed={cfg.seed}")
    return EXIT_OK if sol.converged else EXIT_UNCONVERGED


def cmd_baseline(args) -> int:
    cfg = load_config(args.config, vars(args))
    # the geometric mean needs the positive, uncentered kernels; center afterwards
    exp = load_experiment(replace(cfg, center=False) if args.method == "pk" else cfg)
    m = len(exp.kernels)
    combination = "linear"
    combined_transform = None
    chosen = ""
    if args.method == "ak":
        mu = np.full(m, 1.0 / m)
        K = average_kernel(exp.kernels)
    elif args.method == "pk":
        mu = np.full(m, 1.0 / m)
        K = product_kernel(exp.kernels, check_psd=True)
        combination = "product"
        if cfg.center:
            K, combined_transform = prepare_train(K, center=True)
    else:
        sigma0 = cfg.sigma_grid[-1]
        selector = cv_kernel_selector(_spec(cfg, sigma0), cfg.folds, seed=cfg.seed,
                                      metric=cfg.metric, **_side(exp))
        best, K = best_individual_kernel(exp.kernels, selector)
        mu = np.zeros(m)
        mu[best] = 1.0
        chosen = f"kernel={best + 1} "
    exp_single = replace(exp, kernels=[K])
    sigma, cv_scores = _pick_sigma(cfg, exp_single, mu=[1.0])
    model = fit_instance(_spec(cfg, sigma), [K], [1.0], **_side(exp))
    model = _with_ids(model, exp, mu=mu)
    _save(args, cfg, model, selected=selected_kernels(mu), combination=combination, exp=exp,
          combined_transform=combined_transform,
          extra_meta={"method": args.method, "cv_scores": cv_scores})
    print(f"method={args.method} {chosen}task={model.task} sigma={sigma!r} "
          f"mu={[round(float(v), 6) for v in mu]} objective={model.objective!r} seed={cfg.seed}")
    return EXIT_OK


def _project_files(model: RatioTraceModel, doc: dict, paths, view: str):
    mats, ids = [], None
    transforms = doc.get("transforms") or [None] * model.mu.size
    for i, path in enumerate(paths):
        values, row_ids, col_ids = read_matrix(path)
        expected = model.train_ids if view == "first" else model.second_ids
        if col_ids and expected and tuple(col_ids) != tuple(expected):
            raise InvalidInputError(f"{path}: columns are not the model's training items")
        record = transforms[i] if view == "first" and i < len(transforms) else doc.get("transform_z")
        mats.append(prepare_cross(values, record))
        ids = ids or (tuple(row_ids) or tuple(str(j) for j in range(values.shape[0])))
    if view == "first" and doc.get("combination") == "product":
        Kt = prepare_cross(product_kernel(mats), doc.get("combined_transform"))
        return Kt @ model.gamma, ids
    return project(model, mats, view=view), ids


def cmd_project(args) -> int:
    model, doc = load_model(args.model)
    latent, ids = _project_files(model, doc, args.kernels, args.view)
    write_latent(args.out, latent, ids)
    print(f"wrote {latent.shape[0]}x{latent.shape[1]} latent coordinates to {args.out}")
    return EXIT_OK


def _labels_for(ids, label_path):
    lid, lab = read_labels(label_path)
    by_id = set(ids) <= set(lid)
    return align_labels(lid, lab, ids, by_id)


def cmd_evaluate(args) -> int:
    if args.mode == "classify":
        if args.model:
            model, doc = load_model(args.model)
            train, train_ids = _project_files(model, doc, args.train_kernels, "first")
            test, test_ids = _project_files(model, doc, args.test_kernels, "first")
        else:
            train_ids, train = read_latent(_need(args.train_latent, "--train-latent"))
            test_ids, test = read_latent(_need(args.test_latent, "--test-latent"))
        ytr = _labels_for(train_ids, _need(args.train_labels, "--train-labels"))
        yte = _labels_for(test_ids, _need(args.test_labels, "--test-labels"))
        pred = nn_classify(train, ytr, test, metric=args.metric or "euclidean")
        report = mean_per_class_accuracy(yte, pred)
    else:
        if args.model:
            model, doc = load_model(args.model)
            q, q_ids = _project_files(model, doc, args.query_kernels,
                                      "second" if args.query_view == "second" else "first")
            g_view = "first" if args.query_view == "second" else "second"
            g, g_ids = _project_files(model, doc, args.gallery_kernels, g_view)
        else:
            q_ids, q = read_latent(_need(args.query_latent, "--query-latent"))
            g_ids, g = read_latent(_need(args.gallery_latent, "--gallery-latent"))
        ql = _labels_for(q_ids, _need(args.query_labels, "--query-labels"))
        gl = _labels_for(g_ids, _need(args.gallery_labels, "--gallery-labels"))
        report = retrieval_report(q, ql, g, gl)
    report.metadata.update({"mode": args.mode, "seed": args.seed})
    if args.out:
        write_csv(args.out, report.rows())
    if args.summary:
        Path(args.summary).write_text(report.summary() + "\n")
    print(report.summary())
    return EXIT_OK


def _need(value, flag):
    if value is None:
        raise InvalidInputError(f"{flag} is required")
    return value


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, vars(args))
    exp = load_experiment(cfg)
    if len(cfg.sigma_grid) != 1:
        raise InvalidInputError("oracle runs need a single sigma")
    spec = _spec(cfg, cfg.sigma_grid[0])
    sol = mkl_rt_fit(spec, exp.kernels, cfg=_solver(cfg), **_side(exp))
    L, Lp, _ = build_pair(spec, **_side(exp))
    best_mu, best_obj, table = brute_force_mkl(exp.kernels, L, Lp, spec.sigma, args.step)
    ok = check_against_grid(sol.objective, best_obj, args.rtol)
    if args.out:
        header = [f"mu_{m + 1}" for m in range(len(exp.kernels))] + ["objective"]
        write_csv(args.out, [dict(zip(header, map(float, row))) for row in table], header)
    verdict = "PASS" if ok else "FAIL"
    print(f"verdict={verdict} silp_objective={sol.objective!r} grid_best={best_obj!r} "
          f"silp_mu={[round(float(m), 6) for m in sol.mu]} "
          f"grid_mu={[float(m) for m in best_mu]} seed={cfg.seed}")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_inspect(args) -> int:
    model, doc = load_model(args.model)
    sel = selected_kernels(model.mu, args.threshold)
    print(f"task: {model.task}")
    print(f"sigma: {model.sigma!r}")
    print(f"combination: {doc.get('combination', 'linear')}")
    print("mu: " + " ".join(repr(float(m)) for m in model.mu))
    print(f"selected (mu > {args.threshold:g}): {[i + 1 for i in sel]} "
          f"({len(sel)} of {model.mu.size})")
    print("eigenvalues: " + " ".join(repr(float(v)) for v in model.lambdas))
    return EXIT_OK


def _experiment_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--task", choices=["kfda", "kcca", "lkcca"])
    p.add_argument("--kernels", nargs="+", help="first-view training kernel files")
    p.add_argument("--kernels-z", dest="kernels_z", help="second-view training kernel file")
    p.add_argument("--labels", help="item_id,class_id CSV for the first view")
    p.add_argument("--labels-z", dest="labels_z", help="item_id,class_id CSV for the second view")
    p.add_argument("--sigma", type=float, nargs="+",
                   help="regularization; several values are cross-validated")
    p.add_argument("--dims", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--center", action="store_true", default=None)
    p.add_argument("--normalize", action="store_true", default=None)
    p.add_argument("--from-distance", dest="from_distance", action="store_true", default=None,
                   help="inputs are distance matrices; convert with exp(-d / mean d)")
    p.add_argument("--kfda-variant", dest="kfda_variant", choices=["A", "B"])
    p.add_argument("--metric", choices=["euclidean", "cosine"])
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mklrt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="learn kernel weights and the embedding")
    _experiment_options(p)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--trace", help="CSV file for the convergence trace")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("baseline", help="fixed combinations: average, product, best single")
    _experiment_options(p)
    p.add_argument("--method", choices=["ak", "pk", "bik"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("project", help="map test-vs-train kernel rows to latent coordinates")
    p.add_argument("--model", required=True)
    p.add_argument("--kernels", nargs="+", required=True,
                   help="cross kernel files in the model's kernel order")
    p.add_argument("--view", choices=["first", "second"], default="first")
    p.add_argument("--out", required=True, help="latent CSV to write")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("evaluate", help="NN classification or cosine retrieval scores")
    p.add_argument("--mode", choices=["classify", "retrieve"], required=True)
    p.add_argument("--model", help="project kernel files with this model instead of reading latents")
    p.add_argument("--train-latent", dest="train_latent")
    p.add_argument("--test-latent", dest="test_latent")
    p.add_argument("--train-kernels", dest="train_kernels", nargs="+")
    p.add_argument("--test-kernels", dest="test_kernels", nargs="+")
    p.add_argument("--train-labels", dest="train_labels")
    p.add_argument("--test-labels", dest="test_labels")
    p.add_argument("--query-latent", dest="query_latent")
    p.add_argument("--gallery-latent", dest="gallery_latent")
    p.add_argument("--query-kernels", dest="query_kernels", nargs="+")
    p.add_argument("--gallery-kernels", dest="gallery_kernels", nargs="+")
    p.add_argument("--query-view", dest="query_view", choices=["first", "second"],
                   default="first")
    p.add_argument("--query-labels", dest="query_labels")
    p.add_argument("--gallery-labels", dest="gallery_labels")
    p.add_argument("--metric", choices=["euclidean", "cosine"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="per-class / per-query CSV")
    p.add_argument("--summary", help="text summary file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle", help="compare learned weights with a simplex grid search")
    _experiment_options(p)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--rtol", type=float, default=1e-3)
    p.add_argument("--out", help="CSV of grid points and objectives")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("inspect", help="print weights, selected kernels and eigenvalues")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=1e-3)
    p.set_defaults(func=cmd_inspect)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    line = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(line), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "sigma", None) is not None and len(args.sigma) == 1:
        args.sigma = args.sigma[0]
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("MKLRT_THREADS")
    try:
        limit = int(threads) if threads else None
        if limit is not None and limit < 1:
            raise ValueError
    except ValueError:
        return _fail(EXIT_INVALID, InvalidInputError(f"MKLRT_THREADS must be a positive integer, got {threads!r}"))
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (MklRtError, OSError, KeyError, ValueError) as exc:
        return _fail(EXIT_INVALID, exc)


if __name__ == "__main__":
    sys.exit(main())
