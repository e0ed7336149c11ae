"""Nearest-neighbor classification, cosine retrieval, AP/MAP and sigma selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, MklRtError
from .instances import InstanceSpec, fit_instance, project
from .kernels import as_array
from .silp import mkl_rt_fit

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """Classification or retrieval scores plus the settings that produced them.

    For classification ``per_class`` maps class to within-class accuracy and
    ``score`` is their mean.  For retrieval ``per_query_ap`` lists average
    precisions and ``score`` is the MAP.
    """

    kind: str
    score: float
    per_class: dict = field(default_factory=dict)
    per_query_ap: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def mean_per_class(self) -> float:
        return self.score

    @property
    def map(self) -> float:
        return self.score

    def rows(self) -> list[dict]:
        if self.kind == "classification":
            return [{"class": str(c), "accuracy": float(a)} for c, a in self.per_class.items()]
        return [{"query": i, "average_precision": float(ap)} for i, ap in enumerate(self.per_query_ap)]

    def summary(self) -> str:
        name = "mean per-class accuracy" if self.kind == "classification" else "MAP"
        lines = [f"{name}: {self.score:.6f}"]
        lines += [f"{k}: {v}" for k, v in sorted(self.metadata.items())]
        return "\n".join(lines)


def nn_classify(train_latent, train_labels, test_latent, metric: str = "euclidean") -> np.ndarray:
    """1-nearest-neighbor labels; exact distance ties go to the lowest training index."""
    train = np.atleast_2d(np.asarray(train_latent, dtype=float))
    test = np.atleast_2d(np.asarray(test_latent, dtype=float))
    labels = np.asarray(train_labels)
    if train.shape[0] == 0:
        raise InvalidInputError("empty training set")
    if labels.shape[0] != train.shape[0]:
        raise InvalidInputError("one label per training point required")
    if train.shape[1] != test.shape[1]:
        raise InvalidInputError(
            f"latent dimensions differ: train {train.shape[1]}, test {test.shape[1]}")
    if metric not in ("euclidean", "cosine"):
        raise InvalidInputError(f"unknown metric {metric!r}")
    if metric == "cosine":
        d = 1.0 - _cosine_similarity(test, train)
    else:
        d = cdist(test, train, "sqeuclidean")
    return labels[np.argmin(d, axis=1)]


def mean_per_class_accuracy(true, predicted) -> EvalReport:
    """Average over true classes of the fraction predicted correctly."""
    true = np.asarray(true)
    predicted = np.asarray(predicted)
    if true.shape != predicted.shape:
        raise InvalidInputError("true and predicted labels differ in length")
    if true.size == 0:
        raise InvalidInputError("no labels to score")
    per_class = {}
    for c in np.unique(true):
        mask = true == c
        per_class[c.item() if hasattr(c, "item") else c] = float(np.mean(predicted[mask] == c))
    score = float(np.mean(list(per_class.values())))
    return EvalReport(kind="classification", score=score, per_class=per_class)


def _cosine_similarity(a, b) -> np.ndarray:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sim = (a @ b.T) / np.outer(na, nb)
    sim[~np.isfinite(sim)] = -np.inf
    return sim


def retrieve_cosine(query_latent, gallery_latent) -> np.ndarray:
    """Gallery indices ranked by decreasing cosine similarity to each query.

    A 1-D query gives a 1-D ranking.  Ties keep index order and zero vectors
    rank last.
    """
    q = np.asarray(query_latent, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    g = np.atleast_2d(np.asarray(gallery_latent, dtype=float))
    if q.shape[1] != g.shape[1]:
        raise InvalidInputError("query and gallery dimensions differ")
    sim = _cosine_similarity(q, g)
    if np.any(np.linalg.norm(q, axis=1) == 0):
        logger.warning("zero query vector; its ranking is index order")
    ranks = np.argsort(-sim, axis=1, kind="stable")
    return ranks[0] if single else ranks


def average_precision(relevance) -> float:
    """Mean of precision@k over the ranks k holding relevant items."""
    rel = np.asarray(relevance, dtype=float).ravel() > 0
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise InvalidInputError("average precision needs at least one relevant item")
    hits = np.cumsum(rel)
    ranks = np.flatnonzero(rel) + 1
    return float(np.sum(hits[rel] / ranks) / n_rel)


def mean_average_precision(aps: Sequence[float]) -> float:
    aps = list(aps)
    if not aps:
        raise InvalidInputError("no average precisions to average")
    return float(np.mean(aps))


def retrieval_report(query_latent, query_labels, gallery_latent, gallery_labels) -> EvalReport:
    """Cosine retrieval with same-label relevance over the whole gallery.

    Queries with no relevant gallery item are skipped with a warning.
    """
    ranks = retrieve_cosine(np.atleast_2d(query_latent), gallery_latent)
    ql = np.asarray(query_labels)
    gl = np.asarray(gallery_labels)
    aps, skipped = [], 0
    for i, order in enumerate(ranks):
        rel = gl[order] == ql[i]
        if not rel.any():
            skipped += 1
            continue
        aps.append(average_precision(rel))
    if skipped:
        logger.warning("%d queries had no relevant gallery item and were excluded", skipped)
    return EvalReport(kind="retrieval", score=mean_average_precision(aps), per_query_ap=aps,
                      metadata={"excluded_queries": skipped})


def _folds(n: int, k: int, rng: np.random.Generator, labels=None) -> list[np.ndarray]:
    """Held-out index sets; stratified by ``labels`` when given."""
    if labels is None:
        perm = rng.permutation(n)
        return [np.sort(f) for f in np.array_split(perm, k)]
    labels = np.asarray(labels)
    buckets = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        for j, i in enumerate(idx):
            buckets[(offset + j) % k].append(i)
        offset += idx.size
    return [np.sort(np.array(b, dtype=int)) for b in buckets]


def _sub(k, rows, cols=None):
    k = as_array(k)
    return k[np.ix_(rows, rows if cols is None else cols)]


def _fold_score(spec, kernels, tr, va, *, labels, Kz, labels_z, tr_z, va_z, mu, cfg, metric):
    train_k = [_sub(k, tr) for k in kernels]
    side = {}
    if labels is not None:
        side["labels"] = np.asarray(labels)[tr]
    if Kz is not None:
        side["Kz"] = _sub(Kz, tr_z)
    if labels_z is not None:
        side["labels_z"] = np.asarray(labels_z)[tr_z]
    if mu is None:
        model = mkl_rt_fit(spec, train_k, cfg=cfg, **side).model
    else:
        model = fit_instance(spec, train_k, mu, **side)
    cross = [_sub(k, va, tr) for k in kernels]
    x_va = project(model, cross)
    if spec.task == "kfda":
        x_tr = project(model, train_k)
        pred = nn_classify(x_tr, side["labels"], x_va, metric=metric or "euclidean")
        return mean_per_class_accuracy(np.asarray(labels)[va], pred).score
    z_va = project(model, [_sub(Kz, va_z, tr_z)], view="second")
    if labels is not None and labels_z is not None:
        lx, lz = np.asarray(labels)[va], np.asarray(labels_z)[va_z]
    elif labels is not None:
        lx = lz = np.asarray(labels)[va]
    else:
        lx = lz = np.arange(va.size)
    a = retrieval_report(x_va, lx, z_va, lz).score
    b = retrieval_report(z_va, lz, x_va, lx).score
    return 0.5 * (a + b)


def _cv_score(spec, kernels, folds, *, labels, Kz, labels_z, mu, cfg, seed, metric) -> float:
    rng = np.random.default_rng(seed)
    n = as_array(kernels[0]).shape[0]
    nz = as_array(Kz).shape[0] if Kz is not None else None
    strat = labels if spec.task in ("kfda", "lkcca") or labels is not None else None
    splits_x = _folds(n, folds, rng, strat)
    splits_z = _folds(nz, folds, rng, labels_z) if spec.task == "lkcca" else splits_x
    scores = []
    for f in range(folds):
        va, va_z = splits_x[f], splits_z[f]
        tr = np.setdiff1d(np.arange(n), va)
        tr_z = np.setdiff1d(np.arange(nz), va_z) if nz is not None else None
        try:
            scores.append(_fold_score(spec, kernels, tr, va, labels=labels, Kz=Kz,
                                      labels_z=labels_z, tr_z=tr_z, va_z=va_z, mu=mu,
                                      cfg=cfg, metric=metric))
        except MklRtError as exc:
            logger.info("sigma=%g fold %d failed: %s", spec.sigma, f, exc)
            scores.append(-math.inf)
    return float(np.mean(scores))


def cross_validate_sigma(spec: InstanceSpec, kernels: Sequence, grid: Sequence[float],
                         folds: int = 5, *, labels=None, Kz=None, labels_z=None, mu=None,
                         cfg=None, seed: int = 0, metric: str | None = None
                         ) -> tuple[float, dict]:
    """Pick ``sigma`` from ``grid`` by k-fold cross-validation on training data.

    KFDA folds are scored by mean per-class NN accuracy; KCCA and LKCCA folds
    by the mean of both retrieval directions' MAP (same-label relevance, or
    pair identity for unlabeled KCCA).  Kernel weights are learned per fold
    unless ``mu`` fixes them.  A fold whose fit fails scores ``-inf``.  Every
    sigma sees the same folds.  Ties go to the larger sigma.

    Returns
    -------
    best_sigma : float
    scores : dict
        Mean fold score per sigma.
    """
    grid = [float(s) for s in grid]
    if not grid:
        raise InvalidInputError("empty sigma grid")
    if len(grid) == 1:
        return grid[0], {}
    if folds < 2:
        raise InvalidInputError("need at least two folds")
    scores = {s: _cv_score(spec.with_sigma(s), kernels, folds, labels=labels, Kz=Kz,
                           labels_z=labels_z, mu=mu, cfg=cfg, seed=seed, metric=metric)
              for s in grid}
    best = max(grid, key=lambda s: (scores[s], s))
    return best, scores


def cv_kernel_selector(spec: InstanceSpec, folds: int = 5, *, labels=None, Kz=None,
                       labels_z=None, seed: int = 0, metric: str | None = None):
    """Selector for :func:`mklrt.baselines.best_individual_kernel`.

    Scores one kernel by the cross-validated task metric at ``spec.sigma``.
    """
    def selector(kernel) -> float:
        return _cv_score(spec, [kernel], folds, labels=labels, Kz=Kz, labels_z=labels_z,
                         mu=[1.0], cfg=None, seed=seed, metric=metric)

    return selector
