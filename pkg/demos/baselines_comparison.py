"""
Fixed combinations versus learned weights
=========================================

The average kernel, the entrywise geometric mean, and the best single
kernel (chosen by cross-validated accuracy) go through the same
eigen-solver as the learned combination.  Held-out accuracy is compared.
"""

import numpy as np
from scipy.spatial.distance import cdist

from mklrt import InstanceSpec, fit_instance, mkl_rt_fit, project
from mklrt.baselines import average_kernel, best_individual_kernel, product_kernel
from mklrt.evaluation import cv_kernel_selector, mean_per_class_accuracy, nn_classify
from mklrt.kernels import center_cross, center_train, rbf_from_distance

rng = np.random.default_rng(5)
y_all = np.repeat(np.arange(4), 30)
centers = 2.5 * rng.standard_normal((4, 2))
features = [centers[y_all] + s * rng.standard_normal((y_all.size, 2)) for s in (0.7, 1.5)]
features.append(rng.standard_normal((y_all.size, 2)))  # uninformative

idx = rng.permutation(y_all.size)
tr, te = idx[:80], idx[80:]
y, y_test = y_all[tr], y_all[te]

raw, raw_t = [], []
for f in features:
    d = cdist(f[tr], f[tr])
    eta = d.sum() / (d.size - d.shape[0])
    raw.append(rbf_from_distance(d))
    raw_t.append(rbf_from_distance(cdist(f[te], f[tr]), eta=eta))


def accuracy(K, Kt):
    """Fit on centered K, score 1-NN on the centered test rows."""
    Kc, Ktc = center_train(K), center_cross(Kt, K)
    model = fit_instance(InstanceSpec("kfda", 0.5), [Kc], [1.0], labels=y)
    pred = nn_classify(project(model, [Kc]), y, project(model, [Ktc]))
    return mean_per_class_accuracy(y_test, pred).score


spec = InstanceSpec("kfda", 0.5)
print("average kernel:   ", accuracy(average_kernel(raw), average_kernel(raw_t)))
print("geometric mean:   ", accuracy(product_kernel(raw), product_kernel(raw_t)))
best, _ = best_individual_kernel([center_train(k) for k in raw],
                                 cv_kernel_selector(spec, folds=5, labels=y))
print(f"best single (#{best + 1}):", accuracy(raw[best], raw_t[best]))

centered = [center_train(k) for k in raw]
centered_t = [center_cross(kt, k) for kt, k in zip(raw_t, raw)]
sol = mkl_rt_fit(spec, centered, labels=y)
pred = nn_classify(project(sol.model, centered), y, project(sol.model, centered_t))
print("learned weights:  ", mean_per_class_accuracy(y_test, pred).score,
      " mu =", np.round(sol.mu, 3))
