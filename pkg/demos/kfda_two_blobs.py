"""
Discriminant embedding of two Gaussian blobs
============================================

A single RBF kernel, centered on the training set, is embedded with the
Fisher-style ratio-trace instance and classified by nearest neighbor.
"""

import numpy as np

from mklrt import InstanceSpec, mkl_rt_fit, project
from mklrt.datasets import rbf_kernels, two_blobs
from mklrt.evaluation import mean_per_class_accuracy, nn_classify
from mklrt.kernels import center_cross, center_train

rng = np.random.default_rng(0)
x, y = two_blobs(40, separation=10.0, rng=rng)
x_test, y_test = two_blobs(40, separation=10.0, rng=rng)

# the bandwidth is the mean training distance; test rows reuse it
K, K_test = rbf_kernels(x, x_test)
K_test = center_cross(K_test, K)
K = center_train(K)

# with one kernel the learned weight is trivially [1]
sol = mkl_rt_fit(InstanceSpec("kfda", sigma=0.5), [K], labels=y)
print("weights:", sol.mu, " eigenvalues:", sol.model.lambdas)

z_train = project(sol.model, [K])
z_test = project(sol.model, [K_test])

pred = nn_classify(z_train, y, z_test)
print("held-out mean per-class accuracy:", mean_per_class_accuracy(y_test, pred).score)

# class means in the 1-D embedding
for c in np.unique(y):
    print(f"class {c}: mean latent {z_train[y == c].mean():+.4f}")
