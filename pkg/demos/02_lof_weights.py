# Down-weighting isolated negatives with the local outlier factor

import numpy as np

from toprej.lof import lof_scores, lof_weight

rng = np.random.default_rng(1)
X = rng.normal(size=(100, 2))
X = np.vstack([X, [[6.0, 6.0], [2.5, 0.0]]])  # one far point, one mild one

lof = lof_scores(X, k=20)
print("inliers: median LOF", np.median(lof[:100]).round(3))
print("far point LOF", lof[100].round(3), " mild point LOF", lof[101].round(3))

# The weight is (1 / LOF)^d. With d=100 even a LOF of 1.05 is nearly silenced.
for d in (1, 10, 100):
    w = lof_weight(lof, d)
    print(f"d={d:3d}  far weight {w[100]:.3g}  mild weight {w[101]:.3g}  inlier mean {w[:100].mean():.3f}")
