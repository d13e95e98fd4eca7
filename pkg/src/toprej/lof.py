"""Local Outlier Factor over negative samples and the derived loss weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

LRD_FLOOR = 1e-12


@dataclass(frozen=True)
class LofConfig:
    k: int = 20
    d: float = 100.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.d < 0 or not np.isfinite(self.d):
            raise ValueError("d must be finite and non-negative")


@dataclass(frozen=True)
class LofReport:
    lof: np.ndarray
    weights: np.ndarray


def _check(points, k):
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    if k < 1 or X.shape[0] <= k:
        raise ValueError(f"LOF needs more than k={k} points, got {X.shape[0]}")
    return X


def lof_scores(points, k: int) -> np.ndarray:
    """LOF_k for every row of ``points`` (Euclidean, self excluded from neighbours).

    Neighbour ties are broken by index order.
    """
    X = _check(points, k)
    n = X.shape[0]
    D = cdist(X, X)
    D[np.arange(n), np.arange(n)] = np.inf
    nn = np.argsort(D, axis=1, kind="stable")[:, :k]
    nn_dist = np.take_along_axis(D, nn, axis=1)
    kdist = nn_dist[:, -1]
    reach = np.maximum(kdist[nn], nn_dist)
    lrd = 1.0 / np.maximum(reach.mean(axis=1), LRD_FLOOR)
    return lrd[nn].mean(axis=1) / lrd


def lof_scores_bruteforce(points, k: int) -> np.ndarray:
    """Reference LOF with explicit loops; slow, used to cross-check :func:`lof_scores`."""
    X = _check(points, k)
    n = X.shape[0]
    dist = [[float(np.sqrt(np.sum((X[i] - X[j]) ** 2))) for j in range(n)] for i in range(n)]
    neighbours = []
    for i in range(n):
        order = sorted((j for j in range(n) if j != i), key=lambda j: (dist[i][j], j))
        neighbours.append(order[:k])
    kdist = [dist[i][neighbours[i][-1]] for i in range(n)]
    lrd = []
    for i in range(n):
        total = sum(max(kdist[o], dist[i][o]) for o in neighbours[i])
        lrd.append(1.0 / max(total / k, LRD_FLOOR))
    return np.array([sum(lrd[o] for o in neighbours[i]) / k / lrd[i] for i in range(n)])


def lof_weight(lof, d: float):
    """``(1 / max(lof, 1))^d``; identical to 1 for inliers."""
    lof = np.asarray(lof, dtype=np.float64)
    if np.any(lof <= 0):
        raise ValueError("LOF values must be positive")
    if d < 0:
        raise ValueError("d must be non-negative")
    # floor keeps extreme outliers strictly positive instead of underflowing to 0
    return np.maximum((1.0 / np.maximum(lof, 1.0)) ** d, np.finfo(np.float64).tiny)


def lof_report(points, cfg: LofConfig) -> LofReport:
    scores = lof_scores(points, cfg.k)
    return LofReport(scores, lof_weight(scores, cfg.d))
