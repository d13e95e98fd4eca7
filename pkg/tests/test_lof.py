import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toprej.lof import LofConfig, lof_report, lof_scores, lof_scores_bruteforce, lof_weight


def cluster_with_outlier(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((20, 2))
    direction = rng.standard_normal(2)
    outlier = 50 * direction / np.linalg.norm(direction)
    return np.vstack([X, outlier])


def test_identical_points_have_unit_lof():
    X = np.ones((8, 3))
    np.testing.assert_array_equal(lof_scores(X, 3), np.ones(8))
    np.testing.assert_array_equal(lof_scores_bruteforce(X, 3), np.ones(8))


def test_grid_interior_point():
    g = np.array([(i, j) for i in range(7) for j in range(7)], dtype=float)
    lof = lof_scores(g, 4)
    centre = 3 * 7 + 3
    assert abs(lof[centre] - 1.0) < 0.1
    np.testing.assert_allclose(lof, lof_scores_bruteforce(g, 4), rtol=0, atol=1e-9)


def test_far_outlier_detected():
    X = cluster_with_outlier()
    for fn in (lof_scores, lof_scores_bruteforce):
        lof = fn(X, 5)
        assert lof[-1] > 1.5
        assert np.argmax(lof) == 20
        assert np.median(lof[:20]) < 1.2


@pytest.mark.parametrize("seed,n,k", [(0, 30, 5), (1, 120, 20), (2, 200, 10), (3, 12, 11)])
def test_vectorised_matches_bruteforce(seed, n, k):
    X = np.random.default_rng(seed).normal(size=(n, 4))
    np.testing.assert_allclose(lof_scores(X, k), lof_scores_bruteforce(X, k), rtol=0, atol=1e-9)


def test_duplicates_match_bruteforce():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(size=(15, 2)), np.zeros((6, 2))])
    np.testing.assert_allclose(lof_scores(X, 4), lof_scores_bruteforce(X, 4), rtol=0, atol=1e-9)


def test_too_few_points():
    with pytest.raises(ValueError):
        lof_scores(np.zeros((5, 2)), 5)
    with pytest.raises(ValueError):
        lof_scores_bruteforce(np.zeros((3, 2)), 3)


def test_permutation_equivariance(rng):
    X = rng.normal(size=(40, 3))
    perm = rng.permutation(40)
    np.testing.assert_allclose(lof_scores(X[perm], 6), lof_scores(X, 6)[perm], rtol=1e-12)


def test_rigid_motion_invariance(rng):
    X = rng.normal(size=(40, 3))
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Y = X @ Q.T + np.array([5.0, -2.0, 100.0])
    np.testing.assert_allclose(lof_scores(Y, 6), lof_scores(X, 6), rtol=1e-8)


def test_weight_examples():
    assert lof_weight(0.8, 100) == 1.0
    assert lof_weight(1.0, 7.5) == 1.0
    # 50-digit mpmath value of (1/1.05)^100
    assert lof_weight(1.05, 100) == pytest.approx(0.0076044899978735096, rel=1e-12)
    np.testing.assert_array_equal(lof_weight(np.array([0.5, 3.0, 100.0]), 0), np.ones(3))


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(0, 500))
def test_weight_range(lof, d):
    w = lof_weight(lof, d)
    assert 0 < w <= 1
    if lof <= 1:
        assert w == 1


@settings(max_examples=200, deadline=None)
@given(st.floats(1.001, 20), st.floats(0.001, 2), st.floats(0.1, 50), st.floats(0.1, 5))
def test_weight_monotone(lof, dlof, d, dd):
    assert lof_weight(lof + dlof, d) < lof_weight(lof, d)
    assert lof_weight(lof, d + dd) < lof_weight(lof, d)


def test_report_defaults():
    cfg = LofConfig()
    assert (cfg.k, cfg.d) == (20, 100.0)
    rep = lof_report(cluster_with_outlier(), LofConfig(k=5))
    assert rep.weights[-1] < 1e-10
    assert np.all((rep.weights > 0) & (rep.weights <= 1))
