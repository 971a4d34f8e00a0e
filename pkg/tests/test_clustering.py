from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from limo.clustering import (
    Cluster, between_variance, build_clusters, dendrogram, dominant_eigenvector, mean_and_cov,
    otsu_cut, pca_bisect,
)
from limo.errors import SizeLimitError


def test_mean_and_cov_examples():
    mu, S = mean_and_cov([(0, 0), (2, 0)])
    np.testing.assert_allclose(mu, [1, 0])
    np.testing.assert_allclose(S, [[2, 0], [0, 0]])
    _, S = mean_and_cov([(3, 4)] * 5)
    assert not S.any()
    X = np.random.default_rng(0).normal(size=(50, 2))
    np.testing.assert_allclose(mean_and_cov(X)[1], np.cov(X.T), rtol=1e-12)
    with pytest.raises(SizeLimitError):
        mean_and_cov([(0, 0)])


def test_dominant_eigenvector_examples():
    np.testing.assert_allclose(dominant_eigenvector([[2, 0], [0, 1]]), [1, 0])
    np.testing.assert_allclose(dominant_eigenvector([[1, 0], [0, 2]]), [0, 1])
    _, S = mean_and_cov([(t, t) for t in range(5)])
    np.testing.assert_allclose(dominant_eigenvector(S), [1 / math.sqrt(2)] * 2)
    np.testing.assert_allclose(dominant_eigenvector(np.zeros((2, 2))), [1, 0])
    np.testing.assert_allclose(dominant_eigenvector(np.eye(2) * 3), [1, 0])


def test_eigenvector_residual_and_sign():
    rng = np.random.default_rng(1)
    for _ in range(200):
        A = rng.normal(size=(2, 2))
        S = A @ A.T
        v = dominant_eigenvector(S)
        lam = v @ S @ v
        assert np.linalg.norm(S @ v - lam * v) <= 1e-10
        assert lam == pytest.approx(np.linalg.eigvalsh(S)[-1], rel=1e-10)
        assert v[0] > 0 or (v[0] == 0 and v[1] > 0)


def test_otsu_examples():
    assert otsu_cut([0, 1, 10, 11]) == 2
    assert otsu_cut([0, 0, 0, 5]) == 3
    assert otsu_cut([7, 7, 7, 7]) == 1
    with pytest.raises(SizeLimitError):
        otsu_cut([1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=40))
def test_otsu_maximizes_between_variance(values):
    s = np.sort(np.array(values))
    k = otsu_cut(s)
    best = max(between_variance(s, j) for j in range(1, len(s)))
    assert between_variance(s, k) >= best - 1e-9 * max(1.0, best)


def test_pca_bisect_separates_pairs():
    coords = np.array([[0, 0], [0.1, 0], [10, 0], [10.1, 0]])
    left, right = pca_bisect(Cluster.of(range(4), coords), coords)
    assert {left.members, right.members} == {(0, 1), (2, 3)}
    a, b = pca_bisect(Cluster.of([0, 1], coords), coords)
    assert len(a) == len(b) == 1
    with pytest.raises(SizeLimitError):
        pca_bisect(Cluster.of([0], coords), coords)


def test_pca_bisect_degenerate_points():
    coords = np.zeros((20, 2))
    left, right = pca_bisect(Cluster.of(range(20), coords), coords)
    assert left.members == (0,) and len(right) == 19
    leaves = build_clusters(coords, 4)
    assert sorted(m for c in leaves for m in c.members) == list(range(20))


def test_pca_bisect_translation_and_rotation_invariance():
    rng = np.random.default_rng(2)
    X = rng.random((30, 2)) * [4, 1]
    base = pca_bisect(Cluster.of(range(30), X), X)
    shifted = X + [100.0, -50.0]
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    rotated = X @ R.T
    for Y in (shifted, rotated):
        split = pca_bisect(Cluster.of(range(30), Y), Y)
        assert {frozenset(c.members) for c in split} == {frozenset(c.members) for c in base}


def test_build_clusters_examples():
    rng = np.random.default_rng(3)
    pts = rng.random((20, 2))
    leaves = build_clusters(pts, 8)
    assert all(len(c) <= 8 for c in leaves)
    assert sorted(m for c in leaves for m in c.members) == list(range(20))
    one = build_clusters(pts[:5], 16, ids=[4, 2, 0, 1, 3])
    assert len(one) == 1 and one[0].members == (4, 2, 0, 1, 3)
    mins = [min(c.members) for c in leaves]
    assert mins == sorted(mins)
    for c in leaves:
        np.testing.assert_allclose(c.centroid, pts[list(c.members)].mean(axis=0))


def test_dendrogram_structure():
    pts = np.random.default_rng(4).random((40, 2))
    nodes = dendrogram(pts, 8)
    assert nodes[0]["parent"] is None and len(nodes[0]["members"]) == 40
    for nd in nodes[1:]:
        parent = nodes[nd["parent"]]
        assert set(nd["members"]) <= set(parent["members"])
    leaves = [nd for nd in nodes if nd["leaf"]]
    assert sorted(m for nd in leaves for m in nd["members"]) == list(range(40))
