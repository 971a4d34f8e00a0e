"""PCA bisection with between-class-variance (Otsu) cuts.

A cluster is split along its axis of maximal variance: members are projected
onto the dominant covariance eigenvector, sorted, and cut where the
between-cluster variance of the projections peaks. Splitting recurses until
every leaf holds at most ``M`` entities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SizeLimitError


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    centroid: tuple[float, float]

    @classmethod
    def of(cls, members: Sequence[int], coords: np.ndarray) -> "Cluster":
        members = tuple(int(m) for m in members)
        if not members:
            raise ValueError("clusters must be non-empty")
        c = np.asarray(coords, dtype=np.float64)[list(members)].mean(axis=0)
        return cls(members, (float(c[0]), float(c[1])))

    def __len__(self) -> int:
        return len(self.members)


def mean_and_cov(points) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise mean and unbiased (n-1) covariance of 2-D points."""
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    n = X.shape[0]
    if n < 2:
        raise SizeLimitError("covariance needs at least 2 points")
    mu = X.mean(axis=0)
    Y = X - mu
    S = (Y.T @ Y) / (n - 1)
    S[1, 0] = S[0, 1]
    return mu, S


def dominant_eigenvector(S) -> np.ndarray:
    """Unit eigenvector of the larger eigenvalue of a symmetric 2x2 matrix.

    Closed form; the sign makes the first nonzero component positive. A zero
    matrix or a doubly degenerate eigenvalue yields ``(1, 0)``.
    """
    a, b, c = float(S[0][0]), float(S[0][1]), float(S[1][1])
    half = 0.5 * (a - c)
    disc = math.hypot(half, b)
    scale = max(abs(a), abs(b), abs(c))
    if scale == 0.0 or disc <= 1e-15 * scale:
        return np.array([1.0, 0.0])
    lam = 0.5 * (a + c) + disc
    # two algebraically equivalent candidates; take the better conditioned one
    v1 = np.array([lam - c, b])
    v2 = np.array([b, lam - a])
    v = v1 if np.hypot(*v1) >= np.hypot(*v2) else v2
    v /= np.hypot(*v)
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return v + 0.0  # normalise -0.0


def between_variance(s: np.ndarray, k: int) -> float:
    """``k (mean1 - mean)^2 + (n - k) (mean2 - mean)^2`` for the cut after index k-1."""
    s = np.asarray(s, dtype=np.float64)
    m = s.mean()
    return float(k * (s[:k].mean() - m) ** 2 + (len(s) - k) * (s[k:].mean() - m) ** 2)


def otsu_cut(s) -> int:
    """Cut index ``k`` in ``[1, n)`` maximising the between-cluster variance.

    Uses prefix sums over values shifted by ``s[0]`` (variance is shift
    invariant; exact zeros for constant input keep the tie rule exact).
    Ties go to the smallest ``k``.
    """
    s = np.asarray(s, dtype=np.float64)
    n = s.shape[0]
    if n < 2:
        raise SizeLimitError("otsu_cut needs at least 2 values")
    x = s - s[0]
    csum = np.cumsum(x)
    total = csum[-1]
    k = np.arange(1, n, dtype=np.float64)
    m1 = csum[:-1] / k
    m2 = (total - csum[:-1]) / (n - k)
    m = total / n
    vb = k * (m1 - m) ** 2 + (n - k) * (m2 - m) ** 2
    return int(np.argmax(vb)) + 1


def pca_bisect(cluster: Cluster, coords: np.ndarray) -> tuple[Cluster, Cluster]:
    ids = np.asarray(cluster.members, dtype=np.int64)
    if len(ids) < 2:
        raise SizeLimitError("cannot bisect a singleton cluster")
    X = np.asarray(coords, dtype=np.float64)[ids]
    mu, S = mean_and_cov(X)
    v = dominant_eigenvector(S)
    proj = (X - mu) @ v
    order = np.lexsort((ids, proj))
    k = otsu_cut(proj[order])
    ids = ids[order]
    return Cluster.of(ids[:k], coords), Cluster.of(ids[k:], coords)


def _split_all(coords: np.ndarray, ids: Sequence[int], M: int):
    """Yield (node, parent_index) pairs in breadth-first order."""
    if M < 1:
        raise ValueError("M must be >= 1")
    root = Cluster.of(ids, coords)
    nodes = [(root, -1)]
    head = 0
    while head < len(nodes):
        node, _ = nodes[head]
        if len(node) > M:
            left, right = pca_bisect(node, coords)
            nodes.append((left, head))
            nodes.append((right, head))
        head += 1
    return nodes


def build_clusters(coords, M: int = 16, ids: Sequence[int] | None = None) -> list[Cluster]:
    """Leaves of the recursive bisection, sorted by smallest member id."""
    coords = np.asarray(coords, dtype=np.float64)
    ids = list(range(len(coords))) if ids is None else list(ids)
    nodes = _split_all(coords, ids, M)
    parents = {p for _, p in nodes}
    leaves = [c for k, (c, _) in enumerate(nodes) if k not in parents]
    return sorted(leaves, key=lambda c: min(c.members))


def dendrogram(coords, M: int = 16) -> list[dict]:
    """All bisection nodes as ``{id, parent, members, centroid, leaf}`` records."""
    coords = np.asarray(coords, dtype=np.float64)
    nodes = _split_all(coords, range(len(coords)), M)
    parents = {p for _, p in nodes}
    return [{"id": k, "parent": p if p >= 0 else None, "members": list(c.members),
             "centroid": list(c.centroid), "leaf": k not in parents}
            for k, (c, p) in enumerate(nodes)]
