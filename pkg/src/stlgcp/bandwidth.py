"""K-means clustering of event locations and the bandwidth derived from it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_K = 5
DEFAULT_EPSILON = 1e-5
DEFAULT_MAX_ITER = 500


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Clustering:
    """Result of Lloyd's algorithm.

    Attributes:
        points: (n, 2) clustered locations.
        centroids: (K, 2) final cluster means.
        labels: (n,) 0-based cluster index of every point.
        sizes: (K,) number of points per cluster.
        n_iter: Lloyd iterations performed.
        converged: whether the centroid-shift criterion was met.
        sse_history: within-cluster sum of squares after each assignment step.
    """

    points: np.ndarray
    centroids: np.ndarray
    labels: np.ndarray
    sizes: np.ndarray
    n_iter: int
    converged: bool
    sse_history: tuple

    @property
    def K(self) -> int:
        return len(self.centroids)

    @property
    def sse(self) -> float:
        return float(np.sum((self.points - self.centroids[self.labels]) ** 2))


def _assign(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)  # first minimum = lowest index on ties
    return labels, d2[np.arange(len(points)), labels]


def _kmeanspp(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.integers(n)]]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            # every point sits on a centroid already; pick any unused location
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centroids.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=float)


def kmeans_cluster(points, K: int = DEFAULT_K, epsilon: float = DEFAULT_EPSILON,
                   max_iter: int = DEFAULT_MAX_ITER, seed=None,
                   init: np.ndarray | None = None) -> Clustering:
    """Lloyd iterations until the summed squared centroid shift is <= ``epsilon``.

    Centroids are seeded k-means++ style from ``seed`` unless ``init`` is given.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if K <= 0:
        raise ClusteringError(f"K must be positive, got {K}")
    n_distinct = len(np.unique(pts, axis=0))
    if K > n_distinct:
        raise ClusteringError(f"K={K} exceeds the number of distinct points ({n_distinct})")
    if epsilon <= 0:
        raise ClusteringError("epsilon must be positive")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(pts, K, rng) if init is None else np.array(init, dtype=float).reshape(K, 2)

    history = []
    converged = False
    it = 0
    labels, d2 = _assign(pts, centroids)
    history.append(float(d2.sum()))
    while it < max_iter:
        it += 1
        new = centroids.copy()
        counts = np.bincount(labels, minlength=K)
        for k in range(K):
            if counts[k]:
                new[k] = pts[labels == k].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                far = int(np.argmax(d2))
                new[k] = pts[far]
                d2[far] = 0.0
        shift = float(((new - centroids) ** 2).sum())
        centroids = new
        labels, d2 = _assign(pts, centroids)
        history.append(float(d2.sum()))
        if shift <= epsilon:
            converged = True
            break

    sizes = np.bincount(labels, minlength=K)
    return Clustering(pts, centroids, labels, sizes, it, converged, tuple(history))


def bandwidth_from_clustering(c: Clustering) -> float:
    """Average within-cluster spread, ``sqrt(sum_k mean_k ||s - c_k||^2 / (2K))``."""
    if np.any(c.sizes == 0):
        raise ClusteringError("degenerate clustering: at least one cluster is empty")
    sq = ((c.points - c.centroids[c.labels]) ** 2).sum(axis=1)
    per_cluster = np.bincount(c.labels, weights=sq, minlength=c.K) / c.sizes
    return float(np.sqrt(per_cluster.sum() / (2 * c.K)))


def select_bandwidth(points, K: int = DEFAULT_K, epsilon: float = DEFAULT_EPSILON,
                     seed=0, max_iter: int = DEFAULT_MAX_ITER) -> float:
    return bandwidth_from_clustering(kmeans_cluster(points, K, epsilon, max_iter, seed))
