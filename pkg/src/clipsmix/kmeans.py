"""Lloyd's k-means with k-means++ seeding and restarts.

Points are sorted lexicographically before fitting so that the result does not
depend on the input order (up to label permutation); labels are returned in
the caller's order, 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import make_rng
from .errors import InvalidParameterError


@dataclass
class KMeansResult:
    centers: np.ndarray   # (K, d)
    labels: np.ndarray    # (n,) in 1..K
    inertia: float
    inertia_path: list    # per Lloyd iteration of the winning restart
    restart: int


def _sq_dist(points, centers):
    d2 = np.empty((points.shape[0], centers.shape[0]))
    for k, c in enumerate(centers):
        diff = points - c
        d2[:, k] = np.einsum("ij,ij->i", diff, diff)
    return d2


def assign(points, centers) -> np.ndarray:
    """Nearest-center labels in 1..K (Euclidean); ties go to the lowest index."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if points.shape[1] != centers.shape[1]:
        raise InvalidParameterError("points and centers differ in dimension")
    return np.argmin(_sq_dist(points, centers), axis=1) + 1


def _plusplus(points, K, rng):
    n = points.shape[0]
    idx = [int(rng.integers(n))]
    d2 = _sq_dist(points, points[idx])[:, 0]
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            nxt = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dist(points, points[nxt:nxt + 1])[:, 0])
    return points[idx].copy()


def _lloyd(points, centers, max_iter):
    K = centers.shape[0]
    labels = None
    path = []
    for _ in range(max_iter):
        d2 = _sq_dist(points, centers)
        new = np.argmin(d2, axis=1)
        # empty-cluster repair: move the center to the point farthest from its own center
        counts = np.bincount(new, minlength=K)
        while np.any(counts == 0):
            own = d2[np.arange(points.shape[0]), new]
            far = int(np.argmax(own))
            j = int(np.flatnonzero(counts == 0)[0])
            centers[j] = points[far]
            d2[:, j] = _sq_dist(points, centers[j:j + 1])[:, 0]
            new = np.argmin(d2, axis=1)
            counts = np.bincount(new, minlength=K)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for k in range(K):
            centers[k] = points[labels == k].mean(axis=0)
        path.append(float(_sq_dist(points, centers)[np.arange(points.shape[0]), labels].sum()))
    inertia = float(_sq_dist(points, centers)[np.arange(points.shape[0]), labels].sum())
    return centers, labels, inertia, path


def kmeans_fit(points, K: int, restarts: int = 10, max_iter: int = 300, rng=None) -> KMeansResult:
    """Best-of-``restarts`` k-means fit; selection by lowest inertia, ties by restart index."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    K = int(K)
    if K < 1 or restarts < 1 or max_iter < 1:
        raise InvalidParameterError("K, restarts and max_iter must be positive")
    if n < K:
        raise InvalidParameterError(f"k-means needs at least K={K} points, got {n}")
    if not np.all(np.isfinite(points)):
        raise InvalidParameterError("k-means points must be finite")
    if rng is None:
        rng = make_rng(0)
    order = np.lexsort(points.T[::-1])
    sorted_pts = points[order]
    seeds = rng.integers(0, 2 ** 63, size=restarts)

    best = None
    for r, s in enumerate(seeds):
        sub = make_rng(int(s))
        centers = _plusplus(sorted_pts, K, sub)
        fit = _lloyd(sorted_pts, centers, max_iter)
        if best is None or fit[2] < best[0][2]:
            best = (fit, r)
    (centers, labels_sorted, inertia, path), r = best
    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted + 1
    return KMeansResult(centers=centers, labels=labels, inertia=inertia, inertia_path=path, restart=r)
