"""Lloyd k-means with k-means++ seeding.

Trains the two codebooks behind every subspace index. Distances
accumulate in float64; centroids are stored as float32 to match the
serialized form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InsufficientDataError, ParameterError


@dataclass(frozen=True)
class KMeansModel:
    centroids: np.ndarray             # (k, m) float32
    assignments: np.ndarray | None    # (n,) int32; None for models loaded from disk
    inertia: float
    inertia_history: tuple[float, ...] = ()
    n_iter: int = 0

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _sq_dists(X64: np.ndarray, xsq: np.ndarray, C: np.ndarray) -> np.ndarray:
    csq = np.einsum("ij,ij->i", C, C)
    d2 = xsq[:, None] - 2.0 * (X64 @ C.T) + csq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _plus_plus_init(X64, xsq, k, rng) -> np.ndarray:
    n = X64.shape[0]
    centroids = np.empty((k, X64.shape[1]), dtype=np.float64)
    centroids[0] = X64[int(rng.integers(n))]
    best = _sq_dists(X64, xsq, centroids[:1])[:, 0]
    for i in range(1, k):
        total = float(best.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=best / total))
        else:
            idx = int(rng.integers(n))
        centroids[i] = X64[idx]
        np.minimum(best, _sq_dists(X64, xsq, centroids[i : i + 1])[:, 0], out=best)
    return centroids


def kmeans(data, n_clusters: int, max_iter: int = 20, seed: int = 0) -> KMeansModel:
    """Seeded k-means++ followed by at most max_iter Lloyd iterations.

    Exits early once assignments stop changing. Argmin ties go to the
    lowest centroid index. Clusters left empty by an update are reseeded
    onto the point currently farthest from its centroid (the point moves
    with it, so no cluster stays empty).
    """
    X = np.asarray(data, dtype=np.float32)
    if X.ndim != 2:
        raise ParameterError(f"k-means expects a 2-D matrix, got shape {X.shape}")
    n, m = X.shape
    if n_clusters < 1:
        raise ParameterError(f"cluster count must be positive, got {n_clusters}")
    if m < 1:
        raise ParameterError("points need at least one dimension")
    if max_iter < 1:
        raise ParameterError(f"iteration cap must be positive, got {max_iter}")
    if n < n_clusters:
        raise InsufficientDataError(
            f"{n} points cannot fill {n_clusters} clusters"
        )
    X64 = X.astype(np.float64)
    xsq = np.einsum("ij,ij->i", X64, X64)
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_init(X64, xsq, n_clusters, rng)
    labels: np.ndarray | None = None
    history: list[float] = []
    rows = np.arange(n)
    for _ in range(max_iter):
        d2 = _sq_dists(X64, xsq, centroids)
        new_labels = np.argmin(d2, axis=1).astype(np.int32)
        point_d2 = d2[rows, new_labels]
        history.append(float(point_d2.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=n_clusters)
        sums = np.zeros((n_clusters, m), dtype=np.float64)
        np.add.at(sums, labels, X64)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            farness = point_d2.copy()
            for j in empty:
                p = int(np.argmax(farness))
                centroids[j] = X64[p]
                labels[p] = np.int32(j)
                farness[p] = -1.0
    assert labels is not None
    return KMeansModel(
        centroids=centroids.astype(np.float32),
        assignments=labels,
        inertia=history[-1],
        inertia_history=tuple(history),
        n_iter=len(history),
    )


def assign(model: KMeansModel, point) -> int:
    """Index of the nearest centroid, ties to the lowest index."""
    p = np.asarray(point, dtype=np.float64).ravel()
    if p.shape[0] != model.dim:
        raise DimensionMismatchError(
            f"point has dimension {p.shape[0]}, centroids have {model.dim}"
        )
    diff = model.centroids.astype(np.float64) - p
    d2 = np.einsum("ij,ij->i", diff, diff)
    return int(np.argmin(d2))
