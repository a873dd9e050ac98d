"""Shared test utilities: synthetic traversal instances and independent
reference implementations used as oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np

from taco.clustering import KMeansModel
from taco.imi import InvertedMultiIndex


def dummy_codebook(n_clusters: int, dim: int = 1) -> KMeansModel:
    return KMeansModel(
        centroids=np.zeros((n_clusters, dim), dtype=np.float32),
        assignments=None,
        inertia=0.0,
    )


def synthetic_imi(cells: dict, kprime: int) -> InvertedMultiIndex:
    return InvertedMultiIndex(
        codebook1=dummy_codebook(kprime),
        codebook2=dummy_codebook(kprime),
        cells={key: np.asarray(ids, dtype=np.uint32) for key, ids in cells.items()},
        codebook_size=kprime,
        split=1,
    )


def random_activation_instance(rng, kprime, max_cell=6, p_missing=0.3,
                               integer_dists=False):
    """Random (dists1, idx1, dists2, idx2, imi, n) tuple.

    integer_dists=True produces frequent distance-sum ties so the
    deterministic tie ordering gets exercised.
    """
    if integer_dists:
        dists1 = rng.integers(0, 6, kprime).astype(np.float64)
        dists2 = rng.integers(0, 6, kprime).astype(np.float64)
    else:
        dists1 = rng.uniform(0.0, 10.0, kprime)
        dists2 = rng.uniform(0.0, 10.0, kprime)
    idx1 = np.argsort(dists1, kind="stable")
    idx2 = np.argsort(dists2, kind="stable")
    sizes = rng.integers(1, max_cell + 1, size=(kprime, kprime))
    sizes[rng.random((kprime, kprime)) < p_missing] = 0
    if sizes.sum() == 0:
        sizes[0, 0] = 1
    total = int(sizes.sum())
    flat = np.arange(total, dtype=np.uint32)
    bounds = np.concatenate(([0], np.cumsum(sizes.ravel())))
    cells = {}
    slot = 0
    for l1 in range(kprime):
        for l2 in range(kprime):
            if sizes[l1, l2]:
                cells[(l1, l2)] = flat[bounds[slot] : bounds[slot + 1]]
            slot += 1
    return dists1, idx1, dists2, idx2, synthetic_imi(cells, kprime), total


def sorted_rank_pairs(dists1, idx1, dists2, idx2):
    """All K'^2 rank pairs sorted by (sum, row rank, column rank)."""
    kprime = len(idx1)
    pairs = [
        (float(dists1[idx1[a]] + dists2[idx2[b]]), a, b)
        for a in range(kprime)
        for b in range(kprime)
    ]
    pairs.sort()
    return pairs


def reference_threshold_scan(hist, beta, n):
    """Independent line-by-line transcription of the adaptive threshold scan."""
    levels = len(hist) - 1
    last_collision = levels
    candidate_num = 0
    for j in range(levels, -1, -1):
        candidate_num += int(hist[j])
        if hist[j] <= beta * n - candidate_num:
            last_collision -= 1
        else:
            break
    return max(last_collision, 0), candidate_num


def unordered_partitions(indices, n_buckets, size):
    """Every way to split indices into n_buckets unordered groups of `size`.

    The smallest remaining index is pinned into the current bucket, so
    each unordered partition is generated exactly once.
    """
    indices = tuple(indices)
    if n_buckets == 1:
        yield (indices,)
        return
    first, rest = indices[0], indices[1:]
    for combo in itertools.combinations(rest, size - 1):
        bucket = (first,) + combo
        taken = set(combo)
        remaining = tuple(i for i in rest if i not in taken)
        for tail in unordered_partitions(remaining, n_buckets - 1, size):
            yield (bucket,) + tail


def exhaustive_minmax_log_product(values, n_buckets, size):
    """Brute-force minimum over partitions of the max bucket log-product."""
    top = [math.log(v) for v in values[: n_buckets * size]]
    best = math.inf
    for partition in unordered_partitions(range(len(top)), n_buckets, size):
        worst = max(sum(top[i] for i in bucket) for bucket in partition)
        best = min(best, worst)
    return best


def euclidean_reference(a, b):
    """Independently coded Euclidean distance (plain Python accumulation)."""
    total = 0.0
    for x, y in zip(a, b):
        total += (float(x) - float(y)) ** 2
    return math.sqrt(total)
