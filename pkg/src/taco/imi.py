"""Per-subspace inverted multi-index and its collision-probing traversals.

The index is a cross product of two codebooks: each point's pair of
cluster labels keys a cell holding its id. Queries probe cells in
ascending order of summed centroid distances until enough ids have been
retrieved; the heap traversal and the linear-frontier baseline emit the
exact same cell sequence.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .clustering import KMeansModel, kmeans
from .errors import DimensionMismatchError, ParameterError
from .seeding import derive_seed

_EMPTY_IDS = np.empty(0, dtype=np.uint32)


@dataclass(frozen=True)
class InvertedMultiIndex:
    codebook1: KMeansModel
    codebook2: KMeansModel
    cells: dict[tuple[int, int], np.ndarray]  # (label1, label2) -> ids, ascending
    codebook_size: int                        # clusters per codebook (sqrt of K)
    split: int                                # first half covers dims [0, split)

    @property
    def subspace_dim(self) -> int:
        return self.codebook1.dim + self.codebook2.dim

    @property
    def n_points(self) -> int:
        return sum(ids.size for ids in self.cells.values())


@dataclass(frozen=True)
class ActivationResult:
    retrieved_clusters: tuple[np.ndarray, ...]
    retrieved_num: int
    pop_trace: tuple[tuple[float, int, int], ...]  # (distance sum, label1, label2)


def build_subspace_index(subspace_data, n_cells: int, kmeans_iters: int = 20,
                         seed: int = 0) -> InvertedMultiIndex:
    """Train two codebooks over the subspace halves and fill the cells.

    The halves are dimensions [0, ceil(s/2)) and [ceil(s/2), s); n_cells
    must be a perfect square so each codebook gets sqrt(n_cells) clusters.
    """
    X = np.asarray(subspace_data, dtype=np.float32)
    if X.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {X.shape}")
    n, s = X.shape
    if s < 2:
        raise ParameterError(f"subspace dimension {s} cannot be split into two parts")
    kprime = math.isqrt(int(n_cells)) if n_cells >= 1 else 0
    if kprime < 1 or kprime * kprime != n_cells:
        raise ParameterError(f"cluster count {n_cells} is not a perfect square")
    if kprime > 0xFFFF:
        raise ParameterError(f"per-codebook cluster count {kprime} exceeds 65535")
    split = (s + 1) // 2
    cb1 = kmeans(X[:, :split], kprime, kmeans_iters, derive_seed(seed, 0))
    cb2 = kmeans(X[:, split:], kprime, kmeans_iters, derive_seed(seed, 1))
    l1 = cb1.assignments.astype(np.int64)
    l2 = cb2.assignments.astype(np.int64)
    order = np.lexsort((np.arange(n), l2, l1))
    sl1, sl2 = l1[order], l2[order]
    boundary = np.flatnonzero((np.diff(sl1) != 0) | (np.diff(sl2) != 0)) + 1
    starts = np.concatenate(([0], boundary))
    ends = np.concatenate((boundary, [n]))
    ids_sorted = order.astype(np.uint32)
    cells = {
        (int(sl1[a]), int(sl2[a])): ids_sorted[a:b].copy()
        for a, b in zip(starts, ends)
    }
    return InvertedMultiIndex(
        codebook1=cb1, codebook2=cb2, cells=cells,
        codebook_size=kprime, split=split,
    )


def sorted_centroid_distances(imi: InvertedMultiIndex, query_sub):
    """Squared distances from the query halves to every centroid.

    Returns (dists1, idx1, dists2, idx2) where idx_h sorts the labels of
    codebook h by ascending distance, ties to the lower label.
    """
    q = np.asarray(query_sub, dtype=np.float64).ravel()
    if q.shape[0] != imi.subspace_dim:
        raise DimensionMismatchError(
            f"query has dimension {q.shape[0]}, subspace expects {imi.subspace_dim}"
        )
    qa, qb = q[: imi.split], q[imi.split :]
    diff1 = imi.codebook1.centroids.astype(np.float64) - qa
    diff2 = imi.codebook2.centroids.astype(np.float64) - qb
    dists1 = np.einsum("ij,ij->i", diff1, diff1)
    dists2 = np.einsum("ij,ij->i", diff2, diff2)
    idx1 = np.argsort(dists1, kind="stable")
    idx2 = np.argsort(dists2, kind="stable")
    return dists1, idx1, dists2, idx2


def _retrieval_threshold(alpha: float, n: int) -> int:
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"collision ratio {alpha} outside (0, 1]")
    return min(n, math.ceil(alpha * n))


def _check_activation_inputs(n_cells, dists1, idx1, dists2, idx2, imi):
    kprime = len(idx1)
    if len(idx2) != kprime or len(dists1) != kprime or len(dists2) != kprime:
        raise ParameterError("distance and index arrays disagree on codebook size")
    if math.isqrt(int(n_cells)) != kprime:
        raise ParameterError(
            f"cluster count {n_cells} does not match {kprime} centroids per codebook"
        )
    if imi.codebook_size != kprime:
        raise ParameterError(
            f"index has {imi.codebook_size} clusters per codebook, inputs have {kprime}"
        )
    return kprime


def scalable_dynamic_activation(alpha, n, n_cells, dists1, idx1, dists2, idx2,
                                imi) -> ActivationResult:
    """Heap-driven cell traversal in ascending distance-sum order.

    A min-heap of (sum, row rank, column rank) entries tracks the frontier:
    popping rank pair (pos, col) emits cell (idx1[pos], idx2[col]), first
    activation of a row pushes the next row, and the popped row advances to
    its next column. Stops once the retrieved id count reaches
    ceil(alpha * n); missing cells count as empty but still advance the
    frontier. If every cell is exhausted first, everything retrieved so far
    is returned.
    """
    kprime = _check_activation_inputs(n_cells, dists1, idx1, dists2, idx2, imi)
    threshold = _retrieval_threshold(alpha, n)
    cells = imi.cells
    retrieved: list[np.ndarray] = []
    trace: list[tuple[float, int, int]] = []
    count = 0
    heap = [(float(dists1[idx1[0]] + dists2[idx2[0]]), 0, 0)]
    while heap:
        dist_sum, pos, col = heapq.heappop(heap)
        label1, label2 = int(idx1[pos]), int(idx2[col])
        ids = cells.get((label1, label2), _EMPTY_IDS)
        retrieved.append(ids)
        trace.append((dist_sum, label1, label2))
        count += ids.size
        if count >= threshold:
            break
        if col == 0 and pos < kprime - 1:
            heapq.heappush(
                heap, (float(dists1[idx1[pos + 1]] + dists2[idx2[0]]), pos + 1, 0)
            )
        if col < kprime - 1:
            heapq.heappush(
                heap, (float(dists1[idx1[pos]] + dists2[idx2[col + 1]]), pos, col + 1)
            )
    return ActivationResult(tuple(retrieved), count, tuple(trace))


def linear_dynamic_activation(alpha, n, n_cells, dists1, idx1, dists2, idx2,
                              imi) -> ActivationResult:
    """Same traversal contract with the frontier kept in a linear array.

    The next cell is found by scanning every active row (cost linear in
    the number of activated rows), emitting the exact same cell sequence
    as the heap variant.
    """
    kprime = _check_activation_inputs(n_cells, dists1, idx1, dists2, idx2, imi)
    threshold = _retrieval_threshold(alpha, n)
    cells = imi.cells
    retrieved: list[np.ndarray] = []
    trace: list[tuple[float, int, int]] = []
    count = 0
    row_sum = np.full(kprime, np.inf)
    active_col = np.zeros(kprime, dtype=np.int64)
    row_sum[0] = float(dists1[idx1[0]] + dists2[idx2[0]])
    hi = 1  # rows [0, hi) have been activated
    while True:
        pos = int(np.argmin(row_sum[:hi]))  # ties resolve to the lowest row
        dist_sum = float(row_sum[pos])
        if not np.isfinite(dist_sum):
            break  # every activated row exhausted
        col = int(active_col[pos])
        label1, label2 = int(idx1[pos]), int(idx2[col])
        ids = cells.get((label1, label2), _EMPTY_IDS)
        retrieved.append(ids)
        trace.append((dist_sum, label1, label2))
        count += ids.size
        if count >= threshold:
            break
        if col == 0 and pos < kprime - 1:
            row_sum[pos + 1] = float(dists1[idx1[pos + 1]] + dists2[idx2[0]])
            hi = max(hi, pos + 2)
        if col < kprime - 1:
            active_col[pos] = col + 1
            row_sum[pos] = float(dists1[idx1[pos]] + dists2[idx2[col + 1]])
        else:
            row_sum[pos] = np.inf
    return ActivationResult(tuple(retrieved), count, tuple(trace))
