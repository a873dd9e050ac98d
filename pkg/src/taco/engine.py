"""End-to-end index build, query pipeline, and index persistence.

A query is answered in three steps: count per-subspace collisions into a
score table, pick a per-query score threshold that adapts the candidate
count to the re-rank budget, and re-rank the surviving candidates by
exact distance in the original space.
"""

from __future__ import annotations

import hashlib
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import KMeansModel
from .errors import (
    CorruptionError,
    DimensionMismatchError,
    FormatError,
    InsufficientDataError,
    ParameterError,
    StateError,
    UnsupportedVersionError,
)
from .imi import (
    InvertedMultiIndex,
    build_subspace_index,
    scalable_dynamic_activation,
    sorted_centroid_distances,
)
from .seeding import derive_seed
from .spectral import TransformModel, fit_transform_model, transform_points

INDEX_MAGIC = b"TACO"
INDEX_VERSION = 1

_MAX_SUBSPACES = 255  # scores live in one uint8 counter per point


@dataclass(frozen=True)
class IndexParams:
    n_subspaces: int
    subspace_dim: int
    clusters: int = 4096       # cells per subspace; perfect square
    kmeans_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_subspaces <= _MAX_SUBSPACES:
            raise ParameterError(
                f"subspace count {self.n_subspaces} outside [1, {_MAX_SUBSPACES}]"
            )
        if self.subspace_dim < 2:
            raise ParameterError(
                f"subspace dimension {self.subspace_dim} is below 2"
            )
        kprime = math.isqrt(int(self.clusters)) if self.clusters >= 1 else 0
        if kprime < 1 or kprime * kprime != self.clusters:
            raise ParameterError(
                f"cluster count {self.clusters} is not a perfect square"
            )
        if self.kmeans_iters < 1:
            raise ParameterError(
                f"k-means iteration cap {self.kmeans_iters} is below 1"
            )

    @property
    def codebook_size(self) -> int:
        return math.isqrt(int(self.clusters))

    @property
    def output_dim(self) -> int:
        return self.n_subspaces * self.subspace_dim


@dataclass(frozen=True)
class QueryParams:
    alpha: float           # collision ratio: fraction retrieved per subspace
    beta: float            # re-rank ratio: target candidate fraction
    k: int = 50

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"collision ratio {self.alpha} outside (0, 1)")
        if not 0.0 < self.beta < 1.0:
            raise ParameterError(f"re-rank ratio {self.beta} outside (0, 1)")
        if self.k < 1:
            raise ParameterError(f"result count {self.k} is below 1")


@dataclass
class TacoIndex:
    params: IndexParams
    transform: TransformModel
    subspaces: list[InvertedMultiIndex]
    n: int
    metadata: dict = field(default_factory=dict)
    transformed: np.ndarray | None = None  # retained only when requested

    @property
    def d(self) -> int:
        return self.transform.d


@dataclass(frozen=True)
class CandidateSet:
    ids: np.ndarray        # points with score >= last_collision
    candidate_num: int
    last_collision: int


@dataclass(frozen=True)
class SearchResult:
    ids: np.ndarray    # int32, ascending exact distance, ties by id
    dists: np.ndarray  # float32, exact Euclidean in the original space


def build_index(data, params: IndexParams, keep_transformed: bool = False) -> TacoIndex:
    """Transform the dataset and build one inverted multi-index per subspace.

    The transformed matrix is retained on the index only when
    keep_transformed is set (required by the exact-counting oracle);
    otherwise it is discarded after the build.
    """
    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {X.shape}")
    n, d = X.shape
    if params.output_dim > d:
        raise ParameterError(
            f"subspace budget {params.output_dim} ({params.n_subspaces} x "
            f"{params.subspace_dim}) exceeds data dimension {d}"
        )
    if n < params.codebook_size:
        raise InsufficientDataError(
            f"{n} points cannot fill {params.codebook_size} clusters per codebook"
        )
    t0 = time.perf_counter()
    model = fit_transform_model(X, params.n_subspaces, params.subspace_dim)
    transformed = transform_points(model, X)
    t_transform = time.perf_counter() - t0
    s = params.subspace_dim
    subspaces = []
    for j in range(params.n_subspaces):
        block = transformed[:, j * s : (j + 1) * s]
        subspaces.append(
            build_subspace_index(
                block, params.clusters, params.kmeans_iters,
                derive_seed(params.seed, j),
            )
        )
    total = time.perf_counter() - t0
    metadata = {
        "n": n,
        "d": d,
        "output_dim": params.output_dim,
        "dim_reduction_pct": 100.0 * (1.0 - params.output_dim / d),
        "transform_seconds": t_transform,
        "kmeans_seconds": total - t_transform,
        "build_seconds": total,
        "warnings": list(model.warnings),
    }
    return TacoIndex(
        params=params,
        transform=model,
        subspaces=subspaces,
        n=n,
        metadata=metadata,
        transformed=transformed if keep_transformed else None,
    )


def attach_transformed(index: TacoIndex, data) -> TacoIndex:
    """Recompute and retain the transformed matrix on a built/loaded index."""
    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.ndim != 2 or X.shape[0] != index.n or X.shape[1] != index.d:
        raise ParameterError(
            f"data shape {np.shape(data)} does not match index ({index.n}, {index.d})"
        )
    index.transformed = transform_points(index.transform, X)
    return index


def count_collisions(index: TacoIndex, query, alpha: float,
                     out: np.ndarray | None = None) -> np.ndarray:
    """Per-point count of subspaces whose activation retrieved the point.

    Returns a uint8 array of length n with values in [0, n_subspaces].
    Pass a reusable buffer via ``out`` to avoid per-query allocation; it
    is zeroed before counting.
    """
    q = np.asarray(query, dtype=np.float32).ravel()
    if q.shape[0] != index.d:
        raise DimensionMismatchError(
            f"query has dimension {q.shape[0]}, index expects {index.d}"
        )
    if out is None:
        scores = np.zeros(index.n, dtype=np.uint8)
    else:
        if out.shape != (index.n,) or out.dtype != np.uint8:
            raise ParameterError("score buffer must be uint8 of length n")
        out[:] = 0
        scores = out
    qt = transform_points(index.transform, q[None, :])[0]
    s = index.params.subspace_dim
    for j, sub in enumerate(index.subspaces):
        d1, i1, d2, i2 = sorted_centroid_distances(sub, qt[j * s : (j + 1) * s])
        result = scalable_dynamic_activation(
            alpha, index.n, index.params.clusters, d1, i1, d2, i2, sub
        )
        nonempty = [ids for ids in result.retrieved_clusters if ids.size]
        if nonempty:
            # cells partition the subspace, so ids are unique here and the
            # fancy-indexed increment counts each exactly once
            scores[np.concatenate(nonempty)] += 1
    return scores


def select_candidates(scores, beta: float, n_subspaces: int,
                      n: int | None = None) -> CandidateSet:
    """Adaptive threshold scan over the score histogram.

    Walks score levels from n_subspaces down, admitting each whole level;
    a level whose count still fits under beta*n minus what is already
    admitted lowers the threshold further, the first one that does not
    stops the scan (and is itself included). The threshold is clamped at 0.
    """
    scores = np.asarray(scores)
    if n is None:
        n = scores.shape[0]
    elif n != scores.shape[0]:
        raise ParameterError(f"score table has {scores.shape[0]} entries, n={n}")
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"re-rank ratio {beta} outside (0, 1)")
    hist = np.bincount(scores, minlength=n_subspaces + 1)
    budget = beta * n
    last_collision = n_subspaces
    candidate_num = 0
    for j in range(n_subspaces, -1, -1):
        candidate_num += int(hist[j])
        if hist[j] <= budget - candidate_num:
            last_collision -= 1
        else:
            break
    last_collision = max(last_collision, 0)
    ids = np.flatnonzero(scores >= last_collision)
    assert ids.size == candidate_num
    return CandidateSet(ids=ids, candidate_num=candidate_num,
                        last_collision=last_collision)


def rerank(data, query, candidates, k: int) -> SearchResult:
    """Exact top-k among the candidates, ascending distance, ties by id."""
    if k < 1:
        raise ParameterError(f"result count {k} is below 1")
    ids = candidates.ids if isinstance(candidates, CandidateSet) else candidates
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        return SearchResult(
            ids=np.empty(0, dtype=np.int32), dists=np.empty(0, dtype=np.float32)
        )
    X = np.asarray(data)
    q = np.asarray(query, dtype=np.float64).ravel()
    if q.shape[0] != X.shape[1]:
        raise DimensionMismatchError(
            f"query has dimension {q.shape[0]}, data has {X.shape[1]}"
        )
    diff = X[ids].astype(np.float64) - q
    d2 = np.einsum("ij,ij->i", diff, diff)
    np.maximum(d2, 0.0, out=d2)
    order = np.lexsort((ids, d2))[: min(k, ids.size)]
    return SearchResult(
        ids=ids[order].astype(np.int32),
        dists=np.sqrt(d2[order]).astype(np.float32),
    )


def knn_query(index: TacoIndex, data, query, qp: QueryParams,
              scratch: np.ndarray | None = None) -> SearchResult:
    """Collision counting, adaptive candidate selection, exact re-rank."""
    scores = count_collisions(index, query, qp.alpha, out=scratch)
    cand = select_candidates(scores, qp.beta, index.params.n_subspaces, index.n)
    return rerank(data, query, cand, qp.k)


def sc_linear_scores(transformed, query_t, n_subspaces: int, subspace_dim: int,
                     alpha: float) -> np.ndarray:
    """Exact collision counting: true subspace distances, no index.

    A point collides in a subspace when it ranks among the ceil(alpha*n)
    nearest to the query there (ties by id). Serves as the index-free
    oracle for the traversal-based pipeline; alpha may be 1.0 here.
    """
    T = np.asarray(transformed)
    qt = np.asarray(query_t, dtype=np.float64).ravel()
    n = T.shape[0]
    if qt.shape[0] != T.shape[1]:
        raise DimensionMismatchError(
            f"query has dimension {qt.shape[0]}, transformed data has {T.shape[1]}"
        )
    if n_subspaces * subspace_dim != T.shape[1]:
        raise ParameterError(
            f"{n_subspaces} x {subspace_dim} does not cover {T.shape[1]} columns"
        )
    if not 0.0 < alpha <= 1.0:
        raise ParameterError(f"collision ratio {alpha} outside (0, 1]")
    collide = min(n, math.ceil(alpha * n))
    scores = np.zeros(n, dtype=np.uint8)
    all_ids = np.arange(n)
    s = subspace_dim
    for j in range(n_subspaces):
        sub = T[:, j * s : (j + 1) * s].astype(np.float64)
        diff = sub - qt[j * s : (j + 1) * s]
        d2 = np.einsum("ij,ij->i", diff, diff)
        nearest = np.lexsort((all_ids, d2))[:collide]
        scores[nearest] += 1
    return scores


def sc_linear_query(index: TacoIndex, data, query, qp: QueryParams) -> SearchResult:
    """Query via exact collision counting over the retained transformed matrix."""
    if index.transformed is None:
        raise StateError(
            "transformed matrix was not retained at build time; rebuild with "
            "keep_transformed=True or call attach_transformed()"
        )
    q = np.asarray(query, dtype=np.float32).ravel()
    if q.shape[0] != index.d:
        raise DimensionMismatchError(
            f"query has dimension {q.shape[0]}, index expects {index.d}"
        )
    qt = transform_points(index.transform, q[None, :])[0]
    scores = sc_linear_scores(
        index.transformed, qt, index.params.n_subspaces,
        index.params.subspace_dim, qp.alpha,
    )
    cand = select_candidates(scores, qp.beta, index.params.n_subspaces, index.n)
    return rerank(data, query, cand, qp.k)


# ---------------------------------------------------------------------------
# Persistence. Layout (little-endian throughout):
#   magic "TACO", version u16,
#   n u64, d u32, n_subspaces u32, subspace_dim u32, clusters u32,
#   kmeans_iters u32, seed i64,
#   transform: mean (d f32), then each block (d*s f32, column-major),
#   per subspace: codebook1 (K' x ceil(s/2) f32), codebook2 (K' x floor(s/2) f32),
#     K' u32, cell count u32, then per cell: label1 u16, label2 u16,
#     size u32, ids u32[size],
#   blake2b-64 checksum of all preceding bytes.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<QIIIIIq")


def serialize_index(index: TacoIndex) -> bytes:
    params = index.params
    if index.n > 0xFFFFFFFF:
        raise ParameterError("indexes beyond 2^32 points cannot be serialized")
    out = bytearray()
    out += INDEX_MAGIC
    out += struct.pack("<H", INDEX_VERSION)
    out += _HEADER.pack(
        index.n, index.d, params.n_subspaces, params.subspace_dim,
        params.clusters, params.kmeans_iters, params.seed,
    )
    out += index.transform.mean.astype("<f4").tobytes()
    for block in index.transform.blocks:
        out += block.astype("<f4").tobytes(order="F")
    for sub in index.subspaces:
        out += sub.codebook1.centroids.astype("<f4").tobytes()
        out += sub.codebook2.centroids.astype("<f4").tobytes()
        keys = sorted(sub.cells)
        out += struct.pack("<II", sub.codebook_size, len(keys))
        for label1, label2 in keys:
            ids = sub.cells[(label1, label2)]
            out += struct.pack("<HHI", label1, label2, ids.size)
            out += ids.astype("<u4").tobytes()
    digest = hashlib.blake2b(bytes(out), digest_size=8).digest()
    return bytes(out) + digest


def save_index(index: TacoIndex, path) -> None:
    blob = serialize_index(index)
    with open(path, "wb") as fh:
        fh.write(blob)


class _Cursor:
    def __init__(self, blob: bytes, offset: int, path):
        self.blob = blob
        self.offset = offset
        self.path = path

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.blob):
            raise CorruptionError(
                f"{self.path}: unexpected end of file at byte {self.offset}"
            )
        chunk = self.blob[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<f4").astype(np.float32)

    def u32(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype="<u4").astype(np.uint32)

    def finish(self):
        if self.offset != len(self.blob):
            raise CorruptionError(
                f"{self.path}: {len(self.blob) - self.offset} trailing bytes"
            )


def load_index(path) -> TacoIndex:
    """Load an index file; rejects bad magic, versions, and checksums."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 2 + 8:
        raise CorruptionError(f"{path}: file too short ({len(blob)} bytes)")
    if blob[:4] != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != INDEX_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version}, this build supports {INDEX_VERSION}"
        )
    body, checksum = blob[:-8], blob[-8:]
    if hashlib.blake2b(body, digest_size=8).digest() != checksum:
        raise CorruptionError(f"{path}: checksum mismatch")
    cur = _Cursor(body, 6, path)
    n, d, n_subspaces, subspace_dim, clusters, kmeans_iters, seed = cur.unpack(
        _HEADER.format
    )
    try:
        params = IndexParams(
            n_subspaces=n_subspaces, subspace_dim=subspace_dim,
            clusters=clusters, kmeans_iters=kmeans_iters, seed=seed,
        )
    except ParameterError as exc:
        raise CorruptionError(f"{path}: invalid stored parameters: {exc}") from exc
    mean = cur.floats(d)
    blocks = tuple(
        cur.floats(d * subspace_dim).reshape((d, subspace_dim), order="F").copy()
        for _ in range(n_subspaces)
    )
    transform = TransformModel(mean=mean, blocks=blocks)
    split = (subspace_dim + 1) // 2
    kprime = params.codebook_size
    subspaces = []
    for _ in range(n_subspaces):
        c1 = cur.floats(kprime * split).reshape(kprime, split)
        c2 = cur.floats(kprime * (subspace_dim - split)).reshape(
            kprime, subspace_dim - split
        )
        stored_kprime, n_cells = cur.unpack("<II")
        if stored_kprime != kprime:
            raise CorruptionError(
                f"{path}: subspace codebook size {stored_kprime}, expected {kprime}"
            )
        cells = {}
        total = 0
        for _ in range(n_cells):
            label1, label2, size = cur.unpack("<HHI")
            cells[(label1, label2)] = cur.u32(size)
            total += size
        if total != n:
            raise CorruptionError(
                f"{path}: subspace cells hold {total} ids, expected {n}"
            )
        subspaces.append(
            InvertedMultiIndex(
                codebook1=KMeansModel(centroids=c1, assignments=None,
                                      inertia=float("nan")),
                codebook2=KMeansModel(centroids=c2, assignments=None,
                                      inertia=float("nan")),
                cells=cells, codebook_size=kprime, split=split,
            )
        )
    cur.finish()
    return TacoIndex(
        params=params, transform=transform, subspaces=subspaces, n=int(n),
        metadata={"loaded_from": str(path)},
    )
