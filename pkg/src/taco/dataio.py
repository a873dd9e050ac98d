"""Vector dataset I/O, subset sampling, and exact ground truth.

Datasets are plain 2-D numpy arrays, one row per vector (float32 for
fvecs content, int32 for ivecs content); the row index doubles as the
point id. Files follow the classic record layout: an int32-LE dimension
count followed by that many 4-byte little-endian elements, repeated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    FormatError,
    ParameterError,
)

_ELEMENT_DTYPES = {"float32": "<f4", "int32": "<i4"}


def _check_matrix(arr: np.ndarray, what: str = "dataset") -> np.ndarray:
    if arr.ndim != 2:
        raise ParameterError(f"{what} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise EmptyInputError(f"{what} has zero rows")
    if arr.shape[1] < 1:
        raise ParameterError(f"{what} has zero columns")
    return arr


def read_vectors(path, element_kind: str = "float32") -> np.ndarray:
    """Read an fvecs/ivecs file into an (n, d) array.

    Raises FormatError for truncated records (with the byte offset) or
    records that disagree on the dimension, and EmptyInputError for an
    empty file.
    """
    if element_kind not in _ELEMENT_DTYPES:
        raise ParameterError(f"unknown element kind {element_kind!r}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) == 0:
        raise EmptyInputError(f"{path}: file holds no records")
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated record at byte offset 0")
    (d,) = struct.unpack_from("<i", blob, 0)
    if d < 1:
        raise FormatError(f"{path}: invalid dimension {d} at byte offset 0")
    record = 4 + 4 * d
    if len(blob) % record == 0:
        table = np.frombuffer(blob, dtype="<i4").reshape(-1, 1 + d)
        dims = table[:, 0]
        bad = np.flatnonzero(dims != d)
        if bad.size == 0:
            body = table[:, 1:]
            if element_kind == "float32":
                return body.view("<f4").astype(np.float32, copy=True)
            return body.astype(np.int32, copy=True)
        first = int(bad[0])
        raise FormatError(
            f"{path}: record {first} (byte offset {first * record}) declares "
            f"dimension {int(dims[first])}, expected {d}"
        )
    # Record walk on the malformed path only, to pin down the first defect.
    offset = 0
    index = 0
    size = len(blob)
    while offset + 4 <= size:
        (dim,) = struct.unpack_from("<i", blob, offset)
        if dim != d:
            raise FormatError(
                f"{path}: record {index} (byte offset {offset}) declares "
                f"dimension {dim}, expected {d}"
            )
        if offset + record > size:
            raise FormatError(f"{path}: truncated record at byte offset {offset}")
        offset += record
        index += 1
    raise FormatError(f"{path}: truncated record at byte offset {offset}")


def write_vectors(matrix, path, element_kind: str = "float32") -> None:
    """Write an (n, d) array in fvecs/ivecs layout, re-readable bit-exactly."""
    if element_kind not in _ELEMENT_DTYPES:
        raise ParameterError(f"unknown element kind {element_kind!r}")
    dtype = _ELEMENT_DTYPES[element_kind]
    arr = np.ascontiguousarray(matrix, dtype=dtype)
    _check_matrix(arr, "matrix")
    n, d = arr.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = arr.view("<i4")
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def sample_subset(matrix, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw m distinct rows uniformly; returns (rows, original ids)."""
    arr = _check_matrix(np.asarray(matrix))
    n = arr.shape[0]
    if not 1 <= m <= n:
        raise ParameterError(f"subset size {m} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    ids = rng.choice(n, size=m, replace=False).astype(np.int64)
    return arr[ids].copy(), ids


def split_queries(matrix, n_queries: int, seed: int):
    """Sample query rows and remove them from the base set.

    Removal happens after any subset sampling; harness metadata records
    this choice. Returns (base, queries, query_ids).
    """
    arr = _check_matrix(np.asarray(matrix))
    n = arr.shape[0]
    if not 1 <= n_queries < n:
        raise ParameterError(f"query count {n_queries} outside [1, {n})")
    rng = np.random.default_rng(seed)
    ids = rng.choice(n, size=n_queries, replace=False).astype(np.int64)
    mask = np.ones(n, dtype=bool)
    mask[ids] = False
    return arr[mask].copy(), arr[ids].copy(), ids


@dataclass(frozen=True)
class GroundTruth:
    """Exact nearest neighbors per query: ids and distances, ascending."""

    ids: np.ndarray    # (nq, k) int32
    dists: np.ndarray  # (nq, k) float32

    @property
    def k(self) -> int:
        return self.ids.shape[1]


def compute_ground_truth(base, queries, k: int, block: int = 256) -> GroundTruth:
    """Exact k nearest neighbors by Euclidean distance, ties broken by id.

    Distances accumulate in float64 and are stored as float32, matching
    the on-disk fvecs representation.
    """
    B = _check_matrix(np.asarray(base), "base")
    Q = _check_matrix(np.asarray(queries), "queries")
    if B.shape[1] != Q.shape[1]:
        raise DimensionMismatchError(
            f"base dimension {B.shape[1]} != query dimension {Q.shape[1]}"
        )
    n = B.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(f"k {k} outside [1, {n}]")
    X = B.astype(np.float64)
    xsq = np.einsum("ij,ij->i", X, X)
    all_ids = np.arange(n)
    nq = Q.shape[0]
    out_ids = np.empty((nq, k), dtype=np.int32)
    out_dists = np.empty((nq, k), dtype=np.float32)
    for start in range(0, nq, block):
        chunk = Q[start : start + block].astype(np.float64)
        qsq = np.einsum("ij,ij->i", chunk, chunk)
        d2 = xsq[None, :] - 2.0 * (chunk @ X.T) + qsq[:, None]
        np.maximum(d2, 0.0, out=d2)
        for row in range(chunk.shape[0]):
            order = np.lexsort((all_ids, d2[row]))[:k]
            out_ids[start + row] = order
            out_dists[start + row] = np.sqrt(d2[row, order])
    return GroundTruth(ids=out_ids, dists=out_dists)


def save_ground_truth(truth: GroundTruth, ids_path, dists_path) -> None:
    write_vectors(truth.ids, ids_path, "int32")
    write_vectors(truth.dists, dists_path, "float32")


def load_ground_truth(ids_path, dists_path) -> GroundTruth:
    ids = read_vectors(ids_path, "int32")
    dists = read_vectors(dists_path, "float32")
    if ids.shape != dists.shape:
        raise FormatError(
            f"ground truth shape mismatch: ids {ids.shape} vs dists {dists.shape}"
        )
    return GroundTruth(ids=ids, dists=dists)
