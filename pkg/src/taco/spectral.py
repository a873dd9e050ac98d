"""Covariance spectrum machinery behind the data transformation.

Pipeline: unbiased sample covariance -> full symmetric eigendecomposition
(cyclic Jacobi rotations) -> greedy allocation of the top eigenvectors to
subspace buckets so that per-bucket eigenvalue products stay balanced ->
a centering + block-projection transform assembled from those buckets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionMismatchError,
    InsufficientDataError,
    NumericError,
    ParameterError,
)

# Eigenvalues below this fraction of the largest one are treated as zero
# and floored before scaling, keeping bucket products finite and monotone.
ZERO_EIGENVALUE_REL = 1e-12

JACOBI_TOL_REL = 1e-9     # off-diagonal tolerance relative to ||A||_F
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class CovarianceModel:
    mean: np.ndarray  # (d,) float64
    cov: np.ndarray   # (d, d) float64, symmetric


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum, descending, with eigenvalues rescaled to min >= 1."""

    eigenvalues: np.ndarray      # (d,) float64, scaled, descending
    eigenvectors: np.ndarray     # (d, d) float64, column i pairs with eigenvalues[i]
    scale_factor: float          # multiplier applied to the raw spectrum
    raw_eigenvalues: np.ndarray  # (d,) float64, pre-scaling, clamped at 0

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True)
class SubspaceAllocation:
    """Disjoint buckets of eigenvector indices, one bucket per subspace."""

    buckets: tuple[tuple[int, ...], ...]
    log_products: np.ndarray  # (N_s,) sum of log scaled eigenvalues per bucket

    @property
    def products(self) -> np.ndarray:
        return np.exp(self.log_products)


@dataclass(frozen=True)
class TransformModel:
    """Centering mean plus orthonormal projection blocks, one per subspace."""

    mean: np.ndarray                 # (d,) float32
    blocks: tuple[np.ndarray, ...]   # N_s arrays of shape (d, s), float32
    warnings: tuple[str, ...] = ()

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    @property
    def n_subspaces(self) -> int:
        return len(self.blocks)

    @property
    def subspace_dim(self) -> int:
        return self.blocks[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.n_subspaces * self.subspace_dim

    @property
    def matrix(self) -> np.ndarray:
        """All blocks concatenated column-wise: (d, N_s * s)."""
        return np.concatenate(self.blocks, axis=1)


def fit_covariance(data) -> CovarianceModel:
    """Row mean and unbiased sample covariance, symmetrized on return."""
    X = np.asarray(data)
    if X.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {X.shape}")
    n, _ = X.shape
    if n < 2:
        raise InsufficientDataError(f"covariance needs at least 2 rows, got {n}")
    finite = np.isfinite(X)
    if not finite.all():
        row = int(np.flatnonzero(~finite.all(axis=1))[0])
        raise NumericError(f"non-finite value in row {row}")
    X64 = X.astype(np.float64)
    mean = X64.mean(axis=0)
    centered = X64 - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    return CovarianceModel(mean=mean, cov=cov)


def _round_robin_rounds(d: int) -> list[list[tuple[int, int]]]:
    """Circle-method schedule: every unordered pair exactly once per sweep.

    Pairs within a round are disjoint, so their rotations commute and can
    be applied as one batched update.
    """
    m = d + (d % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < d and b < d:
                pairs.append((min(a, b), max(a, b)))
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _max_offdiag(A: np.ndarray) -> float:
    off = np.abs(A - np.diag(np.diag(A)))
    return float(off.max()) if off.size else 0.0


def jacobi_eigh(matrix, tol_rel: float = JACOBI_TOL_REL,
                max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigensystem of a symmetric matrix via cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) unsorted; eigenvector i is column i.
    Converges when the largest off-diagonal magnitude drops below
    tol_rel * ||A||_F; raises ConvergenceError past the sweep cap.
    """
    A = np.array(matrix, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {A.shape}")
    d = A.shape[0]
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    if float(np.abs(A - A.T).max() if A.size else 0.0) > 1e-6 * scale:
        raise ParameterError("matrix is not symmetric")
    A = (A + A.T) / 2.0
    V = np.eye(d)
    if d <= 1:
        return np.diag(A).copy(), V
    tol = tol_rel * float(np.linalg.norm(A, "fro"))
    rounds = _round_robin_rounds(d)
    for _ in range(max_sweeps):
        if _max_offdiag(A) <= tol:
            break
        for pairs in rounds:
            P = np.fromiter((p for p, _ in pairs), dtype=np.intp)
            Q = np.fromiter((q for _, q in pairs), dtype=np.intp)
            apq = A[P, Q]
            live = apq != 0.0
            if not live.any():
                continue
            P, Q, apq = P[live], Q[live], apq[live]
            tau = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            sign = np.where(tau < 0.0, -1.0, 1.0)
            t = sign / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            cp, sp = c[:, None], s[:, None]
            Ap, Aq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = cp * Ap - sp * Aq
            A[Q, :] = sp * Ap + cp * Aq
            Ap, Aq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = Ap * c - Aq * s
            A[:, Q] = Ap * s + Aq * c
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            Vp, Vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = Vp * c - Vq * s
            V[:, Q] = Vp * s + Vq * c
    else:
        residual = _max_offdiag(A)
        if residual > tol:
            raise ConvergenceError(
                f"eigensolver hit the {max_sweeps}-sweep cap with off-diagonal "
                f"residual {residual:.3e} above tolerance {tol:.3e}"
            )
    return np.diag(A).copy(), V


def _scale_spectrum(raw: np.ndarray) -> tuple[np.ndarray, float]:
    lam_max = float(raw[0]) if raw.size else 0.0
    if lam_max <= 0.0:
        return np.ones_like(raw), 1.0
    floored = np.maximum(raw, ZERO_EIGENVALUE_REL * lam_max)
    smallest = float(floored.min())
    return floored / smallest, 1.0 / smallest


def eigendecompose(cov: CovarianceModel) -> EigenSystem:
    """Full spectrum of the covariance, sorted descending and rescaled.

    Raw eigenvalues are clamped at zero (covariance is PSD up to noise),
    then divided by the smallest retained positive value so every scaled
    eigenvalue is >= 1. Eigenvector signs are fixed so each column's
    largest-magnitude component is positive.
    """
    eigvals, eigvecs = jacobi_eigh(cov.cov)
    order = np.argsort(-eigvals, kind="stable")
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    d = eigvals.shape[0]
    pivot = np.argmax(np.abs(eigvecs), axis=0)
    signs = np.sign(eigvecs[pivot, np.arange(d)])
    signs[signs == 0] = 1.0
    eigvecs = eigvecs * signs
    raw = np.maximum(eigvals, 0.0)
    scaled, factor = _scale_spectrum(raw)
    return EigenSystem(
        eigenvalues=scaled,
        eigenvectors=eigvecs,
        scale_factor=factor,
        raw_eigenvalues=raw,
    )


def allocate_eigensystem(eig: EigenSystem, d: int, n_subspaces: int,
                         subspace_dim: int) -> SubspaceAllocation:
    """Greedy balanced assignment of the top eigenvalues to buckets.

    Processes the top ``n_subspaces * subspace_dim`` scaled eigenvalues in
    descending order, assigning each to the non-full bucket with the
    smallest current product (tracked in log space; argmin ties go to the
    lowest bucket index).
    """
    if n_subspaces < 1 or subspace_dim < 1:
        raise ParameterError(
            f"need positive bucket counts, got {n_subspaces} x {subspace_dim}"
        )
    if eig.dim != d:
        raise ParameterError(f"eigensystem has dimension {eig.dim}, expected {d}")
    retained = n_subspaces * subspace_dim
    if retained > d:
        raise ParameterError(
            f"capacity exceeded: {n_subspaces} subspaces of dimension "
            f"{subspace_dim} need {retained} eigenvectors, only {d} available"
        )
    buckets: list[list[int]] = [[] for _ in range(n_subspaces)]
    log_products = np.zeros(n_subspaces)
    for i in range(retained):
        open_buckets = [j for j in range(n_subspaces) if len(buckets[j]) < subspace_dim]
        target = min(open_buckets, key=lambda j: log_products[j])
        buckets[target].append(i)
        log_products[target] += math.log(eig.eigenvalues[i])
    return SubspaceAllocation(
        buckets=tuple(tuple(b) for b in buckets),
        log_products=log_products,
    )


def fit_transform_model(data, n_subspaces: int, subspace_dim: int) -> TransformModel:
    """Fit covariance, eigendecompose, allocate, and assemble the blocks."""
    X = np.asarray(data)
    if X.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {X.shape}")
    d = X.shape[1]
    cov = fit_covariance(X)
    eig = eigendecompose(cov)
    alloc = allocate_eigensystem(eig, d, n_subspaces, subspace_dim)
    warnings: list[str] = []
    retained = n_subspaces * subspace_dim
    lam_max = float(eig.raw_eigenvalues[0])
    if lam_max <= 0.0:
        rank = 0
    else:
        rank = int((eig.raw_eigenvalues >= ZERO_EIGENVALUE_REL * lam_max).sum())
    if rank < retained:
        warnings.append(
            f"covariance rank {rank} is below the {retained} retained "
            "directions; floored eigenvalues keep the allocation defined "
            "but quality may degrade"
        )
    blocks = tuple(
        np.ascontiguousarray(eig.eigenvectors[:, bucket], dtype=np.float32)
        for bucket in alloc.buckets
    )
    return TransformModel(
        mean=cov.mean.astype(np.float32),
        blocks=blocks,
        warnings=tuple(warnings),
    )


def transform_points(model: TransformModel, points) -> np.ndarray:
    """Center rows by the dataset mean and project through every block.

    Output row = concatenation of the per-subspace projections; queries go
    through this exact same map so orderings stay comparable.
    """
    P = np.asarray(points)
    if P.ndim != 2:
        raise ParameterError(f"expected a 2-D matrix, got shape {P.shape}")
    if P.shape[1] != model.d:
        raise DimensionMismatchError(
            f"points have dimension {P.shape[1]}, model expects {model.d}"
        )
    centered = P.astype(np.float64) - model.mean.astype(np.float64)
    out = centered @ model.matrix.astype(np.float64)
    return out.astype(np.float32)
