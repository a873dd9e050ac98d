"""Deterministic synthetic datasets for benchmarks without downloads.

Points are drawn around cluster centers living in a low-dimensional
dominant subspace, topped with weak full-dimensional noise, then pushed
through a random rotation. The resulting covariance has a strong spiked
spectrum, so neighborhoods are governed by a few directions the spectral
transform can recover.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .seeding import derive_seed


def make_clustered(n: int, n_queries: int, dim: int, n_clusters: int = 150,
                   active_dim: int = 32, center_scale: float = 8.0,
                   within_scale: float = 1.0, noise_scale: float = 0.4,
                   n_super: int = 1, super_scale: float = 0.0,
                   seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Base and query matrices drawn from one clustered distribution.

    With ``n_super > 1`` the cluster centers themselves group around
    widely separated super-centers (centers are spread evenly across
    supers), giving the hierarchical concentration real corpora show.
    Queries come from the same mixture but are not corpus rows.
    """
    if n < 1 or n_queries < 0:
        raise ParameterError("need n >= 1 and n_queries >= 0")
    if not 1 <= active_dim <= dim:
        raise ParameterError(f"active_dim {active_dim} outside [1, {dim}]")
    if n_super < 1 or n_super > n_clusters:
        raise ParameterError(f"n_super {n_super} outside [1, {n_clusters}]")
    rng = np.random.default_rng(derive_seed(seed, 11))
    centers = rng.normal(size=(n_clusters, active_dim)) * center_scale
    if n_super > 1:
        super_centers = rng.normal(size=(n_super, active_dim)) * super_scale
        centers += super_centers[np.arange(n_clusters) % n_super]
    basis = rng.normal(size=(dim, dim))
    rotation, _ = np.linalg.qr(basis)
    rotation *= np.where(np.diag(rotation) < 0, -1.0, 1.0)  # fix QR sign ambiguity

    def draw(count: int) -> np.ndarray:
        labels = rng.integers(n_clusters, size=count)
        pts = np.zeros((count, dim))
        pts[:, :active_dim] = centers[labels] + rng.normal(
            size=(count, active_dim)) * within_scale
        pts += rng.normal(size=(count, dim)) * noise_scale
        return (pts @ rotation.T).astype(np.float32)

    return draw(n), draw(n_queries)
