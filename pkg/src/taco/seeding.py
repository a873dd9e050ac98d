"""Deterministic fan-out of one root seed into independent child seeds.

Every stochastic component receives its seed as ``derive_seed(root, *path)``
where ``path`` is a fixed tuple of small integers naming the consumer
(for example ``(subspace, codebook_half)``), so a single root seed
reproduces an entire build regardless of execution order.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 63) - 1


def derive_seed(root: int, *path: int) -> int:
    """Fold ``(root, *path)`` through a SeedSequence into one integer seed."""
    entropy = [int(root) & _MASK] + [int(p) & _MASK for p in path]
    seq = np.random.SeedSequence(entropy)
    return int(seq.generate_state(1, np.uint64)[0])
