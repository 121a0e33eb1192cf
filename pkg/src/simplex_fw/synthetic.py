"""Seeded two-blob binary dataset so everything can run offline."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def two_blobs(m: int = 2000, n_features: int = 2, separation: float = 2.0,
              seed: int = 0, name: str | None = None) -> Dataset:
    """Two isotropic unit-variance Gaussians whose means are ``separation`` apart.

    Labels alternate so both classes have m // 2 (or m // 2 + 1) points.
    """
    if m < 2:
        raise ValueError("need at least two points")
    rng = np.random.default_rng(seed)
    y = np.where(np.arange(m) % 2 == 0, 1, -1)
    X = rng.standard_normal((m, n_features))
    X[:, 0] += 0.5 * separation * y
    return Dataset.from_arrays(X, y, name=name or f"blobs-m{m}-s{seed}")
