"""RBF and effective L2-SVM kernels with an LRU column cache.

The simplex QP works on the effective kernel

    K_ij = y_i y_j (exp(-gamma ||x_i - x_j||^2) + b) + delta_ij / C

where ``b`` is 1 when the bias is absorbed into the kernel and 0 otherwise.
Anything exposing ``m``, ``column(j)``, ``entry(i, j)`` and ``diag(i)`` can be
handed to the solvers; :class:`MatrixKernel` wraps an explicit matrix.
"""

from __future__ import annotations

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SparseExample

log = logging.getLogger(__name__)

DEFAULT_CACHE_BYTES = 1 << 30


@dataclass(frozen=True)
class KernelParams:
    gamma: float
    C: float = 1.0
    add_bias: bool = True

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")

    @property
    def bias_term(self) -> float:
        return 1.0 if self.add_bias else 0.0


def rbf(x: SparseExample, z: SparseExample, gamma: float) -> float:
    """exp(-gamma * ||x - z||^2) by a sorted merge of the two supports."""
    i = j = 0
    d2 = 0.0
    xi, xv, zi, zv = x.indices, x.values, z.indices, z.values
    while i < len(xi) or j < len(zi):
        if j >= len(zi) or (i < len(xi) and xi[i] < zi[j]):
            diff = xv[i]
            i += 1
        elif i >= len(xi) or zi[j] < xi[i]:
            diff = -zv[j]
            j += 1
        else:
            diff = xv[i] - zv[j]
            i += 1
            j += 1
        d2 += diff * diff
    return math.exp(-gamma * d2)


class KernelColumnCache:
    """LRU map from column index to a length-m array."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be at least 1")
        self.capacity = capacity
        self._store: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, j: int):
        col = self._store.get(j)
        if col is None:
            self.misses += 1
            return None
        self.hits += 1
        self._store.move_to_end(j)
        return col

    def put(self, j: int, col: np.ndarray) -> None:
        self._store[j] = col
        self._store.move_to_end(j)
        while len(self._store) > self.capacity:
            self._store.popitem(last=False)

    def __contains__(self, j: int) -> bool:
        return j in self._store

    def __len__(self) -> int:
        return len(self._store)

    def clear(self) -> None:
        self._store.clear()


def default_cache_capacity(m: int, budget_bytes: int = DEFAULT_CACHE_BYTES) -> int:
    return max(1, min(m, budget_bytes // (8 * max(m, 1))))


class EffectiveKernel:
    """Effective L2-SVM kernel over a dataset.

    Entries and columns share one evaluation routine, so a cached column is
    bit-identical to the entries computed one at a time.
    """

    def __init__(self, data: Dataset, params: KernelParams, cache: KernelColumnCache | None = None):
        self.data = data
        self.params = params
        self.m = data.m
        self.X = data.to_csr()
        self.y = data.labels
        self.sqnorms = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()
        self.cache = cache if cache is not None else KernelColumnCache(default_cache_capacity(self.m))
        self._inv_c = 1.0 / params.C
        self._diag = np.full(self.m, np.nan)
        self.columns_computed = 0

    def _effective(self, rows, j: int) -> np.ndarray:
        # rows=None means every row
        xj = self.X.getrow(j).toarray().ravel()
        if rows is None:
            dots = self.X @ xj
            rows = slice(None)
        else:
            dots = self.X[rows] @ xj
        d2 = (self.sqnorms[rows] + self.sqnorms[j]) - 2.0 * dots
        np.maximum(d2, 0.0, out=d2)
        k = np.exp(-self.params.gamma * d2)
        return (self.y[rows] * self.y[j]) * (k + self.params.bias_term)

    def entry(self, i: int, j: int) -> float:
        v = float(self._effective(np.array([i]), j)[0])
        if i == j:
            v += self._inv_c
        return v

    def diag(self, i: int) -> float:
        v = self._diag[i]
        if v != v:
            v = self._diag[i] = self.entry(i, i)
        return float(v)

    def compute_column(self, j: int) -> np.ndarray:
        col = self._effective(None, j)
        col[j] += self._inv_c
        self.columns_computed += 1
        return col

    def column(self, j: int) -> np.ndarray:
        col = self.cache.get(j)
        if col is None:
            col = self.compute_column(j)
            col.flags.writeable = False
            self.cache.put(j, col)
        return col

    def dense(self) -> np.ndarray:
        """Full (m, m) matrix; only sensible for small m."""
        return np.column_stack([self.compute_column(j) for j in range(self.m)])


class MatrixKernel:
    """Explicit symmetric matrix exposed through the kernel interface."""

    def __init__(self, K):
        K = np.array(K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValueError("kernel matrix must be square")
        self.K = K
        self.m = K.shape[0]
        self.K.flags.writeable = False

    def column(self, j: int) -> np.ndarray:
        return self.K[:, j]

    def entry(self, i: int, j: int) -> float:
        return float(self.K[i, j])

    def diag(self, i: int) -> float:
        return float(self.K[i, i])

    def dense(self) -> np.ndarray:
        return self.K.copy()


def effective_kernel(i: int, j: int, data: Dataset, params: KernelParams) -> float:
    """Single effective-kernel entry straight from the definition."""
    v = data.examples[i].label * data.examples[j].label * (
        rbf(data.examples[i], data.examples[j], params.gamma) + params.bias_term)
    if i == j:
        v += 1.0 / params.C
    return v


def kernel_column(j: int, kernel: EffectiveKernel) -> np.ndarray:
    return kernel.column(j)


class DegenerateDataError(ValueError):
    pass


def gamma_heuristic(data: Dataset, sample_size: int = 1000, seed: int = 0) -> float:
    """Inverse mean squared pairwise distance over a seeded sample of points."""
    m = data.m
    size = min(m, sample_size)
    rows = np.sort(np.random.default_rng(seed).choice(m, size=size, replace=False))
    X = data.to_csr()[rows].toarray()
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    iu = np.triu_indices(size, k=1)
    pair_d2 = np.maximum(d2[iu], 0.0)
    mean = float(pair_d2.mean()) if pair_d2.size else 0.0
    if not mean > 0.0:
        raise DegenerateDataError("degenerate data for width heuristic")
    return 1.0 / mean
