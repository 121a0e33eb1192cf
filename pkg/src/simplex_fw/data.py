"""LIBSVM-format datasets.

Feature indices are 1-based in files and in ``SparseExample.indices``; the
CSR matrix returned by :meth:`Dataset.to_csr` is 0-based (column ``i - 1``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class DataFormatError(ValueError):
    """Malformed LIBSVM input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SparseExample:
    label: int
    indices: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise DataFormatError(f"label must be -1 or +1, got {self.label}")
        if len(self.indices) != len(self.values):
            raise DataFormatError("indices and values differ in length")
        prev = 0
        for idx in self.indices:
            if idx <= prev:
                raise DataFormatError("feature indices must be >= 1 and strictly ascending")
            prev = idx
        if not all(math.isfinite(v) for v in self.values):
            raise DataFormatError("non-finite feature value")

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def dense(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        for idx, v in zip(self.indices, self.values):
            x[idx - 1] = v
        return x


@dataclass
class Dataset:
    examples: list[SparseExample]
    name: str = ""
    n: int = field(default=-1)

    def __post_init__(self):
        if not self.examples:
            raise DataFormatError("dataset has no examples")
        max_idx = max((e.indices[-1] for e in self.examples if e.indices), default=0)
        if self.n < 0:
            self.n = max_idx
        elif self.n < max_idx:
            raise DataFormatError(f"n={self.n} is smaller than max feature index {max_idx}")
        self._csr = None
        self._labels = None

    @property
    def m(self) -> int:
        return len(self.examples)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def labels(self) -> np.ndarray:
        if self._labels is None:
            self._labels = np.array([e.label for e in self.examples], dtype=float)
        return self._labels

    def to_csr(self) -> sp.csr_matrix:
        """(m, n) CSR matrix with 0-based columns; cached."""
        if self._csr is None:
            indptr = np.zeros(self.m + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([e.nnz for e in self.examples])
            cols = np.fromiter((i - 1 for e in self.examples for i in e.indices),
                               dtype=np.int64, count=int(indptr[-1]))
            data = np.fromiter((v for e in self.examples for v in e.values),
                               dtype=float, count=int(indptr[-1]))
            self._csr = sp.csr_matrix((data, cols, indptr), shape=(self.m, max(self.n, 1)))
        return self._csr

    def subset(self, rows: Iterable[int], name: str | None = None) -> "Dataset":
        return Dataset([self.examples[i] for i in rows],
                       name=self.name if name is None else name, n=self.n)

    @classmethod
    def from_arrays(cls, X, y, name: str = "") -> "Dataset":
        """Build from a dense (m, n) array and labels in {-1, +1}."""
        X = np.asarray(X, dtype=float)
        examples = []
        for row, label in zip(X, y):
            nz = np.flatnonzero(row)
            examples.append(SparseExample(int(label), tuple(int(i) + 1 for i in nz),
                                          tuple(float(row[i]) for i in nz)))
        return cls(examples, name=name, n=X.shape[1])


def _parse_label(token: str, lineno: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"bad label {token!r}", lineno) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite label {token!r}", lineno)
    return value


def parse_libsvm(stream: IO[str] | Iterable[str], name: str = "") -> Dataset:
    """Parse ``<label> <index>:<value> ...`` lines into a Dataset.

    Binary labels in any two-valued encoding are mapped so that the smaller
    raw label becomes -1 and the larger +1.
    """
    raw_labels: list[float] = []
    rows: list[tuple[tuple[int, ...], tuple[float, ...]]] = []
    first_line: dict[float, int] = {}

    for lineno, line in enumerate(stream, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _parse_label(tokens[0], lineno)
        first_line.setdefault(label, lineno)
        if len(first_line) > 2:
            raise DataFormatError("more than two distinct labels", lineno)

        indices: list[int] = []
        values: list[float] = []
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DataFormatError(f"malformed token {tok!r}", lineno) from None
            if idx < 1:
                raise DataFormatError(f"feature index must be >= 1, got {idx}", lineno)
            if indices and idx == indices[-1]:
                raise DataFormatError(f"duplicate feature index {idx}", lineno)
            if indices and idx < indices[-1]:
                raise DataFormatError(f"feature index {idx} not ascending", lineno)
            if not math.isfinite(val):
                raise DataFormatError(f"non-finite value {val_s!r}", lineno)
            indices.append(idx)
            values.append(val)
        raw_labels.append(label)
        rows.append((tuple(indices), tuple(values)))

    if not rows:
        raise DataFormatError("no examples found")
    if len(first_line) < 2:
        raise DataFormatError("fewer than two labels: need a binary problem")

    low = min(first_line)
    examples = [SparseExample(-1 if lab == low else 1, idx, val)
                for lab, (idx, val) in zip(raw_labels, rows)]
    return Dataset(examples, name=name)


def load_libsvm(path, name: str | None = None) -> Dataset:
    from pathlib import Path

    path = Path(path)
    with open(path) as fh:
        return parse_libsvm(fh, name=path.name if name is None else name)


def format_libsvm(d: Dataset | Sequence[SparseExample]) -> str:
    examples = d.examples if isinstance(d, Dataset) else d
    lines = []
    for e in examples:
        feats = " ".join(f"{i}:{v!r}" for i, v in zip(e.indices, e.values))
        lines.append(f"{e.label:+d} {feats}".rstrip())
    return "\n".join(lines) + "\n"


def split_train_validation(d: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random disjoint split; the first part has ``round(fraction * m)`` examples."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    if d.m < 2:
        raise ValueError("need at least two examples to split")
    k = int(round(fraction * d.m))
    k = min(max(k, 1), d.m - 1)
    perm = np.random.default_rng(seed).permutation(d.m)
    first, second = np.sort(perm[:k]), np.sort(perm[k:])
    return d.subset(first), d.subset(second)


@dataclass(frozen=True)
class DatasetStats:
    m: int
    n: int
    positives: int
    negatives: int
    mean_nnz: float


def dataset_stats(d: Dataset) -> DatasetStats:
    pos = sum(1 for e in d.examples if e.label == 1)
    return DatasetStats(m=d.m, n=d.n, positives=pos, negatives=d.m - pos,
                        mean_nnz=sum(e.nnz for e in d.examples) / d.m)
