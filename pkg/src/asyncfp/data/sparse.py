"""Validated CSR containers for problem data.

scipy.sparse does the heavy lifting; this wrapper pins down the exact
storage contract (sorted indices, trimmed zeros, canonical dtypes) once
at construction so every consumer can rely on it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SparseMatrixCSR:
    """CSR triple (row_ptr, col_idx, values) with validated structure.

    Invariants, enforced at construction:
      * row_ptr has length rows+1, starts at 0, is monotone nondecreasing;
      * col_idx is strictly increasing within each row and within bounds;
      * nnz == row_ptr[-1] == len(col_idx) == len(values).
    """

    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        rows, cols = self.shape
        rp = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", vals)

        if rows < 0 or cols < 0:
            raise ValueError(f"bad shape {self.shape}")
        if rp.shape != (rows + 1,):
            raise ValueError(f"row_ptr length {rp.shape[0]} != rows+1 = {rows + 1}")
        if rp[0] != 0:
            raise ValueError("row_ptr must start at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be monotone nondecreasing")
        nnz = int(rp[-1])
        if ci.shape[0] != nnz or vals.shape[0] != nnz:
            raise ValueError(
                f"nnz mismatch: row_ptr says {nnz}, "
                f"col_idx has {ci.shape[0]}, values has {vals.shape[0]}"
            )
        if nnz and (ci.min() < 0 or ci.max() >= cols):
            raise ValueError("column index out of bounds")
        for r in range(rows):
            row = ci[rp[r]:rp[r + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise ValueError(f"row {r}: column indices not strictly increasing")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def rows(self) -> int:
        return self.shape[0]

    @property
    def cols(self) -> int:
        return self.shape[1]

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrixCSR":
        """Canonicalize any scipy sparse matrix (sorts, drops stored zeros)."""
        csr = sp.csr_matrix(mat, copy=True)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(
            row_ptr=csr.indptr, col_idx=csr.indices,
            values=csr.data, shape=csr.shape,
        )

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "SparseMatrixCSR":
        return cls.from_scipy(sp.csr_matrix(np.asarray(arr, dtype=np.float64)))

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=self.shape
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def row(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """(column indices, values) of row ``r``."""
        lo, hi = self.row_ptr[r], self.row_ptr[r + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_scipy() @ x


@dataclass(frozen=True)
class LabeledDataset:
    """Binary classification data: sparse samples plus labels in {-1, +1}."""

    samples: SparseMatrixCSR
    labels: np.ndarray

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        object.__setattr__(self, "labels", labels)
        if labels.shape != (self.samples.rows,):
            raise ValueError(
                f"{labels.shape[0]} labels for {self.samples.rows} samples"
            )
        bad = ~np.isin(labels, (-1.0, 1.0))
        if np.any(bad):
            raise ValueError(
                f"labels must be -1 or +1; first bad value {labels[bad][0]}"
            )

    @property
    def num_samples(self) -> int:
        return self.samples.rows

    @property
    def num_features(self) -> int:
        return self.samples.cols


def map_binary_labels(raw: np.ndarray) -> np.ndarray:
    """Normalize label conventions to {-1, +1}.

    {0, 1} labels are remapped (0 -> -1) with a warning; anything else
    outside {-1, +1} is rejected.
    """
    raw = np.asarray(raw, dtype=np.float64)
    uniq = set(np.unique(raw).tolist())
    if uniq <= {-1.0, 1.0}:
        return raw
    if uniq <= {0.0, 1.0}:
        warnings.warn("labels look like {0,1}; mapping 0 -> -1", stacklevel=2)
        return np.where(raw == 0.0, -1.0, 1.0)
    raise ValueError(f"cannot interpret labels with values {sorted(uniq)[:5]}")
