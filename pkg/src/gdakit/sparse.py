"""Compressed sparse row matrices used as fixed (non-trainable) operands.

A CsrMatrix stores structure plus one weight per stored slot. The dense side
of every sparse product is what carries gradients; the matrix itself is
treated as a constant, so this type lives outside the tape.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as _sp

from .errors import ValidationError


class CsrMatrix:
    """CSR matrix with validated structure and cached scipy views.

    Invariants checked on construction:
      * indptr has length n_rows + 1, starts at 0, ends at nnz, nondecreasing;
      * column indices are in range and strictly ascending within each row
        (so a slot (i, j) is stored at most once).
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data", "_scipy", "_scipy_t")

    def __init__(self, n_rows: int, n_cols: int, indptr, indices, data):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        data = np.ascontiguousarray(data, dtype=np.float64)
        if n_rows < 0 or n_cols < 0:
            raise ValidationError("matrix dimensions must be nonnegative")
        if indptr.ndim != 1 or indptr.shape[0] != n_rows + 1:
            raise ValidationError("indptr must have length n_rows + 1")
        if indptr[0] != 0 or indptr[-1] != indices.shape[0]:
            raise ValidationError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(indptr) < 0):
            raise ValidationError("indptr must be nondecreasing")
        if data.shape != indices.shape:
            raise ValidationError("data and indices must have equal length")
        if indices.size:
            if indices.min() < 0 or indices.max() >= n_cols:
                raise ValidationError("column index out of range")
            row_of = np.repeat(np.arange(n_rows, dtype=np.int64), np.diff(indptr))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(indices)[same_row] <= 0):
                raise ValidationError("column indices must be strictly ascending per row")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = indptr
        self.indices = indices
        self.data = data
        self._scipy = None
        self._scipy_t = None

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])

    def row_slice(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def row_ids(self) -> np.ndarray:
        """Row index of each stored slot, aligned with indices/data."""
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))

    def scipy(self) -> _sp.csr_matrix:
        if self._scipy is None:
            self._scipy = _sp.csr_matrix(
                (self.data, self.indices, self.indptr), shape=(self.n_rows, self.n_cols)
            )
        return self._scipy

    def scipy_t(self) -> _sp.csr_matrix:
        if self._scipy_t is None:
            self._scipy_t = self.scipy().T.tocsr()
        return self._scipy_t

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.data[lo:hi]
        return out

    def with_data(self, data: np.ndarray) -> "CsrMatrix":
        """Same sparsity pattern, different slot weights."""
        return CsrMatrix(self.n_rows, self.n_cols, self.indptr, self.indices, data)


def from_coo(n_rows: int, n_cols: int, rows, cols, values=None) -> CsrMatrix:
    """Build a CsrMatrix from coordinate lists, deduplicating repeated slots.

    Duplicate (row, col) pairs collapse to a single slot keeping one weight
    (all callers here use unit weights, so this is a plain dedup).
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if values is None:
        values = np.ones(rows.shape[0])
    values = np.asarray(values, dtype=np.float64)
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows:
            raise ValidationError("row index out of range")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise ValidationError("column index out of range")
    order = np.lexsort((cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    if rows.size:
        keep = np.ones(rows.size, dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        rows, cols, values = rows[keep], cols[keep], values[keep]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return CsrMatrix(n_rows, n_cols, indptr, cols, values)
