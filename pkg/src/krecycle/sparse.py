"""Compressed sparse row matrices and the dense-vector kernels used by the solvers.

Vectors are contiguous 1-D numpy arrays, float64 or complex128.  All inner
products in this package follow the convention ``(x, y) = x^H y``: the first
argument is conjugated, which is what :func:`numpy.vdot` computes.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as _sp

REAL_DTYPE = np.dtype(np.float64)
COMPLEX_DTYPE = np.dtype(np.complex128)


def _as_scalar_dtype(dtype) -> np.dtype:
    """Map an arbitrary dtype onto the two supported scalar types."""
    dt = np.dtype(dtype)
    if np.issubdtype(dt, np.complexfloating):
        return COMPLEX_DTYPE
    if np.issubdtype(dt, np.floating) or np.issubdtype(dt, np.integer):
        return REAL_DTYPE
    raise TypeError(f"unsupported scalar dtype {dt}")


class SparseMatrix:
    """Immutable CSR matrix with canonical (sorted, deduplicated) structure.

    Construction validates that the index arrays describe a well-formed CSR
    layout.  The raw arrays are frozen after construction; the conjugate
    transpose needed by ``rmatvec`` is built lazily, once, and cached.
    """

    __slots__ = ("nrows", "ncols", "row_ptr", "col_idx", "values", "_csr", "_csr_h")

    def __init__(self, nrows, ncols, row_ptr, col_idx, values):
        row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=_as_scalar_dtype(np.asarray(values).dtype))
        if nrows < 0 or ncols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if row_ptr.shape != (nrows + 1,):
            raise ValueError(f"row_ptr must have length nrows+1, got {row_ptr.shape}")
        if row_ptr[0] != 0 or row_ptr[-1] != len(col_idx) or np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr is not a valid monotone CSR pointer array")
        if len(col_idx) != len(values):
            raise ValueError("col_idx and values must have equal length")
        if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= ncols):
            raise ValueError("column index out of range")
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.values = values
        csr = _sp.csr_matrix((values, col_idx, row_ptr), shape=(nrows, ncols), copy=False)
        if not csr.has_canonical_format:
            csr.sum_duplicates()
            csr.sort_indices()
            self.row_ptr = np.ascontiguousarray(csr.indptr, dtype=np.int64)
            self.col_idx = np.ascontiguousarray(csr.indices, dtype=np.int64)
            self.values = csr.data
            csr = _sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr), shape=(nrows, ncols), copy=False
            )
        for arr in (self.row_ptr, self.col_idx, self.values):
            arr.flags.writeable = False
        self._csr = csr
        self._csr_h = None

    @classmethod
    def from_triplets(cls, nrows, ncols, rows, cols, vals):
        """Build from COO triplets; duplicate entries are summed.

        Raises ValueError when any index falls outside [0, nrows) x [0, ncols).
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals)
        if not (rows.shape == cols.shape == vals.shape):
            raise ValueError("triplet arrays must have identical shapes")
        if len(rows) and (rows.min() < 0 or rows.max() >= nrows):
            raise ValueError("row index out of range")
        if len(cols) and (cols.min() < 0 or cols.max() >= ncols):
            raise ValueError("column index out of range")
        vals = vals.astype(_as_scalar_dtype(vals.dtype), copy=False)
        coo = _sp.coo_matrix((vals, (rows, cols)), shape=(nrows, ncols))
        csr = coo.tocsr()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(nrows, ncols, csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_scipy(cls, mat):
        csr = _sp.csr_matrix(mat)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def identity(cls, n, dtype=REAL_DTYPE):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n, dtype=dtype))

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.ncols,):
            raise ValueError(f"matvec: expected vector of length {self.ncols}, got {x.shape}")
        return self._csr @ x

    def rmatvec(self, x: np.ndarray) -> np.ndarray:
        """Apply the conjugate transpose A^H."""
        x = np.asarray(x)
        if x.shape != (self.nrows,):
            raise ValueError(f"rmatvec: expected vector of length {self.nrows}, got {x.shape}")
        if self._csr_h is None:
            self._csr_h = self._csr.conj(copy=True).transpose().tocsr()
        return self._csr_h @ x

    def to_scipy(self) -> _sp.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()

    def to_triplets(self):
        """Return (rows, cols, vals) in row-major order."""
        coo = self._csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def conj_transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr.conj(copy=True).transpose())

    def __add__(self, other):
        if isinstance(other, SparseMatrix):
            other = other._csr
        return SparseMatrix.from_scipy(self._csr + other)

    def scale(self, alpha) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self._csr * alpha)

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, dtype={self.dtype})"


def matvec(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return A.matvec(x)


def matvec_conj_transpose(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    return A.rmatvec(x)


def dot(x: np.ndarray, y: np.ndarray):
    """Inner product (x, y) = x^H y with the first argument conjugated."""
    if x.shape != y.shape:
        raise ValueError("dot: shape mismatch")
    return np.vdot(x, y)


def axpy(alpha, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return alpha*x + y without modifying the inputs."""
    if x.shape != y.shape:
        raise ValueError("axpy: shape mismatch")
    return alpha * x + y


def norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))
