"""Linear-operator adapters shared by the solvers.

A linear operator is anything exposing ``shape``, ``dtype``, ``matvec`` and,
when a transpose product is required, ``rmatvec`` (the conjugate transpose
apply).  :class:`~krecycle.sparse.SparseMatrix` satisfies the protocol
directly; dense arrays are adapted by :func:`as_operator`.
"""

from __future__ import annotations

import numpy as np


class DenseOperator:
    """Operator view of a dense square matrix."""

    def __init__(self, mat: np.ndarray):
        mat = np.asarray(mat)
        if mat.ndim != 2:
            raise ValueError("DenseOperator expects a 2-D array")
        self._mat = mat
        self._mat_h = None

    @property
    def shape(self):
        return self._mat.shape

    @property
    def dtype(self):
        return self._mat.dtype

    def matvec(self, x):
        return self._mat @ x

    def rmatvec(self, x):
        if self._mat_h is None:
            self._mat_h = self._mat.conj().T.copy()
        return self._mat_h @ x


def as_operator(A):
    """Return ``A`` itself when it already implements the operator protocol."""
    if hasattr(A, "matvec") and hasattr(A, "shape"):
        return A
    if isinstance(A, np.ndarray):
        return DenseOperator(A)
    raise TypeError(f"cannot interpret {type(A).__name__} as a linear operator")


class CountingOperator:
    """Wrapper that counts matvec and rmatvec applications.

    Used to meter the true matrix-vector product cost of a solver run,
    including recycle-space maintenance performed outside the solvers.
    """

    def __init__(self, op):
        self._op = as_operator(op)
        self.n_matvec = 0
        self.n_rmatvec = 0

    @property
    def inner(self):
        return self._op

    @property
    def shape(self):
        return self._op.shape

    @property
    def dtype(self):
        return self._op.dtype

    @property
    def total(self) -> int:
        return self.n_matvec + self.n_rmatvec

    def reset(self):
        self.n_matvec = 0
        self.n_rmatvec = 0

    def matvec(self, x):
        self.n_matvec += 1
        return self._op.matvec(x)

    def rmatvec(self, x):
        self.n_rmatvec += 1
        return self._op.rmatvec(x)
