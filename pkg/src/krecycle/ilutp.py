"""Incomplete LU factorization with threshold dropping and column pivoting.

Produces ``L * U ~= A * P`` where L is unit lower triangular, U is upper
triangular and P is a column permutation chosen during elimination.  Entries
are dropped when their magnitude falls below ``drop_tol`` times the 2-norm of
the original row (the usual dual-threshold rule); a column swap is performed
whenever the magnitude of the natural diagonal candidate falls below
``pivot_tol`` times the largest candidate in the working row.

The factors are applied through cached sparse triangular solves.  Split
preconditioning of a system ``A x = b`` works on the operator

    M = L^{-1} A P U^{-1}

so that ``M y = L^{-1} b`` and ``x = P U^{-1} y``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as _sp
import scipy.sparse.linalg as _spla

from .sparse import SparseMatrix, _as_scalar_dtype


class FactorizationError(RuntimeError):
    """Raised when elimination encounters a structurally zero pivot."""


def _triangular_solver(mat: SparseMatrix):
    # SuperLU with natural ordering and no pivoting keeps a triangular input
    # intact, so this is a zero-fill factorization reused for every solve.
    csc = mat.to_scipy().tocsc()
    return _spla.splu(csc, permc_spec="NATURAL", diag_pivot_thresh=0.0)


@dataclass
class IlutpFactors:
    """Factors of ``A*P ~= L*U`` plus the column permutation.

    ``perm[j]`` is the original column stored at permuted position j, i.e.
    ``P[perm[j], j] = 1``.
    """

    L: SparseMatrix
    U: SparseMatrix
    perm: np.ndarray
    _lu_L: object = field(default=None, repr=False, compare=False)
    _lu_U: object = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.L.nrows

    def _lower(self):
        if self._lu_L is None:
            self._lu_L = _triangular_solver(self.L)
        return self._lu_L

    def _upper(self):
        if self._lu_U is None:
            self._lu_U = _triangular_solver(self.U)
        return self._lu_U

    def solve_lower(self, b, adjoint=False):
        return self._lower().solve(b, trans="H" if adjoint else "N")

    def solve_upper(self, b, adjoint=False):
        return self._upper().solve(b, trans="H" if adjoint else "N")


def apply_left(factors: IlutpFactors, x: np.ndarray) -> np.ndarray:
    """Compute ``L^{-1} x``."""
    return factors.solve_lower(np.asarray(x))


def apply_left_h(factors: IlutpFactors, x: np.ndarray) -> np.ndarray:
    """Compute ``L^{-H} x``."""
    return factors.solve_lower(np.asarray(x), adjoint=True)


def apply_right(factors: IlutpFactors, y: np.ndarray) -> np.ndarray:
    """Compute ``P U^{-1} y``: map operator coordinates back to unknowns."""
    t = factors.solve_upper(np.asarray(y))
    x = np.empty_like(t)
    x[factors.perm] = t
    return x


def apply_right_h(factors: IlutpFactors, x: np.ndarray) -> np.ndarray:
    """Compute ``U^{-H} P^T x``, the adjoint of :func:`apply_right`."""
    z = np.asarray(x)[factors.perm]
    return factors.solve_upper(z, adjoint=True)


def to_operator_coords(factors: IlutpFactors, x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`apply_right`: ``y = U (P^T x)``."""
    z = np.asarray(x)[factors.perm]
    return factors.U.matvec(z)


class SplitPreconditionedOperator:
    """Operator ``L^{-1} A P U^{-1}`` with its conjugate-transpose apply."""

    def __init__(self, A, factors: IlutpFactors):
        if A.shape[0] != A.shape[1] or A.shape[0] != factors.n:
            raise ValueError("operator and factor dimensions disagree")
        self._A = A
        self.factors = factors
        self._dtype = np.result_type(A.dtype, factors.U.dtype)

    @property
    def shape(self):
        return self._A.shape

    @property
    def dtype(self):
        return self._dtype

    def matvec(self, x):
        return apply_left(self.factors, self._A.matvec(apply_right(self.factors, x)))

    def rmatvec(self, x):
        return apply_right_h(self.factors, self._A.rmatvec(apply_left_h(self.factors, x)))


def ilutp_factor(A: SparseMatrix, drop_tol: float = 1e-4, pivot_tol: float = 0.1,
                 fill_limit: int | None = None) -> IlutpFactors:
    """Row-wise ILUTP factorization of a square sparse matrix.

    Parameters
    ----------
    A : SparseMatrix
        Square matrix to factor.
    drop_tol : float
        Entries (and elimination multipliers) with magnitude at most
        ``drop_tol`` times the 2-norm of the corresponding original row are
        discarded.  Zero keeps everything, giving an exact factorization.
    pivot_tol : float
        Columns are swapped when ``|diag| < pivot_tol * |largest candidate|``.
        1.0 gives partial column pivoting, 0.0 disables pivoting; the
        default 0.1 pivots only when the diagonal is badly dominated.
    fill_limit : int, optional
        Cap on the number of off-diagonal entries kept per row in each of L
        and U after threshold dropping.

    Raises
    ------
    FactorizationError
        If a row has no usable pivot after dropping.
    """
    n = A.nrows
    if A.ncols != n:
        raise ValueError("ilutp_factor requires a square matrix")
    dtype = _as_scalar_dtype(A.dtype)

    perm = np.arange(n, dtype=np.int64)   # perm[pos] = original column
    ipos = np.arange(n, dtype=np.int64)   # ipos[col] = current position

    row_ptr = A.row_ptr
    col_idx = A.col_idx
    vals = A.values

    diag = np.zeros(n, dtype=dtype)               # pivot value at position p
    u_cols: list[list[int]] = [None] * n          # U row p: original columns (pivot excluded)
    u_vals: list[list] = [None] * n
    l_rows_pos: list[list[int]] = [None] * n      # L row i: frozen positions < i
    l_rows_val: list[list] = [None] * n

    for i in range(n):
        lo, hi = row_ptr[i], row_ptr[i + 1]
        cols_i = col_idx[lo:hi]
        vals_i = vals[lo:hi]
        row_norm = float(np.linalg.norm(vals_i))
        if row_norm == 0.0:
            raise FactorizationError(f"zero pivot: row {i} is empty")
        tau = drop_tol * row_norm

        w = {}
        heap = []
        for c, v in zip(cols_i, vals_i):
            c = int(c)
            w[c] = v
            p = ipos[c]
            if p < i:
                heapq.heappush(heap, int(p))

        l_pos: list[int] = []
        l_val: list = []
        done = set()
        while heap:
            p = heapq.heappop(heap)
            if p in done:
                continue
            done.add(p)
            c = int(perm[p])
            v = w.pop(c, None)
            if v is None:
                continue
            # Drop rule uses the pre-division magnitude: multipliers are
            # dimensionless, so comparing them against the row-scaled
            # threshold would wipe out L on strongly scaled rows.
            if abs(v) <= tau:
                continue
            factor = v / diag[p]
            l_pos.append(p)
            l_val.append(factor)
            for c2, uv in zip(u_cols[p], u_vals[p]):
                upd = factor * uv
                if c2 in w:
                    w[c2] -= upd
                else:
                    w[c2] = -upd
                    p2 = ipos[c2]
                    if p2 < i:
                        heapq.heappush(heap, int(p2))

        # Threshold drop on the remaining (upper) part; keep the natural
        # diagonal candidate regardless so pivoting can consider it.
        cand_cols = []
        cand_vals = []
        for c, v in w.items():
            if abs(v) > tau or ipos[c] == i:
                cand_cols.append(c)
                cand_vals.append(v)
        if not cand_cols:
            raise FactorizationError(f"zero pivot: row {i} lost all entries")

        cand_abs = np.abs(np.array(cand_vals))
        m = int(np.argmax(cand_abs))
        diag_val = w.get(int(perm[i]), 0.0)
        if abs(diag_val) < pivot_tol * cand_abs[m]:
            c_new = cand_cols[m]
            p_new = int(ipos[c_new])
            if p_new != i:
                c_old = int(perm[i])
                perm[i], perm[p_new] = perm[p_new], perm[i]
                ipos[c_old], ipos[c_new] = p_new, i
            diag_val = cand_vals[m]
        if diag_val == 0.0:
            raise FactorizationError(f"zero pivot in row {i}")

        if fill_limit is not None and len(l_pos) > fill_limit:
            keep = np.argsort([-abs(v) for v in l_val])[:fill_limit]
            keep = sorted(keep)
            l_pos = [l_pos[j] for j in keep]
            l_val = [l_val[j] for j in keep]

        pivot_col = int(perm[i])
        up_cols = [c for c in cand_cols if c != pivot_col]
        up_vals = [v for c, v in zip(cand_cols, cand_vals) if c != pivot_col]
        if fill_limit is not None and len(up_cols) > fill_limit:
            keep = sorted(np.argsort([-abs(v) for v in up_vals])[:fill_limit])
            up_cols = [up_cols[j] for j in keep]
            up_vals = [up_vals[j] for j in keep]

        diag[i] = diag_val
        u_cols[i] = up_cols
        u_vals[i] = up_vals
        l_rows_pos[i] = l_pos
        l_rows_val[i] = l_val

    # Assemble CSR factors.  L columns are frozen positions; U columns are
    # original columns mapped through the final permutation.
    lr, lc, lv = [], [], []
    ur, uc, uv = [], [], []
    for i in range(n):
        for p, v in zip(l_rows_pos[i], l_rows_val[i]):
            lr.append(i); lc.append(p); lv.append(v)
        lr.append(i); lc.append(i); lv.append(1.0)
        ur.append(i); uc.append(i); uv.append(diag[i])
        for c, v in zip(u_cols[i], u_vals[i]):
            ur.append(i); uc.append(int(ipos[c])); uv.append(v)

    L = SparseMatrix.from_triplets(n, n, lr, lc, np.array(lv, dtype=dtype))
    U = SparseMatrix.from_triplets(n, n, ur, uc, np.array(uv, dtype=dtype))
    return IlutpFactors(L=L, U=U, perm=perm)


def permutation_matrix(factors: IlutpFactors) -> _sp.csr_matrix:
    """The column permutation P as a sparse matrix (``P[perm[j], j] = 1``)."""
    n = factors.n
    return _sp.csr_matrix(
        (np.ones(n), (factors.perm, np.arange(n))), shape=(n, n)
    )
