"""Full-recurrence two-sided Lanczos harness.

``gen_bilanczos_full`` runs the two-sided process on an arbitrary operator
pair (B, Bt) keeping every recurrence coefficient instead of assuming a
three-term recurrence.  The resulting coefficient matrices make it possible
to check when a pair admits tridiagonal reduction: for a classical pair
``(A, A^H)``, and for the deflated pair built from a recycle space together
with starting vectors orthogonal to the space images, every coefficient above
the first superdiagonal vanishes and the dual coefficients are conjugate
transposes of the primary ones.

Basis normalization: primary vectors have unit norm, and the dual basis is
scaled so that ``Vt^H V = I``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operators import as_operator
from .recycling import RecycleSpace


class AdjointOperator:
    """Expose ``rmatvec`` of a wrapped operator as ``matvec``."""

    def __init__(self, op):
        self._op = as_operator(op)

    @property
    def shape(self):
        return (self._op.shape[1], self._op.shape[0])

    @property
    def dtype(self):
        return self._op.dtype

    def matvec(self, x):
        return self._op.rmatvec(x)

    def rmatvec(self, x):
        return self._op.matvec(x)


class DeflatedOperator:
    """``x -> (I - C Chat^H) A x`` (or the dual analogue)."""

    def __init__(self, op, C, Chat, adjoint=False):
        self._op = as_operator(op)
        self._C = C
        self._Chat = Chat
        self._adjoint = adjoint

    @property
    def shape(self):
        return self._op.shape

    @property
    def dtype(self):
        return np.result_type(self._op.dtype, self._C.dtype)

    def matvec(self, x):
        y = self._op.rmatvec(x) if self._adjoint else self._op.matvec(x)
        return y - self._C @ (self._Chat.conj().T @ y)


def classical_pair(A):
    """The pair ``(A, A^H)``: the textbook two-sided Lanczos setting."""
    op = as_operator(A)
    return op, AdjointOperator(op)


def deflated_pair(A, space: RecycleSpace):
    """Deflated operator pair plus its coupling blocks.

    Returns ``(B, Bt, F, Ft)`` with ``B = (I - C Chat^H) A`` and
    ``Bt = (I - Ct Ccheck^H) A^H``.  The blocks ``F = A^H Chat`` and
    ``Ft = A Ccheck`` satisfy ``B - Bt^H = Ft Ct^H - C F^H``, the algebraic
    identity that makes tridiagonal reduction possible for starting vectors
    orthogonal to Ct (primary) and C (dual).
    """
    op = as_operator(A)
    B = DeflatedOperator(op, space.C, space.Chat, adjoint=False)
    Bt = DeflatedOperator(op, space.Ct, space.Ccheck, adjoint=True)
    F = np.column_stack([op.rmatvec(np.ascontiguousarray(space.Chat[:, j]))
                         for j in range(space.k)]) if space.k else space.Chat
    Ft = np.column_stack([op.matvec(np.ascontiguousarray(space.Ccheck[:, j]))
                          for j in range(space.k)]) if space.k else space.Ccheck
    return B, Bt, F, Ft


def deflate_primary(space: RecycleSpace, x: np.ndarray) -> np.ndarray:
    """Apply ``I - C Chat^H`` (annihilates the primary image block)."""
    if space.k == 0:
        return x.copy()
    return x - space.C @ (space.Chat.conj().T @ x)


def deflate_dual(space: RecycleSpace, x: np.ndarray) -> np.ndarray:
    """Apply ``I - Ct Ccheck^H`` (annihilates the dual image block)."""
    if space.k == 0:
        return x.copy()
    return x - space.Ct @ (space.Ccheck.conj().T @ x)


@dataclass
class BiLanczosResult:
    """Bases and full coefficient matrices from the two-sided process.

    ``H[j, i]`` is the coefficient of basis vector j in the expansion of
    ``B v_i`` (analogously ``Ht`` for the dual side); both are stored with
    the extra trailing row holding the next-vector coupling.  ``terminated``
    is the step at which either sequence hit an invariant subspace, or None.
    """

    V: np.ndarray
    Vt: np.ndarray
    H: np.ndarray
    Ht: np.ndarray
    terminated: int | None = None

    def square(self, i: int | None = None):
        """Leading i-by-i blocks of (H, Ht)."""
        if i is None:
            i = self.H.shape[1]
        return self.H[:i, :i], self.Ht[:i, :i]


def gen_bilanczos_full(B, Bt, v1, vt1, m, breakdown_tol: float = 1e-14,
                       term_tol: float = 1e-14) -> BiLanczosResult:
    """Run m steps of the full-recurrence two-sided process.

    Each step expands ``B v_i`` and ``Bt vt_i`` against all previous basis
    vectors (modified Gram-Schmidt with the biorthonormal duals), recording
    every coefficient.  Raises ValueError when the starting pair is
    degenerate and RuntimeError on serious breakdown (a new primary/dual pair
    with vanishing coupling).
    """
    B = as_operator(B)
    Bt = as_operator(Bt)
    n = B.shape[0]
    v1 = np.asarray(v1)
    vt1 = np.asarray(vt1)
    if v1.shape != (n,) or vt1.shape != (n,):
        raise ValueError("starting vectors must match the operator dimension")
    if m < 1:
        raise ValueError("m must be positive")

    wdt = np.result_type(np.float64, B.dtype, v1.dtype, vt1.dtype)
    nv = np.linalg.norm(v1)
    if nv == 0:
        raise ValueError("primary starting vector is zero")
    v = (v1 / nv).astype(wdt)
    coupling = np.vdot(v, vt1)
    if abs(coupling) <= breakdown_tol * np.linalg.norm(vt1):
        raise ValueError("starting vectors are numerically biorthogonal")
    vt = (vt1 / coupling).astype(wdt)

    V = [v]
    Vt = [vt]
    H = np.zeros((m + 1, m), dtype=wdt)
    Ht = np.zeros((m + 1, m), dtype=wdt)
    terminated = None

    for i in range(m):
        w = B.matvec(V[i])
        wt = Bt.matvec(Vt[i])
        for j in range(i + 1):
            hij = np.vdot(Vt[j], w)
            w = w - hij * V[j]
            H[j, i] = hij
            gij = np.vdot(V[j], wt)
            wt = wt - gij * Vt[j]
            Ht[j, i] = gij
        beta = np.linalg.norm(w)
        H[i + 1, i] = beta
        wt_norm = np.linalg.norm(wt)
        if beta <= term_tol or wt_norm <= term_tol:
            terminated = i + 1
            break
        v_next = w / beta
        c = np.vdot(v_next, wt)
        if abs(c) <= breakdown_tol * wt_norm:
            raise RuntimeError(f"serious breakdown at step {i + 1}: "
                               "new basis pair has vanishing coupling")
        vt_next = wt / c
        Ht[i + 1, i] = c
        V.append(v_next)
        Vt.append(vt_next)

    cols = terminated if terminated is not None else m
    return BiLanczosResult(
        V=np.column_stack(V),
        Vt=np.column_stack(Vt),
        H=H[:cols + 1, :cols],
        Ht=Ht[:cols + 1, :cols],
        terminated=terminated,
    )
