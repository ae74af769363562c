"""Recycle spaces: construction, projection, update, and diagnostics.

A recycle space is a pair of bases (U, Ut) together with their images under
the operator and its conjugate transpose:

    C = A U,    Ct = A^H Ut,    Dc = Ct^H C  (diagonal, real, positive)

normalized so that every column of C has unit 2-norm.  The scaled images

    Chat = Ct Dc^{-1},    Ccheck = C Dc^{-1}

make the oblique projections used by the solvers cheap: ``Chat^H C = I`` and
``Ccheck^H Ct = I``, so ``I - C Chat^H`` annihilates C while leaving vectors
orthogonal to Ct untouched.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as _la

from .operators import as_operator


def _apply_columns(apply, block: np.ndarray) -> np.ndarray:
    cols = [apply(np.ascontiguousarray(block[:, j])) for j in range(block.shape[1])]
    if not cols:
        return np.zeros_like(block)
    return np.column_stack(cols)


@dataclass
class RecycleSpace:
    """Biorthonormalized recycle space and cached operator images."""

    U: np.ndarray
    Ut: np.ndarray
    C: np.ndarray
    Ct: np.ndarray
    Dc: np.ndarray
    Chat: np.ndarray
    Ccheck: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @classmethod
    def empty(cls, n: int, dtype=np.float64) -> "RecycleSpace":
        z = np.zeros((n, 0), dtype=dtype)
        return cls(U=z, Ut=z.copy(), C=z.copy(), Ct=z.copy(),
                   Dc=np.zeros(0), Chat=z.copy(), Ccheck=z.copy())

    def diagnostics(self, A) -> dict:
        """Residual norms of the defining identities, for testing."""
        op = as_operator(A)
        if self.k == 0:
            return {"image": 0.0, "image_dual": 0.0, "diag": 0.0,
                    "colnorm": 0.0, "proj": 0.0}
        AU = _apply_columns(op.matvec, self.U)
        AhUt = _apply_columns(op.rmatvec, self.Ut)
        G = self.Ct.conj().T @ self.C
        return {
            "image": float(np.linalg.norm(AU - self.C) / max(np.linalg.norm(self.C), 1e-300)),
            "image_dual": float(np.linalg.norm(AhUt - self.Ct)
                                / max(np.linalg.norm(self.Ct), 1e-300)),
            "diag": float(np.linalg.norm(G - np.diag(self.Dc)) / np.linalg.norm(G)),
            "colnorm": float(np.max(np.abs(np.linalg.norm(self.C, axis=0) - 1.0))),
            "proj": float(np.linalg.norm(self.Chat.conj().T @ self.C - np.eye(self.k))),
        }


@dataclass
class CapturedCycle:
    """Lanczos-direction block harvested from a window of solver iterations.

    ``V[:, j]`` is the normalized residual direction with global column index
    ``first_index + j`` (1-based across the whole solve); ``Vt`` holds the
    dual directions.  ``tri[:, j]`` stores the (sub, diag, super) recurrence
    coefficients of that column with respect to the deflated operator, NaN
    where the neighbouring data fell outside the window.
    """

    V: np.ndarray
    Vt: np.ndarray
    tri: np.ndarray
    first_index: int

    @property
    def ncols(self) -> int:
        return self.V.shape[1]

    @property
    def last_index(self) -> int:
        return self.first_index + self.ncols - 1


def biorthonormalize(U_raw, Ut_raw, A, C_raw=None, Ct_raw=None,
                     rank_tol: float = 1e-12, cond_tol: float = 0.0,
                     amp_tol: float = 1e6) -> RecycleSpace:
    """Rescale a basis pair into the canonical recycle-space form.

    Images are computed with one operator (and one transpose) application per
    column unless supplied.  Directions whose coupling ``Ct^H C`` is rank
    deficient are discarded; if everything is discarded an empty space is
    returned with a warning.

    ``cond_tol`` additionally discards directions whose coupling singular
    value falls below ``cond_tol`` times the largest.  The deflation
    projector amplifies rounding noise by roughly the coupling condition
    number, so a basis pair carried onto a different operator must be
    truncated much more aggressively than freshly harvested directions.

    ``amp_tol`` bounds the per-column amplification ``||Ct_j|| / Dc_j`` of
    the oblique projectors.  A direction whose operator image nearly
    vanishes — an almost exactly singular mode — would otherwise inject
    ``eps * amplification`` of noise at every deflation and stall the
    solver below the very tolerance the space is meant to reach faster.
    """
    op = as_operator(A)
    U_raw = np.atleast_2d(np.asarray(U_raw))
    Ut_raw = np.atleast_2d(np.asarray(Ut_raw))
    if U_raw.shape != Ut_raw.shape or U_raw.shape[0] != op.shape[0]:
        raise ValueError("primary and dual bases must share shape (n, k)")
    n, k = U_raw.shape
    if k == 0:
        return RecycleSpace.empty(n, U_raw.dtype)
    if C_raw is None:
        C_raw = _apply_columns(op.matvec, U_raw)
    if Ct_raw is None:
        Ct_raw = _apply_columns(op.rmatvec, Ut_raw)

    M = Ct_raw.conj().T @ C_raw
    X, sig, Yh = _la.svd(M)
    cut = max(rank_tol, cond_tol) * (sig[0] if sig.size else 0.0)
    r = int(np.sum(sig > cut))
    if r == 0:
        warnings.warn("recycle basis pair is numerically rank deficient; "
                      "returning an empty space", stacklevel=2)
        return RecycleSpace.empty(n, U_raw.dtype)
    Y = Yh.conj().T[:, :r]
    X = X[:, :r]

    U = U_raw @ Y
    C = C_raw @ Y
    Ut = Ut_raw @ X
    Ct = Ct_raw @ X
    nu = np.linalg.norm(C, axis=0)
    U = U / nu
    C = C / nu
    Dc = sig[:r] / nu
    amp = np.linalg.norm(Ct, axis=0) / Dc
    keep = amp <= amp_tol
    if not np.all(keep):
        if not np.any(keep):
            warnings.warn("all recycle directions are nearly singular under "
                          "the operator; returning an empty space",
                          stacklevel=2)
            return RecycleSpace.empty(n, U_raw.dtype)
        U, C, Ut, Ct = U[:, keep], C[:, keep], Ut[:, keep], Ct[:, keep]
        Dc = Dc[keep]
    Chat = Ct / Dc
    Ccheck = C / Dc
    return RecycleSpace(U=U, Ut=Ut, C=C, Ct=Ct, Dc=Dc, Chat=Chat, Ccheck=Ccheck)


def refresh_images(space: RecycleSpace, A, cond_tol: float = 1e-3) -> RecycleSpace:
    """Rebuild images of an existing basis pair under a new operator.

    Costs k applications of the operator plus k of its transpose.  Used when
    carrying a recycle space across a change of matrix.  Directions whose
    coupling under the new operator drops below ``cond_tol`` (relative) are
    discarded: they no longer represent anything the new operator agrees
    with, and keeping them makes the deflation projector ill-conditioned
    enough to stall the two-sided solver entirely.
    """
    if space.k == 0:
        return space
    return biorthonormalize(space.U, space.Ut, A, cond_tol=cond_tol)


def project_initial(A, b, x_minus1, recycle: RecycleSpace | None):
    """Improve an initial guess over the recycle space.

    Returns ``(x0, r0)`` with ``r0 = b - A x0`` orthogonal to Ct.  When the
    space is empty this reduces to the plain initial residual.
    """
    op = as_operator(A)
    if x_minus1 is None:
        x_minus1 = np.zeros(op.shape[0], dtype=np.result_type(op.dtype, b.dtype))
        r = b.astype(x_minus1.dtype, copy=True)
    else:
        r = b - op.matvec(x_minus1)
    if recycle is None or recycle.k == 0:
        return x_minus1.copy(), r
    y = recycle.Chat.conj().T @ r
    x0 = x_minus1 + recycle.U @ y
    r0 = r - recycle.C @ y
    return x0, r0


def project_initial_dual(A, b_dual, xt_minus1, recycle: RecycleSpace | None):
    """Dual-side analogue of :func:`project_initial` for ``A^H xt = b_dual``."""
    op = as_operator(A)
    if xt_minus1 is None:
        xt_minus1 = np.zeros(op.shape[0], dtype=np.result_type(op.dtype, b_dual.dtype))
        rt = b_dual.astype(xt_minus1.dtype, copy=True)
    else:
        rt = b_dual - op.rmatvec(xt_minus1)
    if recycle is None or recycle.k == 0:
        return xt_minus1.copy(), rt
    y = recycle.Ccheck.conj().T @ rt
    xt0 = xt_minus1 + recycle.Ut @ y
    rt0 = rt - recycle.Ct @ y
    return xt0, rt0


# A Ritz candidate counts as near-null (and must justify itself with a small
# eigenresidual, see update_recycle_space) when its magnitude falls this far
# below the dominant candidate.
_NEAR_NULL_FRAC = 1e-3


def _select_pencil_columns(theta, VR, VL, k, real_pencil, eligible=None):
    """Pick k columns for the smallest-|theta| eigenvalues.

    For a real pencil, complex conjugate pairs are replaced by the real and
    imaginary parts of one member so the returned blocks stay real.  When an
    ``eligible`` mask is given, ineligible eigenpairs are skipped entirely.
    """
    finite = np.isfinite(theta)
    if eligible is not None:
        finite = finite & eligible
    order = [i for i in np.argsort(np.abs(np.where(finite, theta, np.inf)))
             if finite[i]]
    used = set()
    cols_r, cols_l = [], []
    for idx in order:
        if idx in used:
            continue
        used.add(idx)
        th = theta[idx]
        zr = VR[:, idx]
        zl = VL[:, idx]
        if real_pencil and abs(th.imag) > 1e-12 * (1.0 + abs(th)):
            partner, best = None, np.inf
            for j in order:
                if j in used:
                    continue
                d = abs(theta[j] - np.conj(th))
                if d < best:
                    partner, best = j, d
            if partner is not None:
                used.add(partner)
            cols_r.extend([zr.real, zr.imag])
            cols_l.extend([zl.real, zl.imag])
        else:
            cols_r.append(zr.real if real_pencil else zr)
            cols_l.append(zl.real if real_pencil else zl)
        if len(cols_r) >= k:
            break
    if not cols_r:
        return None, None
    Zr = np.column_stack(cols_r[:k])
    Zl = np.column_stack(cols_l[:k])
    return Zr, Zl


def update_recycle_space(A, cycles, previous: RecycleSpace | None, k: int,
                         rank_tol: float = 1e-12,
                         res_tol: float = 0.0) -> RecycleSpace:
    """Build the next recycle space from harvested cycles and the prior space.

    The candidate block ``W = [U_prev, V_cycles]`` (and its dual counterpart)
    is compressed to the k approximate eigendirections of smallest magnitude
    via the projected pencil ``(Wt^H A W) z = theta (Wt^H W) z``, solved with
    its left eigenvectors for the dual basis.  Operator images cached on the
    previous space are reused, so the cost is one operator (and one transpose)
    application per new cycle column.

    A positive ``res_tol`` discards near-null Ritz pairs whose eigenresidual
    exceeds ``res_tol * |theta|``.  An unresolved direction with a tiny Ritz
    value is actively dangerous: deflating it leaves the operator with a
    spurious eigenvalue far smaller than ``theta`` itself, and later solves
    stall at exactly the tolerance the space was built to accelerate.
    Dropping such a direction merely postpones capturing it until a solve
    has resolved it.  The test only applies to candidates at least three
    orders of magnitude below the dominant candidate: an imperfectly
    resolved direction in the bulk of the spectrum cannot produce a
    near-singular leftover, and deflating it approximately is still
    profitable.  The filter is off by default — on operators without a
    near-null cluster it only second-guesses the smallest-magnitude
    selection rule — and is switched on by the sequence driver, whose
    matrices are built around exactly such clusters.
    """
    op = as_operator(A)
    n = op.shape[0]
    blocks_u, blocks_ut, blocks_c, blocks_ct = [], [], [], []
    if previous is not None and previous.k > 0:
        blocks_u.append(previous.U)
        blocks_ut.append(previous.Ut)
        blocks_c.append(previous.C)
        blocks_ct.append(previous.Ct)
    seen_through = 0
    for cyc in cycles:
        start = max(0, seen_through - cyc.first_index + 1)
        if start >= cyc.ncols:
            continue
        V = cyc.V[:, start:]
        Vt = cyc.Vt[:, start:]
        seen_through = cyc.last_index
        blocks_u.append(V)
        blocks_ut.append(Vt)
        blocks_c.append(_apply_columns(op.matvec, V))
        blocks_ct.append(_apply_columns(op.rmatvec, Vt))
    if not blocks_u:
        return previous if previous is not None else RecycleSpace.empty(n)

    W = np.hstack(blocks_u)
    Wt = np.hstack(blocks_ut)
    AW = np.hstack(blocks_c)
    AhWt = np.hstack(blocks_ct)

    # Column scaling for conditioning; eigenvalues of the pencil are invariant
    # under diagonal scaling from either side.
    sw = np.linalg.norm(W, axis=0)
    sw[sw == 0] = 1.0
    st = np.linalg.norm(Wt, axis=0)
    st[st == 0] = 1.0
    W = W / sw
    AW = AW / sw
    Wt = Wt / st
    AhWt = AhWt / st

    G_A = Wt.conj().T @ AW
    G_I = Wt.conj().T @ W
    theta, VL, VR = _la.eig(G_A, G_I, left=True, right=True)
    real_pencil = not np.iscomplexobj(W) and not np.iscomplexobj(AW) \
        and not np.iscomplexobj(Wt)
    eligible = None
    if res_tol > 0.0:
        finite = np.isfinite(theta)
        th_safe = np.where(finite, theta, 0.0)
        Yr = W @ VR
        Rr = AW @ VR - Yr * th_safe
        res = np.linalg.norm(Rr, axis=0) \
            / np.maximum(np.linalg.norm(Yr, axis=0), 1e-300)
        th_abs = np.abs(th_safe)
        th_top = th_abs.max() if th_abs.size else 0.0
        near_null = th_abs < _NEAR_NULL_FRAC * th_top
        eligible = finite & (~near_null | (res <= res_tol * th_abs))
    Zr, Zl = _select_pencil_columns(theta, VR, VL, k, real_pencil, eligible)
    if Zr is None:
        warnings.warn("recycle-space pencil produced no finite eigenvalues; "
                      "keeping previous space", stacklevel=2)
        return previous if previous is not None else RecycleSpace.empty(n)

    U_raw = W @ Zr
    C_raw = AW @ Zr
    Ut_raw = Wt @ Zl
    Ct_raw = AhWt @ Zl
    return biorthonormalize(U_raw, Ut_raw, op, C_raw=C_raw, Ct_raw=Ct_raw,
                            rank_tol=rank_tol)


def principal_angle_cosines(S1: np.ndarray, S2: np.ndarray) -> np.ndarray:
    """Cosines of the principal angles between two subspaces, descending.

    Inputs are basis matrices (columns span the subspaces); each must have
    full column rank.
    """
    S1 = np.atleast_2d(np.asarray(S1, dtype=np.result_type(S1, np.float64)))
    S2 = np.atleast_2d(np.asarray(S2, dtype=np.result_type(S2, np.float64)))
    if S1.shape[0] != S2.shape[0]:
        raise ValueError("subspace bases must live in the same ambient space")
    n1 = np.linalg.norm(S1, axis=0)
    n2 = np.linalg.norm(S2, axis=0)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise ValueError("rank-deficient basis passed to principal_angle_cosines")
    Q1 = _la.orth(S1 / n1)
    Q2 = _la.orth(S2 / n2)
    if Q1.shape[1] < S1.shape[1] or Q2.shape[1] < S2.shape[1]:
        raise ValueError("rank-deficient basis passed to principal_angle_cosines")
    sv = _la.svd(Q1.conj().T @ Q2, compute_uv=False)
    return np.clip(sv, 0.0, 1.0)
