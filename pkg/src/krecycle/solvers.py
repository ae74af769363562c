"""Iterative solvers for sequences of non-symmetric linear systems.

Four methods share one set of conventions:

- ``bicg_solve`` / ``bicgstab_solve``: the classical two-sided and
  transpose-free baselines.
- ``rbicg_solve``: two-sided iteration with recycle-space deflation that also
  harvests Lanczos-direction blocks (cycles) for building the next space.
- ``rbicgstab_solve``: transpose-free iteration deflated by an existing
  recycle space.  With an empty space both recycling methods reproduce their
  baselines exactly, floating-point operation for operation.

Residual tests are relative to the right-hand side norm in the coordinates
the iteration runs in (preconditioned coordinates under split
preconditioning).  Breakdown is reported through ``history.status`` rather
than an exception; setup-time degeneracies raise ValueError.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ilutp import (IlutpFactors, SplitPreconditionedOperator, apply_left,
                    apply_left_h, apply_right, apply_right_h,
                    to_operator_coords)
from .operators import CountingOperator, as_operator
from .recycling import (CapturedCycle, RecycleSpace, project_initial,
                        project_initial_dual)

CONVERGED = "converged"
MAX_ITN = "max_itn"
BREAKDOWN_SERIOUS = "breakdown:serious"
BREAKDOWN_SECOND_KIND = "breakdown:second_kind"
BREAKDOWN_OMEGA = "breakdown:omega"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all solvers.

    ``s`` is the cycle length used when harvesting recycle candidates and
    ``k`` the target recycle-space dimension (consumed by the sequence
    driver).  ``seed`` controls every auxiliary random vector a solver draws,
    so runs are reproducible.
    """

    tol: float = 1e-8
    max_itn: int = 1000
    k: int = 0
    s: int = 25
    seed: int = 0
    breakdown_tol: float = 1e-14
    record_iterates: bool = False


@dataclass
class ConvergenceHistory:
    """Per-iteration residual, cost, and timing trace of one solve.

    Entry 0 describes the initial residual; entry i the state after
    iteration i.  ``matvecs`` counts operator applications (transpose
    included) cumulatively.

    With ``record_iterates`` enabled in the configuration, solvers also
    keep the per-iteration solution iterates and residual vectors; the
    two-sided solvers additionally keep dual residual vectors, and the
    stabilized solvers their ``(s, t, omega)`` minimization triples.
    """

    solver: str
    rhs_norm: float = 1.0
    rhs_norm_dual: float = 0.0
    resid: list = field(default_factory=list)
    resid_dual: list = field(default_factory=list)
    matvecs: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    status: str = ""
    final_true_resid: float = float("nan")
    iterates: list | None = None
    residual_vectors: list | None = None
    residual_vectors_dual: list | None = None
    omega_steps: list | None = None

    @property
    def iterations(self) -> int:
        return max(len(self.resid) - 1, 0)

    @property
    def total_matvecs(self) -> int:
        return self.matvecs[-1] if self.matvecs else 0

    @property
    def total_seconds(self) -> float:
        return self.seconds[-1] if self.seconds else 0.0

    def _record(self, rnorm, mv, t, rtnorm=None):
        self.resid.append(float(rnorm))
        self.matvecs.append(int(mv))
        self.seconds.append(float(t))
        if rtnorm is not None:
            self.resid_dual.append(float(rtnorm))


def _work_dtype(op, *vecs):
    return np.result_type(np.float64, op.dtype, *[v.dtype for v in vecs if v is not None])


def _draw(rng, n, dtype):
    v = rng.uniform(-1.0, 1.0, size=n)
    return v.astype(dtype)


def _setup_primary(A, b, x_init, precond):
    """Wrap the system for split preconditioning.

    Returns the iteration operator, transformed right-hand side and guess,
    and the map from iteration coordinates back to the unknowns.
    """
    op = as_operator(A)
    if op.shape[0] != op.shape[1]:
        raise ValueError("solver requires a square operator")
    b = np.asarray(b)
    if b.shape != (op.shape[0],):
        raise ValueError("right-hand side length does not match the operator")
    if precond is None:
        unwind = lambda y: y
        return op, b, x_init, unwind
    it_op = SplitPreconditionedOperator(op, precond)
    bh = apply_left(precond, b)
    xh = None if x_init is None else to_operator_coords(precond, np.asarray(x_init))
    unwind = lambda y: apply_right(precond, y)
    return it_op, bh, xh, unwind


def _setup_dual(precond, b_dual, x_init_dual):
    if precond is None:
        return b_dual, x_init_dual, (lambda y: y)
    bth = apply_right_h(precond, b_dual)
    xth = None if x_init_dual is None else precond.L.rmatvec(np.asarray(x_init_dual))
    unwind = lambda y: apply_left_h(precond, y)
    return bth, xth, unwind


def _true_residual(A, b, x):
    op = as_operator(A)
    if isinstance(op, CountingOperator):
        op = op.inner
    r = b - op.matvec(x)
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r) / (bn if bn > 0 else 1.0))


def bicgstab_solve(A, b, x_init=None, precond=None, config=None):
    """Stabilized bi-conjugate gradient iteration (no transpose products).

    Returns ``(x, history)``.  The shadow residual is drawn from a seeded
    uniform(-1, 1) generator so reruns are identical.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    op, bh, xh, unwind = _setup_primary(A, b, x_init, precond)
    mop = CountingOperator(op)
    n = op.shape[0]
    wdt = _work_dtype(op, bh)
    bh = bh.astype(wdt, copy=False)
    bnorm = float(np.linalg.norm(bh))
    rng = np.random.default_rng(cfg.seed)
    rt0 = _draw(rng, n, wdt)

    x, r = project_initial(mop, bh, None if xh is None else xh.astype(wdt), None)
    hist = ConvergenceHistory(solver="bicgstab", rhs_norm=bnorm)
    if cfg.record_iterates:
        hist.iterates = [unwind(x.copy())]
        hist.residual_vectors = [r.copy()]
        hist.omega_steps = []
    rnorm = np.linalg.norm(r)
    hist._record(rnorm, mop.total, time.perf_counter() - t0)

    status = CONVERGED if rnorm <= cfg.tol * bnorm else ""
    rho = np.vdot(rt0, r)
    p = np.zeros_like(r)
    q = np.zeros_like(r)
    beta = 0.0
    omega = 0.0
    itn = 0
    while not status:
        if itn >= cfg.max_itn:
            status = MAX_ITN
            break
        itn += 1
        p = r + beta * (p - omega * q)
        q = mop.matvec(p)
        den = np.vdot(rt0, q)
        if abs(den) <= cfg.breakdown_tol * np.linalg.norm(rt0) * np.linalg.norm(q):
            status = BREAKDOWN_SERIOUS
            break
        alpha = rho / den
        s = r - alpha * q
        snorm = np.linalg.norm(s)
        if snorm <= cfg.tol * bnorm:
            x = x + alpha * p
            r = s
            hist._record(snorm, mop.total, time.perf_counter() - t0)
            if cfg.record_iterates:
                hist.iterates.append(unwind(x.copy()))
                hist.residual_vectors.append(r.copy())
            status = CONVERGED
            break
        t = mop.matvec(s)
        tt = np.vdot(t, t)
        if tt == 0.0:
            status = BREAKDOWN_OMEGA
            break
        omega = np.vdot(t, s) / tt
        if omega == 0.0:
            status = BREAKDOWN_OMEGA
            break
        x = x + alpha * p + omega * s
        r = s - omega * t
        rnorm = np.linalg.norm(r)
        hist._record(rnorm, mop.total, time.perf_counter() - t0)
        if cfg.record_iterates:
            hist.iterates.append(unwind(x.copy()))
            hist.residual_vectors.append(r.copy())
            hist.omega_steps.append((s.copy(), t.copy(), complex(omega)))
        if rnorm <= cfg.tol * bnorm:
            status = CONVERGED
            break
        rho_new = np.vdot(rt0, r)
        if abs(rho_new) <= cfg.breakdown_tol * np.linalg.norm(rt0) * rnorm:
            status = BREAKDOWN_SERIOUS
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new

    hist.status = status
    x_out = unwind(x)
    hist.final_true_resid = _true_residual(A, b, x_out)
    return x_out, hist


def rbicgstab_solve(A, b, x_init=None, recycle=None, precond=None, config=None):
    """BiCGSTAB deflated by a recycle space.

    The initial residual (primary and shadow) is projected against the space
    and every operator product inside the loop is followed by the oblique
    projection ``I - C Chat^H``, so residuals stay orthogonal to Ct while the
    deflected solution components accumulate in recycle coordinates.  With an
    empty space the arithmetic is identical to :func:`bicgstab_solve`.

    Returns ``(x, history)``.  When preconditioned, ``recycle`` must live in
    the preconditioned coordinates.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    op, bh, xh, unwind = _setup_primary(A, b, x_init, precond)
    mop = CountingOperator(op)
    n = op.shape[0]
    R = recycle if (recycle is not None and recycle.k > 0) else None
    if R is not None and R.n != n:
        raise ValueError("recycle space dimension does not match the operator")
    wdt = _work_dtype(op, bh, R.U if R is not None else None)
    bh = bh.astype(wdt, copy=False)
    bnorm = float(np.linalg.norm(bh))
    rng = np.random.default_rng(cfg.seed)
    rt_m1 = _draw(rng, n, wdt)

    x, r = project_initial(mop, bh, None if xh is None else xh.astype(wdt), R)
    if R is not None:
        rt0 = rt_m1 - R.Ct @ (R.Ccheck.conj().T @ rt_m1)
        xc = np.zeros(R.k, dtype=wdt)
        zeta = np.zeros(R.k, dtype=wdt)
        gamma = np.zeros(R.k, dtype=wdt)
    else:
        rt0 = rt_m1
    hist = ConvergenceHistory(solver="rbicgstab", rhs_norm=bnorm)

    def _iterate():
        return unwind((x - R.U @ xc) if R is not None else x.copy())

    if cfg.record_iterates:
        hist.iterates = [_iterate()]
        hist.residual_vectors = [r.copy()]
        hist.omega_steps = []
    rnorm = np.linalg.norm(r)
    hist._record(rnorm, mop.total, time.perf_counter() - t0)

    status = CONVERGED if rnorm <= cfg.tol * bnorm else ""
    rho = np.vdot(rt0, r)
    p = np.zeros_like(r)
    q = np.zeros_like(r)
    beta = 0.0
    omega = 0.0
    itn = 0
    while not status:
        if itn >= cfg.max_itn:
            status = MAX_ITN
            break
        itn += 1
        p = r + beta * (p - omega * q)
        q = mop.matvec(p)
        if R is not None:
            zeta = R.Chat.conj().T @ q
            q = q - R.C @ zeta
        den = np.vdot(rt0, q)
        if abs(den) <= cfg.breakdown_tol * np.linalg.norm(rt0) * np.linalg.norm(q):
            status = BREAKDOWN_SERIOUS
            break
        alpha = rho / den
        s = r - alpha * q
        snorm = np.linalg.norm(s)
        if snorm <= cfg.tol * bnorm:
            x = x + alpha * p
            if R is not None:
                xc = xc + alpha * zeta
            r = s
            hist._record(snorm, mop.total, time.perf_counter() - t0)
            if cfg.record_iterates:
                hist.iterates.append(_iterate())
                hist.residual_vectors.append(r.copy())
            status = CONVERGED
            break
        t = mop.matvec(s)
        if R is not None:
            gamma = R.Chat.conj().T @ t
            t = t - R.C @ gamma
        tt = np.vdot(t, t)
        if tt == 0.0:
            status = BREAKDOWN_OMEGA
            break
        omega = np.vdot(t, s) / tt
        if omega == 0.0:
            status = BREAKDOWN_OMEGA
            break
        x = x + alpha * p + omega * s
        if R is not None:
            xc = xc + alpha * zeta + omega * gamma
        r = s - omega * t
        rnorm = np.linalg.norm(r)
        hist._record(rnorm, mop.total, time.perf_counter() - t0)
        if cfg.record_iterates:
            hist.iterates.append(_iterate())
            hist.residual_vectors.append(r.copy())
            hist.omega_steps.append((s.copy(), t.copy(), complex(omega)))
        if rnorm <= cfg.tol * bnorm:
            status = CONVERGED
            break
        rho_new = np.vdot(rt0, r)
        if abs(rho_new) <= cfg.breakdown_tol * np.linalg.norm(rt0) * rnorm:
            status = BREAKDOWN_SERIOUS
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new

    hist.status = status
    x_out = unwind((x - R.U @ xc) if R is not None else x)
    hist.final_true_resid = _true_residual(A, b, x_out)
    return x_out, hist


def _dual_start(mop, bth, xth, R, rng, wdt, cfg, r0):
    """Initial dual residual with re-draws when the residual pair degenerates."""
    xt = None if xth is None else xth.astype(wdt)
    for attempt in range(4):
        xt0, rt0 = project_initial_dual(mop, bth, xt, R)
        rho = np.vdot(rt0, r0)
        scale = np.linalg.norm(rt0) * np.linalg.norm(r0)
        if abs(rho) > cfg.breakdown_tol * scale or scale == 0.0:
            return xt0, rt0, rho
        xt = _draw(rng, mop.shape[0], wdt)
    raise ValueError("initial residual pair stays biorthogonal after re-draws; "
                     "supply a different b_dual or seed")


def bicg_solve(A, b, b_dual=None, x_init=None, x_init_dual=None, precond=None,
               config=None):
    """Two-sided bi-conjugate gradient iteration.

    Solves ``A x = b`` and ``A^H xt = b_dual`` simultaneously; each iteration
    costs one operator product and one transpose product.  ``b_dual`` defaults
    to a seeded random vector.  Convergence requires both relative residuals
    to pass ``tol``.  Returns ``(x, x_dual, history)``.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    op, bh, xh, unwind = _setup_primary(A, b, x_init, precond)
    mop = CountingOperator(op)
    n = op.shape[0]
    wdt = _work_dtype(op, bh)
    rng = np.random.default_rng(cfg.seed)
    if b_dual is None:
        b_dual = _draw(rng, n, wdt)
    bth, xth, unwind_dual = _setup_dual(precond, np.asarray(b_dual), x_init_dual)
    bh = bh.astype(wdt, copy=False)
    bth = bth.astype(wdt, copy=False)
    bnorm = float(np.linalg.norm(bh))
    btnorm = float(np.linalg.norm(bth))

    x, r = project_initial(mop, bh, None if xh is None else xh.astype(wdt), None)
    xt, rt, rho = _dual_start(mop, bth, xth, None, rng, wdt, cfg, r)

    hist = ConvergenceHistory(solver="bicg", rhs_norm=bnorm, rhs_norm_dual=btnorm)
    if cfg.record_iterates:
        hist.iterates = [unwind(x.copy())]
        hist.residual_vectors = [r.copy()]
        hist.residual_vectors_dual = [rt.copy()]
    rnorm = np.linalg.norm(r)
    rtnorm = np.linalg.norm(rt)
    hist._record(rnorm, mop.total, time.perf_counter() - t0, rtnorm)

    status = CONVERGED if (rnorm <= cfg.tol * bnorm and rtnorm <= cfg.tol * btnorm) else ""
    p = np.zeros_like(r)
    pt = np.zeros_like(rt)
    beta = 0.0
    itn = 0
    while not status:
        if itn >= cfg.max_itn:
            status = MAX_ITN
            break
        itn += 1
        p = r + beta * p
        pt = rt + np.conj(beta) * pt
        q = mop.matvec(p)
        qt = mop.rmatvec(pt)
        den = np.vdot(pt, q)
        if abs(den) <= cfg.breakdown_tol * np.linalg.norm(pt) * np.linalg.norm(q):
            status = BREAKDOWN_SECOND_KIND
            break
        alpha = rho / den
        x = x + alpha * p
        xt = xt + np.conj(alpha) * pt
        r = r - alpha * q
        rt = rt - np.conj(alpha) * qt
        rnorm = np.linalg.norm(r)
        rtnorm = np.linalg.norm(rt)
        hist._record(rnorm, mop.total, time.perf_counter() - t0, rtnorm)
        if cfg.record_iterates:
            hist.iterates.append(unwind(x.copy()))
            hist.residual_vectors.append(r.copy())
            hist.residual_vectors_dual.append(rt.copy())
        if rnorm <= cfg.tol * bnorm and rtnorm <= cfg.tol * btnorm:
            status = CONVERGED
            break
        rho_new = np.vdot(rt, r)
        if abs(rho_new) <= cfg.breakdown_tol * rtnorm * rnorm:
            status = BREAKDOWN_SERIOUS
            break
        beta = rho_new / rho
        rho = rho_new

    hist.status = status
    x_out = unwind(x)
    hist.final_true_resid = _true_residual(A, b, x_out)
    return x_out, unwind_dual(xt), hist


def rbicg_solve(A, b, b_dual=None, x_init=None, x_init_dual=None, recycle=None,
                precond=None, config=None, cycle_callback=None):
    """Two-sided iteration with recycle-space deflation and cycle harvesting.

    Runs BiCG on the pair of systems projected against an existing recycle
    space (supplied in iteration coordinates) while collecting the normalized
    residual directions of both sequences into blocks of ``config.s``
    iterations.  Each completed block is emitted as a
    :class:`~krecycle.recycling.CapturedCycle`, carrying two columns of
    overlap with its successor so consecutive blocks chain the three-term
    recurrence.  Blocks go to ``cycle_callback`` as they complete (when
    given) and are also returned.

    Returns ``(x, x_dual, history, cycles)``.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    op, bh, xh, unwind = _setup_primary(A, b, x_init, precond)
    mop = CountingOperator(op)
    n = op.shape[0]
    R = recycle if (recycle is not None and recycle.k > 0) else None
    if R is not None and R.n != n:
        raise ValueError("recycle space dimension does not match the operator")
    wdt = _work_dtype(op, bh, R.U if R is not None else None)
    rng = np.random.default_rng(cfg.seed)
    if b_dual is None:
        b_dual = _draw(rng, n, wdt)
    bth, xth, unwind_dual = _setup_dual(precond, np.asarray(b_dual), x_init_dual)
    bh = bh.astype(wdt, copy=False)
    bth = bth.astype(wdt, copy=False)
    bnorm = float(np.linalg.norm(bh))
    btnorm = float(np.linalg.norm(bth))

    x, r = project_initial(mop, bh, None if xh is None else xh.astype(wdt), R)
    xt, rt, rho = _dual_start(mop, bth, xth, R, rng, wdt, cfg, r)
    if R is not None:
        zc = np.zeros(R.k, dtype=wdt)
        ztc = np.zeros(R.k, dtype=wdt)

    hist = ConvergenceHistory(solver="rbicg", rhs_norm=bnorm, rhs_norm_dual=btnorm)

    def _iterate():
        return unwind((x - R.U @ zc) if R is not None else x.copy())

    if cfg.record_iterates:
        hist.iterates = [_iterate()]
        hist.residual_vectors = [r.copy()]
        hist.residual_vectors_dual = [rt.copy()]
    rnorm = np.linalg.norm(r)
    rtnorm = np.linalg.norm(rt)
    hist._record(rnorm, mop.total, time.perf_counter() - t0, rtnorm)

    # Lanczos capture state.  rhos[i-1] = ||r_{i-1}||, the norm used to
    # normalize global column i; alphas/betas are the iteration coefficients.
    cycles: list[CapturedCycle] = []
    capture = cfg.s > 0
    rhos: list[float] = []
    alphas: list = []
    betas: list = []
    v_buf: list = []
    vt_buf: list = []
    window_start = 1
    emitted_through = 0

    def _tri_block(first, ncols):
        tri = np.full((3, ncols), np.nan, dtype=wdt)
        m = len(alphas)
        for j in range(ncols):
            g = first + j
            if g <= m:
                a_g = alphas[g - 1]
                diag = 1.0 / a_g
                if g >= 2:
                    diag = diag + betas[g - 1] / alphas[g - 2]
                tri[1, j] = diag
                if len(rhos) > g:
                    tri[0, j] = -rhos[g] / (a_g * rhos[g - 1])
            if g >= 2 and g - 1 <= m and len(betas) >= g:
                tri[2, j] = (-betas[g - 1] * rhos[g - 2] /
                             (alphas[g - 2] * rhos[g - 1]))
        return tri

    def _emit(final=False):
        nonlocal v_buf, vt_buf, window_start, emitted_through
        ncols = len(v_buf)
        last = window_start + ncols - 1
        if ncols == 0 or last <= emitted_through:
            return
        cyc = CapturedCycle(V=np.column_stack(v_buf), Vt=np.column_stack(vt_buf),
                            tri=_tri_block(window_start, ncols),
                            first_index=window_start)
        cycles.append(cyc)
        emitted_through = last
        if cycle_callback is not None:
            cycle_callback(cyc)
        if not final and ncols > 2:
            v_buf = v_buf[-2:]
            vt_buf = vt_buf[-2:]
            window_start = last - 1

    def _push_lanczos(r_vec, rt_vec):
        nonlocal capture
        if not capture:
            return
        rn = np.linalg.norm(r_vec)
        if rn == 0.0:
            capture = False
            return
        v = r_vec / rn
        sigma = np.vdot(v, rt_vec)
        if abs(sigma) <= cfg.breakdown_tol * np.linalg.norm(rt_vec):
            capture = False
            return
        rhos.append(float(rn))
        v_buf.append(v)
        vt_buf.append(rt_vec / sigma)

    _push_lanczos(r, rt)

    status = CONVERGED if (rnorm <= cfg.tol * bnorm and rtnorm <= cfg.tol * btnorm) else ""
    p = np.zeros_like(r)
    pt = np.zeros_like(rt)
    beta = 0.0
    itn = 0
    while not status:
        if itn >= cfg.max_itn:
            status = MAX_ITN
            break
        itn += 1
        p = r + beta * p
        pt = rt + np.conj(beta) * pt
        q = mop.matvec(p)
        qt = mop.rmatvec(pt)
        if R is not None:
            zeta = R.Chat.conj().T @ q
            q = q - R.C @ zeta
            zetat = R.Ccheck.conj().T @ qt
            qt = qt - R.Ct @ zetat
        den = np.vdot(pt, q)
        if abs(den) <= cfg.breakdown_tol * np.linalg.norm(pt) * np.linalg.norm(q):
            status = BREAKDOWN_SECOND_KIND
            break
        alpha = rho / den
        x = x + alpha * p
        xt = xt + np.conj(alpha) * pt
        if R is not None:
            zc = zc + alpha * zeta
            ztc = ztc + np.conj(alpha) * zetat
        r = r - alpha * q
        rt = rt - np.conj(alpha) * qt
        rnorm = np.linalg.norm(r)
        rtnorm = np.linalg.norm(rt)
        hist._record(rnorm, mop.total, time.perf_counter() - t0, rtnorm)
        if cfg.record_iterates:
            hist.iterates.append(_iterate())
            hist.residual_vectors.append(r.copy())
            hist.residual_vectors_dual.append(rt.copy())
        if capture:
            alphas.append(alpha)
            betas.append(beta)
            _push_lanczos(r, rt)
            if itn % cfg.s == 0:
                _emit()
        if rnorm <= cfg.tol * bnorm and rtnorm <= cfg.tol * btnorm:
            status = CONVERGED
            break
        rho_new = np.vdot(rt, r)
        if abs(rho_new) <= cfg.breakdown_tol * rtnorm * rnorm:
            status = BREAKDOWN_SERIOUS
            break
        beta = rho_new / rho
        rho = rho_new

    _emit(final=True)
    hist.status = status
    x_out = unwind((x - R.U @ zc) if R is not None else x)
    xt_out = unwind_dual((xt - R.Ut @ ztc) if R is not None else xt)
    hist.final_true_resid = _true_residual(A, b, x_out)
    return x_out, xt_out, hist, cycles
