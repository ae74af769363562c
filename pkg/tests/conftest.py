"""Shared helpers: random test systems and recycle-space validation."""

import numpy as np
import pytest

from krecycle import SparseMatrix, as_operator


def dense_to_sparse(D):
    D = np.asarray(D)
    rows, cols = np.nonzero(D)
    return SparseMatrix.from_triplets(D.shape[0], D.shape[1],
                                      rows, cols, D[rows, cols])


def random_system(rng, n, dominance=None, complex_=False):
    """Dense-pattern diagonally dominant system (well conditioned)."""
    if dominance is None:
        dominance = float(n)
    D = rng.standard_normal((n, n))
    if complex_:
        D = D + 1j * rng.standard_normal((n, n))
    D = D + dominance * np.eye(n)
    b = rng.standard_normal(n)
    if complex_:
        b = b + 1j * rng.standard_normal(n)
    return dense_to_sparse(D), b


def sparse_random_system(rng, n, per_row=4, dominance=2.0):
    """Sparse random pattern with a dominant diagonal."""
    rows, cols, vals = [], [], []
    for i in range(n):
        js = rng.choice(n, size=min(per_row, n), replace=False)
        for j in js:
            if j == i:
                continue
            rows.append(i)
            cols.append(int(j))
            vals.append(rng.standard_normal())
        rows.append(i)
        cols.append(i)
        vals.append(dominance * per_row * (1.0 + rng.uniform()))
    A = SparseMatrix.from_triplets(n, n, np.array(rows), np.array(cols),
                                   np.array(vals))
    return A, rng.standard_normal(n)


def validate_space(space, A, tol=1e-10):
    """Assert every defining identity of a recycle space.

    Checks are relative where the quantity has a natural scale: the images
    C = A U and Ct = A^H Ut, the diagonality and positivity of Ct^H C, the
    scaled-image identities Chat = Ct / Dc and Ccheck = C / Dc, and the
    projector normalizations Chat^H C = I and Ccheck^H Ct = I.
    """
    if space.k == 0:
        return
    op = as_operator(A)
    U, Ut, C, Ct, Dc = space.U, space.Ut, space.C, space.Ct, space.Dc
    k = space.k
    AU = np.column_stack([op.matvec(np.ascontiguousarray(U[:, j]))
                          for j in range(k)])
    AhUt = np.column_stack([op.rmatvec(np.ascontiguousarray(Ut[:, j]))
                            for j in range(k)])
    assert np.linalg.norm(AU - C) <= tol * max(np.linalg.norm(C), 1.0)
    assert np.linalg.norm(AhUt - Ct) <= tol * max(np.linalg.norm(Ct), 1.0)
    G = Ct.conj().T @ C
    off = G - np.diag(np.diag(G))
    assert np.linalg.norm(off) <= tol * np.linalg.norm(G)
    diag = np.diag(G)
    assert np.all(np.abs(diag.imag) <= tol * np.abs(diag))
    assert np.all(diag.real > 0)
    assert np.allclose(diag.real, Dc, rtol=tol, atol=tol)
    assert np.allclose(space.Chat, Ct / Dc, rtol=tol, atol=tol)
    assert np.allclose(space.Ccheck, C / Dc, rtol=tol, atol=tol)
    assert np.linalg.norm(space.Chat.conj().T @ C - np.eye(k)) <= tol * k
    assert np.linalg.norm(space.Ccheck.conj().T @ Ct - np.eye(k)) <= tol * k


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance pass/fail lines where they are easy to find."""
    try:
        from tests import test_acceptance
    except ImportError:
        try:
            import test_acceptance
        except ImportError:
            return
    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
