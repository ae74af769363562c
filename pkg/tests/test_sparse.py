"""Sparse kernel contracts: construction, products, and the adjoint identity."""

import numpy as np
import pytest

from krecycle import (SparseMatrix, axpy, dot, matvec, matvec_conj_transpose,
                      norm)

from conftest import dense_to_sparse


def test_from_triplets_empty():
    A = SparseMatrix.from_triplets(3, 3, [], [], [])
    assert A.nnz == 0
    assert np.array_equal(A.to_dense(), np.zeros((3, 3)))


def test_from_triplets_sums_duplicates():
    A = SparseMatrix.from_triplets(2, 2, [0, 0], [0, 0], [1.0, 2.0])
    assert A.nnz == 1
    assert A.to_dense()[0, 0] == 3.0


def test_from_triplets_rejects_out_of_range():
    with pytest.raises(ValueError):
        SparseMatrix.from_triplets(2, 2, [0, 2], [0, 0], [1.0, 1.0])
    with pytest.raises(ValueError):
        SparseMatrix.from_triplets(2, 2, [0], [-1], [1.0])


def test_from_triplets_matches_dense_accumulation():
    rng = np.random.default_rng(7)
    n = 12
    m = 60
    rows = rng.integers(0, n, m)
    cols = rng.integers(0, n, m)
    vals = rng.standard_normal(m)
    dense = np.zeros((n, n))
    for i, j, v in zip(rows, cols, vals):
        dense[i, j] += v
    A = SparseMatrix.from_triplets(n, n, rows, cols, vals)
    assert np.allclose(A.to_dense(), dense, rtol=0, atol=1e-15)


def test_triplets_round_trip_identity():
    rng = np.random.default_rng(3)
    D = rng.standard_normal((9, 9))
    D[np.abs(D) < 0.7] = 0.0
    A = dense_to_sparse(D)
    rows, cols, vals = A.to_triplets()
    B = SparseMatrix.from_triplets(A.nrows, A.ncols, rows, cols, vals)
    assert np.array_equal(A.row_ptr, B.row_ptr)
    assert np.array_equal(A.col_idx, B.col_idx)
    assert np.array_equal(A.values, B.values)


def test_csr_canonical_and_immutable():
    A = SparseMatrix.from_triplets(3, 4, [2, 0, 0], [1, 3, 0], [1.0, 2.0, 3.0])
    for i in range(A.nrows):
        row = A.col_idx[A.row_ptr[i]:A.row_ptr[i + 1]]
        assert np.all(np.diff(row) > 0)
    with pytest.raises((ValueError, RuntimeError)):
        A.values[0] = 99.0


def test_matvec_matches_dense_oracle():
    rng = np.random.default_rng(11)
    for n in (1, 5, 40):
        D = rng.standard_normal((n, n))
        D[np.abs(D) < 0.3] = 0.0
        A = dense_to_sparse(D)
        x = rng.standard_normal(n)
        assert np.allclose(A.matvec(x), D @ x, rtol=1e-13, atol=1e-13)
        assert np.allclose(A.rmatvec(x), D.conj().T @ x, rtol=1e-13,
                           atol=1e-13)


def test_matvec_linearity():
    rng = np.random.default_rng(21)
    D = rng.standard_normal((30, 30))
    A = dense_to_sparse(D)
    x = rng.standard_normal(30)
    y = rng.standard_normal(30)
    alpha = rng.standard_normal()
    lhs = matvec(A, alpha * x + y)
    rhs = alpha * matvec(A, x) + matvec(A, y)
    assert np.linalg.norm(lhs - rhs) <= 1e-13 * np.linalg.norm(rhs)


def test_adjoint_identity_real_and_complex():
    rng = np.random.default_rng(5)
    for complex_ in (False, True):
        for n in (3, 17, 50):
            D = rng.standard_normal((n, n))
            if complex_:
                D = D + 1j * rng.standard_normal((n, n))
            A = dense_to_sparse(D)
            x = rng.standard_normal(n)
            y = rng.standard_normal(n)
            lhs = dot(matvec_conj_transpose(A, x), y)
            rhs = dot(x, matvec(A, y))
            assert abs(lhs - rhs) <= 1e-13 * max(abs(rhs), 1.0)


def test_dot_conjugates_first_argument():
    assert dot(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    z = np.array([1j, 0.0])
    assert dot(z, z) == pytest.approx(1.0)
    rng = np.random.default_rng(9)
    x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    naive = sum(np.conj(a) * b for a, b in zip(x, y))
    assert dot(x, y) == pytest.approx(naive, rel=1e-13)


def test_dot_dimension_mismatch():
    with pytest.raises(ValueError):
        dot(np.ones(3), np.ones(4))


def test_axpy():
    rng = np.random.default_rng(13)
    x = rng.standard_normal(15)
    y = rng.standard_normal(15)
    assert np.array_equal(axpy(0.0, x, y), y)
    assert np.array_equal(axpy(1.0, x, np.zeros(15)), x)
    a = rng.standard_normal()
    naive = np.array([a * xi + yi for xi, yi in zip(x, y)])
    assert np.allclose(axpy(a, x, y), naive, rtol=1e-13)
    with pytest.raises(ValueError):
        axpy(1.0, np.ones(3), np.ones(4))


def test_identity_and_add_and_scale():
    I5 = SparseMatrix.identity(5)
    x = np.arange(5.0)
    assert np.array_equal(I5.matvec(x), x)
    rng = np.random.default_rng(17)
    D1 = rng.standard_normal((5, 5))
    D2 = rng.standard_normal((5, 5))
    S = dense_to_sparse(D1) + dense_to_sparse(D2)
    assert np.allclose(S.to_dense(), D1 + D2, rtol=0, atol=1e-15)
    assert np.allclose(dense_to_sparse(D1).scale(2.5).to_dense(), 2.5 * D1)


def test_conj_transpose_and_scipy_round_trip():
    rng = np.random.default_rng(19)
    D = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    D[np.abs(D) < 0.5] = 0.0
    A = dense_to_sparse(D)
    assert np.allclose(A.conj_transpose().to_dense(), D.conj().T)
    B = SparseMatrix.from_scipy(A.to_scipy())
    assert np.array_equal(A.values, B.values)
    assert np.array_equal(A.col_idx, B.col_idx)
    assert np.array_equal(A.row_ptr, B.row_ptr)


def test_norm_helper():
    x = np.array([3.0, 4.0])
    assert norm(x) == pytest.approx(5.0)
