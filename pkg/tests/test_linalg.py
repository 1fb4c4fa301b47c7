import numpy as np
import pytest
import scipy.sparse as sp

from biot_cgp.linalg import (
    BlockSystem,
    Factorization,
    SolverError,
    as_csr,
    block_insert,
    relative_residual,
    solve,
    spmv,
    spmv_transpose,
)


def test_identity_and_diagonal_systems():
    b = np.arange(1.0, 6.0)
    assert np.array_equal(solve(sp.identity(5), b), b)
    x = solve(sp.csr_matrix([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 8.0]))
    assert np.allclose(x, [1.0, 2.0], atol=1e-15)


def test_random_spd_matches_dense_solve():
    rng = np.random.default_rng(3)
    G = rng.standard_normal((50, 50))
    A = G @ G.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = solve(sp.csr_matrix(A), b)
    assert np.abs(x - np.linalg.solve(A, b)).max() <= 1e-11


def test_zero_rhs_gives_zero():
    fac = Factorization(sp.identity(4))
    assert not np.any(fac.solve(np.zeros(4)))


def test_singular_matrix_reported():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SolverError, match="singular|pivot|residual"):
        solve(A, np.array([1.0, 0.0]))
    with pytest.raises(SolverError, match="zero rows"):
        Factorization(sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 0.0]])))


def test_nonfinite_rhs_rejected():
    with pytest.raises(SolverError):
        solve(sp.identity(2), np.array([np.nan, 1.0]))


def test_rejects_nonsquare():
    with pytest.raises(ValueError):
        Factorization(sp.csr_matrix(np.ones((2, 3))))


def test_residual_is_recorded():
    rng = np.random.default_rng(0)
    A = sp.random(200, 200, density=0.05, random_state=1) + 10 * sp.identity(200)
    fac = Factorization(A)
    b = rng.standard_normal(200)
    x = fac.solve(b)
    assert fac.last_residual <= 1e-10
    assert relative_residual(A, x, b) == pytest.approx(fac.last_residual)


def test_spmv_against_dense():
    rng = np.random.default_rng(5)
    D = rng.standard_normal((30, 20)) * (rng.random((30, 20)) < 0.3)
    A = as_csr(D)
    x, y = rng.standard_normal(20), rng.standard_normal(30)
    assert np.abs(spmv(A, x) - D @ x).max() <= 1e-13
    assert np.abs(spmv_transpose(A, y) - D.T @ y).max() <= 1e-13
    assert np.array_equal(spmv_transpose(A, y), A.T.tocsr() @ y)
    assert np.array_equal(spmv(sp.identity(20, format="csr"), x), x)
    assert not np.any(spmv(sp.csr_matrix((30, 20)), x))
    with pytest.raises(ValueError):
        spmv(A, y)
    with pytest.raises(ValueError):
        spmv_transpose(A, x)


def test_as_csr_sorts_and_merges():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 0], [2, 0, 2])), shape=(1, 3))
    C = as_csr(A)
    assert C.has_sorted_indices and list(C.indices) == [0, 2] and list(C.data) == [2.0, 4.0]


def test_block_insert_and_offsets():
    a = sp.identity(2)
    b = 2 * sp.identity(3)
    M = block_insert([[a, None], [None, b]])
    assert M.shape == (5, 5) and np.allclose(M.diagonal(), [1, 1, 2, 2, 2])
    sysm = BlockSystem(M, np.zeros(5), (2, 3), 1)
    assert sysm.dim == 5 and list(sysm.offsets) == [0, 2, 5]
    two = BlockSystem(sp.identity(10), np.zeros(10), (2, 3), 2)
    assert list(two.offsets) == [0, 2, 5, 7, 10]
