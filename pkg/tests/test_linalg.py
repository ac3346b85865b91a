import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
from hypothesis import given, strategies as st

from emlmc import linalg
from emlmc.linalg import (LinearSolver, SolverError, factorize, looks_spd,
                          solve_block_cg, solve_cg, solve_cholesky_dense)


def random_spd(n, seed, cond=100.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.geomspace(1.0, cond, n)
    A = (Q * d) @ Q.T
    return 0.5 * (A + A.T)


def rel_res(A, X, B):
    return np.linalg.norm(A @ X - B, axis=0) / np.linalg.norm(B, axis=0)


def test_block_cg_matches_cholesky():
    A = random_spd(50, 0)
    B = np.random.default_rng(1).standard_normal((50, 8))
    X = solve_block_cg(sp.csr_matrix(A), B, tol=1e-12)
    ref = la.cho_solve(la.cho_factor(A), B)
    assert np.abs(X - ref).max() / np.abs(ref).max() < 1e-8


def test_well_conditioned_fast(p2_4):
    M = p2_4.mass * 100.0
    B = np.random.default_rng(0).standard_normal((M.shape[0], 3))
    X, info = solve_block_cg(M, B, tol=1e-12, return_info=True)
    assert rel_res(M, X, B).max() <= 1e-12
    assert info.iterations < 60


def test_duplicate_columns_identical():
    A = sp.csr_matrix(random_spd(40, 2))
    b = np.random.default_rng(3).standard_normal(40)
    B = np.column_stack([b, b, 2 * b])
    X = solve_block_cg(A, B)
    assert np.abs(X[:, 0] - X[:, 1]).max() <= 1e-12
    assert rel_res(A, X, B).max() < 1e-10


def test_zero_column_and_vector():
    A = sp.csr_matrix(random_spd(10, 4))
    B = np.zeros((10, 2))
    B[:, 1] = 1.0
    X = solve_block_cg(A, B)
    assert not X[:, 0].any()
    x = solve_block_cg(A, B[:, 1])
    assert x.shape == (10,) and np.allclose(x, X[:, 1])


def test_max_iter_error_reports_residual():
    A = sp.csr_matrix(random_spd(60, 5, cond=1e6))
    B = np.ones((60, 2))
    with pytest.raises(SolverError) as exc:
        solve_block_cg(A, B, tol=1e-14, max_iter=2)
    assert exc.value.residual > 1e-14
    assert exc.value.iterations == 2


def test_jacobi_scaling():
    A = np.diag(np.geomspace(1, 1e4, 30)) + 0.1 * random_spd(30, 6, cond=2)
    B = np.random.default_rng(7).standard_normal((30, 3))
    X = solve_block_cg(sp.csr_matrix(A), B, jacobi=True, tol=1e-11)
    assert rel_res(A, X, B).max() < 1e-10


def test_dense_cholesky():
    assert np.allclose(solve_cholesky_dense(np.array([[4.0]]), np.array([2.0])), 0.5)
    H = la.hilbert(8) + 1e-8 * np.eye(8)
    B = np.random.default_rng(8).standard_normal((8, 2))
    X = solve_cholesky_dense(H, B)
    assert rel_res(H, X, B).max() < 1e-8
    with pytest.raises(SolverError):
        solve_cholesky_dense(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))
    with pytest.raises(ValueError):
        linalg.CholeskyFactor(np.eye(5), limit=4)


def test_factorize_switches_to_sparse(p2_8):
    A = (p2_8.mass + p2_8.laplace).tocsr()
    assert isinstance(factorize(A, limit=10), linalg.SparseLUFactor)
    B = np.ones((A.shape[0], 2))
    X1 = factorize(A, limit=10).solve(B)
    X2 = factorize(A).solve(B)
    assert np.abs(X1 - X2).max() < 1e-10


@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 10_000))
def test_block_agrees_with_columns_and_cholesky(n, k, seed):
    A = random_spd(n, seed, cond=50)
    B = np.random.default_rng(seed + 1).standard_normal((n, k))
    tol = 1e-10
    Xb = solve_block_cg(sp.csr_matrix(A), B, tol=tol)
    Xc = solve_cg(sp.csr_matrix(A), B, tol=tol)
    ref = la.cho_solve(la.cho_factor(A), B)
    scale = np.abs(ref).max()
    assert np.abs(Xb - ref).max() / scale < max(10 * tol * 50, 1e-8)
    assert np.abs(Xc - ref).max() / scale < max(10 * tol * 50, 1e-8)


def test_block_iterations_no_worse_than_single(p2_4):
    A = (1.5 * 8 * p2_4.mass + p2_4.laplace)[p2_4.interior_dofs][:, p2_4.interior_dofs]
    B = np.random.default_rng(9).standard_normal((A.shape[0], 6))
    _, ib = solve_block_cg(A, B, return_info=True)
    its = [solve_block_cg(A, B[:, j], return_info=True)[1].iterations for j in range(6)]
    assert ib.iterations <= max(its)


def test_linear_solver_front_end(p2_4):
    A = (p2_4.mass + p2_4.laplace).tocsr()
    B = np.random.default_rng(10).standard_normal((A.shape[0], 4))
    ref = LinearSolver(A).solve(B)
    for method in ("block_cg", "cg"):
        s = LinearSolver(A, method=method, tol=1e-12)
        assert np.abs(s.solve(B) - ref).max() < 1e-8
        assert s.iterations > 0
    with pytest.raises(ValueError):
        LinearSolver(A, method="lu")
    assert looks_spd(A)
    assert not looks_spd(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])))
