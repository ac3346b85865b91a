"""Solvers for one SPD matrix with a block of right-hand sides."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-10
DROP_TOL = 1e-13
DENSE_LIMIT = 2500


class SolverError(RuntimeError):
    """Raised when a linear solve fails; carries diagnostic attributes."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class SolveInfo:
    iterations: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged_at: np.ndarray = field(default_factory=lambda: np.zeros(0, int))


def _mgs(Z, drop=DROP_TOL):
    """Orthonormal basis of range(Z) by modified Gram-Schmidt.

    Columns whose remaining norm falls below ``drop`` times their original
    norm are treated as dependent and dropped.
    """
    Z = np.array(Z, dtype=float, copy=True)
    n, k = Z.shape
    norms0 = np.linalg.norm(Z, axis=0)
    keep = []
    for c in range(k):
        if len(keep) == n:
            break
        v = Z[:, c]
        nv = np.linalg.norm(v)
        if norms0[c] == 0.0 or nv <= drop * norms0[c]:
            continue
        v /= nv
        keep.append(c)
        rest = Z[:, c + 1:]
        rest -= np.outer(v, v @ rest)
    return Z[:, keep]


def solve_block_cg(A, B, tol=DEFAULT_TOL, max_iter=None, x0=None, jacobi=False,
                   return_info=False):
    """Block conjugate gradients with per-column deflation.

    Search directions are re-orthonormalized every iteration, so
    rank-deficient blocks (including repeated columns) never break down.
    A column is frozen once ``|A x_j - b_j| <= tol |b_j|``.
    """
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    B2 = B[:, None] if vector else B
    n, k = B2.shape
    if max_iter is None:
        max_iter = 10 * n
    if jacobi:
        d = 1.0 / np.sqrt(np.asarray(A.diagonal(), dtype=float))
        D = sp.diags(d)
        As = D @ A @ D
        y0 = None if x0 is None else np.asarray(x0).reshape(n, k) / d[:, None]
        out = solve_block_cg(As, d[:, None] * B2, tol=tol, max_iter=max_iter,
                             x0=y0, return_info=True)
        X, info = out
        X = d[:, None] * X
        info.residuals = (np.linalg.norm(A @ X - B2, axis=0)
                          / np.where(np.linalg.norm(B2, axis=0) > 0,
                                     np.linalg.norm(B2, axis=0), 1.0))
        X = X[:, 0] if vector else X
        return (X, info) if return_info else X

    X = np.zeros((n, k)) if x0 is None else np.array(x0, dtype=float).reshape(n, k)
    bnorm = np.linalg.norm(B2, axis=0)
    bnorm_safe = np.where(bnorm > 0, bnorm, 1.0)
    R = B2 - A @ X
    rel = np.linalg.norm(R, axis=0) / bnorm_safe
    active = np.flatnonzero(rel > tol)
    converged_at = np.where(rel > tol, -1, 0)
    it = 0
    P = _mgs(R[:, active]) if len(active) else np.zeros((n, 0))
    while len(active):
        if it >= max_iter:
            worst = float(rel.max())
            raise SolverError(
                f"block CG did not converge in {max_iter} iterations; "
                f"worst relative residual {worst:.3e}",
                residual=worst, iterations=it)
        if P.shape[1] == 0:
            # residual block numerically dependent on directions already used
            P = _mgs(R[:, active])
            if P.shape[1] == 0:
                break
        Q = A @ P
        PtQ = P.T @ Q
        alpha = np.linalg.solve(PtQ, P.T @ R[:, active])
        X[:, active] += P @ alpha
        R[:, active] -= Q @ alpha
        it += 1
        rel[active] = np.linalg.norm(R[:, active], axis=0) / bnorm_safe[active]
        done = active[rel[active] <= tol]
        converged_at[done] = it
        active = active[rel[active] > tol]
        if not len(active):
            break
        Z = R[:, active]
        beta = -np.linalg.solve(PtQ, Q.T @ Z)
        P = _mgs(Z + P @ beta)
    # true residuals, guarding against drift of the recursive update
    true = np.linalg.norm(B2 - A @ X, axis=0) / bnorm_safe
    info = SolveInfo(iterations=it, residuals=true, converged_at=converged_at)
    X = X[:, 0] if vector else X
    return (X, info) if return_info else X


def solve_cg(A, B, tol=DEFAULT_TOL, max_iter=None, return_info=False, jacobi=False):
    """Column-by-column CG; same answers as the block solve, one width at a time."""
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    B2 = B[:, None] if vector else B
    X = np.empty_like(B2)
    its, res = [], []
    for j in range(B2.shape[1]):
        X[:, j], info = solve_block_cg(A, B2[:, j], tol=tol, max_iter=max_iter,
                                       jacobi=jacobi, return_info=True)
        its.append(info.iterations)
        res.append(info.residuals[0])
    info = SolveInfo(iterations=max(its, default=0), residuals=np.array(res),
                     converged_at=np.array(its))
    X = X[:, 0] if vector else X
    return (X, info) if return_info else X


class CholeskyFactor:
    """Dense Cholesky factorization, reused across right-hand sides."""

    def __init__(self, A, limit=DENSE_LIMIT):
        n = A.shape[0]
        if n > limit:
            raise ValueError(f"dimension {n} exceeds dense limit {limit}")
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            self._cf = la.cho_factor(dense, lower=True, check_finite=False)
        except la.LinAlgError as exc:
            raise SolverError(f"matrix is not positive definite: {exc}") from exc
        self.n = n

    def solve(self, B):
        return la.cho_solve(self._cf, B, check_finite=False)


class SparseLUFactor:
    """Sparse direct factorization for systems above the dense limit."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
        self.n = A.shape[0]

    def solve(self, B):
        return self._lu.solve(np.asarray(B, dtype=float))


def solve_cholesky_dense(A, B, limit=DENSE_LIMIT):
    return CholeskyFactor(A, limit=limit).solve(np.asarray(B, dtype=float))


def factorize(A, limit=DENSE_LIMIT):
    """Direct solver object: dense Cholesky when small, sparse LU otherwise."""
    if A.shape[0] <= limit:
        return CholeskyFactor(A, limit=limit)
    return SparseLUFactor(A)


class LinearSolver:
    """One SPD matrix plus a chosen strategy for solving blocks against it.

    ``method`` is ``"cholesky"`` (direct factorization, computed once),
    ``"block_cg"`` or ``"cg"``.
    """

    def __init__(self, A, method="cholesky", tol=DEFAULT_TOL, max_iter=None,
                 jacobi=False):
        if method not in ("cholesky", "block_cg", "cg"):
            raise ValueError(f"unknown solver {method!r}")
        self.A = sp.csr_matrix(A)
        self.method = method
        self.tol = tol
        self.max_iter = max_iter
        self.jacobi = jacobi
        self.iterations = 0
        self._factor = factorize(self.A) if method == "cholesky" else None

    def solve(self, B):
        if self._factor is not None:
            return self._factor.solve(B)
        fn = solve_block_cg if self.method == "block_cg" else solve_cg
        X, info = fn(self.A, B, tol=self.tol, max_iter=self.max_iter,
                     jacobi=self.jacobi, return_info=True)
        self.iterations += info.iterations
        return X


def looks_spd(A, trials=4, seed=0):
    """Probabilistic SPD check: exact symmetry and positive quadratic forms."""
    A = sp.csr_matrix(A)
    if (abs(A - A.T) > 0).nnz:
        return False
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        x = rng.standard_normal(A.shape[0])
        if x @ (A @ x) <= 0:
            return False
    return True
