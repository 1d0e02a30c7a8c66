"""Symmetric positive definite linear algebra for the hybrid systems."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrix


class SparseSymMatrix:
    """Symmetric sparse matrix stored as its upper triangle.

    Coordinates are kept in canonical row-major order with no duplicates, so
    symmetry holds by construction.
    """

    def __init__(self, n, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if np.any(rows > cols):
            raise ValueError("SparseSymMatrix stores the upper triangle only")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite matrix entry")
        upper = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        upper.sum_duplicates()
        upper.sort_indices()
        coo = upper.tocoo()
        self.n = int(n)
        self.rows, self.cols, self.vals = coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data
        self._full = None

    @classmethod
    def from_matrix(cls, A, check_tol=1e-12):
        """Build from a dense or scipy matrix, which must be symmetric."""
        A = sp.csr_matrix(A)
        diff = abs(A - A.T)
        scale = max(abs(A).max(), 1.0)
        if diff.nnz and diff.max() > check_tol * scale:
            raise ValueError("matrix is not symmetric")
        U = sp.triu(A).tocoo()
        return cls(A.shape[0], U.row, U.col, U.data)

    @property
    def shape(self):
        return (self.n, self.n)

    def to_csr(self):
        if self._full is None:
            U = sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)
            strict = sp.triu(U, k=1)
            self._full = (U + strict.T).tocsr()
        return self._full

    def diagonal(self):
        return self.to_csr().diagonal()

    def __matmul__(self, x):
        return self.to_csr() @ x

    @property
    def nnz(self):
        return self.vals.size


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def _operator(A):
    if isinstance(A, SparseSymMatrix):
        return A.to_csr()
    if sp.issparse(A):
        return A.tocsr()
    return np.asarray(A, dtype=float)


def cg_solve(A, b, tol=1e-10, max_iter=None, preconditioner="jacobi", x0=None, kernel=None):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : SparseSymMatrix, scipy sparse matrix or ndarray
        Symmetric, positive definite (on the complement of ``kernel``).
    b : ndarray
    tol : float
        Target relative residual ``||A x - b|| / ||b||``.
    preconditioner : {"jacobi", "none"}
    x0 : ndarray, optional
        Initial guess.
    kernel : {None, "constant"}
        With ``"constant"``, ``b`` is projected to mean zero and the
        mean-zero solution is returned (pure Neumann operators).

    Returns
    -------
    x : ndarray
    report : SolveReport
        ``converged`` is False when ``max_iter`` is reached; no exception is
        raised so the caller can decide.
    """
    M = _operator(A)
    b = np.array(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    if kernel == "constant":
        b -= b.mean()
    elif kernel is not None:
        raise ValueError(f"unknown kernel {kernel!r}")
    if preconditioner == "jacobi":
        d = M.diagonal()
        if np.any(d <= 0):
            raise ValueError("Jacobi preconditioner needs a positive diagonal")
        inv_d = 1.0 / d
    elif preconditioner == "none":
        inv_d = None
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)
    r = b - M @ x
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveReport(0, float(rel), True)
    z = r * inv_d if inv_d is not None else r.copy()
    p = z.copy()
    rz = r @ z
    it = 0
    while it < max_iter:
        it += 1
        Ap = M @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if kernel == "constant":
            r -= r.mean()
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            break
        z = r * inv_d if inv_d is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if kernel == "constant":
        x -= x.mean()
    true_rel = float(np.linalg.norm(b - M @ x) / bnorm)
    return x, SolveReport(it, true_rel, true_rel <= tol * 10)


def dense_solve(A, b, kernel=None):
    """Direct LU solve for small systems (test oracle).

    With ``kernel="constant"`` the matrix may have the constant vector in its
    kernel; the mean-zero solution is returned. Any other rank deficiency
    raises :class:`SingularMatrix`.
    """
    A = A.to_csr().toarray() if isinstance(A, SparseSymMatrix) else (
        A.toarray() if sp.issparse(A) else np.array(A, dtype=float))
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if kernel == "constant":
        aug = np.zeros((n + 1, n + 1))
        aug[:n, :n] = A
        aug[:n, n] = 1.0
        aug[n, :n] = 1.0
        rhs = np.concatenate([b - b.mean(), [0.0]])
        return _lu_solve(aug, rhs)[:n]
    if kernel is not None:
        raise ValueError(f"unknown kernel {kernel!r}")
    return _lu_solve(A, b)


def _lu_solve(A, b):
    n = A.shape[0]
    anorm = np.abs(A).sum(axis=0).max()
    if anorm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        # singularity is reported through rcond below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=True)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < n * np.finfo(float).eps:
        raise SingularMatrix(f"matrix is numerically singular (rcond={rcond:.2e})")
    return sla.lu_solve((lu, piv), b)


class Factorized:
    """Sparse LU factorisation reused across many right-hand sides."""

    def __init__(self, A):
        A = _operator(A)
        self._lu = spla.splu(sp.csc_matrix(A))
        self.shape = A.shape

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


def sparse_direct_solve(A, b):
    return Factorized(A).solve(b)


def relative_residual(A, x, b):
    M = _operator(A)
    bn = np.linalg.norm(b)
    r = np.linalg.norm(M @ x - b)
    return r / bn if bn else r


def spd_condition_estimate(A):
    """Ratio of extreme eigenvalues of a small dense SPD matrix."""
    w = np.linalg.eigvalsh(_operator(A).toarray() if sp.issparse(A) else _operator(A))
    lo = w[w > 0].min() if np.any(w > 0) else 0.0
    return math.inf if lo == 0 else float(w.max() / lo)
