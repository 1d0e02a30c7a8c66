import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hmmrd.errors import SingularMatrix
from hmmrd.linsolve import (Factorized, SparseSymMatrix, cg_solve, dense_solve, relative_residual,
                            spd_condition_estimate)


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    w = np.geomspace(1.0, cond, n)
    return (Q * w) @ Q.T


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, rep = cg_solve(sp.identity(5), b, tol=1e-14)
    np.testing.assert_allclose(x, b)
    assert rep.iterations == 1 and rep.converged


def test_diag_two_by_two():
    x, rep = cg_solve(np.diag([1.0, 4.0]), np.array([1.0, 4.0]), preconditioner="none")
    np.testing.assert_allclose(x, [1.0, 1.0])
    assert rep.converged


def test_random_spd_against_cholesky(rng):
    A = random_spd(rng, 50)
    b = rng.normal(size=50)
    ref = sla.cho_solve(sla.cho_factor(A), b)
    for pre in ("jacobi", "none"):
        x, rep = cg_solve(A, b, tol=1e-13, preconditioner=pre)
        np.testing.assert_allclose(x, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())
    np.testing.assert_allclose(dense_solve(A, b), ref, rtol=1e-10)
    np.testing.assert_allclose(Factorized(sp.csr_matrix(A)).solve(b), ref, rtol=1e-10)


def test_nonconvergence_reported_not_raised(rng):
    A = random_spd(rng, 40, cond=1e6)
    x, rep = cg_solve(A, rng.normal(size=40), tol=1e-14, max_iter=3)
    assert not rep.converged and rep.iterations == 3 and rep.residual > 0


def test_dense_small_cases():
    np.testing.assert_allclose(dense_solve([[4.0]], [2.0]), [0.5])
    H = sla.hilbert(4)
    np.testing.assert_allclose(dense_solve(H, np.ones(4)), sla.invhilbert(4) @ np.ones(4), rtol=1e-9)
    with pytest.raises(SingularMatrix):
        dense_solve(np.ones((3, 3)), np.ones(3))


def test_constant_kernel_projection():
    # 1D Neumann Laplacian has the constants in its kernel
    n = 20
    L = sp.diags([-np.ones(n - 1), np.r_[1, 2 * np.ones(n - 2), 1], -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    b = np.sin(np.arange(n)) + 5.0
    x, rep = cg_solve(L, b, tol=1e-12, kernel="constant")
    y = dense_solve(L, b, kernel="constant")
    assert rep.converged
    assert abs(x.mean()) < 1e-12 and abs(y.mean()) < 1e-12
    np.testing.assert_allclose(x, y, rtol=1e-8, atol=1e-9)
    assert relative_residual(L, y, b - b.mean()) < 1e-10


def test_sparse_sym_storage(rng):
    A = random_spd(rng, 8)
    S = SparseSymMatrix.from_matrix(A)
    assert np.all(S.rows <= S.cols)
    np.testing.assert_allclose(S.to_csr().toarray(), A, atol=1e-15)
    x = rng.normal(size=8)
    np.testing.assert_allclose(S @ x, A @ x)
    np.testing.assert_allclose(S.diagonal(), np.diag(A))
    # canonical order: sorted, no duplicates
    keys = S.rows * 8 + S.cols
    assert np.all(np.diff(keys) > 0)
    with pytest.raises(ValueError):
        SparseSymMatrix(2, [1], [0], [1.0])
    with pytest.raises(ValueError):
        SparseSymMatrix.from_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        SparseSymMatrix(2, [0], [0], [np.nan])
    dup = SparseSymMatrix(2, [0, 0, 0], [1, 1, 0], [1.0, 2.0, 3.0])
    assert dup.nnz == 2 and dup.to_csr()[1, 0] == 3.0
    x, rep = cg_solve(S, S @ np.ones(8), tol=1e-12)
    np.testing.assert_allclose(x, 1.0, rtol=1e-9)


def test_condition_estimate():
    assert spd_condition_estimate(np.diag([1.0, 10.0])) == pytest.approx(10.0)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**31))
def test_property_cg_agrees_with_dense(n, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n, cond=1e3)
    b = rng.normal(size=n)
    x, rep = cg_solve(A, b, tol=1e-12)
    y = dense_solve(A, b)
    assert rep.converged
    assert np.linalg.norm(x - y) <= 1e-9 * np.linalg.norm(y) * 1e3
