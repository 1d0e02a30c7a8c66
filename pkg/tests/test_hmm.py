import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hmmrd.errors import SingularBlock
from hmmrd.gdm import HybridVector, gradient_operator, reconstruct_gradient
from hmmrd.hmm import (assemble_cell, assemble_global, flux_conservativity_residual, fluxes,
                       local_form_identity_error, schur_face_system)
from hmmrd.linsolve import dense_solve
from hmmrd.mesh import build_box_triangular, build_from_arrays

from conftest import random_meshes


@pytest.fixture
def square_cell():
    return build_from_arrays(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), [(0, 1, 2, 3)])


def diamond_form(mesh, u, w, mu=1.0):
    gu = reconstruct_gradient(mesh, u).values
    gw = reconstruct_gradient(mesh, w).values
    return mu * float((mesh.inc_diamond * (gu * gw).sum(axis=1)).sum())


def test_local_constants_in_kernel(perturbed_mesh):
    for K in range(perturbed_mesh.n_cells):
        op = assemble_cell(perturbed_mesh, K, mu=2.0)
        assert np.abs(op.stiffness @ np.ones(op.dofs.size)).max() < 1e-13 * np.abs(op.stiffness).max()


def test_local_affine_form(square_cell):
    op = assemble_cell(square_cell, 0, mu=1.0)
    u = HybridVector.sample_at_centers(square_cell, lambda x, y: 2 * x + y).flat()
    w = HybridVector.sample_at_centers(square_cell, lambda x, y: -x + 3 * y).flat()
    assert u @ op.stiffness @ w == pytest.approx(1.0 * (2 * -1 + 1 * 3), rel=1e-14)


def test_local_form_equals_diamond_integral(rng):
    for mesh in random_meshes(rng, 3, n_max=3):
        for K in range(0, mesh.n_cells, 3):
            u, w = rng.normal(size=(2, mesh.n_dofs))
            assert local_form_identity_error(mesh, K, u, w, mu=0.7) < 1e-12


def test_global_matches_gradient_factorisation(perturbed_mesh):
    m = perturbed_mesh
    D = gradient_operator(m)
    W = sp.diags(np.repeat(m.inc_diamond, 2))
    A = assemble_global(m, 1.3).matrix
    err = abs(A - 1.3 * (D.T @ W @ D)).max()
    assert err < 1e-13 * abs(A).max()


def test_global_single_cell_equals_local(square_cell):
    A = assemble_global(square_cell, 1.0).matrix.toarray()
    np.testing.assert_allclose(A, assemble_cell(square_cell, 0, 1.0).stiffness, atol=1e-15)


def test_global_kernel_is_constants(unit_mesh):
    A = assemble_global(unit_mesh, 1.0).matrix.toarray()
    assert np.abs(A @ np.ones(A.shape[0])).max() < 1e-13
    w = np.linalg.eigvalsh(A)
    assert abs(w[0]) < 1e-12 and w[1] > 1e-6          # one-dimensional kernel


def test_quadratic_form_equals_diamond_sum(mixed_mesh, rng):
    gd = assemble_global(mixed_mesh, 1.0)
    for _ in range(10):
        phi = rng.normal(size=mixed_mesh.n_dofs)
        assert gd.quadratic_form(phi) == pytest.approx(diamond_form(mixed_mesh, phi, phi), rel=1e-12)


def test_flux_identity_on_local_basis(perturbed_mesh, rng):
    m = perturbed_mesh
    for K in range(m.n_cells):
        op = assemble_cell(m, K, 1.0)
        u = rng.normal(size=op.dofs.size)
        F = fluxes(m, op, u)
        for j in range(op.dofs.size):
            w = np.zeros(op.dofs.size)
            w[j] = 1.0
            lhs = (op.face_measure * F * (w[0] - w[1:])).sum()
            rhs = w @ op.stiffness @ u
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12 * np.abs(op.stiffness @ u).max())


def test_flux_affine_unit_square(square_cell):
    op = assemble_cell(square_cell, 0, 1.0)
    u = HybridVector.sample_at_centers(square_cell, lambda x, y: x).flat()
    F = fluxes(square_cell, op, u)
    # faces bottom, right, top, left: F = -grad u . n
    np.testing.assert_allclose(F, [0.0, -1.0, 0.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(fluxes(square_cell, op, np.ones(5)), 0.0, atol=1e-15)


def test_incidence_fluxes_match_local(perturbed_mesh, rng):
    m = perturbed_mesh
    gd = assemble_global(m, 1.0)
    u = rng.normal(size=m.n_dofs)
    F = gd.incidence_fluxes(m, u)
    for K in (0, 7, m.n_cells - 1):
        op = assemble_cell(m, K, 1.0)
        s, e = m.cell_ptr[K], m.cell_ptr[K + 1]
        np.testing.assert_allclose(F[s:e], fluxes(m, op, op.local(u)), rtol=1e-12, atol=1e-12)


def test_conservativity_constant_and_negative_control(unit_mesh, rng):
    r = flux_conservativity_residual(unit_mesh, HybridVector.constant(unit_mesh, 1.0), 1.0)
    assert r.max_interior < 1e-13 and r.max_boundary < 1e-13
    bad = flux_conservativity_residual(unit_mesh, rng.normal(size=unit_mesh.n_dofs), 1.0)
    assert bad.max_interior > 1e-3


def test_schur_matches_full_solve(perturbed_mesh, rng):
    m = perturbed_mesh
    gd = assemble_global(m, 1.0)
    c = m.cell_area / 0.01
    fs = schur_face_system(gd, c)
    full = gd.matrix + sp.diags(np.concatenate([c, np.zeros(m.n_faces)]))
    b = rng.normal(size=m.n_dofs)
    x = dense_solve(full, b)
    for solver in ("direct", "cg"):
        y = fs.solve(b, solver=solver, tol=1e-14)
        np.testing.assert_allclose(y, x, rtol=1e-9, atol=1e-10 * np.abs(x).max())
    # constant data: the solution is the constant
    ones = full @ np.ones(m.n_dofs)
    np.testing.assert_allclose(fs.solve(ones), 1.0, rtol=1e-12)


def test_schur_single_cell_by_hand(square_cell):
    gd = assemble_global(square_cell, 1.0)
    A = gd.matrix.toarray()
    fs = schur_face_system(gd, 2.0)
    D = A[0, 0] + 2.0
    S = A[1:, 1:] - np.outer(A[1:, 0], A[0, 1:]) / D
    np.testing.assert_allclose(fs.S.toarray(), S, atol=1e-14)


def test_schur_singular_block(unit_mesh):
    gd = assemble_global(unit_mesh, 1.0)
    with pytest.raises(SingularBlock):
        schur_face_system(gd, -gd.cell_diagonal())


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), mu=st.floats(1e-3, 1e3))
def test_property_stiffness_identity(seed, mu):
    rng = np.random.default_rng(seed)
    mesh = random_meshes(rng, 1, n_max=4)[0]
    gd = assemble_global(mesh, mu)
    phi = rng.normal(size=mesh.n_dofs)
    assert gd.quadratic_form(phi) == pytest.approx(diamond_form(mesh, phi, phi, mu), rel=1e-11)


def test_beta_scales_stabilisation_only(unit_mesh, rng):
    phi = HybridVector.sample_at_centers(unit_mesh, lambda x, y: 1 + x - 2 * y).flat()
    a1 = assemble_global(unit_mesh, 1.0, beta=1.0).quadratic_form(phi)
    a5 = assemble_global(unit_mesh, 1.0, beta=5.0).quadratic_form(phi)
    assert a1 == pytest.approx(a5, rel=1e-12)         # residuals vanish on affine data
    r = rng.normal(size=unit_mesh.n_dofs)
    assert assemble_global(unit_mesh, 1.0, beta=5.0).quadratic_form(r) > \
        assemble_global(unit_mesh, 1.0, beta=1.0).quadratic_form(r)
