"""Gradient discretisation built on the HMM unknowns.

The hybrid space holds one value per cell and one per face; the cell space
holds one value per cell. Functions are reconstructed cell-wise constant and
gradients diamond-wise constant. Flat hybrid arrays are ordered
``[cell values..., face values...]``.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels, linsolve
from .errors import PreconditionError, SolverFailure
from .quadrature import diamond_rule, eval_on


# ------------------------------------------------------------------------ types
@dataclass
class HybridVector:
    """Element of the hybrid space: ``cell[K]`` and ``face[sigma]``."""

    cell: np.ndarray
    face: np.ndarray

    def __post_init__(self):
        self.cell = np.asarray(self.cell, dtype=float)
        self.face = np.asarray(self.face, dtype=float)
        if not (np.all(np.isfinite(self.cell)) and np.all(np.isfinite(self.face))):
            raise ValueError("HybridVector entries must be finite")

    @classmethod
    def from_flat(cls, mesh, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (mesh.n_dofs,):
            raise ValueError(f"expected {mesh.n_dofs} hybrid values, got {flat.shape}")
        return cls(flat[:mesh.n_cells].copy(), flat[mesh.n_cells:].copy())

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros(mesh.n_cells), np.zeros(mesh.n_faces))

    @classmethod
    def constant(cls, mesh, c):
        return cls(np.full(mesh.n_cells, float(c)), np.full(mesh.n_faces, float(c)))

    @classmethod
    def sample_at_centers(cls, mesh, func):
        """Point values at cell centers and face centers of mass."""
        return cls(eval_on(func, mesh.cell_center), eval_on(func, mesh.face_center))

    def flat(self):
        return np.concatenate([self.cell, self.face])

    def check(self, mesh):
        if self.cell.shape != (mesh.n_cells,) or self.face.shape != (mesh.n_faces,):
            raise ValueError("HybridVector does not match the mesh")
        return self


@dataclass
class CellVector:
    """Element of the cell space: one value per cell."""

    cell: np.ndarray

    def __post_init__(self):
        self.cell = np.asarray(self.cell, dtype=float)
        if not np.all(np.isfinite(self.cell)):
            raise ValueError("CellVector entries must be finite")

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros(mesh.n_cells))

    def check(self, mesh):
        if self.cell.shape != (mesh.n_cells,):
            raise ValueError("CellVector does not match the mesh")
        return self


@dataclass
class PiecewiseConstantField:
    """A function constant on each cell."""

    values: np.ndarray


@dataclass
class DiamondGradientField:
    """A vector field constant on each diamond, indexed by incidence.

    ``weights`` are the diamond measures, so ``sum(weights * |values|^2)`` is
    the squared L2 norm.
    """

    values: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray = None

    def l2_norm(self):
        return math.sqrt(float((self.weights * (self.values ** 2).sum(axis=1)).sum()))


def _as_flat(mesh, phi):
    if isinstance(phi, HybridVector):
        phi.check(mesh)
        return phi.flat()
    flat = np.asarray(phi, dtype=float)
    if flat.shape != (mesh.n_dofs,):
        raise ValueError(f"expected {mesh.n_dofs} hybrid values, got {flat.shape}")
    return flat


# ------------------------------------------------------------------- operators
def cell_gradient(mesh, phi, K):
    """Cell-wise constant gradient: ``(1/|K|) sum |sigma| phi_sigma n_{K,sigma}``."""
    flat = _as_flat(mesh, phi)
    s, e = mesh.cell_ptr[K], mesh.cell_ptr[K + 1]
    vals = flat[mesh.n_cells + mesh.inc_face[s:e]]
    g = (mesh.inc_measure[s:e, None] * vals[:, None] * mesh.inc_normal[s:e]).sum(axis=0)
    return g / mesh.cell_area[K]


def stabilisation_residual(mesh, phi, K):
    """Face residuals ``phi_sigma - phi_K - grad_K phi . (x_sigma - x_K)`` of cell K."""
    flat = _as_flat(mesh, phi)
    s, e = mesh.cell_ptr[K], mesh.cell_ptr[K + 1]
    g = cell_gradient(mesh, flat, K)
    faces = mesh.inc_face[s:e]
    offs = mesh.face_center[faces] - mesh.cell_center[K]
    return flat[mesh.n_cells + faces] - flat[K] - offs @ g


def reconstruct_gradient(mesh, phi, backend=None):
    """Diamond-wise gradient reconstruction of a hybrid vector.

    On the diamond of ``(K, sigma)`` the value is
    ``grad_K phi + sqrt(d)/d_{K,sigma} R_{K,sigma}(phi) n_{K,sigma}``.
    """
    flat = _as_flat(mesh, phi)
    grads, resid = kernels.diamond_gradients(mesh, flat, backend=backend)
    return DiamondGradientField(grads, mesh.inc_diamond, resid)


def gradient_operator(mesh):
    """Sparse matrix of the gradient reconstruction.

    Rows ``2*i`` and ``2*i+1`` give the two components of the gradient on the
    diamond of incidence ``i``. Built independently of the kernels, so it
    doubles as a cross-check of both the kernels and the HMM stiffness.
    """
    nc = mesh.n_cells
    ninc = mesh.inc_face.shape[0]
    sizes = np.diff(mesh.cell_ptr)
    cell = mesh.inc_cell
    rep = sizes[cell]
    j_idx = np.repeat(np.arange(ninc), rep)
    start = np.repeat(mesh.cell_ptr[cell], rep)
    group_start = np.repeat(np.cumsum(rep) - rep, rep)
    i_idx = start + (np.arange(j_idx.size) - group_start)
    K = cell[j_idx]
    area = mesh.cell_area[K]
    Gi = mesh.inc_measure[i_idx, None] * mesh.inc_normal[i_idx] / area[:, None]
    offs_j = mesh.face_center[mesh.inc_face[j_idx]] - mesh.cell_center[K]
    Ti = (offs_j * Gi).sum(axis=1)
    coef = math.sqrt(mesh.dim) / mesh.inc_dist[j_idx]
    nj = mesh.inc_normal[j_idx]
    delta = (i_idx == j_idx).astype(float)
    face_col = nc + mesh.inc_face[i_idx]
    rows, cols, vals = [], [], []
    for c in range(2):
        rows.append(2 * j_idx + c)
        cols.append(face_col)
        vals.append(Gi[:, c] + coef * nj[:, c] * (delta - Ti))
        # cell unknown enters only through R_{K,sigma}
        rows.append(2 * np.arange(ninc) + c)
        cols.append(cell)
        vals.append(-math.sqrt(mesh.dim) / mesh.inc_dist * mesh.inc_normal[:, c])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(2 * ninc, mesh.n_dofs),
    )


def pi_d(mesh, phi):
    """Cell-wise constant reconstruction of a hybrid vector."""
    if isinstance(phi, HybridVector):
        return PiecewiseConstantField(phi.check(mesh).cell.copy())
    return PiecewiseConstantField(_as_flat(mesh, phi)[:mesh.n_cells].copy())


def pi_d_prime(mesh, psi):
    """Cell-wise constant reconstruction of a cell vector."""
    if isinstance(psi, CellVector):
        return PiecewiseConstantField(psi.check(mesh).cell.copy())
    vals = np.asarray(psi, dtype=float)
    if vals.shape != (mesh.n_cells,):
        raise ValueError("cell vector does not match the mesh")
    return PiecewiseConstantField(vals.copy())


# ------------------------------------------------------------------ integrals
def cell_averages(mesh, func, refine=0):
    """Cell means of ``func`` by the degree-2 rule on the diamond sub-triangles."""
    pts, w = diamond_rule(mesh, refine)
    vals = eval_on(func, pts)
    inc_int = (w * vals).sum(axis=1)
    return np.bincount(mesh.inc_cell, weights=inc_int, minlength=mesh.n_cells) / mesh.cell_area


def integrate_cells(mesh, values):
    """Integral of the cell-wise constant function with the given cell values."""
    return float(np.dot(mesh.cell_area, values))


def l2_norm_cells(mesh, values):
    values = np.asarray(values, dtype=float)
    return math.sqrt(float(np.dot(mesh.cell_area, values * values)))


def interpolate_initial_u(mesh, u_ini, face_values="sample", refine=0):
    """Interpolate initial data into the hybrid space.

    Cell values are cell averages. Face values are point samples at the face
    centers of mass (``face_values="sample"``) or zero (``"zero"``). The zero
    option gives a gradient reconstruction that does not approximate
    ``grad u_ini`` and is kept only for comparison runs.
    """
    cell = cell_averages(mesh, u_ini, refine)
    if face_values == "sample":
        face = eval_on(u_ini, mesh.face_center)
    elif face_values == "zero":
        face = np.zeros(mesh.n_faces)
    else:
        raise ValueError(f"face_values must be 'sample' or 'zero', got {face_values!r}")
    return HybridVector(cell, face)


def interpolate_initial_v(mesh, v_ini, refine=0):
    """Cell averages of ``v_ini``."""
    return CellVector(cell_averages(mesh, v_ini, refine))


def discrete_norm(mesh, phi):
    """``||Pi phi||_L2 + ||grad_D phi||_L2``."""
    flat = _as_flat(mesh, phi)
    return l2_norm_cells(mesh, flat[:mesh.n_cells]) + reconstruct_gradient(mesh, flat).l2_norm()


def hilbert_norm(mesh, phi):
    """``(||Pi phi||^2 + ||grad_D phi||^2)^(1/2)``, within sqrt(2) of :func:`discrete_norm`."""
    flat = _as_flat(mesh, phi)
    a = l2_norm_cells(mesh, flat[:mesh.n_cells])
    b = reconstruct_gradient(mesh, flat).l2_norm()
    return math.sqrt(a * a + b * b)


# ----------------------------------------------------------- quality measures
def _gram_matrix(mesh):
    from .hmm import assemble_global

    A = assemble_global(mesh, 1.0).matrix
    return (A + sp.diags(np.concatenate([mesh.cell_area, np.zeros(mesh.n_faces)]))).tocsr()


def _spd_solve(M, b, solver, tol):
    if solver == "direct":
        return linsolve.sparse_direct_solve(M, b)
    if solver == "cg":
        x, rep = linsolve.cg_solve(M, b, tol=tol, max_iter=20 * M.shape[0], preconditioner="jacobi")
        if not rep.converged:
            raise SolverFailure(
                f"CG stalled after {rep.iterations} iterations (residual {rep.residual:.2e})")
        return x
    raise ValueError(f"unknown solver {solver!r}")


def _vector_on(func, pts):
    out = func(pts[..., 0], pts[..., 1])
    return np.stack([np.broadcast_to(np.asarray(c, dtype=float), pts.shape[:-1]) for c in out],
                    axis=-1)


def consistency_measure_u(mesh, phi, grad_phi, refine=0, solver="direct", tol=1e-12):
    """Hilbert form of the consistency measure for the hybrid space.

    Returns ``min_w (||Pi w - phi||^2 + ||grad_D w - grad phi||^2)^(1/2)``,
    which lies within a factor sqrt(2) of the sum-of-norms form. The
    minimiser solves ``(M + A) w = b`` where ``M`` is the cell mass matrix
    and ``A`` the unit-coefficient stiffness; the functional is then
    evaluated directly with the same quadrature used for ``b``.
    """
    pts, w = diamond_rule(mesh, refine)
    phiv = eval_on(phi, pts)
    gphi = _vector_on(grad_phi, pts)
    nc = mesh.n_cells
    b = np.zeros(mesh.n_dofs)
    b[:nc] = np.bincount(mesh.inc_cell, weights=(w * phiv).sum(axis=1), minlength=nc)
    Ig = (w[..., None] * gphi).sum(axis=1)                  # (ninc, 2)
    D = gradient_operator(mesh)
    b += D.T @ Ig.ravel()
    x = _spd_solve(_gram_matrix(mesh), b, solver, tol)
    return _distance_from(mesh, x, pts, w, phiv, gphi)


def _distance_from(mesh, x, pts, w, phiv, gphi):
    cell_err = (w * (x[mesh.inc_cell][:, None] - phiv) ** 2).sum()
    g = reconstruct_gradient(mesh, x).values
    grad_err = (w * ((g[:, None, :] - gphi) ** 2).sum(axis=2)).sum()
    return math.sqrt(float(cell_err + grad_err))


def interpolant_distance(mesh, phi, grad_phi, refine=0):
    """Same functional as :func:`consistency_measure_u` at the center-sampling interpolant."""
    pts, w = diamond_rule(mesh, refine)
    x = HybridVector.sample_at_centers(mesh, phi).flat()
    return _distance_from(mesh, x, pts, w, eval_on(phi, pts), _vector_on(grad_phi, pts))


def consistency_measure_v(mesh, psi, refine=0):
    """``||cell-average(psi) - psi||_L2``; the cell average is the exact minimiser."""
    pts, w = diamond_rule(mesh, refine)
    vals = eval_on(psi, pts)
    avg = np.bincount(mesh.inc_cell, weights=(w * vals).sum(axis=1),
                      minlength=mesh.n_cells) / mesh.cell_area
    return math.sqrt(float((w * (avg[mesh.inc_cell][:, None] - vals) ** 2).sum()))


def _check_no_flux(mesh, psi, tol):
    bf = mesh.boundary_faces
    if bf.size == 0:
        return
    ends = mesh.vertices[mesh.face_vertices[bf]]              # (nb, 2, 2)
    pts = np.concatenate([ends, mesh.face_center[bf][:, None, :]], axis=1)
    vals = _vector_on(psi, pts)
    normal = mesh.face_normal[bf]
    flux = np.abs((vals * normal[:, None, :]).sum(axis=2)).max()
    scale = max(1.0, float(np.abs(vals).max()))
    if flux > tol * scale:
        raise PreconditionError(f"vector field has normal component {flux:.3e} on the boundary")


def limit_conformity_measure(mesh, psi, div_psi, refine=0, solver="direct", tol=1e-12,
                             boundary_tol=1e-10):
    """Dual-norm form of the limit-conformity measure.

    Evaluates ``sup_w |int grad_D w . psi + Pi w div psi| / ||w||_H`` with
    the Hilbert norm ``||w||_H^2 = ||Pi w||^2 + ||grad_D w||^2`` as
    ``sqrt(b^T (M + A)^{-1} b)``.

    Raises
    ------
    PreconditionError
        If ``psi . n`` does not vanish on the boundary.
    """
    _check_no_flux(mesh, psi, boundary_tol)
    pts, w = diamond_rule(mesh, refine)
    pv = _vector_on(psi, pts)
    dv = eval_on(div_psi, pts)
    nc = mesh.n_cells
    b = np.zeros(mesh.n_dofs)
    b[:nc] = np.bincount(mesh.inc_cell, weights=(w * dv).sum(axis=1), minlength=nc)
    b += gradient_operator(mesh).T @ (w[..., None] * pv).sum(axis=1).ravel()
    if not np.any(b):
        return 0.0
    x = _spd_solve(_gram_matrix(mesh), b, solver, tol)
    return math.sqrt(max(float(b @ x), 0.0))
