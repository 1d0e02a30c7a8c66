"""HMM local operators, global diffusion matrix, fluxes and static condensation.

Local unknowns of a cell are ordered ``[u_K, u_sigma_1, ..., u_sigma_m]`` with
the faces in the cell's incidence order. The default stabilisation is the
diagonal matrix with entries ``beta * mu * |D_{K,sigma}| * d / d_{K,sigma}^2``,
for which the local form equals ``mu`` times the diamond-wise integral of
``grad_D u . grad_D w`` when ``beta = 1``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels, linsolve
from .errors import SingularBlock, SolverFailure


@dataclass
class HmmCellOperator:
    cell: int
    dofs: np.ndarray          # global dof ids, cell first
    gradient: np.ndarray      # (2, m+1): local dofs -> grad_K
    residual: np.ndarray      # (m, m+1): local dofs -> R_K
    stabilisation: np.ndarray # (m, m), symmetric positive definite
    stiffness: np.ndarray     # (m+1, m+1)
    face_measure: np.ndarray  # (m,)

    @property
    def n_faces(self):
        return self.face_measure.shape[0]

    def local(self, flat):
        """Restrict a global hybrid array to this cell's unknowns."""
        return np.asarray(flat)[self.dofs]


def assemble_cell(mesh, K, mu, beta=1.0):
    if not mu > 0:
        raise ValueError("diffusion coefficient must be positive")
    s, e = mesh.cell_ptr[K], mesh.cell_ptr[K + 1]
    m = e - s
    area = mesh.cell_area[K]
    n = mesh.inc_normal[s:e]
    fm = mesh.inc_measure[s:e]
    d = mesh.inc_dist[s:e]
    G = np.zeros((2, m + 1))
    G[:, 1:] = (fm[:, None] * n).T / area
    offs = mesh.face_center[mesh.inc_face[s:e]] - mesh.cell_center[K]
    R = np.hstack([-np.ones((m, 1)), np.eye(m)]) - offs @ G
    B = np.diag(beta * mu * mesh.inc_diamond[s:e] * mesh.dim / d ** 2)
    A = mu * area * G.T @ G + R.T @ B @ R
    A = 0.5 * (A + A.T)
    dofs = np.concatenate([[K], mesh.n_cells + mesh.inc_face[s:e]]).astype(np.int64)
    return HmmCellOperator(int(K), dofs, G, R, B, A, fm.copy())


def fluxes(mesh, op, u):
    """Fluxes ``F_{K,sigma}(u)`` of one cell from its local unknowns.

    They satisfy ``sum_sigma |sigma| F_sigma (w_K - w_sigma) = w^T A_K u``
    for every local ``w``: the coefficient of ``w_sigma`` gives
    ``F_sigma = -(A_K u)_sigma / |sigma|``, and the ``w_K`` coefficient is
    consistent because the rows of ``A_K`` sum to zero.
    """
    a = op.stiffness @ np.asarray(u, dtype=float)
    return -a[1:] / op.face_measure


@dataclass
class GlobalDiffusion:
    """Assembled HMM diffusion matrix over the ``cells + faces`` unknowns."""

    matrix: sp.csr_matrix
    mu: float
    beta: float
    n_cells: int
    # triplets in cell order, kept for per-cell flux evaluation
    trip_cols: np.ndarray = field(repr=False)
    trip_vals: np.ndarray = field(repr=False)
    trip_inc: np.ndarray = field(repr=False)     # incidence of the row, -1 for cell rows

    @property
    def shape(self):
        return self.matrix.shape

    def as_sparse_sym(self):
        return linsolve.SparseSymMatrix.from_matrix(self.matrix)

    def quadratic_form(self, phi):
        phi = np.asarray(phi, dtype=float)
        return float(phi @ (self.matrix @ phi))

    def cell_diagonal(self):
        return self.matrix.diagonal()[:self.n_cells]

    def incidence_fluxes(self, mesh, u):
        """``F_{K,sigma}(u)`` for every incidence, shape (n_incidences,)."""
        u = np.asarray(u, dtype=float)
        keep = self.trip_inc >= 0
        a = np.bincount(self.trip_inc[keep], weights=self.trip_vals[keep] * u[self.trip_cols[keep]],
                        minlength=mesh.inc_face.shape[0])
        return -a / mesh.inc_measure


def assemble_global(mesh, mu, beta=1.0, backend=None):
    """Scatter all local stiffness matrices into one sparse matrix."""
    if not mu > 0:
        raise ValueError("diffusion coefficient must be positive")
    rows, cols, vals = kernels.hmm_local_triplets(mesh, mu, beta, backend=backend)
    n = mesh.n_dofs
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A = ((A + A.T) * 0.5).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    # map each triplet row back to its incidence
    sizes = np.diff(mesh.cell_ptr) + 1
    block = sizes * sizes
    trip_cell = np.repeat(np.arange(mesh.n_cells), block)
    pos = np.arange(rows.size) - np.repeat(np.cumsum(block) - block, block)
    local_row = pos // sizes[trip_cell]
    trip_inc = np.where(local_row > 0, mesh.cell_ptr[trip_cell] + local_row - 1, -1)
    return GlobalDiffusion(A, float(mu), float(beta), mesh.n_cells, cols, vals, trip_inc)


@dataclass
class ConservativityResidual:
    interior: np.ndarray      # F_K + F_L on interior faces (mesh.interior_faces order)
    boundary: np.ndarray      # F_K on boundary faces (mesh.boundary_faces order)
    flux_scale: float         # max |F_{K,sigma}|

    @property
    def max_interior(self):
        return float(np.abs(self.interior).max()) if self.interior.size else 0.0

    @property
    def max_boundary(self):
        return float(np.abs(self.boundary).max()) if self.boundary.size else 0.0


def flux_conservativity_residual(mesh, u, mu, diffusion=None):
    """Flux balance per face for a hybrid vector ``u``.

    Returns the raw sums ``F_{K,sigma} + F_{L,sigma}`` on interior faces and
    ``F_{K,sigma}`` on boundary faces; both vanish for a converged step of
    the scheme.
    """
    gd = diffusion if diffusion is not None else assemble_global(mesh, mu)
    flat = u.flat() if callable(getattr(u, "flat", None)) else np.asarray(u, dtype=float)
    F = gd.incidence_fluxes(mesh, flat)
    per_face = np.zeros(mesh.n_faces)
    np.add.at(per_face, mesh.inc_face, F)
    return ConservativityResidual(per_face[mesh.interior_faces], per_face[mesh.boundary_faces],
                                  float(np.abs(F).max()) if F.size else 0.0)


class FaceSystem:
    """Static condensation of a hybrid system onto the face unknowns.

    The cell block of ``A + diag(cell_block_diag, 0)`` is diagonal, because a
    cell unknown couples only to the faces of its own cell, so eliminating
    cell unknowns is exact and cheap.
    """

    def __init__(self, matrix, n_cells, cell_block_diag):
        A = sp.csr_matrix(matrix)
        nc = n_cells
        Acc = A[:nc, :nc].tocsr()
        off = Acc - sp.diags(Acc.diagonal())
        if off.count_nonzero():
            raise SingularBlock("cell block is not diagonal")
        D = Acc.diagonal() + np.broadcast_to(np.asarray(cell_block_diag, dtype=float), (nc,))
        if np.any(~(D > 0)):
            raise SingularBlock("cell block has a non-positive entry")
        self.n_cells = nc
        self.D = D
        self.inv_D = 1.0 / D
        self.A_cf = A[:nc, nc:].tocsr()
        self.A_fc = A[nc:, :nc].tocsr()
        A_ff = A[nc:, nc:].tocsr()
        S = A_ff - self.A_fc @ sp.diags(self.inv_D) @ self.A_cf
        self.S = ((S + S.T) * 0.5).tocsr()
        self._factor = None

    def reduce_rhs(self, b_cells, b_faces=None):
        r = -(self.A_fc @ (self.inv_D * b_cells))
        if b_faces is not None:
            r += b_faces
        return r

    def back_substitute(self, u_faces, b_cells):
        return self.inv_D * (b_cells - self.A_cf @ u_faces)

    def factorize(self):
        if self._factor is None:
            self._factor = linsolve.Factorized(self.S)
        return self._factor

    def solve_faces(self, rhs, solver="direct", tol=1e-12, x0=None):
        if solver == "direct":
            return self.factorize().solve(rhs)
        if solver == "cg":
            x, rep = linsolve.cg_solve(self.S, rhs, tol=tol, x0=x0, preconditioner="jacobi",
                                       max_iter=10 * self.S.shape[0] + 100)
            if not rep.converged:
                raise SolverFailure(f"face CG did not converge: residual {rep.residual:.2e}")
            return x
        raise ValueError(f"unknown solver {solver!r}")

    def solve(self, b, solver="direct", tol=1e-12):
        """Solve the full hybrid system for the flat right-hand side ``b``."""
        b = np.asarray(b, dtype=float)
        bc, bf = b[:self.n_cells], b[self.n_cells:]
        uf = self.solve_faces(self.reduce_rhs(bc, bf), solver, tol)
        return np.concatenate([self.back_substitute(uf, bc), uf])


def schur_face_system(diffusion, cell_block_diag):
    """Condense ``diffusion + diag(cell_block_diag on cells)`` onto the faces.

    Raises
    ------
    SingularBlock
        If some diagonal cell entry is not positive.
    """
    M = diffusion.matrix if isinstance(diffusion, GlobalDiffusion) else diffusion
    nc = diffusion.n_cells if isinstance(diffusion, GlobalDiffusion) else None
    if nc is None:
        raise ValueError("pass a GlobalDiffusion so the cell count is known")
    return FaceSystem(M, nc, cell_block_diag)


def local_form_identity_error(mesh, K, u, w, mu=1.0):
    """Relative gap between ``w^T A_K u`` and ``mu * int_K grad_D u . grad_D w``."""
    from .gdm import reconstruct_gradient

    op = assemble_cell(mesh, K, mu)
    gu = reconstruct_gradient(mesh, u).values
    gw = reconstruct_gradient(mesh, w).values
    s, e = mesh.cell_ptr[K], mesh.cell_ptr[K + 1]
    ref = mu * float((mesh.inc_diamond[s:e] * (gu[s:e] * gw[s:e]).sum(axis=1)).sum())
    val = float(op.local(w) @ op.stiffness @ op.local(u))
    scale = max(abs(ref), 1e-300)
    return abs(val - ref) / scale if math.isfinite(scale) else math.inf
