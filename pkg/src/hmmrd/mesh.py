"""Polytopal meshes in two dimensions.

A mesh stores cells, faces (edges) and the cell/face incidences in flat
numpy arrays. Cell-to-face incidence is kept in CSR form: the faces of cell
``K`` are ``inc_face[cell_ptr[K]:cell_ptr[K+1]]``, in the counter-clockwise
order of the cell's vertex list. All arrays are read-only once built.
"""

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateCell, MeshError, NonConformingFace, NonStarShaped, UnsupportedCellType

DIM = 2


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


class PolytopalMesh:
    """Cells, faces and geometry of a 2D polygonal mesh.

    Use :func:`build_from_arrays` or one of the structured builders rather
    than calling the constructor directly.
    """

    def __init__(self, vertices, cell_vptr, cell_vidx, cell_center, cell_area, cell_diameter,
                 face_vertices, face_measure, face_center, face_normal, face_cells,
                 cell_ptr, inc_face, inc_sign, inc_dist):
        self.vertices = vertices
        self.cell_vptr = cell_vptr
        self.cell_vidx = cell_vidx
        self.cell_center = cell_center
        self.cell_area = cell_area
        self.cell_diameter = cell_diameter
        self.face_vertices = face_vertices
        self.face_measure = face_measure
        self.face_center = face_center
        self.face_normal = face_normal
        self.face_cells = face_cells
        self.cell_ptr = cell_ptr
        self.inc_face = inc_face
        self.inc_sign = inc_sign
        self.inc_dist = inc_dist
        # derived per-incidence arrays
        self.inc_cell = np.repeat(np.arange(self.n_cells), np.diff(cell_ptr))
        self.inc_normal = face_normal[inc_face] * inc_sign[:, None]
        self.inc_measure = face_measure[inc_face]
        self.inc_diamond = self.inc_measure * inc_dist / DIM
        _readonly(vertices, cell_vptr, cell_vidx, cell_center, cell_area, cell_diameter,
                  face_vertices, face_measure, face_center, face_normal, face_cells,
                  cell_ptr, inc_face, inc_sign, inc_dist, self.inc_cell, self.inc_normal,
                  self.inc_measure, self.inc_diamond)

    # ------------------------------------------------------------------ sizes
    @property
    def n_cells(self):
        return self.cell_area.shape[0]

    @property
    def n_faces(self):
        return self.face_measure.shape[0]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_dofs(self):
        """Size of the hybrid space: one unknown per cell plus one per face."""
        return self.n_cells + self.n_faces

    @property
    def dim(self):
        return DIM

    @cached_property
    def boundary_faces(self):
        idx = np.flatnonzero(self.face_cells[:, 1] < 0)
        _readonly(idx)
        return idx

    @cached_property
    def interior_faces(self):
        idx = np.flatnonzero(self.face_cells[:, 1] >= 0)
        _readonly(idx)
        return idx

    @property
    def h(self):
        """Mesh size ``h_M``: largest cell diameter."""
        return float(self.cell_diameter.max())

    @property
    def measure(self):
        return float(self.cell_area.sum())

    def cell_faces(self, K):
        return self.inc_face[self.cell_ptr[K]:self.cell_ptr[K + 1]]

    def cell_vertex_ids(self, K):
        return self.cell_vidx[self.cell_vptr[K]:self.cell_vptr[K + 1]]

    def faces_per_cell(self):
        return np.diff(self.cell_ptr)

    def is_triangular(self):
        return bool(np.all(np.diff(self.cell_vptr) == 3))

    def diamond_triangles(self):
        """Vertices (x_K, a, b) of every diamond, shape (n_incidences, 3, 2)."""
        fv = self.face_vertices[self.inc_face]
        return np.stack(
            [self.cell_center[self.inc_cell], self.vertices[fv[:, 0]], self.vertices[fv[:, 1]]],
            axis=1,
        )

    def cell_vertex_lists(self):
        return [self.cell_vertex_ids(K).tolist() for K in range(self.n_cells)]

    def hash(self):
        """Content hash of vertex coordinates, connectivity and cell centers."""
        h = hashlib.sha256()
        for arr in (self.vertices, self.cell_vptr, self.cell_vidx, self.cell_center):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    # ------------------------------------------------------------- invariants
    def check_invariants(self, domain_measure=None, rtol=1e-12):
        """Assert the structural invariants of a valid mesh.

        Raises :class:`MeshError` describing the first violated property.
        """
        if domain_measure is not None:
            if abs(self.measure - domain_measure) > rtol * domain_measure:
                raise MeshError(f"cell areas sum to {self.measure}, expected {domain_measure}")
        nb = (self.face_cells >= 0).sum(axis=1)
        if np.any(nb < 1):
            raise MeshError("face without owner")
        # interior/boundary normal antisymmetry holds by construction (one
        # global normal per face); verify the signs anyway
        sgn = np.zeros((self.n_faces, 2))
        counts = np.zeros(self.n_faces, dtype=int)
        for i, f in enumerate(self.inc_face):
            sgn[f, counts[f]] = self.inc_sign[i]
            counts[f] += 1
        if np.any(counts != nb):
            raise MeshError("incidence count does not match owner list")
        inter = nb == 2
        if np.any(sgn[inter, 0] != -sgn[inter, 1]):
            raise MeshError("interior face normals are not opposite")
        per = np.add.reduceat(self.inc_measure, self.cell_ptr[:-1])
        closure = np.zeros((self.n_cells, 2))
        np.add.at(closure, self.inc_cell, self.inc_measure[:, None] * self.inc_normal)
        if np.any(np.abs(closure) > rtol * per[:, None] * 10):
            raise MeshError("closed-surface identity violated")
        dsum = np.add.reduceat(self.inc_diamond, self.cell_ptr[:-1])
        if np.any(np.abs(dsum - self.cell_area) > rtol * 10 * self.cell_area):
            raise MeshError("diamond measures do not sum to the cell measure")
        if np.any(self.inc_dist <= 0):
            raise NonStarShaped("non-positive center-to-face distance")
        return True

    def __repr__(self):
        return (f"PolytopalMesh(cells={self.n_cells}, faces={self.n_faces}, "
                f"vertices={self.n_vertices}, h={self.h:.4g})")


# --------------------------------------------------------------------- builders
def _polygon_area_centroid(p):
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if area == 0.0:
        return 0.0, p.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return area, np.array([cx, cy])


def build_from_arrays(vertices, cell_vertex_lists, cell_centers=None):
    """Build a polygonal mesh from vertex coordinates and cell vertex lists.

    Parameters
    ----------
    vertices : array_like, shape (nv, 2)
    cell_vertex_lists : sequence of sequences of int
        Vertex ids of each cell in counter-clockwise order.
    cell_centers : array_like, shape (nc, 2), optional
        Star-shaping points ``x_K``. Centroids are used when omitted.

    Raises
    ------
    DegenerateCell
        If a cell has non-positive shoelace area.
    NonStarShaped
        If some orthogonal distance from ``x_K`` to a face of ``K`` is not positive.
    NonConformingFace
        If an edge belongs to more than two cells.
    """
    verts = np.array(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != DIM:
        raise MeshError(f"vertices must have shape (nv, {DIM})")
    nv = verts.shape[0]
    nc = len(cell_vertex_lists)
    if nc == 0:
        raise MeshError("mesh has no cells")

    vptr = np.zeros(nc + 1, dtype=np.int64)
    vidx = []
    areas = np.empty(nc)
    centroids = np.empty((nc, 2))
    diam = np.empty(nc)
    for K, cv in enumerate(cell_vertex_lists):
        cv = [int(i) for i in cv]
        if len(cv) < 3:
            raise DegenerateCell(f"cell {K} has fewer than 3 vertices")
        if min(cv) < 0 or max(cv) >= nv:
            raise MeshError(f"cell {K} references a vertex out of range")
        if len(set(cv)) != len(cv):
            raise DegenerateCell(f"cell {K} repeats a vertex")
        p = verts[cv]
        a, c = _polygon_area_centroid(p)
        if not a > 0.0:
            raise DegenerateCell(f"cell {K} has non-positive area {a}")
        areas[K] = a
        centroids[K] = c
        d = p[:, None, :] - p[None, :, :]
        diam[K] = np.sqrt((d ** 2).sum(axis=2).max())
        vidx.extend(cv)
        vptr[K + 1] = len(vidx)
    vidx = np.array(vidx, dtype=np.int64)

    if cell_centers is None:
        centers = centroids
    else:
        centers = np.array(cell_centers, dtype=float)
        if centers.shape != (nc, 2):
            raise MeshError("cell_centers must have shape (nc, 2)")

    # faces: first owner fixes the global orientation
    face_of = {}
    fverts = []
    fcells = []
    inc_face = np.empty(len(vidx), dtype=np.int64)
    inc_sign = np.empty(len(vidx))
    for K in range(nc):
        s, e = vptr[K], vptr[K + 1]
        cv = vidx[s:e]
        m = e - s
        for j in range(m):
            a, b = int(cv[j]), int(cv[(j + 1) % m])
            key = (a, b) if a < b else (b, a)
            f = face_of.get(key)
            if f is None:
                f = len(fverts)
                face_of[key] = f
                fverts.append((a, b))
                fcells.append([K, -1])
                inc_sign[s + j] = 1.0
            else:
                if fcells[f][1] >= 0:
                    raise NonConformingFace(f"edge {key} shared by more than two cells")
                if fverts[f] != (b, a):
                    raise NonConformingFace(
                        f"edge {key} traversed in the same direction by two cells "
                        "(inconsistent orientation)")
                fcells[f][1] = K
                inc_sign[s + j] = -1.0
            inc_face[s + j] = f
    fverts = np.array(fverts, dtype=np.int64)
    fcells = np.array(fcells, dtype=np.int64)
    pa, pb = verts[fverts[:, 0]], verts[fverts[:, 1]]
    edge = pb - pa
    fmeas = np.sqrt((edge ** 2).sum(axis=1))
    if np.any(fmeas <= 0):
        raise DegenerateCell("zero-length face")
    fcenter = 0.5 * (pa + pb)
    # outward for the first owner (counter-clockwise traversal a -> b)
    fnormal = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / fmeas[:, None]

    inc_cell = np.repeat(np.arange(nc), np.diff(vptr))
    inc_normal = fnormal[inc_face] * inc_sign[:, None]
    inc_dist = ((fcenter[inc_face] - centers[inc_cell]) * inc_normal).sum(axis=1)
    bad = np.flatnonzero(inc_dist <= 0.0)
    if bad.size:
        K = int(inc_cell[bad[0]])
        raise NonStarShaped(f"cell {K} is not strictly star-shaped with respect to its center")

    return PolytopalMesh(verts, vptr, vidx, centers, areas, diam, fverts, fmeas, fcenter,
                         fnormal, fcells, vptr.copy(), inc_face, inc_sign, inc_dist)


def build_box_triangular(x0, x1, y0, y1, n):
    """Triangulate ``[x0, x1] x [y0, y1]`` with the crossed-diagonal pattern.

    Each of the ``n x n`` rectangles is split by both diagonals into four
    triangles sharing the rectangle center, giving ``4 n**2`` cells.
    """
    if not (x1 > x0 and y1 > y0):
        raise MeshError("empty box")
    n = int(n)
    if n < 1:
        raise MeshError("n must be at least 1")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([X.ravel(), Y.ravel()], axis=1)
    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    XC, YC = np.meshgrid(xc, yc, indexing="ij")
    centers = np.stack([XC.ravel(), YC.ravel()], axis=1)
    verts = np.vstack([grid, centers])
    ng = (n + 1) ** 2

    def g(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            c = ng + i * n + j
            v00, v10, v11, v01 = g(i, j), g(i + 1, j), g(i + 1, j + 1), g(i, j + 1)
            cells.append((v00, v10, c))
            cells.append((v10, v11, c))
            cells.append((v11, v01, c))
            cells.append((v01, v00, c))
    return build_from_arrays(verts, cells)


def build_uniform_triangular(L, n):
    """Crossed-diagonal triangulation of ``[-L, L]^2`` with ``4 n**2`` cells."""
    if not L > 0:
        raise MeshError("L must be positive")
    return build_box_triangular(-L, L, -L, L, n)


def refine_uniform(mesh):
    """Split every triangle into four by its edge midpoints.

    Raises
    ------
    UnsupportedCellType
        If the mesh has a non-triangular cell.
    """
    if not mesh.is_triangular():
        raise UnsupportedCellType("refine_uniform needs a triangular mesh")
    nv = mesh.n_vertices
    fv = mesh.face_vertices
    mids = 0.5 * (mesh.vertices[fv[:, 0]] + mesh.vertices[fv[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    cells = []
    for K in range(mesh.n_cells):
        p0, p1, p2 = mesh.cell_vertex_ids(K)
        f01, f12, f20 = mesh.cell_faces(K)
        m01, m12, m20 = nv + f01, nv + f12, nv + f20
        cells.append((p0, m01, m20))
        cells.append((m01, p1, m12))
        cells.append((m20, m12, p2))
        cells.append((m01, m12, m20))
    return build_from_arrays(verts, cells)


def boundary_vertex_mask(mesh):
    mask = np.zeros(mesh.n_vertices, dtype=bool)
    mask[mesh.face_vertices[mesh.boundary_faces].ravel()] = True
    return mask


def perturb_vertices(mesh, amplitude, rng):
    """Randomly displace interior vertices and rebuild the mesh.

    Each interior vertex moves by a uniform offset in
    ``[-amplitude, amplitude]^2`` scaled by the smallest height
    ``2|K| / h_K`` of the cells around it. Boundary vertices stay put so the
    domain is unchanged. For triangular meshes any ``amplitude < 0.7``
    keeps every cell positively oriented.
    """
    fixed = boundary_vertex_mask(mesh)
    local = np.full(mesh.n_vertices, np.inf)
    height = 2.0 * mesh.cell_area / mesh.cell_diameter
    owner = np.repeat(np.arange(mesh.n_cells), np.diff(mesh.cell_vptr))
    np.minimum.at(local, mesh.cell_vidx, height[owner])
    shift = rng.uniform(-amplitude, amplitude, size=(mesh.n_vertices, 2)) * local[:, None]
    shift[fixed] = 0.0
    return build_from_arrays(mesh.vertices + shift, mesh.cell_vertex_lists())


# ------------------------------------------------------------------- regularity
@dataclass(frozen=True)
class MeshRegularity:
    """Regularity report of a mesh.

    ``theta`` is the maximum over cells of ``max_sigma h_K / d_{K,sigma} +
    Card(E_K)`` plus the maximum over interior faces of
    ``d_{K,sigma}/d_{L,sigma} + d_{L,sigma}/d_{K,sigma}``.
    """

    theta: float
    cell_flatness: np.ndarray       # max_sigma h_K / d_{K,sigma}, per cell
    face_count: np.ndarray          # Card(E_K), per cell
    distance_ratio: np.ndarray      # max(dK/dL, dL/dK), per interior face

    @property
    def cell_term(self):
        return float((self.cell_flatness + self.face_count).max())

    @property
    def face_term(self):
        if self.distance_ratio.size == 0:
            return 0.0
        r = self.distance_ratio
        return float((r + 1.0 / r).max())


def regularity(mesh):
    """Compute the regularity factor ``theta_M`` of ``mesh``."""
    ratio = mesh.cell_diameter[mesh.inc_cell] / mesh.inc_dist
    flat = np.maximum.reduceat(ratio, mesh.cell_ptr[:-1])
    count = np.diff(mesh.cell_ptr)
    # distance of each face from each owner
    dist = np.zeros((mesh.n_faces, 2))
    slot = (mesh.inc_sign < 0).astype(int)
    dist[mesh.inc_face, slot] = mesh.inc_dist
    inter = mesh.interior_faces
    dk, dl = dist[inter, 0], dist[inter, 1]
    dr = np.maximum(dk / dl, dl / dk)
    cell_term = (flat + count).max()
    face_term = (dk / dl + dl / dk).max() if inter.size else 0.0
    return MeshRegularity(float(cell_term + face_term), flat, count, dr)


# ---------------------------------------------------------------------- file io
def write_mesh(mesh, path):
    """Write the line-based mesh format (see ``docs/mesh_format.md``)."""
    with open(path, "w") as fh:
        fh.write(f"cells {mesh.n_cells} faces {mesh.n_faces} vertices {mesh.n_vertices} dim 2\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for K in range(mesh.n_cells):
            fh.write(" ".join(str(int(i)) for i in mesh.cell_vertex_ids(K)) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh` (``#`` starts a comment)."""
    with open(path) as fh:
        lines = []
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if text:
                lines.append((lineno, text))
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    lineno, header = lines[0]
    tok = header.split()
    if len(tok) != 8 or tok[0::2] != ["cells", "faces", "vertices", "dim"]:
        raise MeshError(f"{path}:{lineno}: bad header {header!r}")
    try:
        nc, nf, nv, dim = (int(t) for t in tok[1::2])
    except ValueError:
        raise MeshError(f"{path}:{lineno}: non-integer header field") from None
    if dim != 2:
        raise MeshError(f"{path}:{lineno}: only dim 2 is supported")
    body = lines[1:]
    if len(body) != nv + nc:
        raise MeshError(f"{path}: expected {nv + nc} records, found {len(body)}")
    verts = np.empty((nv, 2))
    for i in range(nv):
        lineno, text = body[i]
        parts = text.split()
        if len(parts) != 2:
            raise MeshError(f"{path}:{lineno}: vertex record needs 2 coordinates")
        try:
            verts[i] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshError(f"{path}:{lineno}: malformed coordinate") from None
    cells = []
    for lineno, text in body[nv:]:
        try:
            cells.append([int(t) for t in text.split()])
        except ValueError:
            raise MeshError(f"{path}:{lineno}: malformed vertex index") from None
    mesh = build_from_arrays(verts, cells)
    if mesh.n_faces != nf:
        raise MeshError(f"{path}: header declares {nf} faces, mesh has {mesh.n_faces}")
    return mesh
