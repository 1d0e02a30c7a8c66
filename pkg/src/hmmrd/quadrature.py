"""Quadrature on triangles and on the diamond sub-triangles of a mesh."""

import numpy as np

# Degree-2 exact rule: three interior points, equal weights.
_BARY = np.array(
    [
        [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
    ]
)


def _split(tri):
    # tri: (m, 3, 2) -> (4m, 3, 2), midpoint subdivision
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    children = np.stack(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    )
    return children.reshape(-1, 3, 2)


def triangle_rule(triangles, refine=0):
    """Quadrature points and weights for a batch of triangles.

    Parameters
    ----------
    triangles : ndarray, shape (m, 3, 2)
        Vertex coordinates, any orientation.
    refine : int
        Number of midpoint subdivisions applied before the 3-point rule.
        Each level multiplies the point count by four; useful for data with
        jumps inside cells.

    Returns
    -------
    points : ndarray, shape (m, q, 2)
    weights : ndarray, shape (m, q)
        Weights sum to the triangle areas.
    """
    tri = np.asarray(triangles, dtype=float)
    m = tri.shape[0]
    sub = tri
    for _ in range(int(refine)):
        sub = _split(sub)
    nsub = sub.shape[0] // m if m else 4 ** int(refine)
    e1 = sub[:, 1] - sub[:, 0]
    e2 = sub[:, 2] - sub[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = np.einsum("qi,tid->tqd", _BARY, sub)
    w = np.repeat(area[:, None] / 3.0, 3, axis=1)
    return pts.reshape(m, nsub * 3, 2), w.reshape(m, nsub * 3)


def diamond_rule(mesh, refine=0):
    """Quadrature on every diamond ``D_{K,sigma}`` (triangle x_K, a, b).

    The diamonds of a cell partition it, so summing over the incidences of
    a cell integrates over the cell. Returned arrays are indexed by incidence.
    """
    tri = mesh.diamond_triangles()
    return triangle_rule(tri, refine)


def eval_on(func, points):
    """Evaluate ``func(x1, x2)`` on an array of points of shape (..., 2)."""
    out = func(points[..., 0], points[..., 1])
    return np.broadcast_to(np.asarray(out, dtype=float), points.shape[:-1]).copy()
