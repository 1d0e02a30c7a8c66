"""Pure-Python reference implementation of the per-cell HMM kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``HMMRD_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np


def hmm_local_triplets(cell_ptr, inc_face, inc_normal, inc_measure, inc_dist, inc_fcenter,
                       cell_center, cell_area, mu, beta):
    nc = cell_area.shape[0]
    sizes = np.diff(cell_ptr) + 1
    ntrip = int((sizes * sizes).sum())
    rows = np.empty(ntrip, dtype=np.int64)
    cols = np.empty(ntrip, dtype=np.int64)
    vals = np.empty(ntrip)
    pos = 0
    for K in range(nc):
        s, e = cell_ptr[K], cell_ptr[K + 1]
        m = e - s
        area = cell_area[K]
        n = inc_normal[s:e]
        fm = inc_measure[s:e]
        d = inc_dist[s:e]
        G = np.zeros((2, m + 1))
        G[:, 1:] = (fm[:, None] * n).T / area
        offs = inc_fcenter[s:e] - cell_center[K]
        R = -offs @ G
        R[:, 0] -= 1.0
        R[:, 1:] += np.eye(m)
        B = beta * mu * fm / d
        A = mu * area * (G.T @ G) + R.T @ (B[:, None] * R)
        dofs = np.empty(m + 1, dtype=np.int64)
        dofs[0] = K
        dofs[1:] = nc + inc_face[s:e]
        size = (m + 1) * (m + 1)
        rows[pos:pos + size] = np.repeat(dofs, m + 1)
        cols[pos:pos + size] = np.tile(dofs, m + 1)
        vals[pos:pos + size] = A.ravel()
        pos += size
    return rows, cols, vals


def diamond_gradients(cell_ptr, inc_face, inc_normal, inc_measure, inc_dist, inc_fcenter,
                      cell_center, cell_area, phi):
    nc = cell_area.shape[0]
    ninc = inc_face.shape[0]
    grads = np.empty((ninc, 2))
    resid = np.empty(ninc)
    sqrt_d = math.sqrt(2.0)
    for K in range(nc):
        s, e = cell_ptr[K], cell_ptr[K + 1]
        n = inc_normal[s:e]
        phis = phi[nc + inc_face[s:e]]
        gK = (inc_measure[s:e, None] * phis[:, None] * n).sum(axis=0) / cell_area[K]
        r = phis - phi[K] - (inc_fcenter[s:e] - cell_center[K]) @ gK
        resid[s:e] = r
        grads[s:e] = gK + (sqrt_d * r / inc_dist[s:e])[:, None] * n
    return grads, resid
