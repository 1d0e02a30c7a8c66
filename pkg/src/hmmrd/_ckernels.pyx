# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell HMM kernels (see ``_pykernels`` for the reference version)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF MAXF = 64


def hmm_local_triplets(const cnp.int64_t[::1] cell_ptr, const cnp.int64_t[::1] inc_face,
                       const double[:, ::1] inc_normal, const double[::1] inc_measure,
                       const double[::1] inc_dist, const double[:, ::1] inc_fcenter,
                       const double[:, ::1] cell_center, const double[::1] cell_area,
                       double mu, double beta):
    cdef Py_ssize_t nc = cell_area.shape[0]
    cdef Py_ssize_t K, s, m, i, j, k, pos = 0, ntrip = 0
    cdef double area, ox, oy, acc, B
    cdef double G0[MAXF + 1]
    cdef double G1[MAXF + 1]
    cdef double R[MAXF][MAXF + 1]
    cdef cnp.int64_t dofs[MAXF + 1]

    for K in range(nc):
        m = cell_ptr[K + 1] - cell_ptr[K]
        if m > MAXF:
            raise ValueError("cell has too many faces for the compiled kernel")
        ntrip += (m + 1) * (m + 1)

    rows_a = np.empty(ntrip, dtype=np.int64)
    cols_a = np.empty(ntrip, dtype=np.int64)
    vals_a = np.empty(ntrip, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a

    for K in range(nc):
        s = cell_ptr[K]
        m = cell_ptr[K + 1] - s
        area = cell_area[K]
        G0[0] = 0.0
        G1[0] = 0.0
        for j in range(m):
            G0[j + 1] = inc_measure[s + j] * inc_normal[s + j, 0] / area
            G1[j + 1] = inc_measure[s + j] * inc_normal[s + j, 1] / area
        for j in range(m):
            ox = inc_fcenter[s + j, 0] - cell_center[K, 0]
            oy = inc_fcenter[s + j, 1] - cell_center[K, 1]
            for i in range(m + 1):
                R[j][i] = -(ox * G0[i] + oy * G1[i])
            R[j][0] -= 1.0
            R[j][j + 1] += 1.0
        dofs[0] = K
        for j in range(m):
            dofs[j + 1] = nc + inc_face[s + j]
        for i in range(m + 1):
            for k in range(m + 1):
                acc = mu * area * (G0[i] * G0[k] + G1[i] * G1[k])
                for j in range(m):
                    B = beta * mu * inc_measure[s + j] / inc_dist[s + j]
                    acc += R[j][i] * B * R[j][k]
                rows[pos] = dofs[i]
                cols[pos] = dofs[k]
                vals[pos] = acc
                pos += 1
    return rows_a, cols_a, vals_a


def diamond_gradients(const cnp.int64_t[::1] cell_ptr, const cnp.int64_t[::1] inc_face,
                      const double[:, ::1] inc_normal, const double[::1] inc_measure,
                      const double[::1] inc_dist, const double[:, ::1] inc_fcenter,
                      const double[:, ::1] cell_center, const double[::1] cell_area,
                      const double[::1] phi):
    cdef Py_ssize_t nc = cell_area.shape[0]
    cdef Py_ssize_t ninc = inc_face.shape[0]
    cdef Py_ssize_t K, s, e, j
    cdef double gx, gy, r, c, pf, sqrt_d = sqrt(2.0)
    grads_a = np.empty((ninc, 2), dtype=np.float64)
    resid_a = np.empty(ninc, dtype=np.float64)
    cdef double[:, ::1] grads = grads_a
    cdef double[::1] resid = resid_a
    for K in range(nc):
        s = cell_ptr[K]
        e = cell_ptr[K + 1]
        gx = 0.0
        gy = 0.0
        for j in range(s, e):
            pf = phi[nc + inc_face[j]]
            gx += inc_measure[j] * pf * inc_normal[j, 0]
            gy += inc_measure[j] * pf * inc_normal[j, 1]
        gx /= cell_area[K]
        gy /= cell_area[K]
        for j in range(s, e):
            r = (phi[nc + inc_face[j]] - phi[K]
                 - gx * (inc_fcenter[j, 0] - cell_center[K, 0])
                 - gy * (inc_fcenter[j, 1] - cell_center[K, 1]))
            resid[j] = r
            c = sqrt_d * r / inc_dist[j]
            grads[j, 0] = gx + c * inc_normal[j, 0]
            grads[j, 1] = gy + c * inc_normal[j, 1]
    return grads_a, resid_a
