# cython: language_level=3
"""Compiled kernels: filtered predicates, gradient-limiting sweeps, point location.

Mirrors ``_pykernels`` operation for operation; keep the two in sync.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

from .predicates import INSPHERE_ERRBOUND, ORIENT_ERRBOUND, ExactPredicates

cnp.import_array()

NAME = "cython"

cdef double _ORIENT_BOUND = ORIENT_ERRBOUND
cdef double _INSPHERE_BOUND = INSPHERE_ERRBOUND


cdef class Predicates:
    cdef double[:, ::1] P
    cdef readonly object exact
    cdef object _keep

    def __init__(self, points):
        arr = np.ascontiguousarray(points, dtype=np.float64)
        self._keep = arr
        self.P = arr
        self.exact = ExactPredicates(arr)

    @property
    def exact_calls(self):
        return self.exact.calls

    cpdef int orient(self, Py_ssize_t a, Py_ssize_t b, Py_ssize_t c, Py_ssize_t d):
        cdef double[:, ::1] P = self.P
        cdef double ax = P[a, 0], ay = P[a, 1], az = P[a, 2]
        cdef double bx = P[b, 0] - ax, by = P[b, 1] - ay, bz = P[b, 2] - az
        cdef double cx = P[c, 0] - ax, cy = P[c, 1] - ay, cz = P[c, 2] - az
        cdef double dx = P[d, 0] - ax, dy = P[d, 1] - ay, dz = P[d, 2] - az
        cdef double m1 = cy * dz - cz * dy
        cdef double m2 = cx * dz - cz * dx
        cdef double m3 = cx * dy - cy * dx
        cdef double det = bx * m1 - by * m2 + bz * m3
        cdef double perm = (
            fabs(bx) * (fabs(cy * dz) + fabs(cz * dy))
            + fabs(by) * (fabs(cx * dz) + fabs(cz * dx))
            + fabs(bz) * (fabs(cx * dy) + fabs(cy * dx))
        )
        cdef double bound = _ORIENT_BOUND * perm
        if det > bound:
            return 1
        if det < -bound:
            return -1
        return self.exact.orient(a, b, c, d)

    cpdef int insphere(self, Py_ssize_t a, Py_ssize_t b, Py_ssize_t c, Py_ssize_t d,
                       Py_ssize_t e):
        cdef double[:, ::1] P = self.P
        cdef double ex = P[e, 0], ey = P[e, 1], ez = P[e, 2]
        cdef double ax = P[a, 0] - ex, ay = P[a, 1] - ey, az = P[a, 2] - ez
        cdef double bx = P[b, 0] - ex, by = P[b, 1] - ey, bz = P[b, 2] - ez
        cdef double cx = P[c, 0] - ex, cy = P[c, 1] - ey, cz = P[c, 2] - ez
        cdef double dx = P[d, 0] - ex, dy = P[d, 1] - ey, dz = P[d, 2] - ez
        cdef double aw = ax * ax + ay * ay + az * az
        cdef double bw = bx * bx + by * by + bz * bz
        cdef double cw = cx * cx + cy * cy + cz * cz
        cdef double dw = dx * dx + dy * dy + dz * dz
        cdef double ab = ax * by - bx * ay
        cdef double ac = ax * cy - cx * ay
        cdef double ad = ax * dy - dx * ay
        cdef double bc = bx * cy - cx * by
        cdef double bd = bx * dy - dx * by
        cdef double cd = cx * dy - dx * cy
        cdef double m_a = bz * cd - cz * bd + dz * bc
        cdef double m_b = az * cd - cz * ad + dz * ac
        cdef double m_c = az * bd - bz * ad + dz * ab
        cdef double m_d = az * bc - bz * ac + cz * ab
        cdef double det = -aw * m_a + bw * m_b - cw * m_c + dw * m_d
        cdef double pab = fabs(ax * by) + fabs(bx * ay)
        cdef double pac = fabs(ax * cy) + fabs(cx * ay)
        cdef double pad = fabs(ax * dy) + fabs(dx * ay)
        cdef double pbc = fabs(bx * cy) + fabs(cx * by)
        cdef double pbd = fabs(bx * dy) + fabs(dx * by)
        cdef double pcd = fabs(cx * dy) + fabs(dx * cy)
        cdef double p_a = fabs(bz) * pcd + fabs(cz) * pbd + fabs(dz) * pbc
        cdef double p_b = fabs(az) * pcd + fabs(cz) * pad + fabs(dz) * pac
        cdef double p_c = fabs(az) * pbd + fabs(bz) * pad + fabs(dz) * pab
        cdef double p_d = fabs(az) * pbc + fabs(bz) * pac + fabs(cz) * pab
        cdef double perm = aw * p_a + bw * p_b + cw * p_c + dw * p_d
        cdef double bound = _INSPHERE_BOUND * perm
        if det > bound:
            return -1
        if det < -bound:
            return 1
        return self.exact.insphere(a, b, c, d, e)


def limit_sweeps(double[::1] h, const long long[::1] pa, const long long[::1] pb,
                 const double[::1] dx, axis_start, double slope, long max_passes):
    cdef Py_ssize_t n = pa.shape[0]
    cdef double[::1] W = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t k, i, j, lo, hi, axis
    cdef long long[4] bounds
    cdef double w, hi_, hj
    cdef bint changed
    cdef long passes = 0
    for k in range(4):
        bounds[k] = axis_start[k]
    for k in range(n):
        W[k] = dx[k] * slope
    while True:
        changed = False
        for axis in range(3):
            lo = bounds[axis]
            hi = bounds[axis + 1]
            k = lo
            while k < hi:
                i = pa[k]
                j = pb[k]
                w = W[k]
                hi_ = h[i]
                hj = h[j]
                if hi_ > hj + w:
                    h[i] = hj + w
                    changed = True
                elif hj > hi_ + w:
                    h[j] = hi_ + w
                    changed = True
                k += 1
            k = hi - 1
            while k >= lo:
                i = pa[k]
                j = pb[k]
                w = W[k]
                hi_ = h[i]
                hj = h[j]
                if hi_ > hj + w:
                    h[i] = hj + w
                    changed = True
                elif hj > hi_ + w:
                    h[j] = hi_ + w
                    changed = True
                k -= 1
        if not changed:
            break
        passes += 1
        if passes > max_passes:
            return -1
    return passes


def locate(const long long[::1] child, qx, qy, qz, int maxdepth):
    cdef const long long[::1] X = np.ascontiguousarray(qx, dtype=np.int64)
    cdef const long long[::1] Y = np.ascontiguousarray(qy, dtype=np.int64)
    cdef const long long[::1] Z = np.ascontiguousarray(qz, dtype=np.int64)
    cdef Py_ssize_t m = X.shape[0]
    out = np.empty(m, dtype=np.int64)
    cdef long long[::1] res = out
    cdef Py_ssize_t q
    cdef long long node, c, x, y, z
    cdef int shift
    for q in range(m):
        node = 0
        x = X[q]
        y = Y[q]
        z = Z[q]
        shift = maxdepth - 1
        c = child[0]
        while c >= 0:
            node = c + (((x >> shift) & 1) | (((y >> shift) & 1) << 1) | (((z >> shift) & 1) << 2))
            shift -= 1
            c = child[node]
        res[q] = node
    return out
