# cython: language_level=3
"""Compiled twins of the hot kernels in _kernels_py.

Arithmetic is kept operation-for-operation identical to the fallback so the
two backends produce bit-equal outputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, sqrt

cnp.import_array()

DEF PINK_A0 = 0.99765
DEF PINK_A1 = 0.96300
DEF PINK_A2 = 0.57000
DEF PINK_G0 = 0.0990460
DEF PINK_G1 = 0.2965164
DEF PINK_G2 = 1.0526913
DEF PINK_DIRECT = 0.1848


def pink_filter(white):
    cdef double[::1] w = np.ascontiguousarray(white, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double b0 = 0.0, b1 = 0.0, b2 = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        b0 = PINK_G0 * w[i] + PINK_A0 * b0
        b1 = PINK_G1 * w[i] + PINK_A1 * b1
        b2 = PINK_G2 * w[i] + PINK_A2 * b2
        out[i] = ((b0 + b1) + b2) + PINK_DIRECT * w[i]
    return out_arr


def polyline_min_dist(px, py, vx, vy):
    cdef double[::1] pxv = np.ascontiguousarray(px, dtype=np.float64)
    cdef double[::1] pyv = np.ascontiguousarray(py, dtype=np.float64)
    cdef double[::1] vxv = np.ascontiguousarray(vx, dtype=np.float64)
    cdef double[::1] vyv = np.ascontiguousarray(vy, dtype=np.float64)
    cdef Py_ssize_t npts = pxv.shape[0]
    cdef Py_ssize_t nseg = vxv.shape[0] - 1
    out_arr = np.empty(npts, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double ax, ay, dx, dy, seg2, t, ex, ey, d2, best
    for i in range(npts):
        best = INFINITY
        for j in range(nseg):
            ax = vxv[j]
            ay = vyv[j]
            dx = vxv[j + 1] - vxv[j]
            dy = vyv[j + 1] - vyv[j]
            seg2 = dx * dx + dy * dy
            if seg2 == 0.0:
                t = 0.0
            else:
                t = ((pxv[i] - ax) * dx + (pyv[i] - ay) * dy) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            ex = pxv[i] - (ax + t * dx)
            ey = pyv[i] - (ay + t * dy)
            d2 = ex * ex + ey * ey
            if d2 < best:
                best = d2
        out[i] = sqrt(best)
    return out_arr


def count_peaks(values, ts, double threshold, double refractory_s):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(ts, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    if n < 3:
        return 0
    cdef Py_ssize_t i
    cdef int count = 0
    cdef double last_ts = -INFINITY
    for i in range(1, n - 1):
        if v[i] > v[i - 1] and v[i] >= v[i + 1] and v[i] > threshold:
            if t[i] - last_ts >= refractory_s:
                count += 1
                last_ts = t[i]
    return count
