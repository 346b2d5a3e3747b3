# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython twins of the numpy kernels in ``_numpy_backend``.

Each function keeps the same per-element evaluation order as the numpy
version so results match to floating-point rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt, hypot, acos, fabs

cnp.import_array()

BACKEND_NAME = "native"

PLANE_FRONT = 0
PLANE_TOP = 1
PLANE_SIDE = 2

DEF RAD2DEG = 57.29577951308232


def warp_bilinear(img, m_inv, int out_h, int out_w):
    squeeze = img.ndim == 2
    chans = img[:, :, None] if squeeze else img
    cdef double[:, :, ::1] src = np.ascontiguousarray(chans, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(m_inv, dtype=np.float64)
    cdef int src_h = src.shape[0]
    cdef int src_w = src.shape[1]
    cdef int n_ch = src.shape[2]
    out_arr = np.zeros((out_h, out_w, n_ch), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr

    cdef int yo, xo, c, x0, y0
    cdef double denom, sx, sy, fx, fy
    cdef double v00, v01, v10, v11, top, bottom
    for yo in range(out_h):
        for xo in range(out_w):
            denom = m[2, 0] * xo + m[2, 1] * yo + m[2, 2]
            if fabs(denom) <= 1e-12:
                continue
            sx = (m[0, 0] * xo + m[0, 1] * yo + m[0, 2]) / denom
            sy = (m[1, 0] * xo + m[1, 1] * yo + m[1, 2]) / denom
            x0 = <int>floor(sx)
            y0 = <int>floor(sy)
            fx = sx - floor(sx)
            fy = sy - floor(sy)
            for c in range(n_ch):
                v00 = src[y0, x0, c] if (0 <= y0 < src_h and 0 <= x0 < src_w) else 0.0
                v01 = src[y0, x0 + 1, c] if (0 <= y0 < src_h and 0 <= x0 + 1 < src_w) else 0.0
                v10 = src[y0 + 1, x0, c] if (0 <= y0 + 1 < src_h and 0 <= x0 < src_w) else 0.0
                v11 = src[y0 + 1, x0 + 1, c] if (0 <= y0 + 1 < src_h and 0 <= x0 + 1 < src_w) else 0.0
                top = (1.0 - fx) * v00 + fx * v01
                bottom = (1.0 - fx) * v10 + fx * v11
                out[yo, xo, c] = (1.0 - fy) * top + fy * bottom
    return out_arr[:, :, 0] if squeeze else out_arr


def poisson_matvec(x, neighbors):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[:, ::1] nbr = np.ascontiguousarray(neighbors, dtype=np.int64)
    cdef Py_ssize_t n = xv.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long j
    cdef double acc
    cdef int k
    for i in range(n):
        acc = 4.0 * xv[i]
        for k in range(4):
            j = nbr[i, k]
            if j >= 0:
                acc = acc - xv[j]
        out[i] = acc
    return out_arr


def mc_unproject_errors(int plane, u, v, double r,
                        double gx, double gy, double gz, double sign_hint):
    cdef double[::1] uv_u = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] uv_v = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = uv_u.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double lim = r * (1.0 - 1e-12)
    cdef Py_ssize_t i
    cdef double uu, vv, rho, scale, rx, ry, rz, rad, dot
    for i in range(n):
        uu = uv_u[i]
        vv = uv_v[i]
        rho = hypot(uu, vv)
        if rho > lim:
            scale = lim / rho
            uu = uu * scale
            vv = vv * scale
        if plane == PLANE_FRONT:
            rx = uu / r
            ry = vv / r
            rad = 1.0 - rx * rx - ry * ry
            rz = -sqrt(rad if rad > 0.0 else 0.0)
        elif plane == PLANE_TOP:
            rz = -uu / r
            rx = vv / r
            rad = 1.0 - rz * rz - rx * rx
            ry = sign_hint * sqrt(rad if rad > 0.0 else 0.0)
        else:
            rz = uu / r
            ry = vv / r
            rad = 1.0 - rz * rz - ry * ry
            rx = sign_hint * sqrt(rad if rad > 0.0 else 0.0)
        dot = gx * rx + gy * ry + gz * rz
        if dot > 1.0:
            dot = 1.0
        elif dot < -1.0:
            dot = -1.0
        out[i] = acos(dot) * RAD2DEG
    return out_arr
