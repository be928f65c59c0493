# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched SO(3) kernels; mirrors ``_so3_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt, atan2, M_PI

cnp.import_array()

cdef double SMALL_ANGLE = 1e-4
cdef double LARGE_ANGLE = 3.0


cdef inline void _exp3(double w0, double w1, double w2, double[:, ::1] out) noexcept nogil:
    cdef double th2 = w0 * w0 + w1 * w1 + w2 * w2
    cdef double th = sqrt(th2)
    cdef double a, b
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
    else:
        a = sin(th) / th
        b = (1.0 - cos(th)) / th2
    # I + a K + b K^2 with K = hat(w); K^2 = w w^T - th2 I
    out[0, 0] = 1.0 + b * (w0 * w0 - th2)
    out[0, 1] = -a * w2 + b * w0 * w1
    out[0, 2] = a * w1 + b * w0 * w2
    out[1, 0] = a * w2 + b * w1 * w0
    out[1, 1] = 1.0 + b * (w1 * w1 - th2)
    out[1, 2] = -a * w0 + b * w1 * w2
    out[2, 0] = -a * w1 + b * w2 * w0
    out[2, 1] = a * w0 + b * w2 * w1
    out[2, 2] = 1.0 + b * (w2 * w2 - th2)


def exp_batch(w):
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0], i
    out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    with nogil:
        for i in range(n):
            _exp3(wv[i, 0], wv[i, 1], wv[i, 2], ov[i])
    return out


cdef inline int _log3(const double[:, ::1] m, double eps_cut, double* w) noexcept nogil:
    cdef double v0 = m[2, 1] - m[1, 2]
    cdef double v1 = m[0, 2] - m[2, 0]
    cdef double v2 = m[1, 0] - m[0, 1]
    cdef double s = 0.5 * sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    cdef double c = 0.5 * (m[0, 0] + m[1, 1] + m[2, 2] - 1.0)
    cdef double th, fac, b00, b11, b22, a0, a1, a2, nrm, d
    cdef int flag = 0, col
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    th = atan2(s, c)
    if M_PI - th < eps_cut:
        flag = 1
    if th < SMALL_ANGLE:
        fac = 0.5 * (1.0 + th * th / 6.0)
        w[0] = fac * v0
        w[1] = fac * v1
        w[2] = fac * v2
    elif th > LARGE_ANGLE:
        d = 1.0 - c
        b00 = (m[0, 0] - c) / d
        b11 = (m[1, 1] - c) / d
        b22 = (m[2, 2] - c) / d
        col = 0
        if b11 > b00 and b11 >= b22:
            col = 1
        elif b22 > b00 and b22 > b11:
            col = 2
        if col == 0:
            a0 = b00
            a1 = 0.5 * (m[1, 0] + m[0, 1]) / d
            a2 = 0.5 * (m[2, 0] + m[0, 2]) / d
        elif col == 1:
            a0 = 0.5 * (m[0, 1] + m[1, 0]) / d
            a1 = b11
            a2 = 0.5 * (m[2, 1] + m[1, 2]) / d
        else:
            a0 = 0.5 * (m[0, 2] + m[2, 0]) / d
            a1 = 0.5 * (m[1, 2] + m[2, 1]) / d
            a2 = b22
        nrm = sqrt(a0 * a0 + a1 * a1 + a2 * a2)
        if a0 * v0 + a1 * v1 + a2 * v2 < 0.0:
            nrm = -nrm
        w[0] = th * a0 / nrm
        w[1] = th * a1 / nrm
        w[2] = th * a2 / nrm
    else:
        fac = th / (2.0 * s)
        w[0] = fac * v0
        w[1] = fac * v1
        w[2] = fac * v2
    return flag


def log_batch(m, double eps_cut):
    cdef const double[:, :, ::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0], i
    w = np.empty((n, 3), dtype=np.float64)
    flag = np.zeros(n, dtype=np.int8)
    cdef double[:, ::1] wv = w
    cdef cnp.int8_t[::1] fv = flag
    with nogil:
        for i in range(n):
            fv[i] = _log3(mv[i], eps_cut, &wv[i, 0])
    return w, flag


def angle_batch(a, b):
    cdef const double[:, :, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, :, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0], i, j, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double r[3][3]
    cdef double v0, v1, v2, s, c
    with nogil:
        for i in range(n):
            for j in range(3):
                for k in range(3):
                    r[j][k] = av[i, 0, j] * bv[i, 0, k] + av[i, 1, j] * bv[i, 1, k] + av[i, 2, j] * bv[i, 2, k]
            v0 = r[2][1] - r[1][2]
            v1 = r[0][2] - r[2][0]
            v2 = r[1][0] - r[0][1]
            s = 0.5 * sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            c = 0.5 * (r[0][0] + r[1][1] + r[2][2] - 1.0)
            if c > 1.0:
                c = 1.0
            elif c < -1.0:
                c = -1.0
            ov[i] = atan2(s, c)
    return out


def right_exp_batch(r, w, double scale):
    cdef const double[:, :, ::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = rv.shape[0], i, j, k
    out = np.empty((n, 3, 3), dtype=np.float64)
    cdef double[:, :, ::1] ov = out
    cdef double[:, ::1] e = np.empty((3, 3), dtype=np.float64)
    with nogil:
        for i in range(n):
            _exp3(scale * wv[i, 0], scale * wv[i, 1], scale * wv[i, 2], e)
            for j in range(3):
                for k in range(3):
                    ov[i, j, k] = rv[i, j, 0] * e[0, k] + rv[i, j, 1] * e[1, k] + rv[i, j, 2] * e[2, k]
    return out
