# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; mirrors taen.kernels.pykernels function for function."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double NORM_EPS_C = 1e-12
NORM_EPS = NORM_EPS_C


def pool_segments(double[:, ::1] frames, Py_ssize_t a):
    cdef Py_ssize_t T = frames.shape[0]
    cdef Py_ssize_t d = frames.shape[1]
    out_arr = np.empty((a, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t base = T // a
    cdef Py_ssize_t rem = T % a
    cdef Py_ssize_t start = 0, i, j, t, size
    cdef double acc
    for i in range(a):
        size = base + (1 if i < rem else 0)
        if size == 0:
            for j in range(d):
                out[i, j] = out[i - 1, j]
        else:
            for j in range(d):
                acc = 0.0
                for t in range(start, start + size):
                    acc += frames[t, j]
                out[i, j] = acc / size
            start += size
    return out_arr


def normalize_rows(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t e = x.shape[1]
    y_arr = np.empty((m, e), dtype=np.float64)
    n_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[::1] norms = n_arr
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(m):
        s = 0.0
        for j in range(e):
            s += x[i, j] * x[i, j]
        s = sqrt(s + NORM_EPS_C)
        norms[i] = s
        for j in range(e):
            y[i, j] = x[i, j] / s
    return y_arr, n_arr


def normalize_rows_backward(double[:, ::1] y, double[::1] norms,
                            double[:, ::1] grad_y):
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t e = y.shape[1]
    g_arr = np.empty((m, e), dtype=np.float64)
    cdef double[:, ::1] g = g_arr
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(m):
        dot = 0.0
        for j in range(e):
            dot += grad_y[i, j] * y[i, j]
        for j in range(e):
            g[i, j] = (grad_y[i, j] - dot * y[i, j]) / norms[i]
    return g_arr


def trajectory_distances(double[:, ::1] traj, double[:, :, ::1] protos):
    cdef Py_ssize_t n = protos.shape[0]
    cdef Py_ssize_t a = traj.shape[0]
    cdef Py_ssize_t e = traj.shape[1]
    d_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef Py_ssize_t c, i, j
    cdef double sim
    for c in range(n):
        sim = 0.0
        for i in range(a):
            for j in range(e):
                sim += traj[i, j] * protos[c, i, j]
        d[c] = (a - sim) / a
    return d_arr


def test_distances(double[:, ::1] traj, double[:, :, ::1] protos,
                   double w_aff, double w_mot, double motion_sign):
    cdef Py_ssize_t n = protos.shape[0]
    cdef Py_ssize_t a = traj.shape[0]
    cdef Py_ssize_t e = traj.shape[1]
    d_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] d = d_arr
    cdef Py_ssize_t c, i, j
    cdef double sim, mot
    for c in range(n):
        sim = 0.0
        for i in range(a):
            for j in range(e):
                sim += traj[i, j] * protos[c, i, j]
        d[c] = w_aff * (a - sim)
        if a > 1 and w_mot != 0.0:
            mot = 0.0
            for i in range(a - 1):
                for j in range(e):
                    mot += (traj[i + 1, j] - traj[i, j]) * (
                        protos[c, i + 1, j] - protos[c, i, j])
            d[c] += motion_sign * w_mot * mot
    return d_arr
