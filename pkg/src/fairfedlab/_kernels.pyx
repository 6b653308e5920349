# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mini-batch SGD loops for the logistic and one-hidden-layer models.

The parameter layouts and arithmetic mirror ``_kernels_py``; results agree
with it up to floating-point summation order.
"""

from libc.math cimport exp

cdef enum:
    MAX_HIDDEN = 64


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def sgd_logistic(double[::1] theta, const double[:, ::1] X, const double[::1] y,
                 const double[::1] w, const long long[:, ::1] perms, double lr, Py_ssize_t batch):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t e, s, k, j, idx, stop, m
    cdef double z, r, gb
    cdef double[::1] g = theta.copy()
    if batch <= 0 or batch > n:
        batch = n
    with nogil:
        for e in range(perms.shape[0]):
            s = 0
            while s < n:
                stop = s + batch
                if stop > n:
                    stop = n
                m = stop - s
                for j in range(d):
                    g[j] = 0.0
                gb = 0.0
                for k in range(s, stop):
                    idx = perms[e, k]
                    z = theta[d]
                    for j in range(d):
                        z = z + X[idx, j] * theta[j]
                    r = w[idx] * (_sigmoid(z) - y[idx])
                    for j in range(d):
                        g[j] = g[j] + r * X[idx, j]
                    gb = gb + r
                for j in range(d):
                    theta[j] = theta[j] - lr * (g[j] / m)
                theta[d] = theta[d] - lr * (gb / m)
                s = stop


def sgd_mlp(double[::1] theta, const double[:, ::1] X, const double[::1] y,
            const double[::1] w, const long long[:, ::1] perms, double lr, Py_ssize_t batch,
            Py_ssize_t hidden):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t H = hidden
    cdef Py_ssize_t off_c = H * d, off_v = H * d + H, off_b = H * d + 2 * H
    cdef Py_ssize_t P = off_b + 1
    cdef Py_ssize_t e, s, k, j, h, idx, stop, m
    cdef double z, r, pre, dh
    cdef double act[MAX_HIDDEN]
    cdef double[::1] g = theta.copy()
    if H > MAX_HIDDEN:
        raise ValueError("too many hidden units for the compiled kernel")
    if batch <= 0 or batch > n:
        batch = n
    with nogil:
        for e in range(perms.shape[0]):
            s = 0
            while s < n:
                stop = s + batch
                if stop > n:
                    stop = n
                m = stop - s
                for j in range(P):
                    g[j] = 0.0
                for k in range(s, stop):
                    idx = perms[e, k]
                    z = theta[off_b]
                    for h in range(H):
                        pre = theta[off_c + h]
                        for j in range(d):
                            pre = pre + theta[h * d + j] * X[idx, j]
                        act[h] = pre if pre > 0 else 0.0
                        z = z + theta[off_v + h] * act[h]
                    r = w[idx] * (_sigmoid(z) - y[idx])
                    g[off_b] = g[off_b] + r
                    for h in range(H):
                        g[off_v + h] = g[off_v + h] + r * act[h]
                        if act[h] > 0:
                            dh = r * theta[off_v + h]
                            g[off_c + h] = g[off_c + h] + dh
                            for j in range(d):
                                g[h * d + j] = g[h * d + j] + dh * X[idx, j]
                for j in range(P):
                    theta[j] = theta[j] - lr * (g[j] / m)
                s = stop
