# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the linear-quadratic recursions.

Same contract and array conventions as ``_lq_py``; see that module.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite

cnp.import_array()

BACKEND = "cython"

cdef enum:
    C_OK = 0
    C_NOT_PD = 1
    C_LAMBDA_OVERFLOW = 2

OK = C_OK
NOT_PD = C_NOT_PD
LAMBDA_OVERFLOW = C_LAMBDA_OVERFLOW


cdef int _cholesky(double[:, ::1] a, double[:, ::1] L, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, m
    cdef double s
    for i in range(n):
        for j in range(i + 1):
            s = a[i, j]
            for m in range(j):
                s -= L[i, m] * L[j, m]
            if i == j:
                if not (s > 0.0) or not isfinite(s):
                    return 0
                L[i, i] = sqrt(s)
            else:
                L[i, j] = s / L[j, j]
        for j in range(i + 1, n):
            L[i, j] = 0.0
    return 1


cdef void _cho_solve_vec(double[:, ::1] L, double* b, Py_ssize_t n) noexcept nogil:
    # in place: b <- (L L^T)^{-1} b
    cdef Py_ssize_t i, m
    cdef double s
    for i in range(n):
        s = b[i]
        for m in range(i):
            s -= L[i, m] * b[m]
        b[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for m in range(i + 1, n):
            s -= L[m, i] * b[m]
        b[i] = s / L[i, i]


def lq_backward(const double[:, :, ::1] phi_x, const double[:, :, ::1] phi_u,
                const double[:, ::1] h_x, const double[:, :, ::1] h_xx,
                const double[:, ::1] g_u, const double[:, :, ::1] g_uu, double inv_gamma,
                fxx=None, fux=None, fuu=None, phi_w=None, psi=None,
                shift=None, double lam0=0.0, double rho_plus=10.0,
                double lam_max=1e12):
    cdef Py_ssize_t tau = phi_u.shape[0]
    cdef Py_ssize_t p = phi_u.shape[1]
    cdef Py_ssize_t d = phi_u.shape[2]
    cdef Py_ssize_t q = 0
    cdef bint second = fxx is not None
    cdef bint noisy = phi_w is not None
    cdef bint shifted = shift is not None

    K_arr = np.zeros((tau, p, d))
    k_arr = np.zeros((tau, p))
    C_arr = np.zeros((tau + 1, d, d))
    c_arr = np.zeros((tau + 1, d))
    lam_arr = np.zeros(tau)
    cdef double[:, :, ::1] K = K_arr
    cdef double[:, ::1] k = k_arr
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, ::1] c = c_arr
    cdef double[::1] lam = lam_arr

    cdef const double[:, :, :, ::1] Txx
    cdef const double[:, :, :, ::1] Tux
    cdef const double[:, :, :, ::1] Tuu
    cdef const double[:, :, ::1] Pw
    cdef const double[:, :, :, ::1] Ps
    cdef const double[:, ::1] Sh
    if second:
        Txx = fxx
        Tux = fux
        Tuu = fuu
    if noisy:
        Pw = phi_w
        Ps = psi
        q = Pw.shape[1]
    if shifted:
        Sh = shift

    cdef double[::1] cn = np.zeros(d)
    cdef double[::1] w_x = np.zeros(d)
    cdef double[::1] w_u = np.zeros(p)
    cdef double[:, ::1] CPx = np.zeros((d, d))
    cdef double[:, ::1] CPu = np.zeros((d, p))
    cdef double[:, ::1] W_xx = np.zeros((d, d))
    cdef double[:, ::1] W_ux = np.zeros((p, d))
    cdef double[:, ::1] W_uu = np.zeros((p, p))
    cdef double[:, ::1] W0 = np.zeros((p, p))
    cdef double[:, ::1] L = np.zeros((p, p))
    cdef double[::1] col = np.zeros(p)

    cdef Py_ssize_t t, i, j, a, b, m, n
    cdef double s, lt
    cdef int status = C_OK
    cdef Py_ssize_t t_fail = -1

    for i in range(d):
        c[tau, i] = h_x[tau, i]
        for j in range(d):
            C[tau, i, j] = h_xx[tau, i, j]

    with nogil:
        for t in range(tau - 1, -1, -1):
            for i in range(d):
                s = c[t + 1, i]
                if shifted:
                    for j in range(d):
                        s = s + C[t + 1, i, j] * Sh[t, j]
                cn[i] = s
            for i in range(d):
                s = h_x[t, i]
                for j in range(d):
                    s = s + phi_x[t, i, j] * cn[j]
                w_x[i] = s
            for a in range(p):
                s = g_u[t, a]
                for j in range(d):
                    s = s + phi_u[t, a, j] * cn[j]
                w_u[a] = s
            # CPx = C' phi_x^T, CPu = C' phi_u^T
            for i in range(d):
                for j in range(d):
                    s = 0.0
                    for m in range(d):
                        s = s + C[t + 1, i, m] * phi_x[t, j, m]
                    CPx[i, j] = s
                for a in range(p):
                    s = 0.0
                    for m in range(d):
                        s = s + C[t + 1, i, m] * phi_u[t, a, m]
                    CPu[i, a] = s
            for i in range(d):
                for j in range(d):
                    s = h_xx[t, i, j]
                    for m in range(d):
                        s = s + phi_x[t, i, m] * CPx[m, j]
                    W_xx[i, j] = s
            for a in range(p):
                for j in range(d):
                    s = 0.0
                    for m in range(d):
                        s = s + phi_u[t, a, m] * CPx[m, j]
                    W_ux[a, j] = s
                for b in range(p):
                    s = g_uu[t, a, b]
                    for m in range(d):
                        s = s + phi_u[t, a, m] * CPu[m, b]
                    if a == b:
                        s = s + inv_gamma
                    W_uu[a, b] = s
            if second:
                for i in range(d):
                    for j in range(d):
                        s = 0.0
                        for m in range(d):
                            s = s + Txx[t, i, j, m] * cn[m]
                        W_xx[i, j] = W_xx[i, j] + s
                for a in range(p):
                    for j in range(d):
                        s = 0.0
                        for m in range(d):
                            s = s + Tux[t, a, j, m] * cn[m]
                        W_ux[a, j] = W_ux[a, j] + s
                    for b in range(p):
                        s = 0.0
                        for m in range(d):
                            s = s + Tuu[t, a, b, m] * cn[m]
                        W_uu[a, b] = W_uu[a, b] + s
            if noisy:
                for n in range(q):
                    # CPu <- C' Psi_n  (d x p)
                    for i in range(d):
                        for a in range(p):
                            s = 0.0
                            for m in range(d):
                                s = s + C[t + 1, i, m] * Ps[t, n, m, a]
                            CPu[i, a] = s
                    for a in range(p):
                        s = 0.0
                        for m in range(d):
                            s = s + CPu[m, a] * Pw[t, n, m]
                        w_u[a] = w_u[a] + s
                        for b in range(p):
                            s = 0.0
                            for m in range(d):
                                s = s + Ps[t, n, m, a] * CPu[m, b]
                            W_uu[a, b] = W_uu[a, b] + s
            if not _cholesky(W_uu, L, p):
                if lam0 <= 0.0:
                    status = C_NOT_PD
                    t_fail = t
                    break
                for a in range(p):
                    for b in range(p):
                        W0[a, b] = W_uu[a, b]
                lt = lam0
                while True:
                    if lt > lam_max:
                        status = C_LAMBDA_OVERFLOW
                        break
                    for a in range(p):
                        for b in range(p):
                            W_uu[a, b] = W0[a, b]
                        W_uu[a, a] = W_uu[a, a] + lt
                    lam[t] = lt
                    lt = lt * rho_plus
                    if _cholesky(W_uu, L, p):
                        break
                if status != C_OK:
                    t_fail = t
                    break
            # K_t = -W_uu^{-1} W_ux, k_t = -W_uu^{-1} w_u
            for j in range(d):
                for a in range(p):
                    col[a] = W_ux[a, j]
                _cho_solve_vec(L, &col[0], p)
                for a in range(p):
                    K[t, a, j] = -col[a]
            for a in range(p):
                col[a] = w_u[a]
            _cho_solve_vec(L, &col[0], p)
            for a in range(p):
                k[t, a] = -col[a]
            # C_t = W_xx + W_ux^T K_t, c_t = w_x + W_ux^T k_t
            for i in range(d):
                for j in range(d):
                    s = W_xx[i, j]
                    for a in range(p):
                        s = s + W_ux[a, i] * K[t, a, j]
                    CPx[i, j] = s
            for i in range(d):
                for j in range(d):
                    C[t, i, j] = 0.5 * (CPx[i, j] + CPx[j, i])
                s = w_x[i]
                for a in range(p):
                    s = s + W_ux[a, i] * k[t, a]
                c[t, i] = s
    return K_arr, k_arr, C_arr, c_arr, lam_arr, status, t_fail


def lq_rollout(const double[:, :, ::1] phi_x, const double[:, :, ::1] phi_u,
               const double[:, :, ::1] K, const double[:, ::1] k):
    cdef Py_ssize_t tau = phi_u.shape[0]
    cdef Py_ssize_t p = phi_u.shape[1]
    cdef Py_ssize_t d = phi_u.shape[2]
    v_arr = np.zeros((tau, p))
    y_arr = np.zeros((tau, d))
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] y = y_arr
    cdef double[::1] yt = np.zeros(d)
    cdef double[::1] yn = np.zeros(d)
    cdef Py_ssize_t t, i, j, a
    cdef double s
    with nogil:
        for t in range(tau):
            for a in range(p):
                s = k[t, a]
                for j in range(d):
                    s = s + K[t, a, j] * yt[j]
                v[t, a] = s
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s = s + phi_x[t, j, i] * yt[j]
                for a in range(p):
                    s = s + phi_u[t, a, i] * v[t, a]
                yn[i] = s
            for i in range(d):
                yt[i] = yn[i]
                y[t, i] = yn[i]
    return v_arr, y_arr


def adjoint(const double[:, :, ::1] phi_x, const double[:, :, ::1] phi_u, const double[:, ::1] z):
    cdef Py_ssize_t tau = phi_u.shape[0]
    cdef Py_ssize_t p = phi_u.shape[1]
    cdef Py_ssize_t d = phi_u.shape[2]
    out_arr = np.zeros((tau, p))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] lam = np.zeros(d)
    cdef double[::1] ln = np.zeros(d)
    cdef Py_ssize_t t, i, j, a
    cdef double s
    with nogil:
        for i in range(d):
            lam[i] = z[tau - 1, i]
        for t in range(tau - 1, -1, -1):
            for a in range(p):
                s = 0.0
                for j in range(d):
                    s = s + phi_u[t, a, j] * lam[j]
                out[t, a] = s
            if t > 0:
                for i in range(d):
                    s = 0.0
                    for j in range(d):
                        s = s + phi_x[t, i, j] * lam[j]
                    ln[i] = s + z[t - 1, i]
                for i in range(d):
                    lam[i] = ln[i]
    return out_arr


def tangent(const double[:, :, ::1] phi_x, const double[:, :, ::1] phi_u, const double[:, ::1] v):
    cdef Py_ssize_t tau = phi_u.shape[0]
    cdef Py_ssize_t p = phi_u.shape[1]
    cdef Py_ssize_t d = phi_u.shape[2]
    out_arr = np.zeros((tau, d))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] y = np.zeros(d)
    cdef double[::1] yn = np.zeros(d)
    cdef Py_ssize_t t, i, j, a
    cdef double s
    with nogil:
        for t in range(tau):
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s = s + phi_x[t, j, i] * y[j]
                for a in range(p):
                    s = s + phi_u[t, a, i] * v[t, a]
                yn[i] = s
            for i in range(d):
                y[i] = yn[i]
                out[t, i] = yn[i]
    return out_arr
