# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled flight-time solver; same contract as ``flight_py.solve_flight_times``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, fabs, fmax, fmin, ceil, isfinite

cnp.import_array()

cdef double COARSE = 1e-6
cdef int NEWTON_STEPS = 8


cdef inline void _fill_p1(double s, double X, double z0, const double[:] vp0,
                          const double[:] vm0, double alpha, double beta,
                          double gamma, double eta, const double[:] lam_p,
                          const double[:] lam_m, const double[:] vstar_p,
                          double* p) noexcept nogil:
    cdef Py_ssize_t N = lam_p.shape[0], M = lam_m.shape[0], j
    cdef double dec = X * exp(-alpha * s)
    p[0] = dec * cos(beta * s)
    p[1] = dec * sin(beta * s)
    p[2] = z0 * exp(gamma * s) - eta
    for j in range(N):
        p[3 + j] = exp(lam_p[j] * s) * vp0[j] - vstar_p[j]
    for j in range(M):
        p[3 + N + j] = exp(-lam_m[j] * s) * vm0[j]


cdef inline void _fill_dp1(double s, double X, double z0, const double[:] vp0,
                           const double[:] vm0, double alpha, double beta,
                           double gamma, const double[:] lam_p,
                           const double[:] lam_m, double* d) noexcept nogil:
    cdef Py_ssize_t N = lam_p.shape[0], M = lam_m.shape[0], j
    cdef double dec = X * exp(-alpha * s)
    cdef double c = cos(beta * s), sn = sin(beta * s)
    d[0] = dec * (-alpha * c - beta * sn)
    d[1] = dec * (-alpha * sn + beta * c)
    d[2] = gamma * z0 * exp(gamma * s)
    for j in range(N):
        d[3 + j] = lam_p[j] * exp(lam_p[j] * s) * vp0[j]
    for j in range(M):
        d[3 + N + j] = -lam_m[j] * exp(-lam_m[j] * s) * vm0[j]


cdef inline double _g(const double* p, const double[:] B, const double[:, :] Qy,
                      double qs, Py_ssize_t n1) noexcept nogil:
    cdef double val = 0.0, quad = 0.0, row
    cdef Py_ssize_t i, j
    for i in range(n1):
        val += B[i] * p[i]
    if qs != 0.0:
        for i in range(n1):
            row = 0.0
            for j in range(n1):
                row += Qy[i, j] * p[j]
            quad += p[i] * row
        val += qs * quad
    return val


cdef inline double _dg(const double* p, const double* dp, const double[:] B,
                       const double[:, :] Qy, double qs, Py_ssize_t n1) noexcept nogil:
    cdef double val = 0.0, row
    cdef Py_ssize_t i, j
    for i in range(n1):
        row = B[i]
        if qs != 0.0:
            for j in range(n1):
                row += 2.0 * qs * Qy[i, j] * p[j]
        val += row * dp[i]
    return val


cdef inline double _sign(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def solve_flight_times(X, z0, vp0, vm0, double alpha, double beta, double gamma,
                       double eta, lam_p, lam_m, vstar_p, B, Qy, double qs,
                       t_lo, t_hi, double step, double tol):
    cdef const double[:] Xv = np.ascontiguousarray(X, dtype=np.float64).ravel()
    cdef Py_ssize_t n = Xv.shape[0]
    cdef const double[:] zv = np.ascontiguousarray(z0, dtype=np.float64).ravel()
    cdef const double[:, :] vpv = np.ascontiguousarray(vp0, dtype=np.float64).reshape(n, -1)
    cdef const double[:, :] vmv = np.ascontiguousarray(vm0, dtype=np.float64).reshape(n, -1)
    cdef const double[:] lp = np.ascontiguousarray(lam_p, dtype=np.float64)
    cdef const double[:] lm = np.ascontiguousarray(lam_m, dtype=np.float64)
    cdef const double[:] vs = np.ascontiguousarray(vstar_p, dtype=np.float64)
    cdef const double[:] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[:, :] Qv = np.ascontiguousarray(Qy, dtype=np.float64)
    cdef const double[:] lo_v = np.ascontiguousarray(t_lo, dtype=np.float64).ravel()
    cdef const double[:] hi_v = np.ascontiguousarray(t_hi, dtype=np.float64).ravel()
    cdef Py_ssize_t n1 = Bv.shape[0]

    out_t = np.full(n, np.nan)
    out_s = np.ones(n, dtype=np.int64)
    cdef double[:] tv = out_t
    cdef cnp.int64_t[:] sv = out_s

    cdef double[64] p
    cdef double[64] dp
    cdef Py_ssize_t i, k, kmax, it
    cdef double s0, s1, g0, g1, a, b, ga, m, gm, root, gr, cand, gc, dgv, stp, best, gbest
    cdef bint found, inside
    if n1 > 64:
        raise ValueError("state dimension above 64 is not supported by the compiled kernel")

    with nogil:
        for i in range(n):
            kmax = <Py_ssize_t> ceil((hi_v[i] - lo_v[i]) / step) + 1
            s0 = lo_v[i]
            _fill_p1(s0, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, eta, lp, lm, vs, p)
            g0 = _g(p, Bv, Qv, qs, n1)
            found = g0 == 0.0
            a = s0
            b = s0
            ga = g0
            if not found:
                for k in range(1, kmax + 1):
                    s1 = fmin(lo_v[i] + step * k, hi_v[i])
                    if s1 <= s0:
                        break
                    _fill_p1(s1, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, eta, lp, lm, vs, p)
                    g1 = _g(p, Bv, Qv, qs, n1)
                    if g0 * g1 <= 0.0:
                        a = s0
                        b = s1
                        ga = g0
                        found = True
                        break
                    s0 = s1
                    g0 = g1
            if not found:
                continue
            for it in range(200):
                if b - a <= COARSE * fmax(1.0, fabs(a)):
                    break
                m = 0.5 * (a + b)
                _fill_p1(m, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, eta, lp, lm, vs, p)
                gm = _g(p, Bv, Qv, qs, n1)
                if gm == 0.0:
                    a = m
                    b = m
                elif _sign(gm) == _sign(ga):
                    a = m
                    ga = gm
                else:
                    b = m
            root = 0.5 * (a + b)
            _fill_p1(root, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, eta, lp, lm, vs, p)
            gr = _g(p, Bv, Qv, qs, n1)
            best = root
            gbest = fabs(gr)
            for it in range(NEWTON_STEPS):
                if gr == 0.0:
                    break
                _fill_dp1(root, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, lp, lm, dp)
                dgv = _dg(p, dp, Bv, Qv, qs, n1)
                cand = root - gr / dgv
                if cand == root:
                    break
                inside = isfinite(cand) and cand > a and cand < b
                if not inside:
                    cand = 0.5 * (a + b)
                _fill_p1(cand, Xv[i], zv[i], vpv[i], vmv[i], alpha, beta, gamma, eta, lp, lm, vs, p)
                gc = _g(p, Bv, Qv, qs, n1)
                if _sign(gc) == _sign(ga):
                    a = cand
                    ga = gc
                else:
                    b = cand
                stp = fabs(cand - root)
                root = cand
                gr = gc
                if fabs(gc) < gbest:
                    best = cand
                    gbest = fabs(gc)
                if gc == 0.0 or (inside and stp <= tol * fmax(1.0, fabs(cand))):
                    break
            tv[i] = best
            sv[i] = 0
    return out_t, out_s
