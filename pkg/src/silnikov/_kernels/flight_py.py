"""Pure-Python (numpy) flight-time solver; reference for the compiled kernel.

Both implementations share the call signature of :func:`solve_flight_times`
and the same algorithm: scan the constraint on a grid of step ``step`` from
``t_lo`` to ``t_hi``, take the first sign change, bisect down to a bracket
of relative width ``COARSE`` and finish with Newton steps that fall back to
bisection whenever they leave the bracket.  Iteration stops once a Newton
step is below ``tol`` (relative to ``max(1, t)``); the iterate with the
smallest residual is returned.
"""
from __future__ import annotations

import numpy as np

OK = 0
NO_CROSSING = 1
COARSE = 1e-6
NEWTON_STEPS = 8


def _p1(s, X, z0, vp0, vm0, alpha, beta, gamma, eta, lam_p, lam_m, vstar_p):
    # s: (n, k); returns (n, k, n1)
    dec = X[:, None] * np.exp(-alpha * s)
    parts = [
        (dec * np.cos(beta * s))[..., None],
        (dec * np.sin(beta * s))[..., None],
        (z0[:, None] * np.exp(gamma * s) - eta)[..., None],
        np.exp(lam_p[None, None, :] * s[..., None]) * vp0[:, None, :] - vstar_p,
        np.exp(-lam_m[None, None, :] * s[..., None]) * vm0[:, None, :],
    ]
    return np.concatenate(parts, axis=-1)


def _dp1(s, X, z0, vp0, vm0, alpha, beta, gamma, lam_p, lam_m):
    dec = X[:, None] * np.exp(-alpha * s)
    c, sn = np.cos(beta * s), np.sin(beta * s)
    parts = [
        (dec * (-alpha * c - beta * sn))[..., None],
        (dec * (-alpha * sn + beta * c))[..., None],
        (gamma * z0[:, None] * np.exp(gamma * s))[..., None],
        lam_p * np.exp(lam_p[None, None, :] * s[..., None]) * vp0[:, None, :],
        -lam_m * np.exp(-lam_m[None, None, :] * s[..., None]) * vm0[:, None, :],
    ]
    return np.concatenate(parts, axis=-1)


def solve_flight_times(X, z0, vp0, vm0, alpha, beta, gamma, eta, lam_p, lam_m,
                       vstar_p, B, Qy, qs, t_lo, t_hi, step, tol):
    X = np.asarray(X, float)
    z0 = np.asarray(z0, float)
    vp0 = np.asarray(vp0, float).reshape(X.size, -1)
    vm0 = np.asarray(vm0, float).reshape(X.size, -1)
    lam_p = np.asarray(lam_p, float)
    lam_m = np.asarray(lam_m, float)
    vstar_p = np.asarray(vstar_p, float)
    B = np.asarray(B, float)
    Qy = np.asarray(Qy, float)
    t_lo = np.asarray(t_lo, float)
    t_hi = np.asarray(t_hi, float)
    n = X.size
    args = (X, z0, vp0, vm0, alpha, beta, gamma, eta, lam_p, lam_m, vstar_p)

    def g(s):
        p = _p1(s, *args)
        val = p @ B
        if qs != 0.0:
            val = val + qs * np.einsum("nki,ij,nkj->nk", p, Qy, p)
        return val

    t = np.full(n, np.nan)
    status = np.full(n, NO_CROSSING, dtype=np.int64)
    if n == 0:
        return t, status

    kmax = int(np.max(np.ceil((t_hi - t_lo) / step))) + 1
    k = np.arange(kmax + 1)
    grid = t_lo[:, None] + step * k[None, :]
    grid = np.minimum(grid, t_hi[:, None])
    vals = g(grid)
    prod = vals[:, :-1] * vals[:, 1:]
    valid = grid[:, 1:] > grid[:, :-1]
    hit = (prod <= 0) & valid
    exact0 = vals[:, 0] == 0
    found = hit.any(axis=1) | exact0
    first = np.argmax(hit, axis=1)
    idx = np.nonzero(found)[0]
    if idx.size == 0:
        return t, status
    a = grid[idx, first[idx]]
    b = grid[idx, first[idx] + 1]
    ga = vals[idx, first[idx]]
    z_at_lo = exact0[idx]
    a = np.where(z_at_lo, grid[idx, 0], a)
    b = np.where(z_at_lo, grid[idx, 0], b)
    ga = np.where(z_at_lo, 0.0, ga)

    Xs, zs, vps, vms = X[idx], z0[idx], vp0[idx], vm0[idx]
    consts = (alpha, beta, gamma, eta, lam_p, lam_m, vstar_p)

    def g_sub(s, ii):
        p = _p1(s[:, None], Xs[ii], zs[ii], vps[ii], vms[ii], *consts)[:, 0]
        val = p @ B
        if qs != 0.0:
            val = val + qs * np.einsum("ni,ij,nj->n", p, Qy, p)
        return val, p

    all_ii = np.arange(idx.size)
    for _ in range(200):
        active = (b - a) > COARSE * np.maximum(1.0, np.abs(a))
        if not active.any():
            break
        ii = all_ii[active]
        m = 0.5 * (a[ii] + b[ii])
        gm, _ = g_sub(m, ii)
        left = np.sign(gm) == np.sign(ga[ii])
        zero = gm == 0
        a[ii] = np.where(left | zero, m, a[ii])
        ga[ii] = np.where(left, gm, ga[ii])
        b[ii] = np.where(left & ~zero, b[ii], m)
    root = 0.5 * (a + b)
    gr, p = g_sub(root, all_ii)
    best, gbest = root.copy(), np.abs(gr)
    live = gr != 0
    for _ in range(NEWTON_STEPS):
        if not live.any():
            break
        ii = all_ii[live]
        r = root[ii]
        dp = _dp1(r[:, None], Xs[ii], zs[ii], vps[ii], vms[ii], alpha, beta, gamma, lam_p, lam_m)[:, 0]
        pi = p[ii]
        grad = B + (2.0 * qs) * (pi @ Qy) if qs != 0.0 else np.broadcast_to(B, pi.shape)
        dg = np.einsum("ni,ni->n", grad, dp)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = r - gr[ii] / dg
        stalled = cand == r
        inside = np.isfinite(cand) & (cand > a[ii]) & (cand < b[ii])
        cand = np.where(inside, cand, 0.5 * (a[ii] + b[ii]))
        gc, pc = g_sub(cand, ii)
        same = np.sign(gc) == np.sign(ga[ii])
        a[ii] = np.where(same, cand, a[ii])
        ga[ii] = np.where(same, gc, ga[ii])
        b[ii] = np.where(same, b[ii], cand)
        step = np.abs(cand - r)
        root[ii] = cand
        gr[ii] = gc
        p[ii] = pc
        better = np.abs(gc) < gbest[ii]
        best[ii] = np.where(better, cand, best[ii])
        gbest[ii] = np.where(better, np.abs(gc), gbest[ii])
        done = stalled | (gc == 0) | (inside & (step <= tol * np.maximum(1.0, np.abs(cand))))
        live[ii[done]] = False
    t[idx] = best
    status[idx] = OK
    return t, status
