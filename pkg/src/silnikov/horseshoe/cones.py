"""Exact cone tests for batches of small Jacobians.

Cones are quadratic: with coordinates split as ``(p, n)`` the cone of
half-opening ``atan(kappa)`` around the ``p`` block is
``{kappa^2 |v_p|^2 >= |v_n|^2}``.  The S-lemma turns "every vector of the
cone satisfies a quadratic inequality" into a one-parameter family of
matrix inequalities, and for fixed multiplier the best bound is an extreme
eigenvalue of a Schur complement.  The resulting function of the
multiplier is concave (or convex), so a golden-section search finds the
exact worst case.  No sampling of directions is involved.
"""
from __future__ import annotations

import math

import numpy as np

_GOLD = (math.sqrt(5) - 1) / 2


def cone_form(nu: int, d: int, kappa: float, which: str = "unstable") -> np.ndarray:
    g = np.empty(d)
    if which == "unstable":
        g[:nu], g[nu:] = kappa * kappa, -1.0
    else:
        g[:nu], g[nu:] = -1.0, kappa * kappa
    return np.diag(g)


def _golden_max(f, hi: np.ndarray, iters: int = 100) -> np.ndarray:
    """Maximum over ``[0, hi]`` of a batch of concave functions of one variable."""
    a = np.zeros_like(hi)
    b = hi.copy()
    for _ in range(iters):
        c = b - _GOLD * (b - a)
        d = a + _GOLD * (b - a)
        left = f(c) > f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return np.maximum(f(0.5 * (a + b)), f(np.zeros_like(hi)))


def cone_expansion(J: np.ndarray, G: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Worst ratio ``|(Jv)_p| / |v_p|`` over the cone ``{v'Gv >= 0}``.

    ``mask`` marks the block ``p`` on which ``G`` is positive.  The S-lemma
    turns the bound ``|(Jv)_p|^2 >= mu^2 |v_p|^2`` on the cone into the LMI
    ``J_p'J_p - mu^2 P - lam G >= 0``.  With ``J_p = [A C]`` the Schur
    complement of the ``n`` block is ``lam A'(CC' + lam I)^-1 A``, so for fixed
    ``lam`` the largest feasible ``mu^2`` is its smallest eigenvalue minus
    ``lam kappa^2``, a concave function of ``lam``.  The push-through form
    avoids the cancellation of the textbook Schur complement when ``J`` is
    badly scaled.
    """
    p = np.asarray(mask, bool)
    k2 = float(G[np.ix_(p, p)][0, 0])
    Jp = J[:, p, :]
    A, C = Jp[:, :, p], Jp[:, :, ~p]
    CC = C @ np.swapaxes(C, 1, 2)
    I = np.eye(int(p.sum()))
    floor = 1e-14 * np.linalg.norm(CC, axis=(1, 2)) + 1e-300

    def f(lam):
        lam = np.maximum(lam, floor)[:, None, None]
        Y = np.linalg.solve(CC + lam * I, A)
        S = lam * (np.swapaxes(A, 1, 2) @ Y)
        S = 0.5 * (S + np.swapaxes(S, 1, 2))
        return np.linalg.eigvalsh(S)[:, 0] - lam[:, 0, 0] * k2

    hi = np.linalg.norm(A, axis=(1, 2)) ** 2 / k2 * (1 + 1e-12) + 1e-300
    # search log(lam): the useful range spans many decades when J is badly
    # scaled, and a concave f stays unimodal under the change of variable
    span = np.log(hi / floor)
    best = _golden_max(lambda x: f(floor * np.exp(x * span)), np.ones_like(hi))
    return np.sqrt(np.maximum(np.maximum(best, f(np.zeros_like(hi))), 0.0))


def image_aperture(J: np.ndarray, G: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Tangent of the half-opening of the image of the cone ``{v'Gv >= 0}``.

    ``mask`` marks the cone axis block ``p``; the image cone is the
    narrowest ``{c^2 |w_p|^2 >= |w_n|^2}`` holding ``J`` of the cone.  By the
    S-lemma ``c^2`` is the least value with ``c^2 J_p'J_p - J_n'J_n - lam G >= 0``
    for some ``lam >= 0``.  The reduction is done in the singular basis of
    ``J_p`` (``J_p = U S V1'``, ``V2`` its kernel), so strongly anisotropic
    Jacobians are never inverted.  Returns ``inf`` where no ``lam`` exists.
    """
    p = np.asarray(mask, bool)
    k = int(p.sum())
    Jp, Jn = J[:, p, :], J[:, ~p, :]
    _, sv, Vt = np.linalg.svd(Jp)
    V1 = np.swapaxes(Vt[:, :k, :], 1, 2)
    V2 = np.swapaxes(Vt[:, k:, :], 1, 2)
    Si = 1.0 / sv
    A1, A2 = Jn @ V1, Jn @ V2
    G11 = np.swapaxes(V1, 1, 2) @ G @ V1
    G12 = np.swapaxes(V1, 1, 2) @ G @ V2
    G22 = np.swapaxes(V2, 1, 2) @ G @ V2
    R11 = np.swapaxes(A1, 1, 2) @ A1
    R12 = np.swapaxes(A1, 1, 2) @ A2
    R22 = np.swapaxes(A2, 1, 2) @ A2
    # R22 + lam G22 must be negative definite: lam > lam0
    w, U = np.linalg.eigh(-G22)
    feas = w[:, 0] > 0
    w = np.where(feas[:, None], w, 1.0)
    Wh = U / np.sqrt(w)[:, None, :]
    lam0 = np.linalg.eigvalsh(np.swapaxes(Wh, 1, 2) @ R22 @ Wh)[:, -1]
    lam0 = np.maximum(lam0, 0.0)
    base = np.where(lam0 > 0, lam0, 1.0)

    def c2(x):
        lam = (base * np.exp(x) + lam0)[:, None, None]
        Z11, Z12, Z22 = R11 + lam * G11, R12 + lam * G12, R22 + lam * G22
        S = Z11 - Z12 @ np.linalg.solve(Z22, np.swapaxes(Z12, 1, 2))
        S = Si[:, :, None] * S * Si[:, None, :]
        return np.linalg.eigvalsh(S)[:, -1]

    # c^2 is convex in lam, hence unimodal in the log offset x
    a = np.full(len(J), -30.0)
    b = np.full(len(J), 30.0)
    for _ in range(90):
        c = b - _GOLD * (b - a)
        d = a + _GOLD * (b - a)
        left = c2(c) < c2(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    val = c2(0.5 * (a + b))
    return np.where(feas, np.sqrt(np.maximum(val, 0.0)), np.inf)


def stable_inverse(J: np.ndarray) -> np.ndarray:
    """Batch inverse with row and column equilibration."""
    r = 1.0 / np.abs(J).max(axis=2)
    Jr = J * r[:, :, None]
    c = 1.0 / np.abs(Jr).max(axis=1)
    return c[:, :, None] * np.linalg.inv(Jr * c[:, None, :]) * r[:, None, :]


def invariance_margin(J: np.ndarray, G: np.ndarray, mask: np.ndarray, kappa: float) -> np.ndarray:
    """``1 - aperture/kappa``; positive iff the cone maps strictly inside itself."""
    return 1.0 - image_aperture(J, G, mask) / kappa
