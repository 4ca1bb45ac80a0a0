"""Normalised chart on a slab and the Poincare map written in it.

A point of Sigma0 whose orbit crosses Sigma1 at time ``t`` is determined by
``q = (t, eta1, x0, v-0)``, where ``eta1`` lists the Sigma1 components of
``(z, v+)`` other than ``xi`` (``xi`` is recovered from the constraint).
Scaling gives chart coordinates in which the slab box is ``[-1, 1]^n0``::

    unstable  u = ((t - t_mid)/h_t, eta1/vp_bound)
    stable    s = (x0/x_bound, v-0/rho)

``t`` and ``eta1`` are the expanding directions (the ``t`` direction is the
spiral of the annulus), ``x0`` and ``v-0`` the contracting ones.  With ``t``
carried by the chart, one map evaluation costs one flight-time solve (for
the image point).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..global_map import p10_batch
from ..local_dynamics import flight_times, in_sigma0, p01_formulas
from ..model import ModelSpec, unstable_indices
from .frame import xi_index
from .slab import Slab, build_slab, slab_margins

# fraction of the half turn trimmed from each t-end so that the chart box
# sits inside the slab despite the z1 shift of z0 = (z1 + eta) exp(-gamma t)
T_TRIM = 0.05


@dataclass(frozen=True, eq=False)
class SlabChart:
    spec: ModelSpec
    slab: Slab
    xi: int
    eta1_idx: np.ndarray
    t_mid: float
    h_t: float
    x_bound: float
    vp_bound: float
    rho: float
    fixed: np.ndarray  # chart coordinates of p+ (row 0) and p- (row 1)

    @property
    def nu(self) -> int:
        return 1 + self.eta1_idx.size

    @property
    def n(self) -> int:
        return self.spec.n0

    # -- conversions -------------------------------------------------------

    def scale(self) -> np.ndarray:
        k = self.eta1_idx.size
        M = self.spec.M
        return np.concatenate([[self.h_t], np.full(k, self.vp_bound), [self.x_bound], np.full(M, self.rho)])

    def offset(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[0] = self.t_mid
        return out

    def to_chart(self, W: np.ndarray):
        """Chart coordinates of Sigma0 offsets plus a validity mask."""
        W = np.atleast_2d(np.asarray(W, float))
        N = self.spec.N
        t, status = flight_times(W, self.spec)
        ok = (status == 0) & in_sigma0(W, self.spec)
        p1 = p01_formulas(W, np.where(ok, t, 0.0), self.spec)
        Qraw = np.column_stack([t, p1[:, self.eta1_idx], W[:, 0], W[:, 2 + N:]])
        Q = (Qraw - self.offset()) / self.scale()
        Q[~ok] = np.nan
        return Q, ok

    def sigma1_from_chart(self, Q: np.ndarray):
        """Sigma1 offsets reached at time ``t`` and a mask of solvable rows."""
        Q = np.atleast_2d(np.asarray(Q, float))
        spec = self.spec
        s, g, N, M = spec.spectrum, spec.geometry, spec.N, spec.M
        R = Q * self.scale() + self.offset()
        t = R[:, 0]
        k = self.eta1_idx.size
        X = g.x_star + R[:, 1 + k]
        vm0 = R[:, 2 + k:]
        P = np.zeros((Q.shape[0], spec.n1))
        dec = X * np.exp(-s.alpha * t)
        P[:, 0] = dec * np.cos(s.beta * t)
        P[:, 1] = dec * np.sin(s.beta * t)
        P[:, self.eta1_idx] = R[:, 1:1 + k]
        P[:, 3 + N:] = np.exp(-np.outer(t, s.lambda_minus)) * (vm0 + g.v_star_minus)
        # solve the constraint for xi: a xi^2 + b xi + c = 0
        gm = spec.global_map
        B = gm.B
        c = P @ B
        b = np.full(Q.shape[0], B[self.xi])
        a = np.zeros(Q.shape[0])
        if gm.quad is not None and gm.quad_scale:
            Qy = gm.quad[-1]
            qs = gm.quad_scale
            c = c + qs * np.einsum("ni,ij,nj->n", P, Qy, P)
            b = b + 2 * qs * (P @ Qy[self.xi])
            a[:] = qs * Qy[self.xi, self.xi]
        disc = b * b - 4 * a * c
        ok = disc >= 0
        with np.errstate(invalid="ignore", divide="ignore"):
            den = b + np.copysign(np.sqrt(np.where(ok, disc, 0.0)), b)
            xi = np.where(den != 0, -2 * c / den, np.nan)
        P[:, self.xi] = xi
        ok &= np.isfinite(xi)
        return P, t, ok

    def from_chart(self, Q: np.ndarray):
        """Sigma0 offsets for chart rows; the inverse of :meth:`to_chart` on its image."""
        spec = self.spec
        s, g, N = spec.spectrum, spec.geometry, spec.N
        P, t, ok = self.sigma1_from_chart(Q)
        W = np.empty((P.shape[0], spec.n0))
        R = np.atleast_2d(Q) * self.scale() + self.offset()
        k = self.eta1_idx.size
        W[:, 0] = R[:, 1 + k]
        W[:, 1] = (P[:, 2] + g.eta) * np.exp(-s.gamma * t)
        W[:, 2:2 + N] = np.exp(-np.outer(t, s.lambda_plus)) * (P[:, 3:3 + N] + g.v_star_plus)
        W[:, 2 + N:] = R[:, 2 + k:]
        return W, ok

    # -- the map -------------------------------------------------------------

    def phi(self, Q: np.ndarray):
        """Poincare map in chart coordinates; rows that leave the domain are NaN."""
        P, _, ok = self.sigma1_from_chart(Q)
        img0 = p10_batch(P, self.spec)
        out, ok2 = self.to_chart(np.where(ok[:, None], img0, np.nan))
        good = ok & ok2
        out[~good] = np.nan
        return out, good

    def jacobian(self, Q: np.ndarray, h: float = 1e-6, cols=None):
        """Central-difference Jacobians ``(n, d, k)`` of :meth:`phi` at chart rows ``Q``.

        ``cols`` restricts the differentiated inputs (default: all ``d``).
        """
        Q = np.atleast_2d(Q)
        n, d = Q.shape
        cols = np.arange(d) if cols is None else np.asarray(cols)
        k = cols.size
        E = np.eye(d)[cols] * h
        probes = np.concatenate([(Q[:, None, :] + E).reshape(-1, d), (Q[:, None, :] - E).reshape(-1, d)])
        F, good = self.phi(probes)
        Fp = F[: n * k].reshape(n, k, d)
        Fm = F[n * k:].reshape(n, k, d)
        J = np.swapaxes((Fp - Fm) / (2 * h), 1, 2)
        ok = good.reshape(2, n, k).all(axis=(0, 2))
        return J, ok

    def in_box(self, Q: np.ndarray, tol: float = 0.0) -> np.ndarray:
        Q = np.atleast_2d(Q)
        return np.all(np.abs(Q) <= 1 + tol, axis=1) & np.all(np.isfinite(Q), axis=1)

    def half(self, Q: np.ndarray) -> np.ndarray:
        """Half-slab label: 0 for ``tau < 0`` (contains p+), 1 for ``tau > 0``."""
        return (np.atleast_2d(Q)[:, 0] > 0).astype(int)

    def split(self, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        Q = np.atleast_2d(Q)
        return Q[:, : self.nu], Q[:, self.nu:]

    def slab_margin(self, Q: np.ndarray) -> np.ndarray:
        W, ok = self.from_chart(Q)
        m = slab_margins(W, (self.slab.z_lo, self.slab.z_hi, self.slab.x_bound), self.spec).min(axis=1)
        return np.where(ok, m, -np.inf)


@lru_cache(maxsize=64)
def slab_chart(ell: int, spec: ModelSpec) -> SlabChart:
    slab = build_slab(ell, spec)
    g, M = spec.geometry, spec.M
    xi = xi_index(spec)
    eta1 = np.array([i for i in unstable_indices(spec) if i != xi], dtype=int)
    half = 0.5 * (slab.t_hi - slab.t_lo)
    trim = T_TRIM * half
    t_mid = 0.5 * (slab.t_lo + slab.t_hi)
    rho = 0.5 * (g.eta - float(np.linalg.norm(g.v_star_minus))) / math.sqrt(M)
    ch = SlabChart(spec, slab, xi, eta1, t_mid, half - trim, slab.x_bound, slab.vp_bound, rho,
                   np.zeros((2, spec.n0)))
    F, ok = ch.to_chart(np.array([slab.fp_plus.raw.as_array(), slab.fp_minus.raw.as_array()]))
    object.__setattr__(ch, "fixed", F)
    return ch
