"""Leading-order data and Newton-refined fixed points of the Poincare map.

The fixed points are labelled by an integer ``ell``; at leading order the
return time is ``(ell*pi - phi)/beta`` where ``phi`` comes from the reduced
constraint ``Delta1 cos(beta t) + Delta2 sin(beta t) = 0``.

Silnikov coordinates are ``u = (t, x0, v-0, z1, v+1)``.  The Newton solve
works in the rescaled frame (each coordinate multiplied by ``exp(alpha t)``)
with the *exact* fixed-point equations multiplied through by the same factor;
that is a diagonal scaling of the raw system, not an approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .global_map import poincare_batch
from .io import write_csv
from .local_dynamics import Sigma0Point, in_sigma0
from .model import ModelSpec


class LeadingOrderError(ValueError):
    pass


def extract_C_D(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    N = spec.N
    A = spec.global_map.A
    rows = slice(1, 2 + N)  # (z, v+) rows of the Sigma0 image
    return A[rows, 2:3 + N].copy(), A[rows, 0:2].copy()


def _c_inverse(C: np.ndarray, allow_singular: bool) -> np.ndarray:
    sv = np.linalg.svd(C, compute_uv=False)
    if sv[-1] <= 1e-14 * sv[0]:
        if not allow_singular:
            raise LeadingOrderError("C is singular (check lemma3 fails)")
        return np.linalg.pinv(C)
    return np.linalg.inv(C)


def delta_coefficients(spec: ModelSpec, allow_singular: bool = False) -> tuple[float, float]:
    N = spec.N
    C, D = extract_C_D(spec)
    B = spec.global_map.B
    b_red = B[0:2] - B[2:3 + N] @ _c_inverse(C, allow_singular) @ D
    xs = spec.geometry.x_star
    return float(xs * b_red[0]), float(xs * b_red[1])


def phase_from_deltas(d1: float, d2: float) -> float:
    if d2 == 0.0:
        return math.pi / 2
    return math.atan(d1 / d2)


@dataclass(frozen=True, eq=False)
class LeadingOrderData:
    C: np.ndarray
    D: np.ndarray
    Delta1: float
    Delta2: float
    phi: float


def leading_order_data(spec: ModelSpec) -> LeadingOrderData:
    C, D = extract_C_D(spec)
    d1, d2 = delta_coefficients(spec)
    if d1 == 0.0 and d2 == 0.0:
        raise LeadingOrderError("Delta1 = Delta2 = 0 (assumption A5 fails)")
    return LeadingOrderData(C, D, d1, d2, phase_from_deltas(d1, d2))


def leading_time(ell: int, spec: ModelSpec, lod: LeadingOrderData | None = None) -> float:
    lod = lod or leading_order_data(spec)
    return (ell * math.pi - lod.phi) / spec.spectrum.beta


@dataclass(frozen=True, eq=False)
class SilnikovCoords:
    """Rescaled coordinates (hatted variables) of a fixed point."""

    t_star: float
    x0: float
    v_minus0: np.ndarray
    z1: float
    v_plus1: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.t_star, self.x0], self.v_minus0, [self.z1], self.v_plus1])

    @classmethod
    def from_array(cls, u, spec: ModelSpec) -> "SilnikovCoords":
        M = spec.M
        u = np.asarray(u, float)
        return cls(float(u[0]), float(u[1]), u[2:2 + M].copy(), float(u[2 + M]), u[3 + M:].copy())


def leading_fixed_point(ell: int, spec: ModelSpec) -> SilnikovCoords:
    if ell < 1:
        raise ValueError("ell must be a positive integer")
    lod = leading_order_data(spec)
    N = spec.N
    A = spec.global_map.A
    t = leading_time(ell, spec, lod)
    xs = spec.geometry.x_star
    r = np.array([xs * math.cos(spec.spectrum.beta * t), xs * math.sin(spec.spectrum.beta * t)])
    zv = -np.linalg.solve(lod.C, lod.D @ r)
    p_hat = np.concatenate([r, zv, np.zeros(spec.M)])
    x0 = float(A[0] @ p_hat)
    vm0 = A[2 + N:] @ p_hat
    return SilnikovCoords(t, x0, vm0, float(zv[0]), zv[1:])


# ---------------------------------------------------------------------------
# exact fixed-point system


def _hat_pieces(u: np.ndarray, spec: ModelSpec):
    s, g, N, M = spec.spectrum, spec.geometry, spec.N, spec.M
    t = u[0]
    E = math.exp(-s.alpha * t)
    x0h, vm0h, z1h, vp1h = u[1], u[2:2 + M], u[2 + M], u[3 + M:]
    bt = s.beta * t
    ph = np.empty(spec.n1)
    ph[0] = (x0h * E + g.x_star) * math.cos(bt)
    ph[1] = (x0h * E + g.x_star) * math.sin(bt)
    ph[2] = z1h
    ph[3:3 + N] = vp1h
    ph[3 + N:] = np.exp((s.alpha - s.lambda_minus) * t) * (vm0h * E + g.v_star_minus)
    wh = np.empty(spec.n0)
    wh[0] = x0h
    wh[1] = math.exp((s.alpha - s.gamma) * t) * (z1h * E + g.eta)
    wh[2:2 + N] = np.exp((s.alpha - s.lambda_plus) * t) * (vp1h * E + g.v_star_plus)
    wh[2 + N:] = vm0h
    return E, ph, wh


def scaled_residual(u: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """``exp(alpha t)`` times the exact residual of ``P(w) = w`` plus the constraint."""
    gm = spec.global_map
    # trial steps far from the root may overflow; Newton rejects non-finite values
    with np.errstate(over="ignore", invalid="ignore"):
        E, ph, wh = _hat_pieces(np.asarray(u, float), spec)
        img = gm.A @ ph
        con = gm.B @ ph
        if gm.quad is not None and gm.quad_scale:
            img = img + gm.quad_scale * E * np.einsum("i,kij,j->k", ph, gm.quad[:-1], ph)
            con = con + gm.quad_scale * E * (ph @ gm.quad[-1] @ ph)
        return np.concatenate([img - wh, [con]])


def raw_from_hat(u: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Sigma0 offsets of the point with Silnikov coordinates ``u`` (hatted)."""
    s, g, N, M = spec.spectrum, spec.geometry, spec.N, spec.M
    u = np.asarray(u, float)
    t = u[0]
    E = math.exp(-s.alpha * t)
    w = np.empty(spec.n0)
    w[0] = u[1] * E
    w[1] = (u[2 + M] * E + g.eta) * math.exp(-s.gamma * t)
    w[2:2 + N] = np.exp(-s.lambda_plus * t) * (u[3 + M:] * E + g.v_star_plus)
    w[2 + N:] = u[2:2 + M] * E
    return w


def _fd_jac(f, u: np.ndarray, f0: np.ndarray) -> np.ndarray:
    n = u.size
    J = np.empty((f0.size, n))
    for i in range(n):
        h = 1e-7 * max(1.0, abs(u[i])) if i == 0 else 1e-8
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        J[:, i] = (f(up) - f(um)) / (2 * h)
    return J


def newton(f, u0: np.ndarray, tol: float, max_iter: int, polish: int = 3):
    """Damped Newton with step halving; returns ``(u, |F|_inf, iterations, converged)``."""
    u = np.asarray(u0, float).copy()
    F = f(u)
    r = float(np.max(np.abs(F)))
    it = 0
    extra = 0
    while it < max_iter:
        if r <= tol:
            if extra >= polish:
                break
            extra += 1
        it += 1
        J = _fd_jac(f, u, F)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -F, rcond=None)[0]
        lam = 1.0
        for _ in range(21):
            cand = u + lam * step
            Fc = f(cand)
            rc = float(np.max(np.abs(Fc)))
            if np.isfinite(rc) and rc < r:
                break
            lam *= 0.5
        else:
            break
        u, F, r = cand, Fc, rc
    return u, r, it, r <= tol


@dataclass(frozen=True, eq=False)
class FixedPointRecord:
    ell: int
    T_ell: float
    coords: SilnikovCoords
    raw: Sigma0Point
    residual: float
    scaled_residual: float
    newton_iters: int
    converged: bool
    leading_T: float
    message: str = ""

    @property
    def gap(self) -> float:
        return abs(self.T_ell - self.leading_T)


@lru_cache(maxsize=4096)
def refine_fixed_point(ell: int, spec: ModelSpec) -> FixedPointRecord:
    """Newton-refined fixed point number ``ell``.

    The solution is re-checked by applying the Poincare map to the raw
    point: the flight time found there must agree with the solved one and
    the displacement must be small.  A failed re-check marks the record
    unconverged.
    """
    tol = spec.tolerances
    seed = leading_fixed_point(ell, spec)
    lead_T = seed.t_star
    u, r, iters, ok = newton(lambda v: scaled_residual(v, spec), seed.as_array(), tol.newton_tol,
                             tol.newton_max_iter)
    raw = raw_from_hat(u, spec)
    msg = "" if ok else f"Newton did not reach tolerance (|F|={r:.3g}); ell may be below ell0"
    residual = math.inf
    if np.all(np.isfinite(raw)) and in_sigma0(raw, spec)[0]:
        img, t, status = poincare_batch(raw[None, :], spec)
        if status[0] == 0:
            residual = float(np.max(np.abs(img[0] - raw)))
            if ok and abs(t[0] - u[0]) > 1e-8 * max(1.0, u[0]):
                ok = False
                msg = f"first crossing at t={t[0]:.12g} differs from solved t={u[0]:.12g}"
        elif ok:
            ok = False
            msg = "no Sigma1 crossing from the solved point"
    elif ok:
        ok = False
        msg = "solved point lies outside Sigma0"
    if ok and residual > 10 * tol.newton_tol:
        ok = False
        msg = f"Poincare re-check displacement {residual:.3g} too large"
    return FixedPointRecord(
        ell=ell,
        T_ell=float(u[0]),
        coords=SilnikovCoords.from_array(u, spec),
        raw=Sigma0Point.from_array(raw, spec.N),
        residual=residual,
        scaled_residual=r,
        newton_iters=iters,
        converged=bool(ok),
        leading_T=lead_T,
        message=msg,
    )


@dataclass(frozen=True)
class FixedPointFamily:
    records: tuple[FixedPointRecord, ...]
    ell0: int | None

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def by_ell(self, ell: int) -> FixedPointRecord:
        for r in self.records:
            if r.ell == ell:
                return r
        raise KeyError(ell)


def fixed_point_family(ell_range, spec: ModelSpec) -> FixedPointFamily:
    ells = list(ell_range)
    if not ells:
        raise ValueError("empty ell range")
    recs = tuple(refine_fixed_point(int(e), spec) for e in ells)
    ell0 = None
    for r in reversed(recs):
        if not r.converged:
            break
        ell0 = r.ell
    return FixedPointFamily(recs, ell0)


def family_rows(family: FixedPointFamily, spec: ModelSpec):
    N, M = spec.N, spec.M
    header = (["ell", "T_ell", "leading_T", "gap", "residual", "converged", "t_star", "x0_hat"]
              + [f"vm0_hat_{j}" for j in range(M)] + ["z1_hat"] + [f"vp1_hat_{j}" for j in range(N)]
              + ["raw_x0", "raw_z0"] + [f"raw_vp0_{j}" for j in range(N)] + [f"raw_vm0_{j}" for j in range(M)])
    rows = []
    for r in family:
        rows.append([r.ell, r.T_ell, r.leading_T, r.gap, r.residual, int(r.converged)]
                    + [float(v) for v in r.coords.as_array()] + [float(v) for v in r.raw.as_array()])
    return header, rows


def export_family_csv(family: FixedPointFamily, spec: ModelSpec, path) -> None:
    header, rows = family_rows(family, spec)
    write_csv(path, header, rows)
