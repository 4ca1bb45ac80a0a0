"""Sampled Conley-Moser certificate for the Poincare map on a slab.

Work in the normalised chart of :mod:`.chart`, where the slab box is
``D = [-1, 1]^n`` split as unstable ``u`` and stable ``s``.  For each half
``a`` of the slab (``tau < 0`` holds ``p+``, ``tau > 0`` holds ``p-``) the
strip ``V_a = {q in H_a : Phi(q) in D}`` has to be a full stable-height
strip mapped across ``D``.  That is checked by solving
``Phi_u(u, s) = u'`` for ``u`` at a grid of stable heights ``s`` and target
values ``u'`` on the boundary of the unstable square (so the image covers
it), plus random interior pairs, and confirming each preimage lies in
``H_a`` and the image's stable part stays in ``D``.

At every preimage the chart Jacobian must map the unstable cone into
itself with expansion ``mu_u > 1`` and its inverse must do the same for
the stable cone with ``1/mu_s > 1``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..model import ModelSpec
from .chart import SlabChart, slab_chart
from .cones import cone_expansion, cone_form, invariance_margin, stable_inverse

KAPPA = math.tan(math.pi / 6)
STAT_MARGIN = 1e-6


@dataclass
class ConleyMoserReport:
    ell: int
    verdict: str
    mu_u: float
    mu_s: float
    strip_gap: float
    margins: dict
    samples: int
    failures: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    strips: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "verdict": self.verdict,
            "mu_u": self.mu_u,
            "mu_s": self.mu_s,
            "strip_gap": self.strip_gap,
            "margins": self.margins,
            "samples": self.samples,
            "failures": self.failures,
            "params": self.params,
            "strips": self.strips,
        }


def _grid(dim: int, count: int) -> np.ndarray:
    k = max(2, math.ceil(count ** (1.0 / dim) - 1e-9))
    ax = np.linspace(-1.0, 1.0, k)
    pts = np.array(list(itertools.product(ax, repeat=dim)))
    return pts[:count]


def _cube_boundary(dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 2:
        s = (np.arange(count) + 0.5) / count * 8.0 - 1.0  # perimeter parameter in [-1, 7)
        out = np.empty((count, 2))
        for i, v in enumerate(s):
            side, r = divmod(v + 1.0, 2.0)
            r -= 1.0
            out[i] = [(r, -1.0), (1.0, r), (-r, 1.0), (-1.0, -r)][int(side) % 4]
        return out
    pts = rng.uniform(-1, 1, (count, dim))
    face = rng.integers(0, dim, count)
    pts[np.arange(count), face] = rng.choice([-1.0, 1.0], count)
    return pts


def solve_unstable(ch: SlabChart, s: np.ndarray, target: np.ndarray, seed_u: np.ndarray,
                   tol: float = 1e-13, max_iter: int = 40):
    """Vectorised damped Newton for ``u`` with ``Phi_u(u, s) = target``.

    Steps are halved until the map is defined at the trial point and the
    residual drops; rows that cannot make progress are left unconverged.
    The residual floor grows with the expansion, so a row counts as solved
    once its residual is below ``tol * max(1e3, |J_uu|)``.
    """
    nu = ch.nu
    u = seed_u.copy()
    scale = np.full(len(u), 1e3)

    def resid(uu, ss, tt):
        F, good = ch.phi(np.concatenate([uu, ss], axis=1))
        r = F[:, :nu] - tt
        return r, np.where(good, np.max(np.abs(r), axis=1), np.inf)

    r, rn = resid(u, s, target)
    active = np.isfinite(rn) & (rn > tol * scale)
    for _ in range(max_iter):
        idx = np.where(active)[0]
        if idx.size == 0:
            break
        J, okj = ch.jacobian(np.concatenate([u[idx], s[idx]], axis=1), cols=np.arange(nu))
        Juu = J[:, :nu, :]
        okj &= np.isfinite(Juu).all(axis=(1, 2))
        with np.errstate(invalid="ignore", over="ignore"):
            okj[okj] &= np.abs(np.linalg.det(Juu[okj])) > 0
        Juu = np.where(okj[:, None, None], Juu, np.eye(nu))
        scale[idx] = np.maximum(1e3, np.abs(Juu).sum(axis=2).max(axis=1))
        step = np.linalg.solve(Juu, -r[idx][..., None])[..., 0]
        lam = np.ones(idx.size)
        pending = okj.copy()
        for _ in range(30):
            if not pending.any():
                break
            ip = idx[pending]
            cand = u[ip] + lam[pending, None] * step[pending]
            rc, rcn = resid(cand, s[ip], target[ip])
            better = rcn < rn[ip]
            acc = ip[better]
            u[acc], r[acc], rn[acc] = cand[better], rc[better], rcn[better]
            sub = np.where(pending)[0]
            pending[sub[better]] = False
            lam[sub[~better]] *= 0.5
        stuck = idx[pending | ~okj]
        active[stuck] = False
        active[idx] &= rn[idx] > tol * scale[idx]
    return u, rn <= 10 * tol * scale, np.concatenate([u, s], axis=1)


def _tangent(ch: SlabChart, Q: np.ndarray):
    """``(J_uu^-1, J_us)`` at chart rows; identity/zero where undefined."""
    nu = ch.nu
    J, ok = ch.jacobian(Q)
    ok &= np.isfinite(J).all(axis=(1, 2))
    with np.errstate(invalid="ignore", over="ignore"):
        ok[ok] &= np.abs(np.linalg.det(J[ok, :nu, :nu])) > 0
    Juu = np.where(ok[:, None, None], J[:, :nu, :nu], np.eye(nu))
    Jus = np.where(ok[:, None, None], J[:, :nu, nu:], 0.0)
    return np.linalg.inv(Juu), Jus


def continuation_solve(ch: SlabChart, a, s: np.ndarray, target: np.ndarray,
                       first: float = 0.25, min_step: float = 2.0 ** -14):
    """Solve ``Phi_u(u, s) = target`` by continuation from the fixed point of strip ``a``.

    ``a`` is a strip label or one label per row.

    Stable height and target move together from their fixed-point values.
    A tangent predictor seeds each Newton solve, and each row carries its
    own step, grown after a success and halved after a failure: the strip
    is thin in ``u`` and tilted strongly in ``s``, so uncorrected seeds fall
    off the domain of the map.
    """
    nu = ch.nu
    n = len(s)
    p = ch.fixed[np.broadcast_to(np.asarray(a, int), (n,))]
    u = p[:, :nu].copy()
    th = np.zeros(n)
    h = np.full(n, first)
    alive = np.ones(n, bool)
    Ki, Jus = np.empty((n, nu, nu)), np.empty((n, nu, ch.n - nu))
    for b in np.unique(np.asarray(a)):
        rows = np.all(p == ch.fixed[b], axis=1)
        kb, jb = _tangent(ch, ch.fixed[b][None, :])
        Ki[rows], Jus[rows] = kb[0], jb[0]
    while True:
        idx = np.where(alive & (th < 1.0))[0]
        if idx.size == 0:
            break
        nxt = np.minimum(1.0, th[idx] + h[idx])
        dth = (nxt - th[idx])[:, None]
        pi = p[idx]
        ss = pi[:, nu:] + nxt[:, None] * (s[idx] - pi[:, nu:])
        tt = pi[:, :nu] + nxt[:, None] * (target[idx] - pi[:, :nu])
        ds = dth * (s[idx] - pi[:, nu:])
        dt = dth * (target[idx] - pi[:, :nu])
        pred = u[idx] + np.einsum("nij,nj->ni", Ki[idx], dt - np.einsum("nij,nj->ni", Jus[idx], ds))
        u_new, c, Q = solve_unstable(ch, ss, tt, pred, max_iter=12)
        ok = idx[c]
        u[ok] = u_new[c]
        th[ok] = nxt[c]
        h[ok] *= 2.0
        more = c & (nxt < 1.0)
        if more.any():
            Ki[idx[more]], Jus[idx[more]] = _tangent(ch, Q[more])
        ko = idx[~c]
        h[ko] *= 0.5
        alive[ko[h[ko] < min_step]] = False
    conv = alive & (th >= 1.0)
    return u, conv, np.concatenate([u, s], axis=1)


def _fail(ell: int, reason: str, params: dict) -> ConleyMoserReport:
    return ConleyMoserReport(ell, "fail", math.nan, math.nan, math.nan, {}, 0,
                             [{"stage": "setup", "reason": reason}], params)


def verify_conley_moser(ell: int, spec: ModelSpec, *, kappa: float = KAPPA, n_stable: int = 16,
                        n_boundary: int = 32, n_interior: int | None = None, seed: int = 0,
                        stat_margin: float = STAT_MARGIN, jacobian_hook=None) -> ConleyMoserReport:
    """Sample the strip, expansion, contraction and invariance conditions.

    ``jacobian_hook(Q) -> J`` replaces the chart Jacobian in the cone tests
    (a test hook).  The verdict is ``"inconclusive"`` when nothing failed
    outright but samples left the domain, Newton stalled, or a margin is
    below ``stat_margin``.
    """
    n_interior = spec.tolerances.cm_samples if n_interior is None else n_interior
    params = {"kappa": kappa, "n_stable": n_stable, "n_boundary": n_boundary,
              "n_interior": n_interior, "seed": seed, "stat_margin": stat_margin,
              "split": "tau = 0 (geometric z midpoint)", "symbols": {"0": "p_plus", "1": "p_minus"}}
    try:
        ch = slab_chart(ell, spec)
    except Exception as exc:  # no slab means no horseshoe to certify
        return _fail(ell, f"{type(exc).__name__}: {exc}", params)
    if not np.all(np.isfinite(ch.fixed)) or not np.all(ch.in_box(ch.fixed)):
        return _fail(ell, "resident fixed points fall outside the chart box", params)
    rng = np.random.default_rng(seed)
    nu, d = ch.nu, ch.n
    ns = d - nu
    S_grid = _grid(ns, n_stable)
    U_bd = _cube_boundary(nu, n_boundary, rng)
    Gu = cone_form(nu, d, kappa, "unstable")
    Gs = cone_form(nu, d, kappa, "stable")
    umask = np.arange(d) < nu
    failures: list = []
    strips = {}
    mu_u = math.inf
    mu_s = 0.0
    worst = {"invariance_unstable": math.inf, "invariance_stable": math.inf, "stable_image": math.inf,
             "half_slab": math.inf, "slab_membership": math.inf, "chart_consistency": 0.0}
    bad_domain = 0
    total = 0
    tau_range = {}
    for a in (0, 1):
        s_b = np.repeat(S_grid, len(U_bd), axis=0)
        t_b = np.tile(U_bd, (len(S_grid), 1))
        s_i = rng.uniform(-1, 1, (n_interior, ns))
        t_i = rng.uniform(-1, 1, (n_interior, nu))
        s_all = np.concatenate([s_b, s_i])
        t_all = np.concatenate([t_b, t_i])
        kind = np.array(["boundary"] * len(s_b) + ["interior"] * len(s_i))
        total += len(s_all)
        u, conv, Q = continuation_solve(ch, a, s_all, t_all)
        F, _ = ch.phi(Q)
        for i in np.where(~conv)[0][:20]:
            failures.append({"strip": a, "kind": str(kind[i]), "stage": "newton", "s": s_all[i].tolist(),
                             "target": t_all[i].tolist()})
        bad_domain += int((~conv).sum())
        Qc, Fc = Q[conv], F[conv]
        # preimage in the right half of the box
        box_m = 1.0 - np.max(np.abs(Qc[:, :nu]), axis=1)
        side = Qc[:, 0] if a == 1 else -Qc[:, 0]
        half_m = np.minimum(box_m, side)
        img_m = 1.0 - np.max(np.abs(Fc[:, nu:]), axis=1)
        slab_m = ch.slab_margin(Qc)
        W, _ = ch.from_chart(Qc)
        Qback, okb = ch.to_chart(W)
        cons = np.where(okb, np.max(np.abs(Qback - Qc), axis=1), np.inf)
        # the slab is closed, so points on the sampled box faces sit at margin 0
        for name, arr, bad in (("half_slab", half_m, half_m <= 0), ("stable_image", img_m, img_m <= 0),
                               ("slab_membership", slab_m, slab_m < -1e-12)):
            worst[name] = min(worst[name], float(arr.min()) if arr.size else math.inf)
            for i in np.where(bad)[0][:20]:
                failures.append({"strip": a, "stage": name, "q": Qc[i].tolist(), "margin": float(arr[i])})
        worst["chart_consistency"] = max(worst["chart_consistency"], float(cons.max()) if cons.size else 0.0)
        for i in np.where(cons > 1e-8)[0][:20]:
            failures.append({"strip": a, "stage": "chart_consistency", "q": Qc[i].tolist(),
                             "error": float(cons[i])})
        # cones
        if jacobian_hook is not None:
            J = np.asarray(jacobian_hook(Qc), float)
            okj = np.ones(len(Qc), bool)
        else:
            J, okj = ch.jacobian(Qc)
        okj &= np.isfinite(J).all(axis=(1, 2))
        with np.errstate(invalid="ignore", over="ignore"):
            okj[okj] &= np.abs(np.linalg.det(J[okj])) > 0
        bad_domain += int((~okj).sum())
        J = J[okj]
        try:
            Jinv = stable_inverse(J)
            inv_u = invariance_margin(J, Gu, umask, kappa)
            inv_s = invariance_margin(Jinv, Gs, ~umask, kappa)
            exp_u = cone_expansion(J, Gu, umask)
            exp_s = cone_expansion(Jinv, Gs, ~umask)
        except np.linalg.LinAlgError as exc:
            failures.append({"strip": a, "stage": "cones", "reason": str(exc)})
            J = J[:0]
            inv_u = inv_s = exp_u = exp_s = np.empty(0)
        if len(J):
            mu_u = min(mu_u, float(exp_u.min()))
            mu_s = max(mu_s, float((1.0 / exp_s).max()))
            worst["invariance_unstable"] = min(worst["invariance_unstable"], float(inv_u.min()))
            worst["invariance_stable"] = min(worst["invariance_stable"], float(inv_s.min()))
        Qj = Qc[okj]
        for name, arr in (("invariance_unstable", inv_u), ("invariance_stable", inv_s),
                          ("expansion", exp_u - 1.0), ("contraction", exp_s - 1.0)):
            for i in np.where(arr <= 0)[0][:20]:
                failures.append({"strip": a, "stage": name, "q": Qj[i].tolist(), "value": float(arr[i])})
        tau_range[a] = (float(Qc[:, 0].min()), float(Qc[:, 0].max())) if len(Qc) else (math.nan, math.nan)
        strips[str(a)] = {"samples": int(len(s_all)), "converged": int(conv.sum()),
                          "tau_min": tau_range[a][0], "tau_max": tau_range[a][1],
                          "mu_u": float(exp_u.min()) if exp_u.size else math.nan,
                          "mu_s": float((1.0 / exp_s).max()) if exp_s.size else math.nan}
    if not math.isfinite(mu_u):
        mu_u, mu_s = math.nan, math.nan
        failures.append({"stage": "cones", "reason": "no sample with a usable Jacobian"})
    gap = tau_range[1][0] - tau_range[0][1]
    if not gap > 0:
        failures.append({"stage": "strip_gap", "value": gap})
    margins = {**worst, "strip_gap": gap, "mu_u_minus_1": mu_u - 1.0, "one_minus_mu_s": 1.0 - mu_s}
    hard = [f for f in failures if f.get("stage") not in ("newton",)]
    if hard:
        verdict = "fail"
    elif bad_domain or min(worst["invariance_unstable"], worst["invariance_stable"], worst["half_slab"],
                           worst["stable_image"], mu_u - 1.0, 1.0 - mu_s, gap) < stat_margin:
        verdict = "inconclusive"
    else:
        verdict = "pass"
    return ConleyMoserReport(ell, verdict, mu_u, mu_s, gap, margins, total, failures, params, strips)
