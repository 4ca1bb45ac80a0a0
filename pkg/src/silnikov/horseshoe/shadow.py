"""Points of the invariant set with a prescribed itinerary.

For a word ``a_-k .. a_j`` the finite-depth image ``phi(a)`` is the anchor
of an orbit segment ``y_-k .. y_j`` in the slab chart with ``y_i`` in the
half ``H_(a_i)`` and ``Phi(y_i) = y_(i+1)``.  The segment is pinned by the
stable coordinates of ``p_(a_-k)`` at its start and the unstable
coordinates of ``p_(a_j)`` at its end, which is the well-posed pairing:
``u`` is solved backwards through the contracting inverse, ``s`` is pushed
forwards through the contracting map.  The two sweeps alternate until
the segment stops moving (a nested-rectangle refinement expressed as a
boundary value problem).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..global_map import poincare_batch
from ..local_dynamics import Sigma0Point
from ..model import ModelSpec
from .chart import SlabChart, slab_chart
from .conley_moser import continuation_solve, solve_unstable
from .cones import stable_inverse
from .symbolic import SymbolWord, shift_chi

SWEEP_TOL = 1e-15
MAX_SWEEPS = 60
MAX_WORD_LEN = 12
POLISH_STEPS = 3


class EmptyIntersection(RuntimeError):
    def __init__(self, word: SymbolWord, depth: int, reason: str):
        super().__init__(f"no point with itinerary {word} at depth {depth}: {reason}")
        self.word = word
        self.depth = depth


@dataclass(frozen=True, eq=False)
class CantorPointCertificate:
    word: SymbolWord
    point: Sigma0Point
    chart_point: np.ndarray
    orbit: np.ndarray  # chart coordinates of y_-k .. y_j
    forward_check: int
    backward_check: int
    max_drift: float
    residual: float
    sweeps: int

    @property
    def verified(self) -> bool:
        return self.forward_check == self.word.j and self.backward_check == self.word.k

    def to_dict(self) -> dict:
        return {
            "word": str(self.word),
            "point": self.point.as_array().tolist(),
            "chart_point": self.chart_point.tolist(),
            "forward_check": self.forward_check,
            "backward_check": self.backward_check,
            "verified": self.verified,
            "max_drift": self.max_drift,
            "residual": self.residual,
            "sweeps": self.sweeps,
        }


# ---------------------------------------------------------------------------
# preimages and itineraries


def solve_preimage(ch: SlabChart, y: np.ndarray, a, max_iter: int = 15, max_rounds: int = 24):
    """Chart points ``q`` in half ``a`` with ``Phi(q) = y``.

    Newton from the linearisation at ``p_a`` first; rows it does not settle
    go through continuation from ``p_a`` with at most ``max_rounds`` stages.
    """
    y = np.atleast_2d(y)
    n = len(y)
    a = np.broadcast_to(np.asarray(a, int), (n,))
    p = ch.fixed[a]
    Jp, _ = ch.jacobian(ch.fixed)
    Kp = stable_inverse(Jp)
    seed = p + np.einsum("nij,nj->ni", Kp[a], y - p)
    q, conv = _newton_full(ch, y, seed, max_iter)
    th = np.where(conv, 1.0, 0.0)
    q[~conv] = p[~conv]
    h = np.full(n, 0.25)
    alive = np.all(np.isfinite(y), axis=1)
    for _ in range(max_rounds):
        idx = np.where(alive & (th < 1.0))[0]
        if idx.size == 0:
            break
        nxt = np.minimum(1.0, th[idx] + h[idx])
        tgt = p[idx] + nxt[:, None] * (y[idx] - p[idx])
        qi, ok = _newton_full(ch, tgt, q[idx], max_iter)
        acc = idx[ok]
        q[acc], th[acc] = qi[ok], nxt[ok]
        h[acc] *= 2.0
        rej = idx[~ok]
        h[rej] *= 0.5
        alive[rej[h[rej] < 2.0 ** -8]] = False
    conv = alive & (th >= 1.0)
    return q, conv


def _newton_full(ch: SlabChart, target: np.ndarray, q0: np.ndarray, max_iter: int):
    q = q0.copy()
    F, good = ch.phi(q)
    r = F - target
    rn = np.where(good, np.max(np.abs(r), axis=1), np.inf)
    done = np.zeros(len(q), bool)
    # the residual floor grows with the expansion of the map
    scale = np.full(len(q), 1e3)
    for _ in range(max_iter):
        idx = np.where(~done & np.isfinite(rn))[0]
        if idx.size == 0:
            break
        J, okj = ch.jacobian(q[idx])
        okj &= np.isfinite(J).all(axis=(1, 2))
        J = np.where(okj[:, None, None], J, np.eye(ch.n))
        scale[idx] = np.maximum(1e3, np.abs(J).sum(axis=2).max(axis=1))
        step = -np.einsum("nij,nj->ni", stable_inverse(J), r[idx])
        lam = np.ones(idx.size)
        pending = okj.copy()
        for _ in range(20):
            if not pending.any():
                break
            ip = idx[pending]
            cand = q[ip] + lam[pending, None] * step[pending]
            Fc, gc = ch.phi(cand)
            rc = Fc - target[ip]
            rcn = np.where(gc, np.max(np.abs(rc), axis=1), np.inf)
            better = rcn < rn[ip]
            acc = ip[better]
            q[acc], r[acc], rn[acc] = cand[better], rc[better], rcn[better]
            sub = np.where(pending)[0]
            pending[sub[better]] = False
            lam[sub[~better]] *= 0.5
        small = np.max(np.abs(step), axis=1) <= 1e-14 * np.maximum(1.0, np.max(np.abs(q[idx]), axis=1))
        done[idx[pending | ~okj | small | (rn[idx] <= 1e-15)]] = True
    return q, rn <= 1e-12 * scale


def _itinerary_batch(ch: SlabChart, Q0: np.ndarray, n_fwd: int, n_bwd: int):
    """Symbols and chart iterates forward and backward from chart rows ``Q0``.

    Returns ``(fwd, bwd, Fp, Bp)``: symbol arrays ``(n, n_fwd)`` and
    ``(n, n_bwd)`` with ``-1`` after a departure, and the iterates.
    """
    n, d = Q0.shape
    fwd = np.full((n, n_fwd), -1)
    bwd = np.full((n, n_bwd), -1)
    Fp = np.full((n, n_fwd, d), np.nan)
    Bp = np.full((n, n_bwd, d), np.nan)
    # forward iterates are taken in Sigma0 and only labelled in the chart:
    # the chart's flight-time coordinate adds a rounding error per step
    # that the expansion then amplifies
    W, good = ch.from_chart(Q0)
    live = ch.in_box(Q0) & good
    for i in range(n_fwd):
        W, _, status = poincare_batch(np.where(live[:, None], W, 0.0), ch.spec)
        live &= status == 0
        q, good = ch.to_chart(np.where(live[:, None], W, 0.0))
        live &= good & ch.in_box(q)
        fwd[live, i] = ch.half(q[live])
        Fp[live, i] = q[live]
    live = ch.in_box(Q0)
    q = Q0.copy()
    both = np.tile([0, 1], n)
    for i in range(n_bwd):
        idx = np.where(live)[0]
        if idx.size == 0:
            break
        cands, conv = solve_preimage(ch, np.repeat(q[idx], 2, axis=0), both[: 2 * idx.size])
        inside = (conv & ch.in_box(cands) & (ch.half(cands) == both[: 2 * idx.size])).reshape(-1, 2)
        cands = cands.reshape(-1, 2, d)
        # two admissible preimages would mean overlapping image strips; keep the one nearer the split
        pick = np.where(inside.sum(axis=1) == 1, np.argmax(inside, axis=1),
                        np.argmin(np.abs(cands[:, :, 0]), axis=1))
        has = inside.any(axis=1)
        live[idx[~has]] = False
        keep = idx[has]
        q[keep] = cands[has, pick[has]]
        bwd[keep, i] = pick[has]
        Bp[keep, i] = q[keep]
    return fwd, bwd, Fp, Bp


def _word_from(anchor: int, fwd: np.ndarray, bwd: np.ndarray) -> SymbolWord:
    f = [int(v) for v in fwd]
    b = [int(v) for v in bwd]
    departed = None
    if -1 in f:
        departed = f.index(-1) + 1
        f = f[: departed - 1]
    if -1 in b:
        cut = b.index(-1)
        departed = -(cut + 1) if departed is None else departed
        b = b[:cut]
    return SymbolWord(tuple(reversed(b)), anchor, tuple(f), departed=departed)


def itinerary_of(w, n_fwd: int, n_bwd: int, ell: int, spec: ModelSpec) -> SymbolWord:
    """Strip labels of the iterates of ``w``; ``departed`` marks a truncation."""
    ch = slab_chart(ell, spec)
    q0, ok = ch.to_chart(np.asarray(w.as_array() if hasattr(w, "as_array") else w, float)[None])
    if not (ok[0] and ch.in_box(q0)[0]):
        return SymbolWord((), 0, (), departed=0)
    fwd, bwd, _, _ = _itinerary_batch(ch, q0, n_fwd, n_bwd)
    return _word_from(int(ch.half(q0)[0]), fwd[0], bwd[0])


# ---------------------------------------------------------------------------
# shadowing


def _solve_u(ch: SlabChart, a: np.ndarray, s: np.ndarray, target: np.ndarray, seed_u: np.ndarray | None):
    """``u`` with ``Phi_u(u, s) = target``: warm Newton from ``seed_u``, continuation where that fails."""
    if seed_u is None:
        u, c, _ = continuation_solve(ch, a, s, target)
        return u, c
    u, c, _ = solve_unstable(ch, s, target, seed_u, max_iter=12)
    if not c.all():
        bad = ~c
        u_b, c_b, _ = continuation_solve(ch, a[bad], s[bad], target[bad])
        u[bad], c[bad] = u_b, c_b
    # polish to the rounding floor: the segment defects get multiplied by
    # the expansion when the itinerary is re-verified by iteration
    u_p, _, _ = solve_unstable(ch, s, target, u, tol=0.0, max_iter=POLISH_STEPS)
    return np.where(c[:, None], u_p, u), c


def _sweep_solve(ch: SlabChart, sym: np.ndarray):
    """Alternating sweeps for a batch of words of one window shape.

    ``sym`` is ``(n_words, L)``; returns the segments ``(n_words, L, d)``,
    a convergence mask, the segment residuals and the sweep count.

    The backward pass fits each ``u_i`` to ``u_(i+1)``; the forward pass
    pushes ``s_(i+1) = Phi_s(y_i)`` after refitting ``u_i`` to the current
    ``s_i``, since the strips are thin in ``u`` and an old ``u_i`` may put
    ``y_i`` outside the domain of the map.
    """
    nu = ch.nu
    nw, L = sym.shape
    Y = ch.fixed[sym].copy()
    ok = np.ones(nw, bool)
    prev = Y.copy()
    sweeps = 0

    def fit(i, seed):
        u_i, c = _solve_u(ch, sym[:, i], Y[:, i, nu:], Y[:, i + 1, :nu], seed)
        Y[:, i, :nu] = np.where(c[:, None], u_i, Y[:, i, :nu])
        return c

    for sweeps in range(1, MAX_SWEEPS + 1):
        for i in range(L - 2, -1, -1):
            ok &= fit(i, None if sweeps == 1 else Y[:, i, :nu].copy())
        for i in range(L - 1):
            if i > 0:
                ok &= fit(i, Y[:, i, :nu].copy())
            F, good = ch.phi(Y[:, i])
            ok &= good
            Y[:, i + 1, nu:] = np.where(good[:, None], F[:, nu:], Y[:, i + 1, nu:])
        change = np.max(np.abs(Y - prev), axis=(1, 2))
        prev = Y.copy()
        if np.all(change[ok] <= SWEEP_TOL) or not ok.any():
            break
    F, good = ch.phi(Y[:, :-1].reshape(-1, ch.n))
    res = np.max(np.abs(F.reshape(nw, L - 1, ch.n) - Y[:, 1:]), axis=(1, 2)) if L > 1 else np.zeros(nw)
    res = np.where(good.reshape(nw, -1).all(axis=1) if L > 1 else True, res, np.inf)
    return Y, ok, res, sweeps


def _certify(ch: SlabChart, words: list, Y: np.ndarray, res: np.ndarray, sweeps: int,
             spec: ModelSpec) -> list:
    """Certificates for words of one window shape from their segments ``Y``."""
    k, j = words[0].k, words[0].j
    sym = np.array([w.symbols() for w in words])
    for r, w in enumerate(words):
        bad = ~ch.in_box(Y[r]) | (ch.half(Y[r]) != sym[r])
        if bad.any():
            raise EmptyIntersection(w, int(np.argmax(bad)) - k, "segment leaves its strip")
    Q0 = Y[:, k]
    W, okw = ch.from_chart(Q0)
    fwd, bwd, Fp, Bp = _itinerary_batch(ch, Q0, j, k)
    out = []
    for r, w in enumerate(words):
        if not okw[r]:
            raise EmptyIntersection(w, 0, "anchor not in the domain of the chart")
        fm = np.cumprod(fwd[r] == sym[r, k + 1:]).astype(bool)
        bm = np.cumprod(bwd[r] == sym[r, :k][::-1]).astype(bool)
        drift = 0.0
        if fm.any():
            drift = max(drift, float(np.max(np.abs(Fp[r, fm] - Y[r, k + 1:][fm]))))
        if bm.any():
            drift = max(drift, float(np.max(np.abs(Bp[r, bm] - Y[r, :k][::-1][bm]))))
        point = Sigma0Point.from_array(W[r], spec.N)
        out.append(CantorPointCertificate(w, point, Q0[r].copy(), Y[r].copy(), int(fm.sum()),
                                          int(bm.sum()), drift, float(res[r]), sweeps))
    return out


def shadow_words(words, ell: int, spec: ModelSpec) -> list[CantorPointCertificate]:
    """Shadow a list of words, batching those with the same window shape."""
    words = list(words)
    for w in words:
        if len(w) > MAX_WORD_LEN + 1:
            raise ValueError(f"word {w} longer than max_word_len={MAX_WORD_LEN}")
    ch = slab_chart(ell, spec)
    out: list = [None] * len(words)
    groups: dict = {}
    for i, w in enumerate(words):
        groups.setdefault((w.k, w.j), []).append(i)
    for (k, j), idx in sorted(groups.items()):
        sym = np.array([words[i].symbols() for i in idx])
        Y, ok, res, sweeps = _sweep_solve(ch, sym)
        for r, i in enumerate(idx):
            if not ok[r] or not np.isfinite(res[r]):
                raise EmptyIntersection(words[i], 0, "sweeps did not converge")
        for i, c in zip(idx, _certify(ch, [words[i] for i in idx], Y, res, sweeps, spec)):
            out[i] = c
    return out


def shadow_orbit(word: SymbolWord, ell: int, spec: ModelSpec) -> CantorPointCertificate:
    return shadow_words([word], ell, spec)[0]


# ---------------------------------------------------------------------------
# conjugacy and sensitivity


@dataclass
class ConjugacyReport:
    word: str
    distance: float
    conj_tol: float
    depth: int
    passed: bool

    def to_dict(self) -> dict:
        return {"word": self.word, "distance": self.distance, "conj_tol": self.conj_tol,
                "depth": self.depth, "passed": self.passed}


def conjugacy_tolerance(mu_u: float, mu_s: float, word: SymbolWord) -> float:
    """Window truncation error: the past end decays like ``mu_s^k``, the future end like ``mu_u^-(j-1)``."""
    depth = min(word.k, word.j - 1)
    return 2.0 * max(mu_s, 1.0 / mu_u) ** depth


def conjugacy_distance(cert: CantorPointCertificate, cert_shift: CantorPointCertificate, ch: SlabChart) -> float:
    """Chart max-norm distance between ``P(phi(a))`` and ``phi(chi(a))``."""
    img, good = ch.phi(cert.chart_point[None])
    if not good[0]:
        return math.inf
    return float(np.max(np.abs(img[0] - cert_shift.chart_point)))


def check_conjugacy_batch(words, ell: int, spec: ModelSpec, mu_u: float, mu_s: float) -> list[ConjugacyReport]:
    ch = slab_chart(ell, spec)
    words = list(words)
    shifted = [shift_chi(w) for w in words]
    certs = shadow_words(words + shifted, ell, spec)
    out = []
    for w, c, cs in zip(words, certs[: len(words)], certs[len(words):]):
        d = conjugacy_distance(c, cs, ch)
        tol = conjugacy_tolerance(mu_u, mu_s, w)
        out.append(ConjugacyReport(str(w), d, tol, min(w.k, w.j - 1), bool(d <= tol)))
    return out


def check_conjugacy(word: SymbolWord, ell: int, spec: ModelSpec, mu_u: float | None = None,
                    mu_s: float | None = None) -> ConjugacyReport:
    """``|P(phi(a)) - phi(chi(a))|`` against the window tolerance.

    Without measured rates the Conley-Moser certificate is run to get them.
    """
    if mu_u is None or mu_s is None:
        from .conley_moser import verify_conley_moser

        rep = verify_conley_moser(ell, spec)
        mu_u, mu_s = rep.mu_u, rep.mu_s
    return check_conjugacy_batch([word], ell, spec, mu_u, mu_s)[0]


@dataclass
class SensitivityRow:
    j: int
    word_a: str
    word_b: str
    delta: float
    separation: float
    separation_step: int


def sensitivity(ell: int, spec: ModelSpec, base: SymbolWord | None = None, n_past: int = 3,
                n_future: int = 7, js=range(2, 7)) -> list[SensitivityRow]:
    """Pairs of words that first differ at ``k = j``: initial distance and orbit separation.

    ``delta`` is the chart distance of the two anchors; ``separation`` the
    largest chart distance of the shadowing segments over steps ``0..j``.
    """
    if base is None:
        bits = [(i * 5 + 3) % 7 % 2 for i in range(n_past + 1 + n_future)]
        base = SymbolWord(bits[:n_past], bits[n_past], bits[n_past + 1:])
    pairs = []
    for j in js:
        fut = list(base.future)
        fut[j - 1] = 1 - fut[j - 1]
        pairs.append((j, base, SymbolWord(base.past, base.anchor, fut)))
    certs = shadow_words([base] + [p[2] for p in pairs], ell, spec)
    ca = certs[0]
    rows = []
    for (j, a, b), cb in zip(pairs, certs[1:]):
        dist = np.max(np.abs(ca.orbit - cb.orbit), axis=1)[a.k:a.k + j + 1]
        rows.append(SensitivityRow(j, str(a), str(b), float(dist[0]), float(dist.max()), int(np.argmax(dist))))
    return rows
