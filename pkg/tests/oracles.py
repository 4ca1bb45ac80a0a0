"""Independent reference computations used by the tests."""
import numpy as np


def sigma1_curve(w, t, spec):
    """Sigma1 offsets along the linear flow from Sigma0 offsets ``w`` at times ``t``."""
    s, g, N = spec.spectrum, spec.geometry, spec.N
    t = np.asarray(t, float)
    X = g.x_star + w[0]
    rot = X * np.exp((-s.alpha + 1j * s.beta) * t)
    cols = [rot.real, rot.imag, w[1] * np.exp(s.gamma * t) - g.eta]
    cols += [np.exp(lp * t) * w[2 + i] - g.v_star_plus[i] for i, lp in enumerate(s.lambda_plus)]
    cols += [np.exp(-lm * t) * (g.v_star_minus[i] + w[2 + N + i]) for i, lm in enumerate(s.lambda_minus)]
    return np.stack(cols, axis=-1)


def crossing_function(w, t, spec):
    gm = spec.global_map
    P = sigma1_curve(w, t, spec)
    val = P @ gm.B
    if gm.quad is not None and gm.quad_scale:
        val = val + gm.quad_scale * np.einsum("...i,ij,...j->...", P, gm.quad[-1], P)
    return val


def dense_first_root(w, spec, t_lo, t_hi, n=1_000_000, chunk=250_000):
    """First sign change of the crossing function on an ``n``-point grid.

    Returns the bracketing interval, or ``None`` when there is none.
    """
    grid = np.linspace(t_lo, t_hi, n)
    for start in range(0, n, chunk):
        ts = grid[max(start - 1, 0): start + chunk]
        g = crossing_function(w, ts, spec)
        hit = np.nonzero(g[:-1] * g[1:] <= 0)[0]
        if hit.size:
            i = hit[0]
            return ts[i], ts[i + 1]
    return None


def sample_sigma0(spec, n, rng, depth=8.0):
    """Random Sigma0 offsets whose flight stays in the linear region.

    ``z0 = eta exp(-u)`` with ``u`` uniform on ``[0.5, depth]``, so the flight
    time is at most about ``depth / gamma``.
    """
    g, s = spec.geometry, spec.spectrum
    lo = g.eta * np.exp(-2 * np.pi * s.alpha / s.beta) - g.x_star
    hi = g.eta - g.x_star
    z0 = g.eta * np.exp(-rng.uniform(0.5, depth, n))
    cols = [rng.uniform(0.9 * lo, 0.9 * hi, n), z0]
    # v+ grows like (eta / z0)^(lambda / gamma) on the way to Sigma1
    for lp, vs in zip(s.lambda_plus, g.v_star_plus):
        cols.append((vs + rng.uniform(-0.02, 0.02, n)) * (z0 / g.eta) ** (lp / s.gamma))
    cols += [rng.uniform(-0.02, 0.02, n) for _ in range(spec.M)]
    return np.column_stack(cols)


def mp_poincare(w, spec, t_guess, dps=50):
    """Linear-part Poincare map in extended precision (``quad_scale`` must be 0)."""
    import mpmath as mp

    assert not spec.global_map.quad_scale
    s, g, gm, N = spec.spectrum, spec.geometry, spec.global_map, spec.N
    with mp.workdps(dps):
        w = [mp.mpf(float(v)) if not isinstance(v, mp.mpf) else v for v in w]
        B = [mp.mpf(float(b)) for b in gm.B]

        def p1(t):
            X = g.x_star + w[0]
            out = [X * mp.exp(-s.alpha * t) * mp.cos(s.beta * t), X * mp.exp(-s.alpha * t) * mp.sin(s.beta * t),
                   w[1] * mp.exp(s.gamma * t) - g.eta]
            out += [mp.exp(lp * t) * w[2 + i] - g.v_star_plus[i] for i, lp in enumerate(s.lambda_plus)]
            out += [mp.exp(-lm * t) * (g.v_star_minus[i] + w[2 + N + i]) for i, lm in enumerate(s.lambda_minus)]
            return out

        t = mp.findroot(lambda t: mp.fsum(b * c for b, c in zip(B, p1(t))), mp.mpf(float(t_guess)))
        p = p1(t)
        return [mp.fsum(mp.mpf(float(a)) * c for a, c in zip(row, p)) for row in gm.A]


def mp_jacobian(w, spec, t_guess, dps=50):
    import mpmath as mp

    with mp.workdps(dps):
        w = [mp.mpf(float(v)) for v in w]
        cols = []
        for j in range(len(w)):
            h = mp.mpf(10) ** (-20) * max(abs(w[j]), mp.mpf(10) ** -10)
            wp, wm = list(w), list(w)
            wp[j] += h
            wm[j] -= h
            fp, fm = mp_poincare(wp, spec, t_guess, dps), mp_poincare(wm, spec, t_guess, dps)
            cols.append([float((a - b) / (2 * h)) for a, b in zip(fp, fm)])
        return np.array(cols).T
