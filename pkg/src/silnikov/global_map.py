"""Global return map P10, the Sigma1 constraint and the Poincare map P = P10 o P01.

The global map is prescribed data: its value and Jacobian ``A`` at w(-),
plus an optional homogeneous quadratic correction scaled by ``quad_scale``.
"""
from __future__ import annotations

import numpy as np

from .local_dynamics import Sigma0Point, as_vec, flight_times, in_sigma0, p01_formulas, NoCrossing, flight_window
from .model import ModelSpec


class DomainDeparture(RuntimeError):
    def __init__(self, probe: np.ndarray):
        super().__init__(f"finite-difference probe left the map domain at {probe.tolist()}")
        self.probe = probe


def _quad(spec: ModelSpec):
    gm = spec.global_map
    if gm.quad is None or gm.quad_scale == 0.0:
        return None, 0.0
    return gm.quad, float(gm.quad_scale)


def constraint_values(P: np.ndarray, spec: ModelSpec) -> np.ndarray:
    P = np.atleast_2d(P)
    val = P @ spec.global_map.B
    Q, qs = _quad(spec)
    if Q is not None:
        val = val + qs * np.einsum("ni,ij,nj->n", P, Q[-1], P)
    return val


def constraint_value(p, spec: ModelSpec) -> float:
    """``f^(y)`` at Sigma1 offsets ``p``; zero exactly on Sigma1."""
    return float(constraint_values(as_vec(p)[None, :], spec)[0])


def p10_batch(P: np.ndarray, spec: ModelSpec) -> np.ndarray:
    P = np.atleast_2d(P)
    out = P @ spec.global_map.A.T
    Q, qs = _quad(spec)
    if Q is not None:
        out = out + qs * np.einsum("ni,kij,nj->nk", P, Q[:-1], P)
    return out


def map_P10(p, spec: ModelSpec) -> tuple[Sigma0Point, bool]:
    """Image of ``p`` on Sigma0 and a flag telling whether it left the open section."""
    img = p10_batch(as_vec(p)[None, :], spec)
    return Sigma0Point.from_array(img[0], spec.N), not bool(in_sigma0(img, spec)[0])


def poincare_batch(W: np.ndarray, spec: ModelSpec, solver=None):
    """Vectorised ``P`` on rows of Sigma0 offsets.

    Returns ``(images, t_star, status)``; rows without a crossing get NaN.
    """
    W = np.atleast_2d(np.asarray(W, float))
    t, status = flight_times(W, spec, solver=solver)
    P1 = p01_formulas(W, np.where(status == 0, t, 0.0), spec)
    img = p10_batch(P1, spec)
    img[status != 0] = np.nan
    return img, t, status


def poincare_map(w, spec: ModelSpec):
    """``P(w)`` with its flight time and flags ``{out_of_section, constraint_residual}``."""
    a = as_vec(w)
    img, t, status = poincare_batch(a[None, :], spec)
    if status[0] != 0:
        lo, hi = flight_window(a[1], spec)
        raise NoCrossing(float(lo), float(hi))
    p1 = p01_formulas(a[None, :], t, spec)
    flags = {
        "out_of_section": not bool(in_sigma0(img, spec)[0]),
        "constraint_residual": float(abs(constraint_values(p1, spec)[0])),
    }
    return Sigma0Point.from_array(img[0], spec.N), float(t[0]), flags


def fd_steps(w: np.ndarray, spec: ModelSpec, rel: float = 1e-5) -> np.ndarray:
    """Per-coordinate steps.

    ``z0`` is stepped relative to itself (log-like sensitivity) and ``v+``
    relative to ``eta (z0/eta)^(lambda+/gamma)``, the size that stays bounded
    after the flight.  ``v-`` is contracted by the flight, so its column is
    tiny next to the image and only a large step resolves it; it takes a
    tenth of the room left in the Sigma0 ball.  ``x0`` is relative to eta.
    """
    s, g, N = spec.spectrum, spec.geometry, spec.N
    eta = g.eta
    h = np.full(spec.n0, rel * eta)
    h[1] = 1e-3 * abs(w[1])
    ratio = min(abs(w[1]) / eta, 1.0)
    h[2:2 + N] = rel * eta * ratio ** (s.lambda_plus / s.gamma)
    room = eta - np.linalg.norm(g.v_star_minus + w[2 + N:])
    h[2 + N:] = 0.1 * max(room, rel * eta)
    return h


def jacobian_P(w, spec: ModelSpec, steps: np.ndarray | None = None) -> np.ndarray:
    """Central differences with one Richardson refinement (h and h/2)."""
    a = as_vec(w)
    n = spec.n0
    h = fd_steps(a, spec) if steps is None else np.asarray(steps, float)
    E = np.diag(h)
    probes = np.concatenate([a + E, a - E, a + E / 2, a - E / 2])
    img, _, status = poincare_batch(probes, spec)
    if np.any(status != 0):
        raise DomainDeparture(probes[int(np.argmax(status != 0))])
    f = img.reshape(4, n, n)  # [kind, coordinate, output]
    d1 = (f[0] - f[1]) / (2 * h[:, None])
    d2 = (f[2] - f[3]) / h[:, None]
    return ((4 * d2 - d1) / 3).T


def analytic_jacobian_P(w, spec: ModelSpec) -> np.ndarray:
    """Chain-rule Jacobian of ``P`` including the implicit flight-time derivative."""
    a = as_vec(w)
    s, g, N = spec.spectrum, spec.geometry, spec.N
    t, status = flight_times(a[None, :], spec)
    if status[0] != 0:
        raise NoCrossing(*map(float, flight_window(a[1], spec)))
    t = float(t[0])
    p = p01_formulas(a[None, :], np.array([t]), spec)[0]
    X = g.x_star + a[0]
    ea, c, sn = np.exp(-s.alpha * t), np.cos(s.beta * t), np.sin(s.beta * t)

    dp_dw = np.zeros((spec.n1, spec.n0))
    dp_dw[0, 0] = ea * c
    dp_dw[1, 0] = ea * sn
    dp_dw[2, 1] = np.exp(s.gamma * t)
    dp_dw[3:3 + N, 2:2 + N] = np.diag(np.exp(s.lambda_plus * t))
    dp_dw[3 + N:, 2 + N:] = np.diag(np.exp(-s.lambda_minus * t))

    vp0 = a[2:2 + N]
    vm0 = g.v_star_minus + a[2 + N:]
    dp_dt = np.concatenate([
        [X * ea * (-s.alpha * c - s.beta * sn), X * ea * (-s.alpha * sn + s.beta * c),
         s.gamma * a[1] * np.exp(s.gamma * t)],
        s.lambda_plus * np.exp(s.lambda_plus * t) * vp0,
        -s.lambda_minus * np.exp(-s.lambda_minus * t) * vm0,
    ])

    Q, qs = _quad(spec)
    grad_g = spec.global_map.B.copy()
    D10 = spec.global_map.A.copy()
    if Q is not None:
        grad_g = grad_g + 2 * qs * (Q[-1] @ p)
        D10 = D10 + 2 * qs * np.einsum("kij,j->ki", Q[:-1], p)
    dt_dw = -(grad_g @ dp_dw) / (grad_g @ dp_dt)
    return D10 @ (dp_dw + np.outer(dp_dt, dt_dw))
