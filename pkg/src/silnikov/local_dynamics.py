"""Exact linear flow near the saddle-focus and the local map from Sigma0 to Sigma1.

Inside the neighbourhood of the equilibrium the flow is linear, so the local
passage is closed form; the only numerical work is finding the flight time,
the first time the orbit meets the constraint surface Sigma1.

Batch functions take Sigma0 offset arrays of shape ``(n, n0)``; the
single-point wrappers accept :class:`Sigma0Point` or a plain vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import solve_flight_times
from .model import OMEGA_FACTOR, ModelSpec


class NoCrossing(RuntimeError):
    def __init__(self, t_lo: float, t_hi: float):
        super().__init__(f"constraint has no sign change on [{t_lo:.6g}, {t_hi:.6g}]")
        self.interval = (t_lo, t_hi)


class OutsideNeighborhood(ValueError):
    """State lies outside the box where the dynamics is linear."""


@dataclass(frozen=True, eq=False)
class StateVec:
    x: float
    y: float
    z: float
    v_plus: np.ndarray
    v_minus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_plus", np.atleast_1d(np.asarray(self.v_plus, float)))
        object.__setattr__(self, "v_minus", np.atleast_1d(np.asarray(self.v_minus, float)))
        if not (np.isfinite([self.x, self.y, self.z]).all() and np.isfinite(self.v_plus).all()
                and np.isfinite(self.v_minus).all()):
            raise ValueError("state has non-finite entries")

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.x, self.y, self.z], self.v_plus, self.v_minus])

    @classmethod
    def from_array(cls, a, N: int) -> "StateVec":
        a = np.asarray(a, float)
        return cls(a[0], a[1], a[2], a[3:3 + N], a[3 + N:])


@dataclass(frozen=True, eq=False)
class Sigma0Point:
    """Point of Sigma0 in coordinates centred at w(+)."""

    x0: float
    z0: float
    v_plus0: np.ndarray
    v_minus0: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.x0, self.z0], np.atleast_1d(self.v_plus0),
                               np.atleast_1d(self.v_minus0)]).astype(float)

    @classmethod
    def from_array(cls, a, N: int) -> "Sigma0Point":
        a = np.asarray(a, float)
        return cls(float(a[0]), float(a[1]), a[2:2 + N].copy(), a[2 + N:].copy())


@dataclass(frozen=True, eq=False)
class Sigma1Point:
    """Point near w(-) in coordinates centred there (z1 offset from eta)."""

    x1: float
    y1: float
    z1: float
    v_plus1: np.ndarray
    v_minus1: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.x1, self.y1, self.z1], np.atleast_1d(self.v_plus1),
                               np.atleast_1d(self.v_minus1)]).astype(float)

    @classmethod
    def from_array(cls, a, N: int) -> "Sigma1Point":
        a = np.asarray(a, float)
        return cls(float(a[0]), float(a[1]), float(a[2]), a[3:3 + N].copy(), a[3 + N:].copy())


@dataclass(frozen=True, eq=False)
class FlightResult:
    t_star: float
    point: Sigma1Point


def as_vec(w) -> np.ndarray:
    if hasattr(w, "as_array"):
        return w.as_array()
    return np.asarray(w, dtype=float)


# ---------------------------------------------------------------------------
# flow


def in_omega(state: StateVec, spec: ModelSpec) -> bool:
    r = OMEGA_FACTOR * spec.geometry.eta
    return (abs(state.x) < r and abs(state.y) < r and abs(state.z) < r
            and np.linalg.norm(state.v_plus) < r and np.linalg.norm(state.v_minus) < r)


def local_flow(w: StateVec, t: float, spec: ModelSpec, strict: bool = True) -> StateVec:
    if strict and not in_omega(w, spec):
        raise OutsideNeighborhood("initial state outside the linear neighbourhood")
    s = spec.spectrum
    rot = complex(w.x, w.y) * np.exp(complex(-s.alpha, s.beta) * t)
    return StateVec(
        rot.real,
        rot.imag,
        w.z * math.exp(s.gamma * t),
        np.exp(s.lambda_plus * t) * w.v_plus,
        np.exp(-s.lambda_minus * t) * w.v_minus,
    )


def sigma0_to_state(w, spec: ModelSpec) -> StateVec:
    a = as_vec(w)
    N = spec.N
    return StateVec(spec.geometry.x_star + a[0], 0.0, a[1], a[2:2 + N],
                    spec.geometry.v_star_minus + a[2 + N:])


def state_to_sigma1(u: StateVec, spec: ModelSpec) -> Sigma1Point:
    g = spec.geometry
    return Sigma1Point(u.x, u.y, u.z - g.eta, u.v_plus - g.v_star_plus, u.v_minus)


def in_sigma0(W: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Open Sigma0 constraints for offset rows ``W``."""
    W = np.atleast_2d(W)
    g, s, N = spec.geometry, spec.spectrum, spec.N
    x = g.x_star + W[:, 0]
    lo = g.eta * math.exp(-2 * math.pi * s.alpha / s.beta)
    return ((x > lo) & (x < g.eta) & (W[:, 1] > 0) & (W[:, 1] < g.eta)
            & (np.linalg.norm(W[:, 2:2 + N], axis=1) < g.eta)
            & (np.linalg.norm(g.v_star_minus + W[:, 2 + N:], axis=1) < g.eta))


# ---------------------------------------------------------------------------
# flight time


def flight_window(z0, spec: ModelSpec):
    s, g = spec.spectrum, spec.geometry
    z0 = np.asarray(z0, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = np.maximum(0.0, np.log(0.5 * g.eta / z0) / s.gamma)
        t_hi = np.log(2.0 * g.eta / z0) / s.gamma + 4 * math.pi / s.beta
    return t_lo, t_hi


def _quad_y(spec: ModelSpec) -> tuple[np.ndarray, float]:
    gm = spec.global_map
    if gm.quad is None or gm.quad_scale == 0.0:
        return np.zeros((spec.n1, spec.n1)), 0.0
    return np.ascontiguousarray(gm.quad[-1]), float(gm.quad_scale)


def flight_times(W: np.ndarray, spec: ModelSpec, t_lo=None, t_hi=None, solver=None):
    """Vectorised flight times for Sigma0 offset rows ``W``.

    Returns ``(t, status)``; status 0 means a crossing was found, 1 means
    none in the window.  Rows with ``z0 <= 0`` get status 1.
    """
    W = np.atleast_2d(np.asarray(W, float))
    if W.shape[0] == 0:
        return np.empty(0), np.empty(0, dtype=np.int64)
    s, g, gm, N = spec.spectrum, spec.geometry, spec.global_map, spec.N
    z0 = W[:, 1]
    good = z0 > 0
    lo_d, hi_d = flight_window(np.where(good, z0, 1.0), spec)
    t_lo = lo_d if t_lo is None else np.broadcast_to(np.asarray(t_lo, float), z0.shape)
    t_hi = hi_d if t_hi is None else np.broadcast_to(np.asarray(t_hi, float), z0.shape)
    Qy, qs = _quad_y(spec)
    solve = solver or solve_flight_times
    t, status = solve(
        g.x_star + W[:, 0], np.where(good, z0, 1.0), W[:, 2:2 + N], g.v_star_minus + W[:, 2 + N:],
        s.alpha, s.beta, s.gamma, g.eta, s.lambda_plus, s.lambda_minus, g.v_star_plus,
        gm.B, Qy, qs, t_lo, t_hi, (math.pi / s.beta) / 8.0, 1e-15,
    )
    status = np.where(good, status, 1)
    t = np.where(good, t, np.nan)
    return t, status


def p01_formulas(W: np.ndarray, t: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Sigma1 offsets reached from Sigma0 offsets ``W`` after time ``t``."""
    W = np.atleast_2d(W)
    t = np.asarray(t, float).reshape(-1)
    s, g, N = spec.spectrum, spec.geometry, spec.N
    X = g.x_star + W[:, 0]
    dec = X * np.exp(-s.alpha * t)
    out = np.empty((W.shape[0], spec.n1))
    out[:, 0] = dec * np.cos(s.beta * t)
    out[:, 1] = dec * np.sin(s.beta * t)
    out[:, 2] = W[:, 1] * np.exp(s.gamma * t) - g.eta
    out[:, 3:3 + N] = np.exp(np.outer(t, s.lambda_plus)) * W[:, 2:2 + N] - g.v_star_plus
    out[:, 3 + N:] = np.exp(-np.outer(t, s.lambda_minus)) * (W[:, 2 + N:] + g.v_star_minus)
    return out


def flight_time(w, spec: ModelSpec) -> FlightResult:
    a = as_vec(w)
    if not a[1] > 0:
        raise ValueError("flight_time requires z0 > 0")
    t, status = flight_times(a[None, :], spec)
    if status[0] != 0:
        lo, hi = flight_window(a[1], spec)
        raise NoCrossing(float(lo), float(hi))
    p = p01_formulas(a[None, :], t, spec)[0]
    return FlightResult(float(t[0]), Sigma1Point.from_array(p, spec.N))


def map_P01(w, spec: ModelSpec) -> tuple[Sigma1Point, float]:
    res = flight_time(w, spec)
    return res.point, res.t_star
