"""The slab S_ell in Sigma0 and its two resident fixed points."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fixed_points import FixedPointRecord, refine_fixed_point
from ..local_dynamics import flight_times, p01_formulas
from ..model import ModelSpec


class ResidencyCount(RuntimeError):
    def __init__(self, ell: int, found: list[int]):
        super().__init__(f"slab {ell} holds {len(found)} fixed points (indices {found}), expected 2")
        self.ell = ell
        self.found = found


class SlabUnavailable(RuntimeError):
    """A fixed point needed for the slab bounds did not converge."""


@dataclass(frozen=True, eq=False)
class Slab:
    ell: int
    z_lo: float
    z_hi: float
    x_bound: float
    vm_bound: float
    vp_bound: float
    fp_plus: FixedPointRecord
    fp_minus: FixedPointRecord
    t_lo: float
    t_hi: float
    margins: dict

    def to_dict(self) -> dict:
        return {
            "ell": self.ell,
            "z_lo": self.z_lo,
            "z_hi": self.z_hi,
            "x_bound": self.x_bound,
            "vm_bound": self.vm_bound,
            "vp_bound": self.vp_bound,
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "fp_plus": {"index": self.fp_plus.ell, "T": self.fp_plus.T_ell,
                        "raw": self.fp_plus.raw.as_array().tolist()},
            "fp_minus": {"index": self.fp_minus.ell, "T": self.fp_minus.T_ell,
                         "raw": self.fp_minus.raw.as_array().tolist()},
            "margins": self.margins,
        }


def slab_bounds(ell: int, spec: ModelSpec):
    need = {}
    for i in (2 * ell, 2 * ell + 2):
        rec = refine_fixed_point(i, spec)
        if not rec.converged:
            raise SlabUnavailable(f"fixed point {i} did not converge: {rec.message}")
        need[i] = rec.T_ell
    s, g = spec.spectrum, spec.geometry
    q = math.pi / (2 * s.beta)
    t_lo, t_hi = need[2 * ell] - q, need[2 * ell + 2] - q
    b = g.eta * math.exp(-0.5 * s.alpha * need[2 * ell])
    return g.eta * math.exp(-s.gamma * t_hi), g.eta * math.exp(-s.gamma * t_lo), b, t_lo, t_hi


def slab_margins(W: np.ndarray, bounds, spec: ModelSpec) -> np.ndarray:
    """Signed relative slack of each slab inequality family; all positive means strictly inside.

    Columns: z lower, z upper, |x0|, |v-1|, |v+1|.
    """
    z_lo, z_hi, b = bounds[:3]
    W = np.atleast_2d(W)
    N = spec.N
    t, status = flight_times(W, spec)
    p1 = p01_formulas(W, np.where(status == 0, t, 0.0), spec)
    out = np.column_stack([
        (W[:, 1] - z_lo) / z_lo,
        (z_hi - W[:, 1]) / z_hi,
        (b - np.abs(W[:, 0])) / b,
        (b - np.linalg.norm(p1[:, 3 + N:], axis=1)) / b,
        (b - np.linalg.norm(p1[:, 3:3 + N], axis=1)) / b,
    ])
    out[status != 0] = -np.inf
    return out


def in_slab(W: np.ndarray, ell: int, spec: ModelSpec) -> np.ndarray:
    return np.all(slab_margins(W, slab_bounds(ell, spec), spec) >= 0, axis=1)


def build_slab(ell: int, spec: ModelSpec) -> Slab:
    """Slab bounds from the solved return times, with a residency scan.

    Labels: ``p+`` is the resident with the smaller return time (index
    ``2 ell``), ``p-`` the other one.
    """
    if ell < 1:
        raise ValueError("ell must be positive")
    bounds = slab_bounds(ell, spec)
    cand = range(max(1, 2 * ell - 3), 2 * ell + 6)
    recs = [refine_fixed_point(i, spec) for i in cand]
    recs = [r for r in recs if r.converged]
    W = np.array([r.raw.as_array() for r in recs])
    marg = slab_margins(W, bounds, spec)
    inside = np.all(marg > 0, axis=1)
    found = [r for r, ok in zip(recs, inside) if ok]
    if len(found) != 2:
        raise ResidencyCount(ell, [r.ell for r in found])
    found.sort(key=lambda r: r.T_ell)
    names = ["z_lower", "z_upper", "x0", "v_minus1", "v_plus1"]
    margins = {}
    for tag, r in (("fp_plus", found[0]), ("fp_minus", found[1])):
        row = marg[[x.ell for x in recs].index(r.ell)]
        margins[tag] = dict(zip(names, map(float, row)))
    margins["min"] = float(min(min(m.values()) for m in margins.values()))
    z_lo, z_hi, b, t_lo, t_hi = bounds
    return Slab(ell, z_lo, z_hi, b, b, b, found[0], found[1], t_lo, t_hi, margins)
