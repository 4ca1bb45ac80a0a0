"""Synthetic finite-dimensional Silnikov system and its assumption checks.

A model is split into four records:

* :class:`Spectrum` -- the saddle-focus rates ``alpha, beta, gamma`` plus the
  real parts of the remaining unstable (``lambda_plus``) and stable
  (``lambda_minus``) modes.  The linear parts are diagonal, ``L+ = diag(lp)``
  and ``L- = diag(-lm)``.
* :class:`SectionGeometry` -- section size ``eta``, the homoclinic points
  ``w(+) = (x*, 0, 0, 0, v*-)`` and ``w(-) = (0, 0, eta, v*+, 0)``.
* :class:`GlobalMapSpec` -- Jacobian ``A`` of the global map at ``w(-)``,
  the constraint row ``B`` and optional quadratic corrections.
* :class:`Tolerances` -- solver settings.

Coordinate layouts used everywhere in the package::

    Sigma0 offsets  (n0 = 2+N+M):  [x0, z0, v+0 (N), v-0 (M)]
    Sigma1 offsets  (n1 = 3+N+M):  [x1, y1, z1, v+1 (N), v-1 (M)]

``A`` has shape ``(n0, n1)``, ``B`` has shape ``(n1,)`` and ``quad`` has shape
``(n0 + 1, n1, n1)``: the first ``n0`` slices correct the global map, the last
one corrects the constraint.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

C_COND_BOUND = 1e8
OMEGA_FACTOR = 4.0


class StructuralError(ValueError):
    """Model data is dimensionally inconsistent or fails the file schema."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _frozen(a, ndim: int | None = None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise StructuralError("array", f"expected {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Spectrum:
    alpha: float
    beta: float
    gamma: float
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambda_plus", _frozen(self.lambda_plus, 1))
        object.__setattr__(self, "lambda_minus", _frozen(self.lambda_minus, 1))
        if self.lambda_plus.size == 0 or self.lambda_minus.size == 0:
            raise StructuralError("spectrum", "lambda_plus and lambda_minus must be nonempty")

    @property
    def N(self) -> int:
        return self.lambda_plus.size

    @property
    def M(self) -> int:
        return self.lambda_minus.size


@dataclass(frozen=True, eq=False)
class SectionGeometry:
    eta: float
    x_star: float
    v_star_plus: np.ndarray
    v_star_minus: np.ndarray
    T_global: float

    def __post_init__(self):
        object.__setattr__(self, "v_star_plus", _frozen(self.v_star_plus, 1))
        object.__setattr__(self, "v_star_minus", _frozen(self.v_star_minus, 1))
        if not self.eta > 0:
            raise StructuralError("geometry.eta", "must be positive")
        if not self.T_global > 0:
            raise StructuralError("geometry.T_global", "must be positive")
        if np.linalg.norm(self.v_star_plus) >= self.eta:
            raise StructuralError("geometry.v_star_plus", "norm must be below eta")
        if np.linalg.norm(self.v_star_minus) >= self.eta:
            raise StructuralError("geometry.v_star_minus", "norm must be below eta")


@dataclass(frozen=True, eq=False)
class GlobalMapSpec:
    A: np.ndarray
    B: np.ndarray
    quad: np.ndarray | None = None
    quad_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A, 2))
        object.__setattr__(self, "B", _frozen(self.B, 1))
        if self.quad is not None:
            q = np.array(self.quad, dtype=float)
            # only the symmetric part of each slice matters
            q = 0.5 * (q + np.swapaxes(q, -1, -2))
            object.__setattr__(self, "quad", _frozen(q, 3))
        if self.quad_scale < 0:
            raise StructuralError("global_map.quad_scale", "must be nonnegative")


@dataclass(frozen=True)
class Tolerances:
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    root_tol: float = 1e-12
    cm_samples: int = 512


@dataclass(frozen=True, eq=False)
class ModelSpec:
    spectrum: Spectrum
    geometry: SectionGeometry
    global_map: GlobalMapSpec
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        check_dimensions(self)

    @property
    def N(self) -> int:
        return self.spectrum.N

    @property
    def M(self) -> int:
        return self.spectrum.M

    @property
    def n0(self) -> int:
        return 2 + self.N + self.M

    @property
    def n1(self) -> int:
        return 3 + self.N + self.M

    def to_dict(self) -> dict[str, Any]:
        s, g, m, t = self.spectrum, self.geometry, self.global_map, self.tolerances
        return {
            "spectrum": {
                "alpha": float(s.alpha),
                "beta": float(s.beta),
                "gamma": float(s.gamma),
                "lambda_plus": s.lambda_plus.tolist(),
                "lambda_minus": s.lambda_minus.tolist(),
            },
            "geometry": {
                "eta": float(g.eta),
                "x_star": float(g.x_star),
                "v_star_plus": g.v_star_plus.tolist(),
                "v_star_minus": g.v_star_minus.tolist(),
                "T_global": float(g.T_global),
            },
            "global_map": {
                "A": m.A.tolist(),
                "B": m.B.tolist(),
                "quad_scale": float(m.quad_scale),
                "quad": None if m.quad is None else m.quad.tolist(),
            },
            "tolerances": {
                "newton_tol": float(t.newton_tol),
                "newton_max_iter": int(t.newton_max_iter),
                "root_tol": float(t.root_tol),
                "cm_samples": int(t.cm_samples),
            },
        }

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash(json.dumps(self.to_dict(), sort_keys=True))
            object.__setattr__(self, "_hash", h)
        return h

    def with_(self, **changes) -> "ModelSpec":
        """Copy with fields of the sub-records replaced.

        Keys are dotted-free field names of any sub-record, e.g.
        ``spec.with_(gamma=0.5, quad_scale=0.0)``.
        """
        parts = {
            "spectrum": self.spectrum,
            "geometry": self.geometry,
            "global_map": self.global_map,
            "tolerances": self.tolerances,
        }
        pending = dict(changes)
        for name, rec in parts.items():
            mine = {k: pending.pop(k) for k in list(pending) if k in rec.__dataclass_fields__}
            if mine:
                parts[name] = replace(rec, **mine)
        if pending:
            raise TypeError(f"unknown model fields: {sorted(pending)}")
        return ModelSpec(**parts)


def check_dimensions(spec: ModelSpec) -> None:
    N, M = spec.spectrum.N, spec.spectrum.M
    n0, n1 = 2 + N + M, 3 + N + M
    g, m = spec.geometry, spec.global_map
    if g.v_star_plus.shape != (N,):
        raise StructuralError("geometry.v_star_plus", f"expected length N={N}, got {g.v_star_plus.size}")
    if g.v_star_minus.shape != (M,):
        raise StructuralError("geometry.v_star_minus", f"expected length M={M}, got {g.v_star_minus.size}")
    if m.A.shape != (n0, n1):
        raise StructuralError("global_map.A", f"expected shape ({n0}, {n1}) for N={N}, M={M}, got {m.A.shape}")
    if m.B.shape != (n1,):
        raise StructuralError("global_map.B", f"expected length {n1}, got {m.B.size}")
    if m.quad is not None and m.quad.shape != (n0 + 1, n1, n1):
        raise StructuralError("global_map.quad", f"expected shape ({n0 + 1}, {n1}, {n1}), got {m.quad.shape}")


# ---------------------------------------------------------------------------
# file I/O

_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_POS = {"type": "number", "exclusiveMinimum": 0}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["spectrum", "geometry", "global_map"],
    "properties": {
        "spectrum": {
            "type": "object",
            "required": ["alpha", "beta", "gamma", "lambda_plus", "lambda_minus"],
            "properties": {
                "alpha": _POS,
                "beta": _POS,
                "gamma": _POS,
                "lambda_plus": {**_VEC, "items": _POS},
                "lambda_minus": {**_VEC, "items": _POS},
            },
        },
        "geometry": {
            "type": "object",
            "required": ["eta", "x_star", "v_star_plus", "v_star_minus", "T_global"],
            "properties": {
                "eta": _POS,
                "x_star": {"type": "number"},
                "v_star_plus": _VEC,
                "v_star_minus": _VEC,
                "T_global": _POS,
            },
        },
        "global_map": {
            "type": "object",
            "required": ["A", "B"],
            "properties": {
                "A": {"type": "array", "items": _VEC, "minItems": 1},
                "B": _VEC,
                "quad_scale": {"type": "number", "minimum": 0},
                "quad": {"type": ["array", "null"]},
            },
        },
        "tolerances": {
            "type": "object",
            "properties": {
                "newton_tol": _POS,
                "newton_max_iter": {"type": "integer", "minimum": 1},
                "root_tol": _POS,
                "cm_samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}


def model_from_dict(data: dict[str, Any]) -> ModelSpec:
    try:
        jsonschema.validate(data, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise StructuralError(where, f"schema violation: {exc.message}") from None
    s, g, m = data["spectrum"], data["geometry"], data["global_map"]
    rows = m["A"]
    if len({len(r) for r in rows}) != 1:
        raise StructuralError("global_map.A", "rows have unequal lengths")
    spectrum = Spectrum(s["alpha"], s["beta"], s["gamma"], s["lambda_plus"], s["lambda_minus"])
    geometry = SectionGeometry(g["eta"], g["x_star"], g["v_star_plus"], g["v_star_minus"], g["T_global"])
    try:
        gmap = GlobalMapSpec(rows, m["B"], m.get("quad"), m.get("quad_scale", 0.0))
    except StructuralError as exc:
        raise StructuralError("global_map.quad", str(exc)) from None
    tol = Tolerances(**data.get("tolerances", {}))
    return ModelSpec(spectrum, geometry, gmap, tol)


def load_model(path: str | Path) -> ModelSpec:
    """Read a model file; only structural checks are applied here."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructuralError("<file>", f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_dict(data)


def save_model(spec: ModelSpec, path: str | Path) -> None:
    from .io import dumps_json

    Path(path).write_text(dumps_json(spec.to_dict()))


def default_model() -> ModelSpec:
    """The canonical model M0, read from the shipped ``data/m0.json``."""
    text = resources.files("silnikov").joinpath("data/m0.json").read_text()
    return model_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    details: dict[str, Any]
    # set when a prerequisite failed and the check could not be evaluated
    skipped: str | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...]
    notes: dict[str, Any]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        """Checks that were evaluated and did not hold."""
        return [c.name for c in self.checks if not c.passed and c.skipped is None]

    def skipped(self) -> list[str]:
        return [c.name for c in self.checks if c.skipped is not None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "skipped": c.skipped, **c.details}
                       for c in self.checks],
            "notes": self.notes,
        }


def _check_a1(s: Spectrum) -> Check:
    lm, lp = float(np.min(s.lambda_minus)), float(np.min(s.lambda_plus))
    conds = {
        "alpha>0": s.alpha > 0,
        "beta>0": s.beta > 0,
        "gamma>0": s.gamma > 0,
        "alpha<gamma": s.alpha < s.gamma,
        "alpha<lambda_minus": s.alpha < lm,
        "gamma<lambda_plus": s.gamma < lp,
    }
    return Check(
        "A1",
        all(conds.values()),
        {
            "alpha": s.alpha,
            "beta": s.beta,
            "gamma": s.gamma,
            "lambda_minus_inf": lm,
            "lambda_plus_inf": lp,
            "failed_inequalities": [k for k, v in conds.items() if not v],
        },
    )


def unstable_indices(spec: ModelSpec) -> np.ndarray:
    """Sigma1 indices of the (z, v+) block."""
    return np.arange(2, 3 + spec.N)


def _check_lemma1(spec: ModelSpec) -> Check:
    b = spec.global_map.B[unstable_indices(spec)]
    scale = max(float(np.max(np.abs(spec.global_map.B))), 1e-300)
    best = float(np.max(np.abs(b)))
    return Check(
        "lemma1",
        best > 1e-12 * scale,
        {"max_abs_dfy_dxi": best, "xi_index": int(np.argmax(np.abs(b)))},
    )


def _check_lemma3(spec: ModelSpec) -> Check:
    from .fixed_points import extract_C_D

    C, _ = extract_C_D(spec)
    sv = np.linalg.svd(C, compute_uv=False)
    cond = math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])
    return Check("lemma3", cond < C_COND_BOUND, {"cond_C": cond, "bound": C_COND_BOUND})


def _check_a5(spec: ModelSpec) -> Check:
    from .fixed_points import delta_coefficients

    d1, d2 = delta_coefficients(spec, allow_singular=True)
    scale = abs(spec.geometry.x_star) * max(float(np.max(np.abs(spec.global_map.B))), 1e-300)
    return Check(
        "A5",
        math.hypot(d1, d2) > 1e-12 * scale,
        {"Delta1": d1, "Delta2": d2},
    )


def _check_a6(spec: ModelSpec, a5: Check) -> Check:
    from .horseshoe.frame import leading_order_span

    if not a5.passed:
        # the span is taken at p+, which only exists when A5 holds; with
        # Delta = 0 the (z, v+) block is singular for every phase
        return Check("A6", False, {"rank": None, "required": spec.n0}, skipped="requires A5")

    rank, sv = leading_order_span(spec)
    return Check(
        "A6",
        rank == spec.n0,
        {"rank": rank, "required": spec.n0, "singular_values": sv.tolist()},
    )


def validate_model(spec: ModelSpec) -> ValidationReport:
    """Run the five structural checks.

    ``A1`` is the rate ordering, ``lemma1`` a nonzero ``(z, v+)`` entry of
    ``B``, ``lemma3`` a well-conditioned ``C``, ``A5`` a nonzero ``Delta``
    and ``A6`` the full-rank span at ``p+``.  One failure never masks
    another; the one exception is A6, which is reported as skipped when A5
    fails.  Checks that need ``C^{-1}`` fall back to the pseudo-inverse when
    ``C`` is singular, so a singular ``C`` does not spill into the A5 and
    A6 entries.
    """
    check_dimensions(spec)
    a5 = _check_a5(spec)
    checks = (
        _check_a1(spec.spectrum),
        _check_lemma1(spec),
        _check_lemma3(spec),
        a5,
        _check_a6(spec, a5),
    )
    notes = {
        "omega_box_factor": OMEGA_FACTOR,
        "omega_note": "neighborhood of linear dynamics taken as the box of half-width 4*eta",
    }
    return ValidationReport(checks, notes)


def perturbed_model(spec: ModelSpec, seed: int, scale: float = 0.1, max_tries: int = 50) -> ModelSpec:
    """A random neighbour of ``spec`` that passes :func:`validate_model`.

    ``A``, ``B`` and the rates are multiplied entrywise by ``1 + scale * N(0, 1)``
    draws; zero entries of ``A`` get additive noise of size ``scale / 10``.
    Draws that fail validation are rejected.
    """
    rng = np.random.default_rng(seed)
    s, m = spec.spectrum, spec.global_map
    for _ in range(max_tries):
        A = m.A * (1 + scale * rng.standard_normal(m.A.shape))
        A = np.where(m.A == 0, 0.1 * scale * rng.standard_normal(m.A.shape), A)
        B = m.B * (1 + scale * rng.standard_normal(m.B.shape))
        cand = spec.with_(
            A=A.round(6), B=B.round(6),
            alpha=round(s.alpha * (1 + scale * rng.standard_normal()), 6),
            gamma=round(s.gamma * (1 + scale * rng.standard_normal()), 6),
            lambda_plus=(s.lambda_plus * (1 + scale * rng.standard_normal(s.N))).round(6),
            lambda_minus=(s.lambda_minus * (1 + scale * rng.standard_normal(s.M))).round(6),
        )
        if validate_model(cand).passed:
            return cand
    raise RuntimeError(f"no valid perturbation found in {max_tries} draws")
