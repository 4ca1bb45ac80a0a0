"""Tangent frames on Sigma1 at w(-) and their images on Sigma0.

Sigma1 is the level set of the constraint, so near w(-) one coordinate
``xi`` among ``(z, v+)`` is a function of the others.  Lifting the unit
vectors of the remaining coordinates through ``grad xi`` gives a basis
of the tangent space; ``A`` carries it to Sigma0.

The spiral direction of the annulus ``P01(S)`` in the ``(E_x, E_y)``
plane is the tangent of the coordinate that runs between the radial
boundary segments (images of the z-faces of the slab).  Its image is the
vector whose span with ``e_x, e_v-`` and the ``E_v+`` images is tested.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..model import ModelSpec, unstable_indices

SPAN_RTOL = 1e-10


def xi_index(spec: ModelSpec) -> int:
    """Sigma1 index of the solved-for coordinate (largest ``|B|`` over ``(z, v+)``)."""
    idx = unstable_indices(spec)
    return int(idx[np.argmax(np.abs(spec.global_map.B[idx]))])


def grad_xi(spec: ModelSpec) -> np.ndarray:
    """Implicit gradient of ``xi`` with respect to all Sigma1 offsets (zero at ``xi``)."""
    B = spec.global_map.B
    k = xi_index(spec)
    g = np.zeros(spec.n1)
    if B[k] != 0.0:
        g = -B / B[k]
        g[k] = 0.0
    return g


def tangent_basis(spec: ModelSpec) -> tuple[np.ndarray, list[str]]:
    """Columns ``E_x, E_y, E_v-(M), E_v+(N)`` in Sigma1 offset layout."""
    N, M, n1 = spec.N, spec.M, spec.n1
    k = xi_index(spec)
    gx = grad_xi(spec)
    free = [0, 1] + list(range(3 + N, n1)) + [i for i in unstable_indices(spec) if i != k]
    names = ["x", "y"] + [f"v-{j}" for j in range(M)] + [f"v+{j}" for j in range(N)]
    E = np.zeros((n1, len(free)))
    for c, i in enumerate(free):
        E[i, c] = 1.0
        E[k, c] = gx[i]
    return E, names


def spiral_tangent(theta: float, spec: ModelSpec) -> np.ndarray:
    """Unit direction of ``d/dt (x1, y1)`` at phase ``theta``."""
    a, b = spec.spectrum.alpha, spec.spectrum.beta
    c, s = math.cos(theta), math.sin(theta)
    d = np.array([-a * c - b * s, -a * s + b * c])
    return d / np.linalg.norm(d)


def _span_matrix(spec: ModelSpec, exi: np.ndarray, images: np.ndarray) -> np.ndarray:
    N, M, n0 = spec.N, spec.M, spec.n0
    cols = [np.eye(n0)[:, 0]] + [np.eye(n0)[:, 2 + N + j] for j in range(M)] + [exi]
    cols += [images[:, 2 + M + j] for j in range(N)]
    return np.column_stack(cols)


def _rank(S: np.ndarray) -> tuple[int, np.ndarray]:
    # columns are normalised so the tolerance is scale free
    Sn = S / np.maximum(np.linalg.norm(S, axis=0), 1e-300)
    sv = np.linalg.svd(Sn, compute_uv=False)
    return int(np.sum(sv > SPAN_RTOL * max(sv[0], 1e-300))), sv


def leading_order_span(spec: ModelSpec) -> tuple[int, np.ndarray]:
    """Rank and singular values of the spanning set at the leading-order phase.

    Used by the model validator, which has no particular ``ell``: the
    phase of every fixed point tends to ``-phi`` modulo ``pi``, and the span
    does not depend on the sign of the spiral vector.
    """
    from ..fixed_points import delta_coefficients, phase_from_deltas

    d1, d2 = delta_coefficients(spec, allow_singular=True)
    theta = 0.0 if d1 == 0.0 and d2 == 0.0 else -phase_from_deltas(d1, d2)
    E, _ = tangent_basis(spec)
    images = spec.global_map.A @ E
    exi = images[:, :2] @ spiral_tangent(theta, spec)
    return _rank(_span_matrix(spec, exi, images))


@dataclass(frozen=True, eq=False)
class BasisFrame:
    ell: int
    xi_choice: int
    grad_xi: np.ndarray
    E_vectors: np.ndarray
    names: list[str]
    image_vectors: np.ndarray
    Exi_plus: np.ndarray
    span_rank: int
    span_sv: np.ndarray

    @property
    def full_span(self) -> bool:
        return self.span_rank == self.image_vectors.shape[0]


def build_basis_frame(ell: int, spec: ModelSpec) -> BasisFrame:
    """Frame for slab ``ell``; the spiral vector is taken at the resident ``p+``."""
    from ..fixed_points import refine_fixed_point

    rec = refine_fixed_point(2 * ell, spec)
    E, names = tangent_basis(spec)
    images = spec.global_map.A @ E
    theta = spec.spectrum.beta * rec.T_ell
    exi = images[:, :2] @ spiral_tangent(theta, spec)
    rank, sv = _rank(_span_matrix(spec, exi, images))
    return BasisFrame(ell, xi_index(spec), grad_xi(spec), E, names, images, exi, rank, sv)
