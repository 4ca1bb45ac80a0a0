import numpy as np
import pytest

from conftest import pure_z
from oracles import crossing_function, mp_jacobian, sample_sigma0
from silnikov.fixed_points import refine_fixed_point
from silnikov.global_map import (analytic_jacobian_P, constraint_value, constraint_values, jacobian_P,
                                 map_P10, poincare_batch, poincare_map)
from silnikov.local_dynamics import flight_times, p01_formulas


def test_constraint_at_homoclinic_point(m0):
    assert constraint_value(np.zeros(5), m0) == 0.0


def test_constraint_linear_cases(m0):
    p = np.random.default_rng(1).standard_normal((20, 5)) * 0.01
    assert np.array_equal(constraint_values(p, pure_z(m0)), p[:, 2])
    lin = m0.with_(quad_scale=0.0)
    B = np.array(m0.global_map.B, dtype=float)
    expect = [sum(b * c for b, c in zip(B, row)) for row in p]
    assert np.allclose(constraint_values(p, lin), expect, rtol=1e-14, atol=1e-18)


def test_global_map_origin_and_linearity(m0):
    img, left = map_P10(np.zeros(5), m0)
    assert np.array_equal(img.as_array(), np.zeros(4))
    lin = m0.with_(quad_scale=0.0)
    p = np.array([1e-3, -2e-3, 0.0, 5e-4, 1e-4])
    a = map_P10(p, lin)[0].as_array()
    assert np.allclose(map_P10(3.0 * p, lin)[0].as_array(), 3.0 * a, rtol=1e-14)
    assert np.allclose(a, np.array(m0.global_map.A) @ p, rtol=1e-14)


def test_poincare_map_matches_pieces(m0):
    W = sample_sigma0(m0, 50, np.random.default_rng(2))
    img, t, status = poincare_batch(W, m0)
    ok = status == 0
    p1 = p01_formulas(W[ok], t[ok], m0)
    # quadratic global map evaluated directly
    gm = m0.global_map
    expect = p1 @ gm.A.T + gm.quad_scale * np.einsum("ni,kij,nj->nk", p1, gm.quad[:-1], p1)
    assert np.allclose(img[ok], expect, rtol=1e-13, atol=1e-18)
    assert np.max(np.abs(crossing_function(W[ok][0], t[ok][:1], m0))) < 1e-12


def test_poincare_map_deterministic(m0):
    w = sample_sigma0(m0, 1, np.random.default_rng(3))[0]
    a, ta, fa = poincare_map(w, m0)
    b, tb, fb = poincare_map(w, m0)
    assert np.array_equal(a.as_array(), b.as_array()) and ta == tb and fa == fb


def test_flight_time_diverges_towards_homoclinic_orbit(m0):
    ts = [poincare_map([0.0, z, 0.0, 0.0], m0)[1] for z in (1e-4, 1e-8, 1e-16)]
    assert ts[0] < ts[1] < ts[2]
    assert ts[2] - ts[1] == pytest.approx(np.log(1e8) / 2, abs=2 * np.pi / 5)


@pytest.mark.parametrize("ell", [20, 30])
def test_fixed_point_returns(m0, ell):
    rec = refine_fixed_point(ell, m0)
    img, _, _ = poincare_map(rec.raw, m0)
    assert np.max(np.abs(img.as_array() - rec.raw.as_array())) <= 10 * m0.tolerances.newton_tol


def test_fd_matches_analytic(m1):
    spec = m1.with_(quad_scale=0.0)
    for w in sample_sigma0(spec, 20, np.random.default_rng(4), depth=4.0):
        Ja = analytic_jacobian_P(w, spec)
        assert np.all(np.abs(jacobian_P(w, spec) - Ja) <= 1e-6 * np.abs(Ja))


def test_analytic_matches_extended_precision(m0):
    # covers long flights, where double-precision differences cannot resolve
    # the contracted v- column
    spec = m0.with_(quad_scale=0.0)
    for w in sample_sigma0(spec, 4, np.random.default_rng(5), depth=8.0):
        t = flight_times(w[None], spec)[0][0]
        Jm = mp_jacobian(w, spec, t, dps=40)
        assert np.allclose(analytic_jacobian_P(w, spec), Jm, rtol=1e-11, atol=0)


def test_analytic_with_quadratic_terms(m0):
    for w in sample_sigma0(m0, 10, np.random.default_rng(6), depth=4.0):
        Ja = analytic_jacobian_P(w, m0)
        J = jacobian_P(w, m0)
        scale = np.abs(Ja).max(axis=1, keepdims=True)
        assert np.all(np.abs(J - Ja) <= 1e-6 * scale)


def test_fd_second_order(m0):
    spec = m0.with_(quad_scale=0.0)
    w = sample_sigma0(spec, 1, np.random.default_rng(7), depth=3.0)[0]
    Ja = analytic_jacobian_P(w, spec)
    h = np.array([1e-3, 1e-2 * w[1], 1e-3 * w[1] ** 1.5, 1e-3])
    e1 = np.abs(jacobian_P(w, spec, steps=h) - Ja).max()
    e2 = np.abs(jacobian_P(w, spec, steps=h / 2) - Ja).max()
    assert e2 < e1 / 3


@pytest.mark.parametrize("ell", [6, 10])
def test_fixed_point_is_hyperbolic(m0, ell):
    rec = refine_fixed_point(ell, m0)
    mod = np.abs(np.linalg.eigvals(analytic_jacobian_P(rec.raw, m0)))
    assert np.all(np.abs(mod - 1) > 0.5)
