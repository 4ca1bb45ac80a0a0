import math

import numpy as np
import pytest

from silnikov.fixed_points import (LeadingOrderError, delta_coefficients, export_family_csv,
                                   extract_C_D, fixed_point_family, leading_time, phase_from_deltas,
                                   refine_fixed_point)
from silnikov.local_dynamics import map_P01


def test_delta_matches_grid_fit(m0):
    # fit a cos + b sin to the reduced constraint along the leading circle
    d1, d2 = delta_coefficients(m0)
    C, D = extract_C_D(m0)
    B, xs, beta = np.array(m0.global_map.B), m0.geometry.x_star, m0.spectrum.beta
    t = np.linspace(0, 2 * math.pi / beta, 4001)
    basis = np.column_stack([np.cos(beta * t), np.sin(beta * t)])
    xy = xs * basis.T
    val = B[:2] @ xy - B[2:4] @ np.linalg.solve(C, D @ xy)
    fit = np.linalg.lstsq(basis, val, rcond=None)[0]
    assert fit == pytest.approx([d1, d2], rel=1e-12)
    assert d1 != 0 and d2 != 0 and math.isfinite(phase_from_deltas(d1, d2))


def test_delta_scaling(m0):
    d1, d2 = delta_coefficients(m0)
    e1, e2 = delta_coefficients(m0.with_(B=2 * np.array(m0.global_map.B)))
    assert (e1, e2) == pytest.approx((2 * d1, 2 * d2), rel=1e-14)
    assert phase_from_deltas(e1, e2) == pytest.approx(phase_from_deltas(d1, d2), rel=1e-14)


def test_zero_phase_case(m10):
    A = np.array(m10.global_map.A)
    A[1:3, 1] = 0.0  # D's y-column
    B = np.zeros(5)
    B[1] = 0.5
    spec = m10.with_(A=A, B=B)
    d1, d2 = delta_coefficients(spec)
    assert d1 == 0.0 and d2 == pytest.approx(0.07 * 0.5)
    assert phase_from_deltas(d1, d2) == 0.0
    assert leading_time(5, spec) == pytest.approx(math.pi / 2, rel=1e-15)


def test_singular_c_raises(m0):
    A = np.array(m0.global_map.A)
    A[2, 2:4] = A[1, 2:4]
    with pytest.raises(LeadingOrderError):
        delta_coefficients(m0.with_(A=A))


def test_sign_alternation(m0):
    lead = [leading_time(ell, m0) for ell in range(10, 14)]
    c = [math.cos(m0.spectrum.beta * t) for t in lead]
    assert all(a * b < 0 for a, b in zip(c, c[1:]))


def test_tail_converges(m0):
    fam = fixed_point_family(range(20, 31), m0)
    assert all(r.converged for r in fam) and fam.ell0 == 20
    T = [r.T_ell for r in fam]
    assert all(b > a for a, b in zip(T, T[1:]))
    assert all(r.residual <= m0.tolerances.newton_tol for r in fam)


def test_gap_decays(m0):
    gaps = [refine_fixed_point(ell, m0).gap for ell in range(18, 40)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-10


def test_spacing_tends_to_pi_over_beta(m0):
    T = [refine_fixed_point(ell, m0).T_ell for ell in (30, 31)]
    assert T[1] - T[0] == pytest.approx(math.pi / m0.spectrum.beta, abs=1e-6)


def test_z_law(m0):
    for ell in (12, 25):
        rec = refine_fixed_point(ell, m0)
        p, t = map_P01(rec.raw, m0)
        assert t == pytest.approx(rec.T_ell, rel=1e-12)
        assert rec.raw.z0 == pytest.approx((p.z1 + 0.1) * math.exp(-2.0 * rec.T_ell), rel=1e-12)


def test_below_threshold_unconverged(m0):
    fam = fixed_point_family(range(1, 5), m0.with_(quad_scale=1e3))
    assert not any(r.converged for r in fam) and fam.ell0 is None
    assert all(r.message for r in fam)


def test_export_csv(m0, tmp_path):
    fam = fixed_point_family(range(20, 23), m0)
    path = tmp_path / "fp.csv"
    export_family_csv(fam, m0, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("ell,T_ell,leading_T,gap") and len(lines) == 4
