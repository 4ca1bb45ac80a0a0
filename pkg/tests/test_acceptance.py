"""Acceptance suite: one PASS/FAIL line per criterion on M0 and M1.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed
even when output capture is on.
"""
import math

import numpy as np
import pytest
from conftest import a6_attempt, cm_report, depth6_certificates, mutants
from oracles import dense_first_root, sample_sigma0

from silnikov.fixed_points import fixed_point_family
from silnikov.global_map import analytic_jacobian_P, jacobian_P, poincare_batch
from silnikov.horseshoe import all_words, build_slab, check_conjugacy_batch, itinerary_of, sensitivity
from silnikov.local_dynamics import flight_times, flight_window
from silnikov.model import validate_model

ELLS = (2, 3, 4)
SHADOW_ELL = 2


@pytest.fixture
def report(capsys, request):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def models(m0, m1):
    return {"M0": m0, "M1": m1}


def test_criterion_1_return_time_law(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        fam = fixed_point_family(range(1, 41), spec)
        tail = [r for r in fam if fam.ell0 is not None and r.ell >= fam.ell0]
        # the tail starts after the last index where the gap failed to decrease
        ups = [i for i in range(1, len(tail)) if tail[i].gap >= tail[i - 1].gap]
        tail = tail[ups[-1]:] if ups else tail
        gaps = [r.gap for r in tail]
        spacing = tail[-1].T_ell - tail[-2].T_ell - math.pi / spec.spectrum.beta if len(tail) > 1 else math.inf
        good = (len(tail) >= 10 and all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < 1e-3
                and abs(spacing) <= 1e-6)
        ok &= good
        notes.append(f"{name} tail {tail[0].ell}..40 gap {gaps[-1]:.1e} spacing err {abs(spacing):.1e}")
    report(1, ok, "return-time law; " + "; ".join(notes))


def test_criterion_2_fixed_point_residuals(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        fam = [r for r in fixed_point_family(range(1, 41), spec) if r.converged]
        W = np.array([r.raw.as_array() for r in fam])
        img, _, status = poincare_batch(W, spec)
        disp = np.max(np.abs(img - W), axis=1)
        worst = float(np.max(np.where(status == 0, disp, np.inf)))
        ok &= worst <= 10 * spec.tolerances.newton_tol
        notes.append(f"{name} {len(fam)} points, max displacement {worst:.1e}")
    report(2, ok, "fixed-point residuals; " + "; ".join(notes))


def test_criterion_3_gates(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        rep = validate_model(spec)
        ok &= rep.passed and rep["lemma3"].details["cond_C"] < 1e8
        for broken, mut in mutants(spec).items():
            got = validate_model(mut).failed()
            ok &= got == [broken]
            notes.append(f"{name}/{broken}->{','.join(got) or 'none'}")
    report(3, ok, "gates pass on M0 and M1; mutants " + " ".join(notes))


@pytest.mark.xfail(strict=True, reason="A6 cannot fail while A5 holds (see ledger)")
def test_criterion_3_a6_only_mutant(models, report):
    got = validate_model(a6_attempt(models["M0"])).failed()
    report(3, got == ["A6"], f"A6-only mutant; validator failed {got or 'nothing'} (A6 holds whenever A5 does)")


def test_criterion_4_slab_residency(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        for ell in ELLS:
            s = build_slab(ell, spec)
            m = s.margins
            ok &= all(v > 0 for tag in ("fp_plus", "fp_minus") for v in m[tag].values())
            notes.append(f"{name} l={ell} min margin {m['min']:.3f}")
    report(4, ok, "two residents with strict margins; " + "; ".join(notes))


def test_criterion_5_conley_moser(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        for ell in ELLS:
            r = cm_report(ell, spec)
            ok &= r.passed and r.mu_u > 1 and r.mu_s < 1 and r.samples >= 1024
            notes.append(f"{name} l={ell} {r.verdict} mu_u {r.mu_u:.3g} mu_s {r.mu_s:.3g} n={r.samples}")
    report(5, ok, "Conley-Moser; " + "; ".join(notes))


def test_criterion_6_conjugacy_depth6(models, report):
    notes, ok = [], True
    words = all_words(2, 3)
    for name, spec in models.items():
        certs = depth6_certificates(SHADOW_ELL, spec)
        exact = all(c.verified for c in certs) and len({str(c.word) for c in certs}) == 64
        # independent round trip through the public itinerary call on a sample
        exact &= all(itinerary_of(c.point, 3, 2, SHADOW_ELL, spec) == c.word for c in certs[::7])
        r = cm_report(SHADOW_ELL, spec)
        reps = check_conjugacy_batch(words, SHADOW_ELL, spec, r.mu_u, r.mu_s)
        dmax = max(x.distance for x in reps)
        tol = min(x.conj_tol for x in reps)
        ok &= exact and all(x.passed for x in reps)
        notes.append(f"{name} l={SHADOW_ELL} 64 words round trip {exact}, max dist {dmax:.1e} <= {tol:.2e}")
    report(6, ok, "conjugacy at depth 6; " + "; ".join(notes))


def test_criterion_7_sensitivity(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        gap = cm_report(SHADOW_ELL, spec).strip_gap
        rows = sensitivity(SHADOW_ELL, spec)
        d = [x.delta for x in rows]
        ok &= [x.j for x in rows] == [2, 3, 4, 5, 6]
        ok &= all(a > b for a, b in zip(d, d[1:]))
        ok &= all(x.separation >= gap and x.separation_step <= x.j for x in rows)
        notes.append(f"{name} delta {d[0]:.1e}..{d[-1]:.1e}, min separation "
                     f"{min(x.separation for x in rows):.3f} vs gap {gap:.3f}")
    report(7, ok, "sensitive dependence; " + "; ".join(notes))


def test_criterion_8_jacobian_oracle(models, report):
    notes, ok = [], True
    for name, spec in models.items():
        lin = spec.with_(quad_scale=0.0)
        worst = 0.0
        for w in sample_sigma0(lin, 100, np.random.default_rng(8), depth=4.0):
            Ja = analytic_jacobian_P(w, lin)
            err = np.abs(jacobian_P(w, lin) - Ja) / np.abs(Ja)
            worst = max(worst, float(np.max(np.where(Ja != 0, err, 0.0))))
        ok &= worst <= 1e-6
        notes.append(f"{name} max rel err {worst:.1e}")
    report(8, ok, "FD vs analytic Jacobian at 100 points; " + "; ".join(notes))


def test_criterion_9_flight_time_oracle(models, report):
    notes, ok = [], True
    n = 1_000_000
    for name, spec in models.items():
        W = sample_sigma0(spec, 100, np.random.default_rng(9))
        t, status = flight_times(W, spec)
        worst = 0.0
        for w, ti, st in zip(W, t, status):
            lo, hi = map(float, flight_window(w[1], spec))
            br = dense_first_root(w, spec, lo, hi, n=n)
            res = (hi - lo) / (n - 1)
            if br is None:
                ok &= st == 1
                continue
            # inside the first bracket means it is the smallest root
            ok &= st == 0 and br[0] - res <= ti <= br[1] + res
            worst = max(worst, abs(ti - 0.5 * (br[0] + br[1])) / res)
        notes.append(f"{name} 100 points, worst offset {worst:.2f} grid steps")
    report(9, ok, "flight time vs 1e6-point dense scan; " + "; ".join(notes))
