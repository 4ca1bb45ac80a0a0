import math

import numpy as np
import pytest
from scipy.optimize import minimize

from silnikov.horseshoe.cones import (cone_expansion, cone_form, image_aperture, invariance_margin,
                                      stable_inverse)

KAPPA = math.tan(math.pi / 6)


def _cone_points(theta, kappa=KAPPA):
    """Rows of the 2+2 cone: ``(cos a, sin a, kappa r cos b, kappa r sin b)`` with ``r = sin^2 c``."""
    a, b, c = np.atleast_2d(theta).T
    r = kappa * np.sin(c) ** 2
    return np.column_stack([np.cos(a), np.sin(a), r * np.cos(b), r * np.sin(b)])


def _polished(f, rng, starts=6, n=20_000):
    """Minimum of the row-wise ``f`` over the cone: sampling, then Nelder-Mead from the best starts."""
    th = np.column_stack([rng.uniform(0, 2 * math.pi, n), rng.uniform(0, 2 * math.pi, n),
                          rng.uniform(0, math.pi / 2, n)])
    vals = f(_cone_points(th))
    best = vals.min()
    for t0 in th[np.argsort(vals)[:starts]]:
        res = minimize(lambda t: f(_cone_points(t))[0], t0, method="Nelder-Mead",
                       options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000})
        best = min(best, res.fun)
    return best


def _jacobians(rng, count=6, badly_scaled=False):
    J = rng.standard_normal((count, 4, 4))
    J[:, :2, :2] *= 4.0  # expanding block
    J[:, 2:, 2:] *= 0.2
    if badly_scaled:
        left = 10.0 ** rng.uniform(-5, 5, (count, 4))
        right = 10.0 ** rng.uniform(-2, 2, (count, 4))
        J = left[:, :, None] * J * right[:, None, :]
    return J


@pytest.mark.parametrize("which", ["unstable", "stable"])
def test_expansion_against_sampling(which):
    rng = np.random.default_rng(0)
    J = _jacobians(rng)
    mask = np.array([True, True, False, False]) if which == "unstable" else np.array([False, False, True, True])
    G = cone_form(2, 4, KAPPA, which)
    exact = cone_expansion(J, G, mask)
    order = np.r_[np.nonzero(mask)[0], np.nonzero(~mask)[0]]
    for i in range(len(J)):
        def ratio(U):
            V = np.empty_like(U)
            V[:, order] = U
            return np.linalg.norm((V @ J[i].T)[:, mask], axis=1)

        sampled = _polished(ratio, rng)
        assert exact[i] <= sampled * (1 + 1e-9) + 1e-12
        assert exact[i] >= sampled * (1 - 1e-6) - 1e-7


def test_aperture_against_sampling():
    rng = np.random.default_rng(1)
    J = _jacobians(rng)
    mask = np.array([True, True, False, False])
    G = cone_form(2, 4, KAPPA)
    exact = image_aperture(J, G, mask)
    for i in range(len(J)):
        def inv_ratio(U):
            W = U @ J[i].T
            return np.linalg.norm(W[:, :2], axis=1) / np.linalg.norm(W[:, 2:], axis=1)

        # the aperture is infinite exactly when some cone vector has w_p = 0
        sampled = 1.0 / _polished(inv_ratio, rng)
        if np.isinf(exact[i]):
            assert sampled > 1e6
        else:
            assert exact[i] >= sampled * (1 - 1e-9)
            assert exact[i] <= sampled * (1 + 1e-6)


def test_badly_scaled_expansion_positive():
    # the cone quantities are invariant under scalings of the other block,
    # so the scaled and unscaled answers must agree
    rng = np.random.default_rng(2)
    J = _jacobians(rng)
    s = 10.0 ** rng.uniform(-8, 8, (len(J), 2))
    Js = J.copy()
    Js[:, :, 2:] *= 1.0  # columns of the n block fixed
    Js[:, 2:, :] *= s[:, :, None]  # rows of the n block scaled
    mask = np.array([True, True, False, False])
    G = cone_form(2, 4, KAPPA)
    a, b = cone_expansion(J, G, mask), cone_expansion(Js, G, mask)
    assert np.all(a > 0)
    assert np.allclose(a, b, rtol=1e-8)


def test_badly_scaled_inverse_expansion():
    rng = np.random.default_rng(3)
    J = _jacobians(rng, count=8, badly_scaled=True)
    Ji = stable_inverse(J)
    # entrywise residual of J Ji = I relative to the magnitudes involved
    prod = J @ Ji
    mag = np.abs(J) @ np.abs(Ji)
    assert np.all(np.abs(prod - np.eye(4)) <= 1e-12 * mag + 1e-15)
    G = cone_form(2, 4, KAPPA, "stable")
    mask = np.array([False, False, True, True])
    exact = cone_expansion(Ji, G, mask)
    for i in range(len(J)):
        def ratio(U):
            V = np.column_stack([U[:, 2:], U[:, :2]])
            return np.linalg.norm((V @ Ji[i].T)[:, mask], axis=1)

        sampled = _polished(ratio, rng)
        scale = np.abs(Ji[i][mask]).max()
        assert exact[i] <= sampled * (1 + 1e-9) + 1e-12 * scale
        assert exact[i] >= sampled * (1 - 1e-6) - 1e-8 * scale


def test_identity_has_no_expansion_and_keeps_the_cone():
    J = np.broadcast_to(np.eye(4), (3, 4, 4)).copy()
    mask = np.array([True, True, False, False])
    G = cone_form(2, 4, KAPPA)
    assert np.allclose(cone_expansion(J, G, mask), 1.0, atol=1e-9)
    assert np.allclose(image_aperture(J, G, mask), KAPPA, rtol=1e-9)
    assert np.allclose(invariance_margin(J, G, mask, KAPPA), 0.0, atol=1e-9)


def test_diagonal_closed_form():
    J = np.diag([5.0, 3.0, 0.1, 0.2])[None]
    mask = np.array([True, True, False, False])
    G = cone_form(2, 4, KAPPA)
    assert cone_expansion(J, G, mask)[0] == pytest.approx(3.0, rel=1e-9)
    assert image_aperture(J, G, mask)[0] == pytest.approx(KAPPA * 0.2 / 3.0, rel=1e-8)
