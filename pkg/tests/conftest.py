from functools import lru_cache

import numpy as np
import pytest

from silnikov.fixed_points import extract_C_D
from silnikov.model import default_model, perturbed_model


@pytest.fixture(scope="session")
def m0():
    return default_model()


@pytest.fixture(scope="session")
def m1():
    return perturbed_model(default_model(), 1)


@pytest.fixture(scope="session")
def m10(m0):
    """M0 with the faster rotation used by several closed-form examples."""
    return m0.with_(beta=10.0, x_star=0.07)


def pure_z(spec):
    B = np.zeros(spec.n1)
    B[2] = 1.0
    return spec.with_(B=B, quad_scale=0.0)


def mutants(spec):
    """One model per standing assumption, each breaking only that assumption."""
    N = spec.N
    A, B = spec.global_map.A.copy(), spec.global_map.B.copy()
    out = {"A1": spec.with_(gamma=0.5)}
    b = B.copy()
    b[2:3 + N] = 0.0
    out["lemma1"] = spec.with_(B=b)
    a = A.copy()
    a[2, 2:3 + N] = 2 * a[1, 2:3 + N]
    out["lemma3"] = spec.with_(A=a)
    C, D = extract_C_D(spec)
    b = B.copy()
    b[0:2] = B[2:3 + N] @ np.linalg.inv(C) @ D
    out["A5"] = spec.with_(B=b)
    return out


@lru_cache(maxsize=None)
def cm_report(ell, spec):
    from silnikov.horseshoe import verify_conley_moser

    return verify_conley_moser(ell, spec)


@lru_cache(maxsize=None)
def depth6_certificates(ell, spec):
    from silnikov.horseshoe import all_words, shadow_words

    return tuple(shadow_words(all_words(2, 3), ell, spec))


def a6_attempt(spec, rounds=30):
    """Best effort at an A6-only mutant.

    A6 can only fail through the ``(z, v+)`` block of the span, so the v+
    image is pushed parallel to the spiral image at the leading-order
    phase.  The push moves Delta and hence the phase, and the iteration
    settles on a full-rank model instead.
    """
    from silnikov.fixed_points import leading_order_data
    from silnikov.horseshoe.frame import spiral_tangent, tangent_basis

    N = spec.N
    blk = slice(1, 2 + N)
    for _ in range(rounds):
        d = spiral_tangent(-leading_order_data(spec).phi, spec)
        E, _ = tangent_basis(spec)
        A = spec.global_map.A.copy()
        img = A @ E
        exi = img[:, :2] @ d
        for j in range(N):
            c = img.shape[1] - N + j
            target = exi[blk] * np.linalg.norm(img[blk, c]) / np.linalg.norm(exi[blk])
            A[blk, 3 + j] += target - img[blk, c]
        spec = spec.with_(A=A)
    return spec
