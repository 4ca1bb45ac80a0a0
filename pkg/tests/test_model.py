import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import mutants
from silnikov.model import (StructuralError, default_model, load_model, model_from_dict,
                            perturbed_model, save_model, validate_model)


def test_default_model_values(m0):
    s = m0.spectrum
    assert (s.alpha, s.gamma) == (1.0, 2.0)
    assert s.lambda_plus.tolist() == [3.0] and s.lambda_minus.tolist() == [4.0]
    assert m0.N == 1 and m0.M == 1 and m0.n0 == 4 and m0.n1 == 5


def test_default_model_deterministic():
    assert default_model() == default_model()
    assert hash(default_model()) == hash(default_model())


def test_round_trip(m0, tmp_path):
    path = tmp_path / "m.json"
    save_model(m0, path)
    assert load_model(path) == m0


def test_dimension_mismatch_names_field(m0):
    d = m0.to_dict()
    d["spectrum"]["lambda_plus"] = [3.0, 3.5]
    d["geometry"]["v_star_plus"] = [0.05, 0.0]
    with pytest.raises(StructuralError) as err:
        model_from_dict(d)
    assert str(err.value).startswith("global_map.A")


def test_negative_eta_rejected(m0):
    d = m0.to_dict()
    d["geometry"]["eta"] = -0.1
    with pytest.raises(StructuralError):
        model_from_dict(d)


def test_arrays_are_read_only(m0):
    with pytest.raises(ValueError):
        m0.global_map.A[0, 0] = 1.0


def test_validate_m0_all_pass(m0):
    rep = validate_model(m0)
    assert rep.passed and rep.failed() == [] and rep.skipped() == []
    assert rep["lemma3"].details["cond_C"] < 1e8
    assert rep["A6"].details["rank"] == m0.n0
    json.dumps(rep.to_dict())


@pytest.mark.parametrize("name", ["A1", "lemma1", "lemma3", "A5"])
def test_mutant_fails_only_its_check(m0, name):
    rep = validate_model(mutants(m0)[name])
    assert not rep.passed
    assert rep.failed() == [name]


def test_a1_mutant_names_inequality(m0):
    rep = validate_model(m0.with_(gamma=0.5))
    assert rep["A1"].details["failed_inequalities"] == ["alpha<gamma"]


def test_a5_mutant_skips_a6(m0):
    rep = validate_model(mutants(m0)["A5"])
    assert rep.skipped() == ["A6"]
    assert rep["A5"].details["Delta1"] == pytest.approx(0, abs=1e-15)


def test_perturbed_model_is_valid_and_seeded(m0):
    m1 = perturbed_model(m0, 1)
    assert validate_model(m1).passed
    assert m1 == perturbed_model(m0, 1)
    assert m1 != m0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.05, 0.6))
def test_a6_follows_from_a5_and_lemma3(m0, seed, scale):
    # on the leading-order frame the span check reduces to Delta . d != 0,
    # which holds whenever Delta != 0 and C is invertible
    rng = np.random.default_rng(seed)
    A = m0.global_map.A * (1 + scale * rng.standard_normal(m0.global_map.A.shape))
    B = m0.global_map.B + scale * rng.standard_normal(m0.n1)
    rep = validate_model(m0.with_(A=A, B=B))
    if rep["A5"].passed and rep["lemma3"].passed:
        assert rep["A6"].passed
