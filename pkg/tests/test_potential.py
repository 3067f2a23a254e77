import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netform.features import structural_recipe, build_features
from netform.graph import VillageNetwork
from netform.households import GeneratorSpec, generate_synthetic
from netform.potential import (
    DimensionError,
    ParameterVector,
    ScoreMatrices,
    delta_potential,
    potential,
    score,
    sufficient_statistics,
)

from oracles import naive_potential


def random_scores(rng, n, scale=1.0):
    u = rng.normal(0, scale, (n, n))
    m = rng.normal(0, scale, (n, n))
    v = rng.normal(0, scale, (n, n))
    return ScoreMatrices(u, m + m.T, v + v.T)


@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_potential_matches_triple_loop(n, seed):
    rng = np.random.default_rng(seed)
    s = random_scores(rng, n)
    a = (rng.random((n, n)) < 0.5).astype(np.uint8)
    np.fill_diagonal(a, 0)
    assert potential(a, s) == pytest.approx(naive_potential(a, s.u, s.m, s.v), abs=1e-10)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1), st.data())
def test_delta_matches_recomputation(n, seed, data):
    rng = np.random.default_rng(seed)
    s = random_scores(rng, n, scale=3.0)
    a = (rng.random((n, n)) < rng.random()).astype(np.uint8)
    np.fill_diagonal(a, 0)
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 2))
    j += j >= i
    on, off = a.copy(), a.copy()
    on[i, j], off[i, j] = 1, 0
    assert delta_potential(a, s, i, j) == pytest.approx(potential(on, s) - potential(off, s), abs=1e-10)


def test_delta_errors():
    s = ScoreMatrices(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        delta_potential(np.zeros((3, 3)), s, 1, 1)
    with pytest.raises(IndexError):
        delta_potential(np.zeros((3, 3)), s, 0, 3)


def test_score_matrices_checks():
    with pytest.raises(ValueError, match="symmetric"):
        ScoreMatrices(np.zeros((2, 2)), np.array([[0, 1], [2, 0]]), np.zeros((2, 2)))
    s = ScoreMatrices(np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    assert s.u[0, 0] == 0 and s.finite
    with pytest.raises(DimensionError):
        ScoreMatrices(np.zeros((2, 2)), np.zeros((3, 3)), np.zeros((3, 3)))


@given(st.integers(0, 1000))
def test_potential_linear_in_beta(seed):
    v = generate_synthetic(GeneratorSpec.from_dict({"villages": 1, "size": {"min": 5, "max": 5}}), seed)[0]
    f = build_features(v, structural_recipe())
    rng = np.random.default_rng(seed)
    zero = ParameterVector.zeros(f)
    beta = zero.with_flat(rng.normal(0, 0.3, len(zero)))
    a = (rng.random((5, 5)) < 0.5).astype(np.uint8)
    np.fill_diagonal(a, 0)
    assert potential(a, score(f, beta)) == pytest.approx(beta.flat @ sufficient_statistics(a, f), abs=1e-9)


def test_parameter_vector():
    p = ParameterVector.from_mapping({"u": {"b": 2.0}, "v": {"c": -1.0}}, ["a", "b"], [], ["c"])
    assert p.names == ["u:a", "u:b", "v:c"]
    assert list(p.flat) == [0.0, 2.0, -1.0]
    assert p.with_flat(p.flat) == p and len(p) == 3
    assert ParameterVector.from_mapping(p.to_mapping(), ["a", "b"], [], ["c"]) == p
    with pytest.raises(DimensionError):
        ParameterVector.from_mapping({"u": {"zz": 1}}, ["a"])
    with pytest.raises(DimensionError):
        ParameterVector(np.zeros(2), np.zeros(0), np.zeros(0), ("a",))
    with pytest.raises(ValueError):
        ParameterVector(np.array([np.nan]), np.zeros(0), np.zeros(0), ("a",))
    with pytest.raises(DimensionError):
        p.with_flat(np.zeros(2))


def test_score_name_mismatch(small_villages):
    f = build_features(small_villages[0], structural_recipe())
    beta = ParameterVector(np.zeros(1), np.zeros(0), np.zeros(0), ("intercept",))
    with pytest.raises(DimensionError):
        score(f, beta)
