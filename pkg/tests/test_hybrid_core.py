"""Hybrid-time ordering, state containers, manifolds, and canonical JSON."""
import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shdslab.hybrid_core import (
    HybridTime,
    StateVector,
    affine_manifold,
    build_reduced,
    canonical_json,
    config_hash,
    manifold_distance,
)
from shdslab.scenarios import get_scenario

ht = st.tuples(st.floats(0, 100, allow_nan=False), st.integers(0, 50))


def test_hybrid_time_partial_order():
    assert HybridTime(1.0, 1) < HybridTime(2.0, 3)
    assert HybridTime(1.0, 1) <= HybridTime(1.0, 1)
    assert not HybridTime(1.0, 1) < HybridTime(1.0, 1)
    # neither precedes the other when one coordinate regresses
    a, b = HybridTime(1.0, 2), HybridTime(1.5, 1)
    assert not a < b and not b < a
    assert HybridTime(2.5, 3).total == 5.5


@given(ht, ht)
@settings(max_examples=100, deadline=None)
def test_hybrid_time_order_is_componentwise(p, q):
    a, b = HybridTime(*p), HybridTime(*q)
    assert (a <= b) == (a.t <= b.t and a.j <= b.j)


def test_hybrid_time_rejects_negative_coordinates():
    with pytest.raises(ValueError):
        HybridTime(-0.5, 0)
    with pytest.raises(ValueError):
        HybridTime(0.0, -1)


def test_state_vector_is_immutable():
    sv = StateVector(np.array([1.0]), np.array([2.0, 3.0]))
    with pytest.raises(ValueError):
        sv.x[0] = 9.0
    with pytest.raises(dataclasses.FrozenInstanceError):
        sv.x = np.zeros(1)
    # constructing copies the input, later writes to the source do not leak in
    src = np.array([4.0])
    sv2 = StateVector(src, np.array([0.0]))
    src[0] = -1.0
    assert sv2.x[0] == 4.0


def test_state_vector_flat_round_trip():
    sv = StateVector.from_flat(np.array([1.0, 2.0, 3.0]), 1)
    assert sv.dim_x == 1 and sv.dim_z == 2
    assert np.array_equal(sv.x, [1.0])
    assert np.array_equal(sv.z, [2.0, 3.0])
    assert np.array_equal(sv.y, [1.0, 2.0, 3.0])


def test_affine_manifold_projection_and_distance():
    # z*(x) = [[2]] x + [1]
    man = affine_manifold(np.array([[2.0]]), np.array([1.0]))
    x = np.array([1.5])
    assert np.allclose(man.project(x), [4.0])
    assert man.distance(x, np.array([4.0])) == 0.0
    assert man.distance(x, np.array([6.5])) == pytest.approx(2.5, abs=1e-14)


def test_manifold_distance_on_scenario():
    sc = get_scenario("example1")
    y_on = StateVector(np.array([0.7]), np.array([-0.7]))
    y_off = StateVector(np.array([0.7]), np.array([0.3]))
    assert manifold_distance(sc.system, y_on) == 0.0
    assert manifold_distance(sc.system, y_off) == pytest.approx(1.0, abs=1e-14)


def test_build_reduced_matches_slow_field_on_manifold():
    sc = get_scenario("example1")
    red = build_reduced(sc.system)
    for xv in (-2.0, -0.3, 0.6, 1.7):
        x = np.array([xv])
        f = red.flow(x)
        assert np.allclose(f, -x, atol=1e-14)


def test_canonical_json_key_order_and_floats():
    a = canonical_json({"b": 1, "a": [1.5, 0.1]})
    b = canonical_json({"a": [1.5, 0.1], "b": 1})
    assert a == b
    assert a == '{"a":[1.5,0.1],"b":1}'
    # repr round trip keeps shortest float form
    assert canonical_json(0.1) == "0.1"
    assert json.loads(canonical_json({"x": 1e-9}))["x"] == 1e-9


def test_config_hash_frozen_value():
    doc = {"family": "example1", "epsilon": 0.05, "parameters": {}}
    assert config_hash(doc) == (
        "38ab76ce460ab9be8cb524812d17f901da3b870a2c9746cd09255e6a3c55d234")
    assert config_hash({"parameters": {}, "epsilon": 0.05, "family": "example1"}) == config_hash(doc)
