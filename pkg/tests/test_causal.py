import types

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler import models
from finsler.causal import (CausalClass, Observer, antisymmetry_in_second_slot, classify, classify_curve, future_pointed_radius,
                            is_future_pointed, reversal_asymmetry, validate_observer, validate_time_orientation)
from finsler.errors import BadParameter, NotFuturePointed, NotTimelike
from finsler.vertical import PointedVector

ORIGIN = np.zeros(4)
E0 = np.array([1.0, 0, 0, 0])


@pytest.mark.parametrize('y, expected', [
    ([1.0, 0, 0, 0], CausalClass.timelike),
    ([1.0, 1.0, 0, 0], CausalClass.lightlike),
    ([0.0, 1.0, 0, 0], CausalClass.spacelike),
    ([0.0, 0, 0, 0], CausalClass.singular),
])
def test_classify_minkowski(minkowski, y, expected):
    assert classify(minkowski, PointedVector(ORIGIN, y)) == expected


def test_causal_property():
    assert CausalClass.timelike.causal
    assert CausalClass.lightlike.causal
    assert not CausalClass.spacelike.causal


@settings(max_examples=50, deadline=None)
@given(k=st.floats(min_value=0.01, max_value=100.0), a=st.floats(min_value=-0.9, max_value=0.9), spacelike=st.booleans())
def test_classification_is_scale_invariant(minkowski, k, a, spacelike):
    y = np.array([a, 1.0, 0, 0]) if spacelike else np.array([1.0, a, 0, 0])
    p = PointedVector(ORIGIN, y)
    assert classify(minkowski, p.scaled(k)) == classify(minkowski, p)


def test_classify_finsler_model():
    model = models.bogoslovsky(0.1)
    assert classify(model, PointedVector(ORIGIN, [1.0, 0.2, 0.0, 0.1])) == CausalClass.timelike


def test_future_pointed(minkowski):
    assert is_future_pointed(minkowski, PointedVector(ORIGIN, E0))
    assert not is_future_pointed(minkowski, PointedVector(ORIGIN, -E0))
    assert is_future_pointed(minkowski, PointedVector(ORIGIN, [1.0, 1.0, 0, 0]))


def test_future_pointed_needs_orientation():
    with pytest.raises(BadParameter):
        is_future_pointed(models.beem_r3(), PointedVector(np.zeros(3), [1.0, 0.2, 0.3]))


def test_antisymmetry_in_second_slot():
    model = models.bogoslovsky(0.1)
    p = PointedVector(ORIGIN, [1.3, 0.2, -0.1, 0.3])
    assert antisymmetry_in_second_slot(model, p, [0.3, 1.0, -0.5, 0.2]) < 1e-12


def test_reversal_asymmetry(minkowski):
    backward, forward = reversal_asymmetry(minkowski, PointedVector(ORIGIN, [1.0, 0.3, 0, 0]), E0)
    assert backward == pytest.approx(forward, abs=1e-14)
    backward, forward = reversal_asymmetry(models.beem_r3(), PointedVector(np.zeros(3), [0.6, 0.8, 0.0]), [1.0, 0.0, 0.0])
    assert abs(backward - forward) > 0.5


def test_future_pointed_radius(minkowski):
    radius = future_pointed_radius(minkowski, PointedVector(ORIGIN, E0))
    assert 1.0 - 1e-9 <= radius < np.inf
    with pytest.raises(NotFuturePointed):
        future_pointed_radius(minkowski, PointedVector(ORIGIN, -E0))


def test_validate_time_orientation(minkowski):
    points = [ORIGIN, np.ones(4)]
    assert validate_time_orientation(minkowski, E0, points) == []
    assert validate_time_orientation(minkowski, np.array([0.0, 1.0, 0, 0]), points) == [0, 1]


def test_static_observer(static_observer):
    assert static_observer.is_static
    assert static_observer.n == 4
    np.testing.assert_array_equal(static_observer.position(2.0), [2.0, 1.0, 0.0, 0.0])
    np.testing.assert_array_equal(static_observer.velocity(5.0), E0)


def test_observer_validation(minkowski, static_observer):
    validate_observer(minkowski, static_observer)
    moving = Observer.polynomial([[0.0, 1.0, 0, 0], [1.0, 0.5, 0, 0]])
    assert not moving.is_static
    validate_observer(minkowski, moving)
    superluminal = Observer.polynomial([[0.0, 1.0, 0, 0], [1.0, 2.0, 0, 0]])
    with pytest.raises(NotTimelike):
        validate_observer(minkowski, superluminal)
    past = Observer.polynomial([[0.0, 1.0, 0, 0], [-1.0, 0.0, 0, 0]])
    with pytest.raises(NotFuturePointed):
        validate_observer(minkowski, past)


def test_observer_rejects_bad_input():
    with pytest.raises(BadParameter):
        Observer.polynomial([1.0, 0.0])
    with pytest.raises(BadParameter):
        Observer.static([1.0, 0.0, 0.0], interval=(1.0, 1.0))


def test_classify_curve(minkowski):
    line = types.SimpleNamespace(
        nodes=np.linspace(0.0, 1.0, 5),
        position=lambda s: np.array([s, 0.6 * s, 0.0, 0.0]),
        velocity=lambda s: np.array([1.0, 0.6, 0.0, 0.0]),
    )
    result = classify_curve(minkowski, line)
    assert result.single_class
    assert result.classes[0] == CausalClass.timelike
    assert result.constant_speed
    assert all(result.future_pointed)
    np.testing.assert_allclose(result.energies, -0.64)
