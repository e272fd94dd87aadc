import math

import numpy as np
import pytest

from finsler import differentiation
from finsler.errors import NumericalBreakdown


def test_richardson_removes_truncation_error():
    value, error = differentiation.richardson(lambda h: np.array([(math.sin(0.3 + h) - math.sin(0.3 - h)) / (2 * h)]), 0.1)
    assert value[0] == pytest.approx(math.cos(0.3), abs=1e-9)
    assert error < 1e-6


def test_jacobian():
    J = differentiation.jacobian(lambda z: np.array([z[0] * z[1], math.sin(z[0])]), np.array([0.5, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.5], [math.cos(0.5), 0.0]], atol=1e-8)


def test_hessian():
    H = differentiation.hessian(lambda z: z[0] ** 2 * z[1] + math.exp(z[1]), np.array([1.0, 0.5]))
    np.testing.assert_allclose(H, [[1.0, 2.0], [2.0, math.exp(0.5)]], atol=1e-7)


def test_steps_scale_with_magnitude():
    np.testing.assert_allclose(differentiation.steps([0.0, -3.0], 1e-3), [1e-3, 4e-3])


def test_breakdown():
    with pytest.raises(NumericalBreakdown):
        differentiation.richardson(lambda h: np.array([math.nan]), 0.1)
    with pytest.raises(NumericalBreakdown):
        differentiation.richardson(lambda h: np.array([1.0 / h]), 1.0)
