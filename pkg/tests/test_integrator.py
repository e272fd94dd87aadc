import math

import numpy as np
import pytest

from finsler import integrator
from finsler.errors import LeftRegularDomain, StepFailure


def oscillator(t, z):
    return np.array([z[1], -z[0]])


def test_harmonic_oscillator_period():
    result = integrator.solve(oscillator, (0.0, 2 * math.pi), [1.0, 0.0])
    np.testing.assert_allclose(result.zs[-1], [1.0, 0.0], atol=1e-8)
    assert result.ts[-1] == 2 * math.pi
    assert result.accepted == len(result.ts) - 1
    np.testing.assert_allclose(result.fs[-1], oscillator(0.0, result.zs[-1]), atol=1e-15)


def test_backward_integration():
    result = integrator.solve(oscillator, (0.0, -math.pi), [1.0, 0.0])
    np.testing.assert_allclose(result.zs[-1], [-1.0, 0.0], atol=1e-8)
    assert np.all(np.diff(result.ts) < 0)


def test_stats():
    stats = integrator.solve(oscillator, (0.0, 1.0), [1.0, 0.0], rtol=1e-8, atol=1e-10).stats()
    assert stats['rtol'] == 1e-8
    assert stats['steps'] > 0


def test_stops_at_regular_domain_boundary():
    with pytest.raises(LeftRegularDomain) as info:
        integrator.solve(lambda t, z: np.array([1.0]), (0.0, 2.0), [0.0], regular=lambda z: z[0] < 1.0)
    assert info.value.state['t'] == pytest.approx(1.0, abs=1e-9)


def test_irregular_initial_state():
    with pytest.raises(LeftRegularDomain):
        integrator.solve(oscillator, (0.0, 1.0), [2.0, 0.0], regular=lambda z: z[0] < 1.0)


def test_step_budget():
    with pytest.raises(StepFailure):
        integrator.solve(oscillator, (0.0, 100.0), [1.0, 0.0], max_steps=5)
