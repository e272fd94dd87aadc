import math

import numpy as np
import pytest

from finsler import models
from finsler.errors import BadParameter, DegenerateMetric, DimensionMismatch
from finsler.vertical import PointedVector, evaluate

HALF_PI = 0.5 * math.pi
EQUATOR_R4 = np.array([0.0, 4.0, HALF_PI, 0.0])


def test_schwarzschild_reference_values(schwarzschild):
    assert schwarzschild.value(EQUATOR_R4, [1.0, 0, 0, 0]) == pytest.approx(-0.5, abs=1e-15)
    assert schwarzschild.value(EQUATOR_R4, [0.0, 1.0, 0, 0]) == pytest.approx(2.0, abs=1e-15)


def test_schwarzschild_horizon_is_singular(schwarzschild):
    assert schwarzschild.is_regular(EQUATOR_R4, [1.0, 0, 0, 0])
    assert not schwarzschild.is_regular(np.array([0.0, 2.0, HALF_PI, 0.0]), [1.0, 0, 0, 0])


def test_regularity_rejects_wrong_shape(minkowski):
    with pytest.raises(DimensionMismatch):
        minkowski.is_regular(np.zeros(3), np.ones(3))


@pytest.mark.parametrize('c', [0.0, 0.5, 1.0, 2.0])
def test_solve_time_component_lorentzian(schwarzschild, c):
    x = np.array([0.0, 10.0, HALF_PI, 0.0])
    v = np.array([0.1, 0.0, 0.05])
    u = schwarzschild.solve_time_component(x, v, c)
    assert u > 0
    assert schwarzschild.value(x, np.concatenate([[u], v])) == pytest.approx(-c * c, abs=1e-12)


def test_solve_time_component_finsler():
    model = models.bogoslovsky(0.1)
    v = np.array([0.2, -0.1, 0.3])
    u = model.solve_time_component(np.zeros(4), v, 1.0)
    assert u > 0
    assert model.value(np.zeros(4), np.concatenate([[u], v])) == pytest.approx(-1.0, abs=1e-12)


def test_rutz_reduces_to_schwarzschild(schwarzschild):
    rutz = models.rutz(1.0, 0.0)
    for y in ([1.0, 0.1, 0.05, 0.1], [1.0, -0.2, 0.1, 0.05]):
        p = PointedVector([0.0, 6.0, 1.0, 0.3], y)
        assert evaluate(rutz, p) == pytest.approx(evaluate(schwarzschild, p), abs=1e-10)


def test_bogoslovsky_reduces_to_minkowski(minkowski):
    model = models.bogoslovsky(0.0)
    p = PointedVector(np.zeros(4), [2.0, 0.3, -0.4, 0.5])
    assert evaluate(model, p) == pytest.approx(evaluate(minkowski, p), abs=1e-12)


def test_bogoslovsky_rejects_spacelike_direction():
    with pytest.raises(BadParameter):
        models.bogoslovsky(0.1, null_direction=(0.0, 1.0, 0.0, 0.0))


def test_rainbow_reduces_to_base(minkowski):
    model = models.rainbow(models.minkowski(4), 0.0)
    p = PointedVector(np.zeros(4), [1.0, 0.3, 0.2, 0.1])
    assert evaluate(model, p) == pytest.approx(evaluate(minkowski, p), abs=1e-12)


def test_rainbow_cone_switch():
    with pytest.raises(BadParameter):
        models.rainbow(models.minkowski(4), 0.01, cone='null')
    spacelike = models.rainbow(models.minkowski(4), 0.01, cone='spacelike')
    assert spacelike.value(np.zeros(4), [0.1, 1.0, 0.0, 0.0]) > 0


def test_rutz_is_not_reversible():
    rutz = models.rutz(1.0, 0.01)
    x = np.array([0.0, 6.0, 1.0, 0.3])
    y = np.array([1.0, 0.1, 0.05, 0.1])
    assert rutz.value(x, y) != pytest.approx(rutz.value(x, -y), abs=1e-6)


def test_beem_is_odd_in_the_plane():
    model = models.beem_r3()
    y = np.array([0.6, 0.8, 0.0])
    assert model.value(np.zeros(3), -y) == pytest.approx(-model.value(np.zeros(3), y), abs=1e-14)


def test_berwald_moor_bound():
    phi = models.sym_tensor(4, (1, 1, 2, 2), 1.0)
    with pytest.raises(DegenerateMetric):
        models.berwald_moor_perturbed(phi, 2)


def test_sym_tensor_contraction():
    phi = models.sym_tensor(4, (1, 1, 2, 2), 0.5)
    y = np.array([0.0, 2.0, 3.0, 0.0])
    assert np.einsum('abcd,a,b,c,d', phi, y, y, y, y) == pytest.approx(0.5 * 2 * 2 * 3 * 3)


def test_product_sphere_metric(sphere):
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_allclose(sphere.metric(x), np.diag([-1.0, 1.0, math.sin(1.0) ** 2]), atol=1e-15)
    with pytest.raises(BadParameter):
        models.product_sphere(0.0)


def test_autodiff_matches_finite_differences():
    model = models.rutz(1.0, 0.01)
    x = np.array([0.0, 6.0, 1.0, 0.3])
    y = np.array([1.0, 0.1, 0.05, 0.1])
    exact = model._autodiff_derivatives(x, y, 2)
    approx = model._finite_difference_derivatives(x, y, 2)
    for key in ('dL_dy', 'dL_dx', 'd2L_dydy', 'd2L_dxdy'):
        np.testing.assert_allclose(approx[key], exact[key], rtol=1e-6, atol=1e-7)


def test_lorentzian_from_metric_matches_minkowski(minkowski):
    model = models.lorentzian_from_metric(lambda x: np.diag([-1.0, 1.0, 1.0, 1.0]), 4, time_orientation=np.eye(4)[0])
    p = PointedVector(np.ones(4), [1.0, 0.3, 0.2, 0.1])
    assert evaluate(model, p) == pytest.approx(evaluate(minkowski, p), abs=1e-15)
    d = model.derivatives(p.x, p.y)
    assert np.max(np.abs(d['dL_dx'])) < 1e-9
