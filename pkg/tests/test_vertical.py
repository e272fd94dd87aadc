import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler import catalog, models
from finsler.errors import DimensionMismatch, SingularPoint
from finsler.vertical import (PointedVector, cartan_tensor, check_axioms, check_reversibility, derivative_bundle, evaluate,
                              fundamental_tensor, metric_tensor)

ORIGIN = np.zeros(4)


def test_evaluate_minkowski(minkowski):
    assert evaluate(minkowski, PointedVector(ORIGIN, [1.0, 0, 0, 0])) == -1.0
    assert evaluate(minkowski, PointedVector(ORIGIN, [1.0, 1.0, 0, 0])) == 0.0
    assert evaluate(minkowski, PointedVector(ORIGIN, [0.0, 1.0, 0, 0])) == 1.0


def test_evaluate_rejects_zero_vector(minkowski):
    with pytest.raises(SingularPoint):
        evaluate(minkowski, PointedVector(ORIGIN, np.zeros(4)))


def test_evaluate_rejects_wrong_dimension(minkowski):
    with pytest.raises(DimensionMismatch):
        evaluate(minkowski, PointedVector(np.zeros(3), [1.0, 0, 0]))


def test_fundamental_tensor_minkowski(minkowski):
    g = fundamental_tensor(minkowski, PointedVector(ORIGIN, [1.0, 0.2, 0, 0]))
    np.testing.assert_allclose(g.g, 2 * np.diag([-1.0, 1, 1, 1]), atol=1e-14)
    assert g.signature() == (1, 3)
    np.testing.assert_allclose(metric_tensor(minkowski, PointedVector(ORIGIN, [1.0, 0.2, 0, 0])), np.diag([-1.0, 1, 1, 1]), atol=1e-14)


def test_stored_convention_recovers_lagrangian():
    model = models.bogoslovsky(0.1)
    p = PointedVector(ORIGIN, [1.3, 0.2, -0.1, 0.3])
    g = fundamental_tensor(model, p)
    assert 0.5 * g.inner(p.y, p.y) == pytest.approx(evaluate(model, p), rel=1e-10)


def test_cartan_vanishes_for_lorentzian(schwarzschild):
    p = PointedVector([0.0, 6.0, 1.0, 0.3], [1.0, 0.1, 0.02, 0.05])
    assert np.max(np.abs(cartan_tensor(schwarzschild, p).C)) == 0.0


def test_cartan_contraction_for_finsler_model():
    model = models.bogoslovsky(0.1)
    p = PointedVector(ORIGIN, [1.3, 0.2, -0.1, 0.3])
    C = cartan_tensor(model, p)
    assert np.max(np.abs(C.C)) > 1e-4
    assert np.max(np.abs(C.contraction())) < 1e-10


def test_derivative_bundle_euler_identities(schwarzschild):
    bundle = derivative_bundle(schwarzschild, PointedVector([0.0, 6.0, 1.0, 0.3], [1.2, -0.3, 0.01, 0.08]))
    assert max(bundle.euler_residuals()) < 1e-10 * (1.0 + abs(bundle.L_value))


@settings(max_examples=40, deadline=None)
@given(k=st.floats(min_value=0.1, max_value=10.0), a=st.floats(min_value=-0.5, max_value=0.5))
def test_homogeneity_bogoslovsky(k, a):
    model = models.bogoslovsky(0.1)
    p = PointedVector(ORIGIN, [1.0, a, 0.2, 0.1])
    assert evaluate(model, p.scaled(k)) == pytest.approx(k * k * evaluate(model, p), rel=1e-11, abs=1e-13)


@pytest.mark.parametrize('name', catalog.names())
def test_axioms_hold_on_catalog_samples(name):
    entry = catalog.entry(name)
    points = catalog.sample_points(entry, 50, seed=0)
    report = check_axioms(entry.model, points)
    assert report.samples == len(points)
    assert report.max_violation <= 1e-8
    assert report.signature_violations == 0


def test_axiom_report_is_data_not_exception(minkowski):
    report = check_axioms(minkowski, [PointedVector(ORIGIN, np.zeros(4))])
    assert report.singular_samples == [0]
    assert report.passed


def test_reversibility(minkowski):
    entry = catalog.entry('minkowski')
    assert check_reversibility(minkowski, entry.reference_points).reversible
    rutz = catalog.entry('rutz', m=1.0, delta=0.01)
    report = check_reversibility(rutz.model, rutz.reference_points)
    assert not report.reversible
    assert report.max_deviation > 0


def test_rainbow_is_not_reversible():
    rainbow = models.rainbow(models.minkowski(4), 0.01)
    samples = [PointedVector(np.zeros(4), [1.0, 0.1, 0.0, 0.0]), PointedVector(np.zeros(4), [1.0, 0.3, 0.2, 0.1])]
    report = check_reversibility(rainbow, samples)
    assert not report.reversible
    assert report.max_deviation > 1e-6
    assert not report.singular_samples
    # the correction is the only odd part
    assert check_reversibility(models.rainbow(models.minkowski(4), 0.0), samples).reversible


def test_rainbow_stays_homogeneous():
    rainbow = models.rainbow(models.minkowski(4), 0.01)
    x, y = np.zeros(4), np.array([1.0, 0.3, 0.2, 0.1])
    for lam in (0.5, 3.0):
        assert rainbow.value(x, lam * y) == pytest.approx(lam ** 2 * rainbow.value(x, y), rel=1e-12)
