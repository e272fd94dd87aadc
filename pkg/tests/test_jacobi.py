import math

import numpy as np
import pytest

from finsler.connection import riemann_along_geodesic
from finsler.errors import BadParameter
from finsler.geodesic import GeodesicIVP, integrate
from finsler.jacobi import (find_conjugate_points, jacobi_integrate, jacobi_matrix, jacobi_pairing_fit, locate_conjugate_points, scan,
                            transverse_basis)

from .conftest import equator_geodesic

ARC = 2.5 * math.pi


@pytest.fixture(scope='module')
def equator_frame(sphere):
    return riemann_along_geodesic(sphere, equator_geodesic(sphere, ARC))


def test_conjugate_points_on_equator(equator_frame):
    points = find_conjugate_points(equator_frame)
    assert [p.multiplicity for p in points] == [1, 1]
    assert points[0].s == pytest.approx(0.4, abs=1e-6)
    assert points[1].s == pytest.approx(0.8, abs=1e-6)
    assert not any(p.endpoint for p in points)
    assert points[0].as_dict() == {'s': points[0].s, 'mult': 1}


def test_polar_jacobi_field(equator_frame):
    field = jacobi_integrate(equator_frame, np.zeros(3), np.array([0.0, 1.0, 0.0]))
    for s in (0.1, 0.3, 0.55, 0.9):
        np.testing.assert_allclose(field.Y(s), [0.0, math.sin(ARC * s) / ARC, 0.0], atol=1e-8)
        assert field.nabla_Y(s)[1] == pytest.approx(math.cos(ARC * s), abs=1e-7)
    assert field.residual(0.5) < 1e-4


def test_tangential_field_pairing_is_linear(equator_frame):
    V0 = equator_frame.velocity(0.0)
    field = jacobi_integrate(equator_frame, np.zeros(3), V0)
    fit = jacobi_pairing_fit(field)
    # stored g(V, V) = 2 L = -2
    assert fit.slope == pytest.approx(-2.0, abs=1e-8)
    assert fit.intercept == pytest.approx(0.0, abs=1e-8)
    assert fit.residual < 1e-8


def test_transverse_basis_is_orthogonal(equator_frame):
    basis, lightlike = transverse_basis(equator_frame)
    assert not lightlike
    assert basis.shape == (3, 2)
    g, V = equator_frame.metric(0.0), equator_frame.velocity(0.0)
    np.testing.assert_allclose(basis.T @ g @ V, 0.0, atol=1e-12)


def test_scan_table(equator_frame):
    field, lightlike = jacobi_matrix(equator_frame)
    table = scan(field, lightlike, points=50)
    assert table.s.size == 50
    assert table.s[0] > 0.0
    assert np.all(np.isfinite(table.determinant))
    assert np.argmin(table.sigma_min[:30]) == pytest.approx(19, abs=1)


def test_locate_reuses_scan(equator_frame):
    field, lightlike = jacobi_matrix(equator_frame)
    located = locate_conjugate_points(field, scan(field, lightlike))
    assert located == find_conjugate_points(equator_frame)


def test_short_arc_has_no_conjugate_points(sphere):
    frame = riemann_along_geodesic(sphere, equator_geodesic(sphere, 0.5 * math.pi), nodes=33)
    assert find_conjugate_points(frame) == []


def test_lightlike_geodesic_is_flagged(minkowski):
    path = integrate(GeodesicIVP(minkowski, np.zeros(4), np.array([1.0, 1.0, 0.0, 0.0])))
    frame = riemann_along_geodesic(minkowski, path, nodes=9)
    basis, lightlike = transverse_basis(frame)
    assert lightlike
    assert basis.shape == (4, 2)
    assert find_conjugate_points(frame) == []


def test_initial_data_shapes(equator_frame):
    with pytest.raises(BadParameter):
        jacobi_integrate(equator_frame, np.zeros(3), np.zeros(2))
