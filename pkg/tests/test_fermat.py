import math

import numpy as np
import pytest

from finsler.causal import Observer, TimeOrientation
from finsler.connection import riemann_along_geodesic
from finsler.errors import (AmbiguousIntersection, BadParameter, DegenerateBoundaryPairing, EndpointConjugate, NoIntersection,
                            WrongShell)
from finsler.fermat import (AdmissibleCurve, AllowedVariation, admissible_polyline, analyze, arrival_parameter, boundary_pairing,
                            classify_critical_point, complete_to_tangent_space, energy_functional, energy_shell_project,
                            first_variation_tau, fourier_basis, fourier_profile, hessian_negative_count, index_form,
                            index_form_by_parts, morse_index, orthogonal_index_form, random_profile, second_variation_check, shoot,
                            tau_sweep)
from finsler.geodesic import GeodesicIVP, integrate
from finsler.jacobi import ConjugatePoint, find_conjugate_points

HALF_PI = 0.5 * math.pi
ROOT2 = math.sqrt(2.0)
TRANSVERSE = (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))


@pytest.fixture(scope='module')
def timelike(minkowski):
    return shoot(minkowski, np.zeros(4), Observer.static([1.0, 0.0, 0.0]), 1.0)


@pytest.fixture(scope='module')
def lightlike(minkowski):
    return shoot(minkowski, np.zeros(4), Observer.static([1.0, 0.0, 0.0]), 0.0)


@pytest.fixture(scope='module')
def timelike_frame(minkowski, timelike):
    return riemann_along_geodesic(minkowski, timelike.curve, nodes=17)


def transverse_field(admissible, k=1, direction=0):
    return complete_to_tangent_space(admissible.curve, *fourier_profile(4, TRANSVERSE[direction], k))


def equator_target(sphere, arc):
    return shoot(sphere, np.array([0.0, HALF_PI, 0.0]), Observer.static([HALF_PI, arc]), 1.0)


# === Shooting and admissibility ===
def test_shoot_timelike(timelike):
    assert timelike.tau == pytest.approx(ROOT2, abs=1e-10)
    np.testing.assert_allclose(timelike.curve.velocity(0.0), [ROOT2, 1.0, 0.0, 0.0], atol=1e-10)
    assert timelike.satisfied()
    invariants = timelike.invariants()
    assert invariants['energy'] < 1e-12
    assert invariants['future_pointed'] < 0


def test_shoot_lightlike(lightlike):
    assert lightlike.tau == pytest.approx(1.0, abs=1e-10)
    assert lightlike.satisfied()


def test_shoot_rejects_negative_level(minkowski, static_observer):
    with pytest.raises(BadParameter):
        shoot(minkowski, np.zeros(4), static_observer, -1.0)


def test_energy_functional(timelike):
    assert energy_functional(timelike.curve).E == pytest.approx(-1.0, abs=1e-10)


def test_energy_shell_project(minkowski):
    x = np.zeros(4)
    np.testing.assert_allclose(energy_shell_project(minkowski, x, [2.0, 0.0, 0.0, 0.0], 1.0), [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(energy_shell_project(minkowski, x, [3.0, 0.0, 0.0, 3.0], 0.0), [2 ** -0.5, 0.0, 0.0, 2 ** -0.5])
    with pytest.raises(WrongShell):
        energy_shell_project(minkowski, x, [0.0, 1.0, 0.0, 0.0], 1.0)
    with pytest.raises(WrongShell):
        energy_shell_project(minkowski, x, [1.0, 0.0, 0.0, 0.0], 0.0)
    with pytest.raises(BadParameter):
        energy_shell_project(minkowski, x, [1.0, 0.0, 0.0, 0.0], -1.0)


# === Arrival ===
def test_arrival_on_moving_observer():
    observer = Observer.polynomial([[0.0, 1.0, 0.0, 0.0], [1.0, 0.5, 0.0, 0.0]])
    assert arrival_parameter(observer, observer.position(2.0)) == pytest.approx(2.0, abs=1e-9)


def test_arrival_misses(static_observer):
    with pytest.raises(NoIntersection):
        arrival_parameter(static_observer, np.array([3.0, 2.0, 0.0, 0.0]))


def test_arrival_ambiguous():
    observer = Observer.polynomial([[0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    with pytest.raises(AmbiguousIntersection):
        arrival_parameter(observer, np.array([1.0, 0.0, 0.0, 0.0]))


# === First variation ===
def test_first_variation_vanishes_on_geodesic(timelike):
    result = first_variation_tau(timelike, count=4, seed=1)
    assert len(result.fd) == 4
    assert result.residual <= 1e-6
    assert result.cross_check <= 1e-6


def test_first_variation_detects_non_geodesic(minkowski, static_observer):
    curve = admissible_polyline(minkowski, np.zeros(4), static_observer, 1.0, [[0.5, 0.3, 0.0]])
    assert curve.invariants()['energy'] < 1e-8
    assert curve.invariants()['start'] < 1e-12
    result = first_variation_tau(curve, count=6, seed=0, cross_check=False)
    assert result.residual >= 1e-3


def test_variation_members_are_admissible(timelike):
    rng = np.random.default_rng(3)
    variation = AllowedVariation(timelike, *random_profile(rng, 4))
    varied = variation.curve(0.01, nodes=129)
    invariants = varied.invariants()
    assert invariants['start'] < 1e-12
    assert invariants['endpoint'] < 1e-8
    assert invariants['energy'] < 1e-8
    assert invariants['future_pointed'] < 0


# === Index form and second variation ===
def test_fourier_fields_are_in_the_tangent_space(timelike):
    fields = fourier_basis(timelike.curve, 5)
    assert len(fields) == 5
    for field in fields:
        assert field.in_tangent_space()
    assert fourier_basis(timelike.curve, 4, transverse_only=True)[2].spatial(0.5) @ [1.0, 0.0, 0.0] == pytest.approx(0.0, abs=1e-15)


def test_index_form_is_negative_on_transverse_modes(timelike, timelike_frame):
    field = transverse_field(timelike)
    value = orthogonal_index_form(timelike_frame, field, field)
    # stored g = 2 eta, so J = -2 int (pi cos(pi s))^2 ds
    assert value == pytest.approx(-math.pi ** 2, rel=1e-6)
    assert index_form_by_parts(timelike_frame, field, field) == pytest.approx(value, rel=1e-6)
    assert index_form(timelike_frame, field.scaled(2.0), field) == pytest.approx(2 * value, rel=1e-9)


def vanishing_profile(rng, modes=3):
    a = rng.normal(size=(modes, 3))
    k = np.arange(1, modes + 1) * math.pi
    return (lambda s: np.sin(k * s) @ a), (lambda s: (k * np.cos(k * s)) @ a)


@pytest.mark.slow
def test_index_form_negative_without_conjugate_points(timelike, timelike_frame):
    rng = np.random.default_rng(11)
    fields = [complete_to_tangent_space(timelike.curve, *vanishing_profile(rng)) for _ in range(100)]
    for field in fields:
        assert orthogonal_index_form(timelike_frame, field, field) < 0.0
    A, B = fields[0], fields[1]
    assert index_form(timelike_frame, A, B) == pytest.approx(index_form(timelike_frame, B, A), rel=1e-9, abs=1e-12)
    combined = index_form(timelike_frame, A.combined(B, 2.0, -1.0), A)
    assert combined == pytest.approx(2 * index_form(timelike_frame, A, A) - index_form(timelike_frame, B, A), rel=1e-8, abs=1e-10)


def test_orthogonal_index_form_checks_membership(timelike, timelike_frame):
    rng = np.random.default_rng(0)
    free_end = complete_to_tangent_space(timelike.curve, *random_profile(rng, 4))
    with pytest.raises(BadParameter):
        orthogonal_index_form(timelike_frame, free_end, free_end, space='V0')
    orthogonal_index_form(timelike_frame, free_end, free_end, space='V')
    with pytest.raises(BadParameter):
        orthogonal_index_form(timelike_frame, free_end, free_end, space='W')


def test_second_variation_timelike(timelike, timelike_frame):
    sample = second_variation_check(timelike, transverse_field(timelike), timelike_frame, label='transverse')
    assert sample.prediction == pytest.approx(math.pi ** 2 / (2 * ROOT2), rel=1e-6)
    assert sample.gap <= 1e-3
    longitudinal = complete_to_tangent_space(timelike.curve, *fourier_profile(4, [1.0, 0.0, 0.0], 1))
    sample = second_variation_check(timelike, longitudinal, timelike_frame)
    assert sample.prediction == pytest.approx(math.pi ** 2 / (4 * ROOT2), rel=1e-6)
    assert sample.gap <= 1e-3


def test_second_variation_lightlike(minkowski, lightlike):
    frame = riemann_along_geodesic(minkowski, lightlike.curve, nodes=17)
    sample = second_variation_check(lightlike, transverse_field(lightlike, direction=1), frame)
    assert sample.prediction == pytest.approx(math.pi ** 2 / 2, rel=1e-6)
    assert sample.gap <= 1e-3
    assert sample.as_dict()['gap'] == sample.gap


def test_second_variation_needs_vanishing_ends(timelike, timelike_frame):
    rng = np.random.default_rng(0)
    with pytest.raises(BadParameter):
        second_variation_check(timelike, complete_to_tangent_space(timelike.curve, *random_profile(rng, 4)), timelike_frame)


def test_tau_is_minimal_along_transverse_sweep(timelike):
    field = transverse_field(timelike)
    table = tau_sweep(AllowedVariation(timelike, field.spatial, field.dspatial), np.linspace(-0.05, 0.05, 11))
    assert table.shape == (11, 2)
    assert int(np.argmin(table[:, 1])) == 5
    assert table[5, 1] == pytest.approx(ROOT2, abs=1e-10)


def test_degenerate_boundary_pairing(minkowski):
    path = integrate(GeodesicIVP(minkowski, np.zeros(4), np.array([1.0, 1.0, 0.0, 0.0])))
    null_observer = Observer.polynomial([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0]])
    admissible = AdmissibleCurve(curve=path, q=np.zeros(4), observer=null_observer, tau=1.0, c=0.0, T=TimeOrientation.of(minkowski))
    with pytest.raises(DegenerateBoundaryPairing):
        boundary_pairing(admissible)


# === Morse index ===
def test_morse_index_and_character():
    assert morse_index([]) == 0
    assert classify_critical_point([]) == 'local_min'
    interior = [ConjugatePoint(0.4, 1), ConjugatePoint(0.8, 2)]
    assert morse_index(interior) == 3
    assert classify_critical_point(interior) == 'saddle'
    endpoint = [ConjugatePoint(1.0, 1, endpoint=True)]
    with pytest.raises(EndpointConjugate):
        morse_index(endpoint)
    assert classify_critical_point(endpoint) == 'boundary_case'


@pytest.mark.slow
@pytest.mark.parametrize('arc, index, character', [
    (0.5 * math.pi, 0, 'local_min'),
    (1.5 * math.pi, 1, 'saddle'),
    (2.5 * math.pi, 2, 'saddle'),
])
def test_sphere_morse_index(sphere, arc, index, character):
    admissible = equator_target(sphere, arc)
    assert admissible.tau == pytest.approx(math.sqrt(1.0 + arc * arc), abs=1e-9)
    points = find_conjugate_points(riemann_along_geodesic(sphere, admissible.curve))
    assert morse_index(points) == index
    assert classify_critical_point(points) == character
    for k, point in enumerate(points, start=1):
        assert point.s == pytest.approx(k * math.pi / arc, abs=1e-6)


@pytest.mark.slow
def test_sphere_second_variation_sign(sphere):
    arc = 1.5 * math.pi
    admissible = equator_target(sphere, arc)
    frame = riemann_along_geodesic(sphere, admissible.curve)
    a = math.sqrt(1.0 + arc * arc)
    for k in (1, 2):
        field = complete_to_tangent_space(admissible.curve, *fourier_profile(3, [1.0, 0.0], k))
        sample = second_variation_check(admissible, field, frame)
        assert sample.prediction == pytest.approx((k * k * math.pi ** 2 - arc * arc) / (2 * a), rel=1e-5)
        assert sample.gap <= 1e-3


@pytest.mark.slow
def test_sphere_hessian_negative_count(sphere):
    admissible = equator_target(sphere, 1.5 * math.pi)
    count, eigenvalues = hessian_negative_count(admissible, fourier_basis(admissible.curve, 3))
    assert count == 1
    assert eigenvalues.size == 3


@pytest.mark.slow
def test_analyze_minkowski(minkowski, static_observer):
    report = analyze(minkowski, np.zeros(4), static_observer, 1.0, generators=3, modes=2, sweep=np.linspace(-0.02, 0.02, 5))
    assert report.tau == pytest.approx(ROOT2, abs=1e-10)
    assert report.first_variation_residual <= 1e-6
    assert report.morse_index == 0
    assert report.character == 'local_min'
    assert not report.lightlike
    assert all(s.gap <= 1e-3 for s in report.second_variation_samples)
    out = report.as_dict()
    assert out['conjugate_points'] == []
    assert out['c'] == 1.0
    assert report.sweep.shape == (5, 2)
