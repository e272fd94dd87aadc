import numpy as np
import pytest

from finsler import catalog
from finsler.errors import BadParameter, UnknownModel
from finsler.vertical import evaluate


def test_names_are_sorted_and_described():
    names = catalog.names()
    assert names == sorted(names)
    assert {'minkowski', 'schwarzschild', 'rutz', 'bogoslovsky', 'product_sphere'} <= set(names)
    assert set(names) == set(catalog.DESCRIPTIONS)


def test_unknown_model():
    with pytest.raises(UnknownModel):
        catalog.entry('kerr')


def test_unknown_parameter():
    with pytest.raises(BadParameter):
        catalog.entry('minkowski', mass=1.0)


def test_bad_parameter_values():
    with pytest.raises(BadParameter):
        catalog.entry('bimetric', anisotropy=-1.0)
    with pytest.raises(BadParameter):
        catalog.entry('berwald_moor_perturbed', index=(1, 2))
    with pytest.raises(BadParameter):
        catalog.entry('lorentzian', metric=[[1.0, 2.0], [0.0, 1.0]])


@pytest.mark.parametrize('name', catalog.names())
def test_known_facts_hold(name):
    results = catalog.verify_known_facts(catalog.entry(name))
    assert results
    failed = [r for r in results if not r.passed]
    assert not failed, failed


def test_reference_points_are_regular():
    for name in catalog.names():
        entry = catalog.entry(name)
        for p in entry.reference_points:
            assert entry.model.is_regular(p.x, p.y)


def test_samples_are_seeded_and_keep_sign():
    entry = catalog.entry('schwarzschild')
    first = catalog.sample_points(entry, 20, seed=7)
    second = catalog.sample_points(entry, 20, seed=7)
    assert len(first) == 20
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.x, b.x)
        np.testing.assert_array_equal(a.y, b.y)
    other = catalog.sample_points(entry, 20, seed=8)
    assert not np.array_equal(first[0].y, other[0].y)


def test_parametrized_entry():
    entry = catalog.entry('schwarzschild', m=2.0)
    assert entry.model.params['m'] == 2.0
    assert all(p.x[1] > 4.0 for p in entry.reference_points)


def test_rutz_reversibility_fact_tracks_delta():
    results = catalog.verify_known_facts(catalog.entry('rutz', m=1.0, delta=0.0))
    assert all(r.passed for r in results)
    entry = catalog.entry('rutz', m=1.0, delta=0.0)
    reference = catalog.entry('schwarzschild', m=1.0)
    p = entry.reference_points[0]
    assert evaluate(entry.model, p) == pytest.approx(evaluate(reference.model, p), abs=1e-12)
