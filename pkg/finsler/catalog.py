# The MIT License (MIT)
# Copyright © 2024 finsler-fermat contributors

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

# Built-in model catalog: factories, reference points known to be regular,
# and machine-checkable facts about each model.

import dataclasses
import math
import typing

import bittensor as bt
import numpy as np

from finsler import models
from finsler.errors import BadParameter, FinslerError, UnknownModel
from finsler.tolerances import DEFAULT, Tolerances
from finsler.vertical import PointedVector, check_axioms, check_reversibility, evaluate

HALF_PI = 0.5 * math.pi


@dataclasses.dataclass(frozen=True)
class KnownFact:
    """
    kind is one of:
        'signature'   every reference point has Lorentz signature
        'reversible'  expected boolean outcome of check_reversibility
        'reduces_to'  (name, params, own_params): L agrees with another model
        'value'       (x, y, L): a reference value of L
    """
    kind: str
    expected: typing.Any = True


@dataclasses.dataclass(frozen=True)
class ModelCatalogEntry:
    model: models.LagrangianModel
    reference_points: typing.Tuple[PointedVector, ...]
    known_facts: typing.Tuple[KnownFact, ...] = ()

    def __post_init__(self):
        for p in self.reference_points:
            if not self.model.is_regular(p.x, p.y):
                raise BadParameter(f"reference point is not regular for {self.model.name}", point=p.as_dict())


def _points(xs, ys) -> typing.Tuple[PointedVector, ...]:
    return tuple(PointedVector(x, y) for x in xs for y in ys)


# === Builders ===
def _minkowski(n: int = 4):
    model = models.minkowski(int(n))
    e = np.eye(int(n))
    ys = [e[0], e[1], e[0] + 0.5 * e[1], 2 * e[0] + 0.3 * e[1] - 0.4 * e[-1], e[0] + e[1]]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', True),
        KnownFact('value', (np.zeros(int(n)), e[0], -1.0)),
        KnownFact('value', (np.zeros(int(n)), e[0] + e[1], 0.0)),
    )
    return model, _points([np.zeros(int(n)), np.full(int(n), 0.7)], ys), facts


def _schwarzschild(m: float = 1.0):
    model = models.schwarzschild(m)
    xs = [np.array([0.0, k * m, th, 0.3]) for k in (4.0, 6.0, 10.0) for th in (HALF_PI, 1.0)]
    ys = [np.array([1.0, 0.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0, 0.0]), np.array([1.0, 0.1, 0.02, 0.05]), np.array([1.2, -0.3, 0.01, 0.08])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', True),
        KnownFact('value', (np.array([0.0, 4 * m, HALF_PI, 0.0]), np.array([1.0, 0, 0, 0]), -0.5)),
        KnownFact('value', (np.array([0.0, 4 * m, HALF_PI, 0.0]), np.array([0.0, 1, 0, 0]), 2.0)),
    )
    return model, _points(xs, ys), facts


def _rutz(m: float = 1.0, delta: float = 0.01):
    model = models.rutz(m, delta)
    xs = [np.array([0.0, k * m, th, 0.3]) for k in (4.0, 6.0, 10.0) for th in (HALF_PI, 1.0)]
    ys = [np.array([1.0, 0.1, 0.05, 0.1]), np.array([1.0, -0.2, 0.1, 0.05]), np.array([0.3, 1.0, 0.2, 0.1])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', delta == 0),
        KnownFact('reduces_to', ('schwarzschild', {'m': m}, {'m': m, 'delta': 0.0})),
    )
    return model, _points(xs, ys), facts


def _product_sphere(radius: float = 1.0):
    model = models.product_sphere(radius)
    xs = [np.array([0.0, HALF_PI, 0.0]), np.array([0.0, 1.0, 2.0])]
    ys = [np.array([1.0, 0.0, 0.0]), np.array([1.5, 0.3, 1.0]), np.array([0.0, 1.0, 0.0])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', True),
        KnownFact('value', (np.array([0.0, HALF_PI, 0.0]), np.array([1.0, 1.0 / radius, 0.0]), 0.0)),
    )
    return model, _points(xs, ys), facts


def _beem_r3():
    model = models.beem_r3()
    ys = [np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]), np.array([0.6, 0.8, 0.0]), np.array([1.0, 0.2, 0.3]), np.array([0.3, -1.0, 0.5])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', False),
        KnownFact('value', (np.zeros(3), np.array([1.0, 0, 0]), 1.0)),
    )
    return model, _points([np.zeros(3)], ys), facts


def _bogoslovsky(b: float = 0.1, null_direction=(1.0, 0.0, 0.0, 1.0)):
    model = models.bogoslovsky(b, tuple(null_direction))
    ys = [np.array([1.0, 0, 0, 0]), np.array([1.0, 0.2, 0.0, 0.1]), np.array([2.0, 0.3, -0.4, 0.5]), np.array([1.0, 0.0, 0.0, -0.5])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', True),
        KnownFact('reduces_to', ('minkowski', {'n': 4}, {'b': 0.0, 'null_direction': tuple(null_direction)})),
    )
    return model, _points([np.zeros(4)], ys), facts


def _constant_metric(h) -> models.MetricField:
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    return models.lorentzian_from_metric(lambda x: h, n, metric_derivative=lambda x: np.zeros((n, n, n)), time_orientation=np.eye(n)[0])


def _bimetric(anisotropy: float = 1.2):
    if not anisotropy > 0:
        raise BadParameter("anisotropy must be positive", field='anisotropy', value=anisotropy)
    plus = models.minkowski(4)
    minus = _constant_metric(np.diag([-1.0, anisotropy, anisotropy, anisotropy]))
    model = models.bimetric(plus, minus)
    ys = [np.array([1.0, 0, 0, 0]), np.array([1.0, 0.3, 0.2, 0.0]), np.array([2.0, -0.5, 0.3, 0.4])]
    facts = (KnownFact('signature'), KnownFact('reversible', True))
    return model, _points([np.zeros(4)], ys), facts


def _dielectric_medium(n: int = 4):
    model = models.dielectric_medium(n=int(n))
    e = np.eye(int(n))
    ys = [e[0] + 0.2 * e[1] + 0.1 * e[-1], 0.5 * e[0] + e[1], e[1], 2 * e[0] - 0.3 * e[1] + 0.4 * e[-1]]
    facts = (KnownFact('signature'), KnownFact('reversible', True))
    return model, _points([np.zeros(int(n))], ys), facts


def _rainbow(C1: float = 0.01, mass: float = 0.0, cone: str = 'timelike'):
    model = models.rainbow(models.minkowski(4), C1, mass=mass, cone=cone)
    if cone == 'timelike':
        ys = [np.array([1.0, 0.1, 0.0, 0.0]), np.array([1.0, 0.3, 0.2, 0.1]), np.array([2.0, 0.5, 0.0, -0.2])]
    else:
        ys = [np.array([0.1, 1.0, 0.0, 0.0]), np.array([0.3, 1.0, 0.2, 0.1]), np.array([0.5, 0.0, 2.0, -0.2])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', C1 == 0.0),
        KnownFact('reduces_to', ('minkowski', {'n': 4}, {'C1': 0.0, 'mass': mass, 'cone': cone})),
    )
    return model, _points([np.zeros(4)], ys), facts


def _berwald_moor_perturbed(weight: float = 0.05, index=(1, 1, 2, 2), p: int = 2):
    index = tuple(int(i) for i in index)
    if len(index) != 2 * p:
        raise BadParameter("index must have 2p entries", field='index', value=index)
    phi = models.sym_tensor(4, index, weight)
    model = models.berwald_moor_perturbed(phi, p)
    ys = [np.array([1.0, 0.2, 0.3, 0.1]), np.array([0.2, 1.0, 0.5, 0.0]), np.array([1.0, 0.0, 0.0, 0.0])]
    facts = (
        KnownFact('signature'),
        KnownFact('reversible', True),
        KnownFact('reduces_to', ('minkowski', {'n': 4}, {'weight': 0.0, 'index': index, 'p': p})),
    )
    return model, _points([np.zeros(4)], ys), facts


def _lorentzian(metric=None):
    h = np.diag([-1.0, 1.0, 1.0, 1.0]) if metric is None else np.asarray(metric, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or not np.allclose(h, h.T):
        raise BadParameter("metric must be a symmetric square matrix", field='metric')
    model = _constant_metric(h)
    n = h.shape[0]
    e = np.eye(n)
    ys = [e[0], e[1], e[0] + 0.3 * e[1]]
    ys = [y for y in ys if model.is_regular(np.zeros(n), y)]
    return model, _points([np.zeros(n)], ys), (KnownFact('signature'),)


REGISTRY: typing.Dict[str, typing.Callable] = {
    'minkowski': _minkowski,
    'lorentzian': _lorentzian,
    'schwarzschild': _schwarzschild,
    'product_sphere': _product_sphere,
    'rutz': _rutz,
    'beem_r3': _beem_r3,
    'bogoslovsky': _bogoslovsky,
    'bimetric': _bimetric,
    'dielectric_medium': _dielectric_medium,
    'rainbow': _rainbow,
    'berwald_moor_perturbed': _berwald_moor_perturbed,
}

DESCRIPTIONS = {
    'minkowski': 'flat spacetime, L = -(y^0)^2 + sum (y^i)^2',
    'lorentzian': 'L = h(y, y) for a constant Lorentzian matrix h',
    'schwarzschild': 'exterior Schwarzschild metric, parameter m',
    'product_sphere': 'static product R x S^2, parameter radius',
    'rutz': 'Schwarzschild with angular-velocity correction, parameters m, delta',
    'beem_r3': 'non-reversible cubic-over-norm Lagrangian on R^3',
    'bogoslovsky': 'very special relativity metric, parameters b, null_direction',
    'bimetric': 'sqrt of the product of two Lorentzian Lagrangians, parameter anisotropy',
    'dielectric_medium': 'L = 1/2 (ell^2 - U(y)^2) with Euclidean ell and U = dt',
    'rainbow': 'rainbow modification of Minkowski, parameters C1, mass, cone',
    'berwald_moor_perturbed': 'Minkowski plus small 2p-tensor term, parameters weight, index, p',
}


def names() -> typing.List[str]:
    return sorted(REGISTRY)


def entry(name: str, **params) -> ModelCatalogEntry:
    """
    Builds a catalog entry.

    Parameters:
        name (str): Catalog name, see `names()`.
        **params: Model parameters; unknown names raise BadParameter.
    Returns:
        ModelCatalogEntry: model, reference points and known facts.
    """
    if name not in REGISTRY:
        raise UnknownModel(f"unknown model '{name}'", name=name, known=names())
    try:
        model, points, facts = REGISTRY[name](**params)
    except TypeError as e:
        raise BadParameter(f"bad parameters for {name}: {e}", model=name, params=params)
    return ModelCatalogEntry(model=model, reference_points=points, known_facts=facts)


def build(name: str, **params) -> models.LagrangianModel:
    return entry(name, **params).model


def sample_points(entry: ModelCatalogEntry, count: int, seed: int = 0, spread: float = 0.05, tol: Tolerances = DEFAULT) -> typing.List[PointedVector]:
    """
    Seeded regular samples scattered around the reference points, each keeping
    the sign of L of the reference point it was drawn from.
    """
    rng = np.random.default_rng(seed)
    model = entry.model
    refs = entry.reference_points
    out = []
    tries = 0
    while len(out) < count and tries < 50 * count:
        tries += 1
        ref = refs[int(rng.integers(len(refs)))]
        x = ref.x + spread * rng.normal(size=model.n) * (1.0 + np.abs(ref.x))
        y = ref.y + spread * rng.normal(size=model.n) * (1.0 + np.linalg.norm(ref.y))
        if not model.is_regular(x, y, tol.margin_floor):
            continue
        if np.sign(model.value(x, y)) != np.sign(model.value(ref.x, ref.y)):
            continue
        out.append(PointedVector(x, y))
    if len(out) < count:
        bt.logging.warning(f'only {len(out)} of {count} samples found for {model.name}')
    return out


@dataclasses.dataclass
class FactResult:
    kind: str
    expected: typing.Any
    measured: typing.Any
    passed: bool


def verify_known_facts(entry: ModelCatalogEntry, tol: Tolerances = DEFAULT) -> typing.List[FactResult]:
    """Evaluates every known fact of the entry on its reference points."""
    model = entry.model
    results = []
    for fact in entry.known_facts:
        try:
            if fact.kind == 'signature':
                report = check_axioms(model, entry.reference_points, tol)
                results.append(FactResult(fact.kind, 0, report.signature_violations, report.signature_violations == 0))
            elif fact.kind == 'reversible':
                report = check_reversibility(model, entry.reference_points, tol)
                results.append(FactResult(fact.kind, fact.expected, report.max_deviation, report.reversible == fact.expected))
            elif fact.kind == 'reduces_to':
                other_name, other_params, own_params = fact.expected
                other = build(other_name, **other_params)
                own = build(model.name, **own_params)
                gap = max(abs(evaluate(own, p, tol) - evaluate(other, p, tol)) for p in entry.reference_points)
                results.append(FactResult(fact.kind, other_name, gap, gap <= 1e-10))
            elif fact.kind == 'value':
                x, y, expected = fact.expected
                value = evaluate(model, PointedVector(x, y), tol)
                results.append(FactResult(fact.kind, expected, value, abs(value - expected) <= tol.bound(expected)))
            else:
                raise BadParameter(f"unknown fact kind '{fact.kind}'")
        except FinslerError as e:
            bt.logging.error(f'fact {fact.kind} for {model.name} failed: {e}')
            results.append(FactResult(fact.kind, fact.expected, str(e), False))
    return results
