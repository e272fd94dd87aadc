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

# Causal character of vectors and curves, time orientation and observers.

import dataclasses
import enum
import typing

import bittensor as bt
import numpy as np

from finsler.errors import BadParameter, NotFuturePointed, NotTimelike, SingularPoint
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances
from finsler.vertical import PointedVector, evaluate, fundamental_tensor


class CausalClass(str, enum.Enum):
    timelike = 'timelike'
    lightlike = 'lightlike'
    spacelike = 'spacelike'
    singular = 'singular'

    @property
    def causal(self) -> bool:
        return self in (CausalClass.timelike, CausalClass.lightlike)


@dataclasses.dataclass(frozen=True)
class TimeOrientation:
    """A timelike vector field T, constant or given as a map x -> T(x)."""
    field: typing.Any

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.field(x) if callable(self.field) else self.field, dtype=float)

    @classmethod
    def of(cls, model: LagrangianModel, T=None) -> "TimeOrientation":
        if isinstance(T, TimeOrientation):
            return T
        if T is not None:
            return cls(T)
        if not model.has_time_orientation:
            raise BadParameter(f"model '{model.name}' needs an explicit time orientation")
        return cls(model.time_orientation)


def lightlike_band(y, tol: Tolerances = DEFAULT) -> float:
    return tol.lightlike_band * (1.0 + float(np.dot(y, y)))


def classify(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> CausalClass:
    """Sign of L against the scale-aware lightlike band; singular points are a class of their own."""
    try:
        L = evaluate(model, p, tol)
    except SingularPoint:
        return CausalClass.singular
    band = lightlike_band(p.y, tol)
    if L < -band:
        return CausalClass.timelike
    if L > band:
        return CausalClass.spacelike
    return CausalClass.lightlike


def time_pairing(model: LagrangianModel, p: PointedVector, Z, tol: Tolerances = DEFAULT) -> float:
    """g_y(y, Z), computed as dL/dy . Z (Euler: g_ij y^j = dL/dy^i)."""
    evaluate(model, p, tol)
    d = model.derivatives(p.x, p.y, order=1)
    if not np.all(np.isfinite(d['dL_dy'])):
        raise SingularPoint("non-finite fiber gradient", point=p.as_dict())
    return float(d['dL_dy'] @ np.asarray(Z, dtype=float))


def is_future_pointed(model: LagrangianModel, p: PointedVector, T=None, tol: Tolerances = DEFAULT) -> bool:
    """True iff g_y(y, T(x)) < 0."""
    orientation = TimeOrientation.of(model, T)
    return time_pairing(model, p, orientation(p.x), tol) < 0


def antisymmetry_in_second_slot(model: LagrangianModel, p: PointedVector, Z, tol: Tolerances = DEFAULT) -> float:
    g = fundamental_tensor(model, p, tol)
    Z = np.asarray(Z, dtype=float)
    return abs(g.inner(p.y, -Z) + g.inner(p.y, Z))


def reversal_asymmetry(model: LagrangianModel, p: PointedVector, Z, tol: Tolerances = DEFAULT) -> typing.Tuple[float, float]:
    """(g_{-y}(-y, Z), -g_y(y, Z)); equal for reversible models."""
    backward = time_pairing(model, p.reversed(), Z, tol)
    forward = time_pairing(model, p, Z, tol)
    return backward, -forward


def future_pointed_radius(model: LagrangianModel, p: PointedVector, T=None, directions: int = 32, seed: int = 0, tol: Tolerances = DEFAULT) -> float:
    """
    Sampled radius of a ball around y of future pointed vectors. Searches
    random unit directions and bisects on the sign of g(y', T).
    """
    orientation = TimeOrientation.of(model, T)
    Tx = orientation(p.x)
    if time_pairing(model, p, Tx, tol) >= 0:
        raise NotFuturePointed("base vector is not future pointed", point=p.as_dict())
    rng = np.random.default_rng(seed)
    norm = float(np.linalg.norm(p.y))

    def future(y):
        if not model.is_regular(p.x, y, tol.margin_floor):
            return False
        return model.derivatives(p.x, y, order=1)['dL_dy'] @ Tx < 0

    radius = np.inf
    for _ in range(directions):
        d = rng.normal(size=model.n)
        d /= np.linalg.norm(d)
        lo, hi = 0.0, norm
        while future(p.y + hi * d) and hi < 64 * norm:
            lo, hi = hi, 2 * hi
        if future(p.y + hi * d):
            continue
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if future(p.y + mid * d) else (lo, mid)
        radius = min(radius, lo)
    return float(radius)


def validate_time_orientation(model: LagrangianModel, T, points: typing.Sequence[np.ndarray], tol: Tolerances = DEFAULT) -> typing.List[int]:
    """Indices of base points where T fails to be timelike."""
    orientation = TimeOrientation.of(model, T)
    bad = []
    for index, x in enumerate(points):
        try:
            if classify(model, PointedVector(x, orientation(x)), tol) != CausalClass.timelike:
                bad.append(index)
        except SingularPoint:
            bad.append(index)
    return bad


@dataclasses.dataclass(frozen=True)
class Observer:
    """
    Observer worldline gamma(t) = sum_k coefficients[k] t^k on an interval.
    A static observer sits at a fixed spatial point with coordinate time as
    parameter.
    """
    coefficients: np.ndarray
    interval: typing.Tuple[float, float] = (-1e3, 1e3)
    kind: str = 'polynomial'

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise BadParameter("observer coefficients must be a (degree + 1) x n array", field='coefficients', value=c.shape)
        if not self.interval[0] < self.interval[1]:
            raise BadParameter("observer interval is empty", field='interval', value=self.interval)
        c.flags.writeable = False
        object.__setattr__(self, 'coefficients', c)

    @classmethod
    def static(cls, spatial_point, interval=(-1e3, 1e3)) -> "Observer":
        X = np.asarray(spatial_point, dtype=float)
        c0 = np.concatenate([[0.0], X])
        c1 = np.zeros_like(c0)
        c1[0] = 1.0
        return cls(np.stack([c0, c1]), tuple(interval), 'static')

    @classmethod
    def polynomial(cls, coefficients, interval=(-1e3, 1e3)) -> "Observer":
        return cls(np.asarray(coefficients, dtype=float), tuple(interval), 'polynomial')

    @property
    def n(self) -> int:
        return self.coefficients.shape[1]

    @property
    def is_static(self) -> bool:
        """Spatial position constant in t."""
        return bool(np.all(self.coefficients[1:, 1:] == 0))

    def position(self, t: float) -> np.ndarray:
        powers = t ** np.arange(self.coefficients.shape[0])
        return powers @ self.coefficients

    def velocity(self, t: float) -> np.ndarray:
        k = np.arange(1, self.coefficients.shape[0])
        if k.size == 0:
            return np.zeros(self.n)
        return (k * t ** (k - 1)) @ self.coefficients[1:]

    def as_dict(self) -> dict:
        return {'kind': self.kind, 'coefficients': self.coefficients.tolist(), 'interval': list(self.interval)}


def validate_observer(model: LagrangianModel, observer: Observer, T=None, window: typing.Optional[typing.Tuple[float, float]] = None, samples: int = 33, tol: Tolerances = DEFAULT) -> None:
    """Raises unless the observer is timelike, future pointed and free of self-intersections on the sampled window."""
    t0, t1 = window or (max(observer.interval[0], -10.0), min(observer.interval[1], 10.0))
    ts = np.linspace(t0, t1, samples)
    positions = []
    for t in ts:
        x, v = observer.position(t), observer.velocity(t)
        p = PointedVector(x, v)
        if classify(model, p, tol) != CausalClass.timelike:
            raise NotTimelike("observer is not timelike", t=float(t))
        if not is_future_pointed(model, p, T, tol):
            raise NotFuturePointed("observer is not future pointed", t=float(t))
        positions.append(x)
    positions = np.asarray(positions)
    gaps = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=-1)
    gaps[np.eye(samples, dtype=bool)] = np.inf
    if np.min(gaps) <= tol.abs:
        raise BadParameter("observer self-intersects on the sampled grid")
    bt.logging.trace(f'observer {observer.kind} validated on [{t0}, {t1}]')


@dataclasses.dataclass
class CurveClassification:
    classes: typing.List[CausalClass]
    energies: np.ndarray
    future_pointed: typing.List[bool]
    constant_speed: bool

    @property
    def single_class(self) -> bool:
        return len(set(self.classes)) == 1


def classify_curve(model: LagrangianModel, curve, T=None, nodes=None, tol: Tolerances = DEFAULT) -> CurveClassification:
    """
    Per-node causal class and future pointedness of a curve exposing
    `nodes`, `position(s)` and `velocity(s)`; constant speed means the
    spread of L along the nodes stays within the energy tolerance.
    """
    s_values = curve.nodes if nodes is None else nodes
    orientation = TimeOrientation.of(model, T) if (T is not None or model.has_time_orientation) else None
    classes, energies, future = [], [], []
    for index, s in enumerate(s_values):
        p = PointedVector(curve.position(s), curve.velocity(s))
        kind = classify(model, p, tol)
        if kind == CausalClass.singular:
            raise SingularPoint("curve node is singular", node=index, s=float(s))
        classes.append(kind)
        energies.append(model.value(p.x, p.y))
        future.append(bool(orientation is not None and time_pairing(model, p, orientation(p.x), tol) < 0))
    energies = np.asarray(energies)
    mean = float(np.mean(energies))
    constant = float(np.max(np.abs(energies - mean))) <= tol.energy * (1.0 + abs(mean))
    return CurveClassification(classes=classes, energies=energies, future_pointed=future, constant_speed=constant)
