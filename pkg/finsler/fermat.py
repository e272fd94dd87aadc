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

# Fermat's principle for causal curves: the time-arrival functional on
# admissible curves, shooting onto an observer, allowed variations, first and
# second variation of the arrival time, index forms and Morse index.
#
# Admissible curves start at q, end on the observer, keep L = -c^2 and stay
# future pointed. Variations move the spatial chart components and restore
# the energy shell through the time component, which is coordinate 0.

import dataclasses
import typing

import bittensor as bt
import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.linalg
import scipy.optimize
from tqdm import tqdm

from finsler import differentiation
from finsler.causal import CausalClass, Observer, TimeOrientation, classify, time_pairing
from finsler.connection import CurveFrame, riemann_along_geodesic
from finsler.errors import (AmbiguousIntersection, BadParameter, DegenerateBoundaryPairing, EndpointConjugate, FinslerError,
                            NoConvergence, NoIntersection, NotFuturePointed, SingularPoint, VariationConstructionFailed, WrongShell)
from finsler.geodesic import GeodesicIVP, SampledCurve, Trajectory, el_residual, integrate
from finsler.jacobi import ConjugatePoint, ConjugateScan, jacobi_matrix, locate_conjugate_points, scan
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances
from finsler.vertical import PointedVector

CHARACTERS = ('local_min', 'saddle', 'boundary_case')
# observer parameters probed per unit length when searching for arrivals
ARRIVAL_GRID = 4001
# first and second derivative steps in epsilon
FIRST_STEP = 1e-3
SECOND_STEP = 2e-2
SECOND_LEVELS = 4


# === Admissible curves ===
@dataclasses.dataclass
class AdmissibleCurve:
    curve: Trajectory
    q: np.ndarray
    observer: Observer
    tau: float
    c: float
    T: TimeOrientation
    iterations: int = 0

    @property
    def model(self) -> LagrangianModel:
        return self.curve.model

    def invariants(self, tol: Tolerances = DEFAULT) -> typing.Dict[str, float]:
        """Residuals of the four membership conditions; future_pointed is the largest g(lambda', T)."""
        s0, s1 = self.curve.span
        model = self.model
        pairings, energies = [], []
        for s in self.curve.nodes:
            p = PointedVector(self.curve.position(s), self.curve.velocity(s))
            energies.append(abs(model.value(p.x, p.y) + self.c * self.c))
            pairings.append(time_pairing(model, p, self.T(p.x), tol))
        return {
            'start': float(np.linalg.norm(self.curve.position(s0) - self.q)),
            'endpoint': float(np.linalg.norm(self.curve.position(s1) - self.observer.position(self.tau))),
            'energy': float(max(energies)),
            'future_pointed': float(max(pairings)),
        }

    def satisfied(self, tol: Tolerances = DEFAULT) -> bool:
        r = self.invariants(tol)
        scale = max(1.0, float(np.linalg.norm(self.q)))
        return (r['start'] <= tol.capture_radius * scale and r['endpoint'] <= 10 * tol.capture_radius * scale
                and r['energy'] <= tol.energy * max(1.0, self.c * self.c) and r['future_pointed'] < 0)


@dataclasses.dataclass(frozen=True)
class EnergyFunctionalValue:
    E: float


def energy_shell_project(model: LagrangianModel, x, y, c: float, tol: Tolerances = DEFAULT) -> np.ndarray:
    """
    Scales y onto the shell L = -c^2. For c = 0 the vector must already be
    lightlike and is returned with unit Euclidean chart norm.
    """
    if c < 0:
        raise BadParameter("c must be non-negative", field='c', value=c)
    p = PointedVector(x, y)
    kind = classify(model, p, tol)
    if c > 0:
        if kind != CausalClass.timelike:
            raise WrongShell("only timelike vectors reach a negative energy level", kind=kind.value, c=c)
        return np.sqrt(c * c / -model.value(p.x, p.y)) * p.y
    if kind != CausalClass.lightlike:
        raise WrongShell("scaling cannot make a non-null vector null", kind=kind.value)
    return p.y / np.linalg.norm(p.y)


def energy_functional(curve, tol: Tolerances = DEFAULT) -> EnergyFunctionalValue:
    """E = int L(lambda, lambda') ds by adaptive quadrature."""
    model = curve.model
    s0, s1 = curve.span
    for s in np.linspace(s0, s1, 17):
        if not model.is_regular(curve.position(s), curve.velocity(s), tol.margin_floor):
            raise SingularPoint("curve leaves the regular domain", s=float(s))
    value, _ = scipy.integrate.quad(lambda s: model.value(curve.position(s), curve.velocity(s)), s0, s1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return EnergyFunctionalValue(E=float(value))


# === Time arrival ===
def _window(observer: Observer) -> typing.Tuple[float, float]:
    return max(observer.interval[0], -1e3), min(observer.interval[1], 1e3)


def _nearest_parameter(observer: Observer, point) -> float:
    """Observer parameter closest to `point`, without a capture check."""
    point = np.asarray(point, dtype=float)
    if observer.kind == 'static':
        return float(point[0])
    t0, t1 = _window(observer)
    grid = np.linspace(t0, t1, ARRIVAL_GRID)
    distance = [float(np.sum((observer.position(t) - point) ** 2)) for t in grid]
    k = int(np.argmin(distance))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    return float(scipy.optimize.minimize_scalar(lambda t: float(np.sum((observer.position(t) - point) ** 2)), bounds=(a, b), method='bounded', options={'xatol': 1e-13}).x)


def arrival_parameter(observer: Observer, point, tol: Tolerances = DEFAULT) -> float:
    """
    The parameter t with observer(t) = point, within the capture radius.

    Raises:
        NoIntersection: no observer parameter is within the capture radius.
        AmbiguousIntersection: more than one is.
    """
    point = np.asarray(point, dtype=float)
    radius = tol.capture_radius * max(1.0, float(np.linalg.norm(point)))
    t0, t1 = _window(observer)
    if observer.kind == 'static':
        candidates = [float(point[0])]
    else:
        def slope(t):
            return float((observer.position(t) - point) @ observer.velocity(t))
        grid = np.linspace(t0, t1, ARRIVAL_GRID)
        values = [slope(t) for t in grid]
        candidates = []
        for k in range(grid.size - 1):
            if values[k] == 0:
                candidates.append(float(grid[k]))
            elif values[k] < 0 < values[k + 1]:
                candidates.append(float(scipy.optimize.brentq(slope, grid[k], grid[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)))
    hits = [t for t in candidates if t0 <= t <= t1 and np.linalg.norm(observer.position(t) - point) <= radius]
    if not hits:
        gap = min((float(np.linalg.norm(observer.position(t) - point)) for t in candidates), default=float('inf'))
        raise NoIntersection("curve endpoint is not on the observer", gap=gap, radius=radius)
    distinct = sorted(set(round(t, 9) for t in hits))
    if len(distinct) > 1:
        raise AmbiguousIntersection("several observer parameters match the endpoint", parameters=distinct)
    return hits[0]


def time_arrival(curve, observer: Observer, tol: Tolerances = DEFAULT) -> float:
    """tau(lambda) = observer^{-1}(lambda(1))."""
    return arrival_parameter(observer, curve.position(curve.span[1]), tol)


# === Shooting ===
def _initial_velocity(model: LagrangianModel, q, v, c: float, T: TimeOrientation, tol: Tolerances) -> np.ndarray:
    try:
        u = model.solve_time_component(q, v, c)
    except WrongShell as e:
        raise NotFuturePointed(f"no future pointed vector on the shell: {e}", v=np.asarray(v).tolist(), c=c)
    y0 = np.concatenate([[u], v])
    if time_pairing(model, PointedVector(q, y0), T(q), tol) >= 0:
        raise NotFuturePointed("initial velocity is not future pointed", y0=y0.tolist())
    return y0


def shoot(model: LagrangianModel, q, observer: Observer, c: float, T=None, initial_guess=None, tol: Tolerances = DEFAULT) -> AdmissibleCurve:
    """
    Finds the geodesic from q on the shell L = -c^2 that meets the observer at s = 1.

    The unknowns are the spatial components of the initial velocity and the
    arrival parameter; the time component follows from the energy shell. The
    endpoint mismatch lambda(1) - observer(tau) is driven to zero with scipy's
    hybrid Powell method.

    Parameters:
        model (LagrangianModel): The spacetime.
        q: Source event.
        observer (Observer): Target worldline.
        c (float): Energy level, c >= 0 (c = 0 for light rays).
        T: Time orientation; defaults to the model's.
        initial_guess: Optional initial velocity; only its spatial direction is used.
    Returns:
        AdmissibleCurve: the geodesic and its arrival parameter.
    """
    if c < 0:
        raise BadParameter("c must be non-negative", field='c', value=c)
    orientation = TimeOrientation.of(model, T)
    q = np.asarray(q, dtype=float)
    n = model.n
    target = observer.position(q[0])[1:] - q[1:]
    distance = float(np.linalg.norm(target))
    if initial_guess is not None:
        direction = np.asarray(initial_guess, dtype=float)[1:]
        norm = float(np.linalg.norm(direction))
        v0 = direction / norm * distance if norm > 0 else np.zeros(n - 1)
    else:
        v0 = target.copy()

    def fly(v):
        y0 = _initial_velocity(model, q, v, c, orientation, tol)
        return integrate(GeodesicIVP(model, q, y0), tol, check_energy=False)

    first = fly(v0)
    tau0 = _nearest_parameter(observer, first.position(1.0))
    evaluations = [0]

    def residual(unknowns):
        evaluations[0] += 1
        return fly(unknowns[:-1]).position(1.0) - observer.position(unknowns[-1])

    solution = scipy.optimize.root(residual, np.concatenate([v0, [tau0]]), method='hybr',
                                   options={'xtol': 1e-14, 'maxfev': tol.max_iterations * (n + 1), 'epsfcn': 1e-12})
    gap = float(np.linalg.norm(solution.fun))
    scale = max(1.0, float(np.linalg.norm(q)))
    if gap > tol.capture_radius * scale:
        raise NoConvergence("shooting did not reach the observer", gap=gap, iterations=evaluations[0], solver=solution.message)
    path = fly(solution.x[:-1])
    curve = AdmissibleCurve(curve=path, q=q, observer=observer, tau=float(solution.x[-1]), c=float(c), T=orientation, iterations=evaluations[0])
    curve.tau = time_arrival(path, observer, tol.replace(capture_radius=10 * tol.capture_radius))
    if curve.invariants(tol)['future_pointed'] >= 0:
        raise NotFuturePointed("shot geodesic is not future pointed along its nodes")
    bt.logging.debug(f'shoot {model.name}: tau={curve.tau:.12g} after {evaluations[0]} evaluations, gap {gap:.2e}')
    return curve


# === Allowed variations ===
def _blend(s, s0, s1):
    return (s - s0) / (s1 - s0)


def _shell_time(model, q, c, spatial, span, tol: Tolerances, dense: bool = False):
    """
    Integrates t' = u(s, t), u the future time component that puts
    (t, spatial position; u, spatial velocity) on the shell L = -c^2.
    """
    guess = [None]

    def rhs(s, t):
        position, velocity = spatial(s)
        u = model.solve_time_component(np.concatenate([t, position]), velocity, c, guess=guess[0])
        guess[0] = u
        return [u]

    try:
        result = scipy.integrate.solve_ivp(rhs, span, [float(q[0])], method='DOP853', rtol=1e-12, atol=1e-14, dense_output=dense)
    except (WrongShell, SingularPoint) as e:
        raise VariationConstructionFailed(f"energy shell cannot be restored: {e}")
    if not result.success:
        raise VariationConstructionFailed(f"energy shell integration failed: {result.message}")
    return result, rhs


def _solve_arrival(observer: Observer, end_time: typing.Callable[[float], float], tau0: float) -> float:
    """Observer parameter sigma with observer(sigma)^0 = end_time(sigma)."""
    if observer.kind == 'static':
        return end_time(tau0)
    try:
        return float(scipy.optimize.newton(lambda sigma: end_time(sigma) - observer.position(sigma)[0], tau0, tol=1e-14, maxiter=50))
    except (RuntimeError, ArithmeticError) as e:
        raise VariationConstructionFailed(f"variation does not re-meet the observer: {e}")


class AllowedVariation:
    """
    A one-parameter family of admissible curves around a base admissible curve:

        spatial(eps, s) = lambda(s) + eps P(s) + phi(s) (gamma(sigma) - lambda(1) - eps P(1))

    with phi(s) the linear blend from 0 to 1. The time component solves the
    energy shell from q, and sigma = tau(eps) is the observer parameter where
    the varied curve ends.
    """

    def __init__(self, admissible: AdmissibleCurve, profile: typing.Callable, dprofile: typing.Callable, tol: Tolerances = DEFAULT):
        self.admissible = admissible
        self.profile = profile
        self.dprofile = dprofile
        self.tol = tol
        self._cache: typing.Dict[float, float] = {}

    @property
    def model(self) -> LagrangianModel:
        return self.admissible.model

    def _spatial(self, eps: float, sigma: float):
        base = self.admissible.curve
        s0, s1 = base.span
        gap = self.admissible.observer.position(sigma)[1:] - base.position(s1)[1:] - eps * self.profile(s1)

        def spatial(s):
            phi = _blend(s, s0, s1)
            position = base.position(s)[1:] + eps * self.profile(s) + phi * gap
            velocity = base.velocity(s)[1:] + eps * self.dprofile(s) + gap / (s1 - s0)
            return position, velocity
        return spatial

    def _end_time(self, eps: float):
        adm = self.admissible
        span = adm.curve.span

        def end_time(sigma):
            result, _ = _shell_time(self.model, adm.q, adm.c, self._spatial(eps, sigma), span, self.tol)
            return float(result.y[0, -1])
        return end_time

    def arrival(self, eps: float) -> float:
        """tau(eps)."""
        eps = float(eps)
        if eps not in self._cache:
            self._cache[eps] = _solve_arrival(self.admissible.observer, self._end_time(eps), self.admissible.tau)
        return self._cache[eps]

    def curve(self, eps: float, nodes: int = 257) -> AdmissibleCurve:
        """The varied admissible curve at eps."""
        sigma = self.arrival(eps)
        adm = self.admissible
        spatial = self._spatial(eps, sigma)
        return _assemble(self.model, adm.q, adm.observer, adm.c, adm.T, spatial, adm.curve.span, sigma, nodes, self.tol)


def _assemble(model, q, observer, c, T, spatial, span, sigma, nodes, tol) -> AdmissibleCurve:
    result, rhs = _shell_time(model, q, c, spatial, span, tol, dense=True)
    grid = np.linspace(span[0], span[1], nodes)
    times = result.sol(grid)[0]
    parts = [spatial(s) for s in grid]
    rates = np.asarray([rhs(s, [t])[0] for s, t in zip(grid, times)])
    positions = np.column_stack([times, [p for p, _ in parts]])
    velocities = np.column_stack([rates, [v for _, v in parts]])
    accelerations = scipy.interpolate.CubicSpline(grid, velocities, axis=0).derivative()(grid)
    curve = SampledCurve(model, grid, positions, velocities, accelerations)
    return AdmissibleCurve(curve=curve, q=np.asarray(q, dtype=float), observer=observer, tau=float(sigma), c=float(c), T=T)


def admissible_polyline(model: LagrangianModel, q, observer: Observer, c: float, waypoints, T=None, nodes: int = 257, tol: Tolerances = DEFAULT) -> AdmissibleCurve:
    """
    An admissible, generally non-geodesic, curve: a natural cubic spline
    through the spatial waypoints from q to the observer, timed on the
    energy shell.
    """
    orientation = TimeOrientation.of(model, T)
    q = np.asarray(q, dtype=float)
    waypoints = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if waypoints.shape[1] != model.n - 1:
        raise BadParameter("waypoints must be spatial points", field='waypoints', value=waypoints.shape)
    tau0 = q[0] + 1.0
    end = observer.position(tau0)[1:]
    knots = np.vstack([q[1:], waypoints, end])
    spline = scipy.interpolate.CubicSpline(np.linspace(0.0, 1.0, knots.shape[0]), knots, axis=0, bc_type='natural')
    velocity = spline.derivative()

    def spatial_for(sigma):
        gap = observer.position(sigma)[1:] - end

        def spatial(s):
            return spline(s) + s * gap, velocity(s) + gap
        return spatial

    def end_time(sigma):
        result, _ = _shell_time(model, q, c, spatial_for(sigma), (0.0, 1.0), tol)
        return float(result.y[0, -1])

    sigma = _solve_arrival(observer, end_time, tau0)
    return _assemble(model, q, observer, c, orientation, spatial_for(sigma), (0.0, 1.0), sigma, nodes, tol)


# === Variation fields ===
@dataclasses.dataclass
class VariationField:
    """
    A vector field A(s) along a curve, built from a spatial profile P(s) whose
    time component keeps g(lambda', A) = 0.
    """
    curve: Trajectory
    spatial: typing.Callable
    dspatial: typing.Callable
    A: typing.Callable
    dA: typing.Callable

    def endpoint_values(self) -> typing.Tuple[np.ndarray, np.ndarray]:
        s0, s1 = self.curve.span
        return np.asarray(self.A(s0)), np.asarray(self.A(s1))

    def orthogonality_residual(self, nodes=None) -> float:
        """max |g(lambda', A)| = max |dL/dy . A|."""
        model = self.curve.model
        s_values = self.curve.nodes if nodes is None else nodes
        worst = 0.0
        for s in s_values:
            p = model.derivatives(self.curve.position(s), self.curve.velocity(s), order=1)['dL_dy']
            worst = max(worst, abs(float(p @ self.A(s))))
        return worst

    def in_tangent_space(self, tol: Tolerances = DEFAULT) -> bool:
        start, end = self.endpoint_values()
        return bool(np.max(np.abs(start)) <= tol.abs and np.max(np.abs(end)) <= tol.abs and self.orthogonality_residual() <= tol.bound(1.0))

    def combined(self, other: "VariationField", a: float = 1.0, b: float = 1.0) -> "VariationField":
        return complete_to_tangent_space(self.curve, lambda s: a * self.spatial(s) + b * other.spatial(s), lambda s: a * self.dspatial(s) + b * other.dspatial(s))

    def scaled(self, k: float) -> "VariationField":
        return complete_to_tangent_space(self.curve, lambda s: k * self.spatial(s), lambda s: k * self.dspatial(s))


def complete_to_tangent_space(curve: Trajectory, spatial: typing.Callable, dspatial: typing.Callable) -> VariationField:
    """
    Adds the time component a0 = -(p_a P^a) / p_0, p = dL/dy, so that the field
    is g-orthogonal to the velocity. Fields with P(0) = P(1) = 0 along a
    geodesic are members of the tangent space of the admissible class.
    """
    model = curve.model

    def momentum(s):
        x, v, a = curve.position(s), curve.velocity(s), curve.acceleration(s)
        d = model.derivatives(x, v, order=2)
        p = d['dL_dy']
        dp = d['d2L_dydy'] @ a + d['d2L_dxdy'].T @ v
        return p, dp

    def A(s):
        P = np.asarray(spatial(s), dtype=float)
        p, _ = momentum(s)
        return np.concatenate([[-(p[1:] @ P) / p[0]], P])

    def dA(s):
        P = np.asarray(spatial(s), dtype=float)
        dP = np.asarray(dspatial(s), dtype=float)
        p, dp = momentum(s)
        num = p[1:] @ P
        da0 = -(dp[1:] @ P + p[1:] @ dP) / p[0] + num * dp[0] / p[0] ** 2
        return np.concatenate([[da0], dP])

    return VariationField(curve=curve, spatial=spatial, dspatial=dspatial, A=A, dA=dA)


def fourier_profile(n: int, direction, k: int, span=(0.0, 1.0)):
    """P(s) = sin(k pi u) e, u the normalised parameter, e a spatial direction."""
    e = np.asarray(direction, dtype=float)
    if e.shape != (n - 1,):
        raise BadParameter("direction must be a spatial vector", field='direction', value=e.shape)
    s0, s1 = span
    w = k * np.pi / (s1 - s0)

    def profile(s):
        return np.sin(w * (s - s0)) * e

    def dprofile(s):
        return w * np.cos(w * (s - s0)) * e
    return profile, dprofile


def fourier_basis(curve: Trajectory, count: int, transverse_only: bool = False) -> typing.List[VariationField]:
    """
    Tangent-space fields sin(k pi s) e completed by g-orthogonality, ordered by
    mode number; directions start with those Euclidean-orthogonal to the
    initial spatial velocity.
    """
    n = curve.n
    v = curve.velocity(curve.span[0])[1:]
    transverse = scipy.linalg.null_space(v[None, :]) if np.any(v) else np.eye(n - 1)
    directions = [transverse[:, j] for j in range(transverse.shape[1])]
    if not transverse_only and np.any(v):
        directions.append(v / np.linalg.norm(v))
    fields = []
    k = 1
    while len(fields) < count:
        for e in directions:
            if len(fields) == count:
                break
            fields.append(complete_to_tangent_space(curve, *fourier_profile(n, e, k, curve.span)))
        k += 1
    return fields


def random_profile(rng: np.random.Generator, n: int, span=(0.0, 1.0), modes: int = 3, scale: float = 0.1):
    """Random spatial profile with P(s0) = 0 and a free endpoint value."""
    a = rng.normal(scale=scale, size=(modes, n - 1))
    b = rng.normal(scale=scale, size=n - 1)
    s0, s1 = span
    width = s1 - s0
    k = np.arange(1, modes + 1) * np.pi

    def profile(s):
        u = (s - s0) / width
        return np.sin(k * u) @ a + u * b

    def dprofile(s):
        u = (s - s0) / width
        return ((k * np.cos(k * u)) @ a + b) / width
    return profile, dprofile


# === Derivatives in epsilon ===
def first_derivative(fun: typing.Callable[[float], float], h: float = FIRST_STEP) -> float:
    return (8.0 * (fun(h) - fun(-h)) - (fun(2 * h) - fun(-2 * h))) / (12.0 * h)


def second_derivative(fun: typing.Callable[[float], float], h: float = SECOND_STEP, levels: int = SECOND_LEVELS) -> float:
    """
    5-point central second difference; of the step-halving sequence the
    estimate with the smallest change from its predecessor wins.
    """
    f0 = fun(0.0)
    estimates = []
    for k in range(levels):
        step = h / 2 ** k
        estimates.append((-fun(2 * step) + 16 * fun(step) - 30 * f0 + 16 * fun(-step) - fun(-2 * step)) / (12 * step * step))
    if levels == 1:
        return estimates[0]
    changes = [abs(estimates[k] - estimates[k - 1]) for k in range(1, levels)]
    return estimates[1 + int(np.argmin(changes))]


def tau_sweep(variation: AllowedVariation, eps_grid) -> np.ndarray:
    """(eps, tau(eps)) rows."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    return np.column_stack([eps_grid, [variation.arrival(e) for e in tqdm(eps_grid, desc='tau sweep', leave=False, disable=None)]])


# === First variation ===
@dataclasses.dataclass
class FirstVariation:
    fd: typing.List[float]
    predicted: typing.List[float]

    @property
    def residual(self) -> float:
        return float(max(abs(d) for d in self.fd)) if self.fd else 0.0

    @property
    def cross_check(self) -> float:
        return float(max(abs(d - p) for d, p in zip(self.fd, self.predicted))) if self.fd else 0.0


def _linearized_time(curve: Trajectory, W_spatial, dW_spatial) -> typing.Callable:
    """Time component a0 of a variation of the shell with spatial part W, a0(s0) = 0."""
    model = curve.model

    def rhs(s, a0):
        d = model.derivatives(curve.position(s), curve.velocity(s), order=1)
        p, dx = d['dL_dy'], d['dL_dx']
        return [-(dx[0] * a0[0] + dx[1:] @ W_spatial(s) + p[1:] @ dW_spatial(s)) / p[0]]

    result = scipy.integrate.solve_ivp(rhs, curve.span, [0.0], method='DOP853', rtol=1e-10, atol=1e-13, dense_output=True)
    return lambda s: float(result.sol(s)[0])


def first_variation_prediction(admissible: AdmissibleCurve, profile, dprofile) -> float:
    """
    dtau/deps at 0 from the Euler-Lagrange residual E of the base curve:

        tau' = int E.W_P ds / (g(lambda'(1), gamma') - int E.W_sigma ds)

    W_P and W_sigma are the variation fields of the profile and of the
    endpoint re-timing. Zero along geodesics.
    """
    curve = admissible.curve
    model = curve.model
    s0, s1 = curve.span
    gamma_dot = admissible.observer.velocity(admissible.tau)
    end = np.asarray(profile(s1))

    def W_P(s):
        return np.asarray(profile(s)) - _blend(s, s0, s1) * end

    def dW_P(s):
        return np.asarray(dprofile(s)) - end / (s1 - s0)

    def W_sigma(s):
        return _blend(s, s0, s1) * gamma_dot[1:]

    def dW_sigma(s):
        return gamma_dot[1:] / (s1 - s0)

    a_P = _linearized_time(curve, W_P, dW_P)
    a_sigma = _linearized_time(curve, W_sigma, dW_sigma)

    def pairing(W, a0):
        def integrand(s):
            E = el_residual(model, curve, s)
            return float(E[0] * a0(s) + E[1:] @ W(s))
        return scipy.integrate.quad(integrand, s0, s1, limit=200, epsabs=1e-12, epsrel=1e-10)[0]

    p1 = model.derivatives(curve.position(s1), curve.velocity(s1), order=1)['dL_dy']
    return pairing(W_P, a_P) / (float(p1 @ gamma_dot) - pairing(W_sigma, a_sigma))


def first_variation_tau(admissible: AdmissibleCurve, generators: typing.Optional[typing.Sequence] = None, count: int = 10, seed: int = 0,
                        h: float = FIRST_STEP, cross_check: bool = True, tol: Tolerances = DEFAULT) -> FirstVariation:
    """
    dtau/deps at eps = 0 over allowed variations generated by spatial
    profiles (pairs (P, P')); seeded random profiles when none are given.
    """
    curve = admissible.curve
    if generators is None:
        rng = np.random.default_rng(seed)
        generators = [random_profile(rng, curve.n, curve.span) for _ in range(count)]
    fd, predicted = [], []
    for profile, dprofile in tqdm(generators, desc='first variation', leave=False, disable=None):
        variation = AllowedVariation(admissible, profile, dprofile, tol)
        try:
            fd.append(first_derivative(variation.arrival, h))
        except FinslerError as e:
            raise VariationConstructionFailed(f"allowed variation failed: {e}")
        predicted.append(first_variation_prediction(admissible, profile, dprofile) if cross_check else fd[-1])
    result = FirstVariation(fd=fd, predicted=predicted)
    bt.logging.debug(f'first variation: residual {result.residual:.3e}, cross check {result.cross_check:.3e}')
    return result


# === Index form and second variation ===
def _nabla(frame: CurveFrame, field: VariationField, s) -> np.ndarray:
    return np.asarray(field.dA(s)) + frame.connection_matrix(s) @ np.asarray(field.A(s))


def index_form(frame: CurveFrame, A: VariationField, B: VariationField) -> float:
    """J(A, B) = int g(B, R(A, lambda')lambda') - g(nabla A, nabla B) ds."""

    def integrand(s):
        g = frame.metric(s)
        a, b = np.asarray(A.A(s)), np.asarray(B.A(s))
        return float(b @ g @ (frame.jacobi_operator(s) @ a) - _nabla(frame, A, s) @ g @ _nabla(frame, B, s))

    s0, s1 = frame.span
    return float(scipy.integrate.quad(integrand, s0, s1, limit=400, epsabs=1e-12, epsrel=1e-11)[0])


def index_form_by_parts(frame: CurveFrame, A: VariationField, B: VariationField, samples: int = 513) -> float:
    """
    J(A, B) = int g(B, nabla nabla A + R(A, lambda')lambda') ds - [g(nabla A, B)],
    with nabla nabla A from a cubic spline through nabla A.
    """
    s0, s1 = frame.span
    grid = np.linspace(s0, s1, samples)
    nabla_A = scipy.interpolate.CubicSpline(grid, np.asarray([_nabla(frame, A, s) for s in grid]), axis=0)
    d_nabla_A = nabla_A.derivative()

    def integrand(s):
        g = frame.metric(s)
        second = d_nabla_A(s) + frame.connection_matrix(s) @ nabla_A(s)
        return float(np.asarray(B.A(s)) @ g @ (second + frame.jacobi_operator(s) @ np.asarray(A.A(s))))

    interior = scipy.integrate.quad(integrand, s0, s1, limit=400, epsabs=1e-12, epsrel=1e-11)[0]
    boundary = float(nabla_A(s1) @ frame.metric(s1) @ B.A(s1) - nabla_A(s0) @ frame.metric(s0) @ B.A(s0))
    return float(interior - boundary)


def orthogonal_index_form(frame: CurveFrame, A: VariationField, B: VariationField, space: str = 'V0', tol: Tolerances = DEFAULT) -> float:
    """Index form restricted to fields orthogonal to the velocity ('V'), and vanishing at both ends ('V0')."""
    if space not in ('V', 'V0'):
        raise BadParameter("space must be 'V' or 'V0'", field='space', value=space)
    for name, field in (('A', A), ('B', B)):
        if field.orthogonality_residual() > tol.bound(1.0):
            raise BadParameter(f"{name} is not orthogonal to the velocity", residual=field.orthogonality_residual())
        if space == 'V0':
            start, end = field.endpoint_values()
            if max(np.max(np.abs(start)), np.max(np.abs(end))) > tol.abs:
                raise BadParameter(f"{name} does not vanish at the endpoints")
    return index_form(frame, A, B)


def boundary_pairing(admissible: AdmissibleCurve, tol: Tolerances = DEFAULT) -> float:
    """g(gamma'(tau), lambda'(1)), checked against the degeneracy threshold."""
    curve = admissible.curve
    s1 = curve.span[1]
    v = curve.velocity(s1)
    gamma_dot = admissible.observer.velocity(admissible.tau)
    d = curve.model.derivatives(curve.position(s1), v, order=2)
    pairing = float(d['dL_dy'] @ gamma_dot)
    scale = float(np.max(np.abs(d['d2L_dydy']))) * float(np.linalg.norm(v)) * float(np.linalg.norm(gamma_dot))
    if abs(pairing) < tol.degeneracy * max(scale, 1.0):
        raise DegenerateBoundaryPairing("observer velocity is g-orthogonal to the arrival velocity", pairing=pairing)
    return pairing


@dataclasses.dataclass
class SecondVariationSample:
    label: str
    fd_hessian: float
    prediction: float

    @property
    def gap(self) -> float:
        return abs(self.fd_hessian - self.prediction) / max(abs(self.prediction), 1e-12)

    def as_dict(self) -> dict:
        return {'label': self.label, 'fd_hessian': self.fd_hessian, 'prediction': self.prediction, 'gap': self.gap}


def second_variation_check(admissible: AdmissibleCurve, field: VariationField, frame: typing.Optional[CurveFrame] = None,
                           label: str = '', h: float = SECOND_STEP, tol: Tolerances = DEFAULT) -> SecondVariationSample:
    """
    Compares d^2 tau / d eps^2 of the allowed variation generated by the field
    with J(A, A) / g(gamma'(tau), lambda'(1)).
    """
    curve = admissible.curve
    s0, s1 = curve.span
    if max(np.max(np.abs(field.spatial(s0))), np.max(np.abs(field.spatial(s1)))) > tol.abs:
        raise BadParameter("variation field must vanish at both ends")
    pairing = boundary_pairing(admissible, tol)
    frame = frame or riemann_along_geodesic(curve.model, curve, tol=tol)
    prediction = index_form(frame, field, field) / pairing
    variation = AllowedVariation(admissible, field.spatial, field.dspatial, tol)
    fd = second_derivative(variation.arrival, h)
    sample = SecondVariationSample(label=label, fd_hessian=float(fd), prediction=float(prediction))
    bt.logging.debug(f'second variation {label}: fd {fd:.10g}, prediction {prediction:.10g}, gap {sample.gap:.2e}')
    return sample


def hessian_negative_count(admissible: AdmissibleCurve, basis: typing.Sequence[VariationField], h: float = SECOND_STEP,
                           tol: Tolerances = DEFAULT) -> typing.Tuple[int, np.ndarray]:
    """
    Number of negative eigenvalues of the finite-difference Hessian of tau
    over the span of the basis fields, and the eigenvalues.
    """
    m = len(basis)

    def tau(coefficients):
        def profile(s):
            return sum(c * f.spatial(s) for c, f in zip(coefficients, basis))

        def dprofile(s):
            return sum(c * f.dspatial(s) for c, f in zip(coefficients, basis))
        return AllowedVariation(admissible, profile, dprofile, tol).arrival(1.0)

    H = differentiation.hessian(tau, np.zeros(m), base=h, tol=1e-3)
    eigenvalues = np.linalg.eigvalsh(0.5 * (H + H.T))
    scale = float(np.max(np.abs(eigenvalues))) if m else 0.0
    count = int(np.sum(eigenvalues < -1e-6 * scale))
    return count, eigenvalues


# === Morse index and character ===
def morse_index(points: typing.Sequence[ConjugatePoint]) -> int:
    """Sum of the multiplicities of the interior conjugate points."""
    for p in points:
        if p.endpoint:
            raise EndpointConjugate("the endpoint is conjugate to the source", s=p.s, multiplicity=p.multiplicity)
    return int(sum(p.multiplicity for p in points))


def classify_critical_point(points: typing.Sequence[ConjugatePoint]) -> str:
    """local_min without interior conjugate points, saddle with at least one, boundary_case at endpoint conjugacy."""
    if any(p.endpoint for p in points):
        return 'boundary_case'
    return 'saddle' if points else 'local_min'


# === Report ===
@dataclasses.dataclass
class FermatReport:
    model: str
    params: dict
    solution: AdmissibleCurve
    tau: float
    first_variation: FirstVariation
    conjugate_points: typing.List[ConjugatePoint]
    morse_index: typing.Optional[int]
    character: str
    second_variation_samples: typing.List[SecondVariationSample]
    lightlike: bool = False
    frame: typing.Optional[CurveFrame] = None
    scan: typing.Optional[ConjugateScan] = None
    sweep: typing.Optional[np.ndarray] = None

    @property
    def first_variation_residual(self) -> float:
        return self.first_variation.residual

    def as_dict(self) -> dict:
        adm = self.solution
        return {
            'model': self.model,
            'params': self.params,
            'q': adm.q.tolist(),
            'observer': adm.observer.as_dict(),
            'c': adm.c,
            'tau': self.tau,
            'first_variation_residual': self.first_variation_residual,
            'conjugate_points': [p.as_dict() for p in self.conjugate_points],
            'morse_index': self.morse_index,
            'character': self.character,
            'second_variation': [s.as_dict() for s in self.second_variation_samples],
        }


def analyze(model: LagrangianModel, q, observer: Observer, c: float, T=None, initial_guess=None, generators: int = 10,
            modes: int = 5, seed: int = 0, sweep=np.linspace(-0.05, 0.05, 21), tol: Tolerances = DEFAULT) -> FermatReport:
    """
    Shoots the geodesic from q to the observer and runs the variational
    checks on it: first variation over seeded generators, second variation
    against the index form, conjugate points, Morse index and character.
    """
    admissible = shoot(model, q, observer, c, T, initial_guess, tol)
    first = first_variation_tau(admissible, count=generators, seed=seed, tol=tol)
    frame = riemann_along_geodesic(model, admissible.curve, tol=tol)
    field, lightlike = jacobi_matrix(frame, admissible.T(admissible.q), tol)
    conjugate_scan = scan(field, lightlike)
    points = locate_conjugate_points(field, conjugate_scan, tol)
    try:
        index = morse_index(points)
    except EndpointConjugate as e:
        bt.logging.warning(f'{e}')
        index = None
    samples = []
    fields = fourier_basis(admissible.curve, modes, transverse_only=lightlike)
    for k, field_k in enumerate(fields):
        try:
            samples.append(second_variation_check(admissible, field_k, frame, label=f'mode{k}', tol=tol))
        except DegenerateBoundaryPairing as e:
            bt.logging.warning(f'second variation skipped: {e}')
            break
    table = None
    if fields and sweep is not None:
        table = tau_sweep(AllowedVariation(admissible, fields[0].spatial, fields[0].dspatial, tol), sweep)
    return FermatReport(
        model=model.name,
        params=dict(model.params),
        solution=admissible,
        tau=admissible.tau,
        first_variation=first,
        conjugate_points=points,
        morse_index=index,
        character=classify_critical_point(points),
        second_variation_samples=samples,
        lightlike=lightlike,
        frame=frame,
        scan=conjugate_scan,
        sweep=table,
    )
