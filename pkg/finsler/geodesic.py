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

# Affinely parameterized geodesics from the Euler-Lagrange equations of L.

import dataclasses
import typing

import bittensor as bt
import numpy as np
import scipy.integrate
import scipy.interpolate

from finsler import integrator
from finsler.causal import CausalClass, classify
from finsler.errors import BadParameter, EnergyDriftExceeded, IoError, NotAGeodesic, NotTimelike, SingularPoint
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances
from finsler.vertical import PointedVector, check_nondegenerate


class Trajectory:
    """
    A curve sampled at increasing nodes with position, velocity and
    acceleration; each coordinate is a quintic Hermite interpolant.
    """

    def __init__(self, model: LagrangianModel, nodes, positions, velocities, accelerations):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise BadParameter("nodes must be strictly increasing", field='nodes')
        self.model = model
        self.nodes = nodes
        self.positions = np.asarray(positions, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)
        self.accelerations = np.asarray(accelerations, dtype=float)
        jets = np.stack([self.positions, self.velocities, self.accelerations], axis=1)
        self._position = [scipy.interpolate.BPoly.from_derivatives(nodes, jets[:, :, i]) for i in range(self.n)]
        self._velocity = [poly.derivative() for poly in self._position]
        self._acceleration = [poly.derivative(2) for poly in self._position]

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def span(self) -> typing.Tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    @staticmethod
    def _stack(polys, s):
        return np.stack([np.asarray(poly(s), dtype=float) for poly in polys], axis=-1)

    def position(self, s) -> np.ndarray:
        return self._stack(self._position, s)

    def velocity(self, s) -> np.ndarray:
        return self._stack(self._velocity, s)

    def acceleration(self, s) -> np.ndarray:
        return self._stack(self._acceleration, s)

    def energy(self, s) -> float:
        return self.model.value(self.position(s), self.velocity(s))


class SampledCurve(Trajectory):
    """
    An arbitrary curve given by samples. Missing velocities or accelerations
    are taken from cubic-spline derivatives of the samples.
    """

    def __init__(self, model: LagrangianModel, nodes, positions, velocities=None, accelerations=None):
        nodes = np.asarray(nodes, dtype=float)
        positions = np.asarray(positions, dtype=float)
        if velocities is None:
            velocities = scipy.interpolate.CubicSpline(nodes, positions, axis=0).derivative()(nodes)
        if accelerations is None:
            accelerations = scipy.interpolate.CubicSpline(nodes, np.asarray(velocities, dtype=float), axis=0).derivative()(nodes)
        super().__init__(model, nodes, positions, velocities, accelerations)

    @classmethod
    def from_function(cls, model: LagrangianModel, fn: typing.Callable, span=(0.0, 1.0), nodes: int = 257, dfn=None, ddfn=None) -> "SampledCurve":
        grid = np.linspace(span[0], span[1], nodes)
        positions = np.asarray([fn(s) for s in grid])
        velocities = None if dfn is None else np.asarray([dfn(s) for s in grid])
        accelerations = None if ddfn is None else np.asarray([ddfn(s) for s in grid])
        return cls(model, grid, positions, velocities, accelerations)


class GeodesicPath(Trajectory):
    """
    An integrated affine geodesic. `stats` holds the integrator statistics and
    the measured energy drift and Euler-Lagrange residual.
    """

    def __init__(self, model, nodes, positions, velocities, accelerations, stats: typing.Optional[dict] = None):
        super().__init__(model, nodes, positions, velocities, accelerations)
        self.energies = np.asarray([model.value(x, v) for x, v in zip(self.positions, self.velocities)])
        self.stats = dict(stats or {})
        self.stats['energy_drift'] = self.energy_drift
        self.f_estimate: typing.Optional[np.ndarray] = None

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energies - self.energies[0])))

    def as_columns(self) -> typing.Tuple[typing.List[str], np.ndarray]:
        n = self.n
        header = ['s'] + [f'x{i}' for i in range(n)] + [f'v{i}' for i in range(n)] + ['L']
        table = np.column_stack([self.nodes, self.positions, self.velocities, self.energies])
        return header, table


@dataclasses.dataclass(frozen=True)
class GeodesicIVP:
    model: LagrangianModel
    x0: np.ndarray
    y0: np.ndarray
    span: typing.Tuple[float, float] = (0.0, 1.0)
    causal: bool = False

    def __post_init__(self):
        p = PointedVector(self.x0, self.y0)
        object.__setattr__(self, 'x0', p.x)
        object.__setattr__(self, 'y0', p.y)
        if not self.span[1] > self.span[0]:
            raise BadParameter("span must be increasing", field='span', value=self.span)
        if not self.model.is_regular(p.x, p.y):
            raise SingularPoint("initial state is not regular", point=p.as_dict())
        if self.causal and not classify(self.model, p).causal:
            raise BadParameter("initial velocity is not causal", point=p.as_dict())


def _acceleration(model: LagrangianModel, x, y, tol: Tolerances) -> np.ndarray:
    if model.x_independent:
        return np.zeros(model.n)
    d = model.derivatives(x, y, order=2)
    rhs = d['dL_dx'] - d['d2L_dxdy'].T @ y
    return np.linalg.solve(d['d2L_dydy'], rhs)


def geodesic_rhs(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> np.ndarray:
    """
    Acceleration of the affine geodesic through p.

    Solves g_ij a^j = dL/dx^i - d^2L/dx^k dy^i y^k.
    """
    if not model.is_regular(p.x, p.y, tol.margin_floor):
        raise SingularPoint(f"point is not regular for {model.name}", point=p.as_dict())
    d = model.derivatives(p.x, p.y, order=2)
    check_nondegenerate(0.5 * (d['d2L_dydy'] + d['d2L_dydy'].T), p, tol)
    return _acceleration(model, p.x, p.y, tol)


def el_residual(model: LagrangianModel, curve, s) -> np.ndarray:
    """
    Euler-Lagrange residual E = d/ds (dL/dy) - dL/dx of a curve exposing
    `position`, `velocity` and `acceleration`, at a single parameter value.
    """
    x, v, a = curve.position(s), curve.velocity(s), curve.acceleration(s)
    d = model.derivatives(x, v, order=2)
    return d['d2L_dydy'] @ a + d['d2L_dxdy'].T @ v - d['dL_dx']


def _max_el_residual(path: Trajectory, samples: int = 8) -> float:
    nodes = path.nodes
    picks = np.unique(np.linspace(0, nodes.size - 2, min(samples, nodes.size - 1)).astype(int))
    mids = 0.5 * (nodes[picks] + nodes[picks + 1])
    worst = 0.0
    for s in mids:
        scale = 1.0 + float(np.max(np.abs(path.model.derivatives(path.position(s), path.velocity(s), order=1)['dL_dy'])))
        worst = max(worst, float(np.max(np.abs(el_residual(path.model, path, s)))) / scale)
    return worst


def integrate(ivp: GeodesicIVP, tol: Tolerances = DEFAULT, check_energy: bool = True) -> GeodesicPath:
    """
    Integrates the geodesic initial value problem with the Dormand-Prince pair.

    Parameters:
        ivp (GeodesicIVP): Model, initial state and parameter span.
        tol (Tolerances): rtol/atol/max_steps for the integrator, margin floor
            for event detection and the energy drift bound.
        check_energy (bool): Raise EnergyDriftExceeded when the drift of L is
            above tol.energy * max(1, |L_0|).
    Returns:
        GeodesicPath: nodes at the accepted steps, with dense output.
    """
    model = ivp.model
    n = model.n

    def fun(t, z):
        return np.concatenate([z[n:], _acceleration(model, z[:n], z[n:], tol)])

    def regular(z):
        return model.is_regular(z[:n], z[n:], tol.margin_floor)

    result = integrator.solve(fun, ivp.span, np.concatenate([ivp.x0, ivp.y0]), rtol=tol.rtol, atol=tol.atol, max_steps=tol.max_steps, regular=regular)
    path = GeodesicPath(model, result.ts, result.zs[:, :n], result.zs[:, n:], result.fs[:, n:], stats=result.stats())
    path.stats['el_residual'] = _max_el_residual(path)
    L0 = float(path.energies[0])
    if check_energy and path.energy_drift > tol.energy * max(1.0, abs(L0)):
        raise EnergyDriftExceeded("energy drift above tolerance", drift=path.energy_drift, bound=tol.energy, model=model.name)
    if path.stats['el_residual'] > tol.residual:
        bt.logging.warning(f'geodesic EL residual {path.stats["el_residual"]:.3e} above {tol.residual:.1e} for {model.name}')
    bt.logging.debug(f'{model.name} geodesic: {result.accepted} steps, {result.rejected} rejected, drift {path.energy_drift:.2e}')
    return path


def affine_reparameterize(curve, tol: Tolerances = DEFAULT, samples: int = 401) -> GeodesicPath:
    """
    Finds the affine parameter of a pre-geodesic.

    The Euler-Lagrange residual of a pre-geodesic is E = f(r) dL/dy; f is
    recovered by least squares at every sample, s(r) is the normalised
    integral of exp(int f), and the result is re-expressed on s in [0, 1].
    The inferred f is attached as `f_estimate` (on the input parameter).

    Raises:
        NotAGeodesic: the residual has a component not parallel to dL/dy.
    """
    model = curve.model
    r0, r1 = curve.span
    grid = np.linspace(r0, r1, samples)
    f = np.empty(samples)
    worst = 0.0
    for k, r in enumerate(grid):
        x, v = curve.position(r), curve.velocity(r)
        p = model.derivatives(x, v, order=1)['dL_dy']
        E = el_residual(model, curve, r)
        f[k] = float(E @ p) / float(p @ p)
        worst = max(worst, float(np.max(np.abs(E - f[k] * p))) / (1.0 + float(np.max(np.abs(p)))))
    if worst > tol.residual:
        raise NotAGeodesic("Euler-Lagrange residual is not parallel to the velocity", residual=worst)
    log_speed = scipy.interpolate.CubicSpline(grid, f).antiderivative()
    speed = np.exp(log_speed(grid))
    arc = scipy.interpolate.CubicSpline(grid, speed).antiderivative()
    total = float(arc(r1))
    s = arc(grid) / total
    ds_dr = speed / total
    positions = np.asarray([curve.position(r) for r in grid])
    velocities = np.asarray([curve.velocity(r) for r in grid]) / ds_dr[:, None]
    accelerations = np.asarray([_acceleration(model, x, v, tol) for x, v in zip(positions, velocities)])
    path = GeodesicPath(model, s, positions, velocities, accelerations, stats={'reparameterized': True})
    path.f_estimate = f
    return path


def proper_time(curve, interval: typing.Optional[typing.Tuple[float, float]] = None, tol: Tolerances = DEFAULT) -> float:
    """
    int sqrt(-L(lambda, lambda')) dr over the interval. With the stored
    convention g(y, y) = 2L this is the usual int sqrt(-h(y, y)).
    """
    model = curve.model
    r0, r1 = interval or curve.span
    for r in np.linspace(r0, r1, 33):
        if classify(model, PointedVector(curve.position(r), curve.velocity(r)), tol) != CausalClass.timelike:
            raise NotTimelike("curve is not timelike on the interval", s=float(r))

    def integrand(r):
        return np.sqrt(max(-model.value(curve.position(r), curve.velocity(r)), 0.0))

    value, _ = scipy.integrate.quad(integrand, r0, r1, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(value)


def export_csv(path, geodesic: GeodesicPath) -> None:
    """Writes s, x, x', L columns with 17 significant digits."""
    header, table = geodesic.as_columns()
    try:
        np.savetxt(path, table, fmt='%.17g', delimiter=',', header=','.join(header), comments='')
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}", path=str(path))
