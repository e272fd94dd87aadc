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

# Lagrangian models. Every model writes L(x, y) once against an array
# namespace: numpy arrays give fast plain values, float64 torch tensors give
# exact derivatives through torch.func.

import itertools
import math
import types
import typing

import numpy as np
import scipy.linalg
import scipy.optimize
import torch

import finsler
from finsler import differentiation
from finsler.errors import BadParameter, DegenerateMetric, DimensionMismatch, WrongShell

ANALYTIC_LEVELS = ('none', 'first', 'second', 'third')


def array_namespace(*arrays):
    """torch if any argument is a tensor, numpy otherwise."""
    for a in arrays:
        if isinstance(a, torch.Tensor):
            return torch
    return np


def as_array(xp, value):
    if xp is torch:
        return value if isinstance(value, torch.Tensor) else torch.as_tensor(np.asarray(value, dtype=float), dtype=torch.float64)
    return np.asarray(value, dtype=float)


def diag(xp, entries):
    return torch.diag(torch.stack(list(entries))) if xp is torch else np.diag(np.array(entries, dtype=float))


def minkowski_form(u, v):
    """eta(u, v) with signature (-, +, ..., +) on the first axis."""
    return -u[0] * v[0] + (u[1:] * v[1:]).sum()


class LagrangianModel:
    """
    A Finsler spacetime (M, L) given in one chart.

    Subclasses implement `lagrangian` against the array namespace and `margin`,
    a positive distance proxy to the singular set (zero on it). Models are
    immutable once built and may be shared between threads.
    """
    analytic_level = 'third'
    x_independent = False
    autodiff = True
    chart_description = ''

    def __init__(self, name: str, n: int, params: typing.Optional[dict] = None, time_orientation=None):
        if n < 2:
            raise BadParameter("dimension must be at least 2", field='n', value=n)
        self.name = name
        self.n = int(n)
        self.params = types.MappingProxyType(dict(params or {}))
        self._time_orientation = time_orientation

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{type(self).__name__}({self.name}, n={self.n}{', ' + params if params else ''})"

    # === Evaluation ===
    def lagrangian(self, x, y):
        raise NotImplementedError

    def margin(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.linalg.norm(y))

    def value(self, x, y) -> float:
        """Plain evaluation without regularity checks."""
        return float(self.lagrangian(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))

    def is_regular(self, x, y, floor: float = None) -> bool:
        floor = finsler.margin_floor if floor is None else floor
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.shape != (self.n,) or y.shape != (self.n,):
            raise DimensionMismatch("point does not match model dimension", n=self.n, x=x.shape, y=y.shape)
        if not np.any(y):
            return False
        with np.errstate(all='ignore'):
            margin = self.margin(x, y)
        return bool(np.isfinite(margin) and margin >= floor)

    def time_orientation(self, x) -> np.ndarray:
        T = self._time_orientation
        if T is None:
            raise BadParameter(f"model '{self.name}' has no default time orientation, pass T explicitly")
        return np.asarray(T(x) if callable(T) else T, dtype=float)

    @property
    def has_time_orientation(self) -> bool:
        return self._time_orientation is not None

    # === Derivatives ===
    def derivatives(self, x, y, order: int = 3) -> typing.Dict[str, np.ndarray]:
        """
        L and its derivatives at (x, y): gradients, both second derivative blocks,
        and (order 3) the y-third derivatives and the x-derivative of the y-Hessian.

        Index conventions:
            d2L_dxdy[k, i] = d^2 L / dx^k dy^i
            d3L_dydydx[i, j, k] = d^3 L / dy^i dy^j dx^k
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.autodiff:
            return self._autodiff_derivatives(x, y, order)
        return self._finite_difference_derivatives(x, y, order)

    def _autodiff_derivatives(self, x, y, order):
        n = self.n
        xt = torch.as_tensor(x, dtype=torch.float64)
        if self.x_independent:
            z = torch.as_tensor(y, dtype=torch.float64)

            def f(w):
                return self.lagrangian(xt, w)
        else:
            z = torch.as_tensor(np.concatenate([x, y]), dtype=torch.float64)

            def f(w):
                return self.lagrangian(w[:n], w[n:])

        out = {'L': f(z).detach().numpy().item()}
        grad = torch.func.grad(f)(z).detach().numpy()
        hess = torch.func.hessian(f)(z).detach().numpy() if order >= 2 else None
        third = torch.func.jacfwd(torch.func.hessian(f))(z).detach().numpy() if order >= 3 else None
        return _assemble(out, grad, hess, third, n, self.x_independent)

    def _finite_difference_derivatives(self, x, y, order):
        n = self.n
        if self.x_independent:
            z = y

            def f(w):
                return self.value(x, w)
        else:
            z = np.concatenate([x, y])

            def f(w):
                return self.value(w[:n], w[n:])

        out = {'L': f(z)}
        grad = differentiation.jacobian(f, z)
        hess = differentiation.hessian(f, z) if order >= 2 else None
        third = None
        if order >= 3:
            third = differentiation.jacobian(lambda w: differentiation.hessian(f, w), z, base=differentiation.OUTER_STEP, tol=1e-4)
        return _assemble(out, grad, hess, third, n, self.x_independent)

    # === Energy shell ===
    def solve_time_component(self, x, v, c: float, guess: typing.Optional[float] = None) -> float:
        """
        Solves L(x, (u, v)) = -c^2 for the time component u of a future pointed
        vector whose spatial components are v.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        target = -c * c

        def residual(u):
            return self.value(x, np.concatenate([[u], v])) - target

        scale = float(np.linalg.norm(v)) + c + 1e-12
        u0 = guess if guess is not None and guess > 0 else scale
        try:
            u = scipy.optimize.newton(residual, u0, x1=u0 * (1.0 + 1e-4) + 1e-12, tol=1e-15, maxiter=60)
            if u > 0 and abs(residual(u)) <= 1e-12 * (1.0 + scale * scale):
                return float(u)
        except (RuntimeError, ArithmeticError):
            pass
        # Bracket a positive root: spatial part dominates near u=0, time part for large u.
        lo, hi = 1e-9 * scale, scale
        for _ in range(200):
            r = residual(hi)
            if np.isfinite(r) and r < 0:
                break
            hi *= 2.0
        else:
            raise WrongShell("no future root on the energy shell", x=x.tolist(), v=v.tolist(), c=c)
        if not residual(lo) > 0:
            raise WrongShell("energy shell root not bracketed", x=x.tolist(), v=v.tolist(), c=c)
        return float(scipy.optimize.brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def _assemble(out, grad, hess, third, n, x_independent):
    if x_independent:
        zeros_n, zeros_nn = np.zeros(n), np.zeros((n, n))
        out['dL_dy'] = grad
        out['dL_dx'] = zeros_n
        if hess is not None:
            out['d2L_dydy'] = hess
            out['d2L_dxdy'] = zeros_nn
        if third is not None:
            out['d3L_dydydy'] = third
            out['d3L_dydydx'] = np.zeros((n, n, n))
        return out
    out['dL_dx'] = grad[:n]
    out['dL_dy'] = grad[n:]
    if hess is not None:
        out['d2L_dydy'] = hess[n:, n:]
        out['d2L_dxdy'] = hess[:n, n:]
    if third is not None:
        out['d3L_dydydy'] = third[n:, n:, n:]
        out['d3L_dydydx'] = third[n:, n:, :n]
    return out


class FunctionModel(LagrangianModel):
    """A user supplied Lagrangian `fn(x, y)`, optionally numpy only (finite differences)."""
    analytic_level = 'none'

    def __init__(self, name: str, n: int, fn: typing.Callable, margin: typing.Optional[typing.Callable] = None,
                 autodiff: bool = True, x_independent: bool = False, time_orientation=None, params=None):
        super().__init__(name, n, params=params, time_orientation=time_orientation)
        self._fn = fn
        self._margin = margin
        self.autodiff = autodiff
        self.x_independent = x_independent
        self.analytic_level = 'third' if autodiff else 'none'

    def lagrangian(self, x, y):
        return self._fn(x, y)

    def margin(self, x, y):
        return float(self._margin(x, y)) if self._margin is not None else float(np.linalg.norm(y))


# === Lorentzian models ===
class LorentzianModel(LagrangianModel):
    """
    L(x, y) = h_x(y, y) for a Lorentzian metric field h. Derivatives come from
    h and its first partials, so the Cartan tensor vanishes exactly.
    """

    def __init__(self, name, n, params=None, time_orientation=None):
        super().__init__(name, n, params=params, time_orientation=time_orientation)

    def metric(self, x):
        raise NotImplementedError

    def metric_derivative(self, x) -> np.ndarray:
        """dh[k, i, j] = d h_ij / dx^k; Richardson differences unless overridden."""
        x = np.asarray(x, dtype=float)
        return np.moveaxis(differentiation.jacobian(lambda w: np.asarray(self.metric(w), dtype=float), x, base=differentiation.OUTER_STEP), -1, 0)

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        h = as_array(xp, self.metric(x))
        y = as_array(xp, y)
        return y @ h @ y

    def derivatives(self, x, y, order=3):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = self.n
        h = np.asarray(self.metric(x), dtype=float)
        dh = np.zeros((n, n, n)) if self.x_independent else self.metric_derivative(x)
        hy = h @ y
        dhy = dh @ y
        out = {
            'L': float(y @ hy),
            'dL_dy': 2.0 * hy,
            'dL_dx': dhy @ y,
            'd2L_dydy': 2.0 * h,
            'd2L_dxdy': 2.0 * dhy,
            'd3L_dydydy': np.zeros((n, n, n)),
            'd3L_dydydx': 2.0 * np.moveaxis(dh, 0, -1),
        }
        return out

    def solve_time_component(self, x, v, c, guess=None):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        h = np.asarray(self.metric(x), dtype=float)
        a = h[0, 0]
        b = h[0, 1:] @ v
        k = v @ h[1:, 1:] @ v + c * c
        disc = b * b - a * k
        if disc < 0 or a == 0:
            raise WrongShell("energy shell has no real time component", x=x.tolist(), v=v.tolist(), c=c)
        root = math.sqrt(disc)
        T = self.time_orientation(x) if self.has_time_orientation else np.eye(self.n)[0]
        for u in ((-b - root) / a, (-b + root) / a):
            y = np.concatenate([[u], v])
            if (h @ y) @ T < 0:
                return float(u)
        raise WrongShell("no future pointed root on the energy shell", x=x.tolist(), v=v.tolist(), c=c)


class Minkowski(LorentzianModel):
    x_independent = True
    chart_description = 'inertial coordinates (t, x^1, ..., x^{n-1})'

    def __init__(self, n: int = 4):
        super().__init__('minkowski', n, params={'n': n}, time_orientation=np.eye(n)[0])
        self._eta = np.diag([-1.0] + [1.0] * (n - 1))

    def metric(self, x):
        return self._eta

    def metric_derivative(self, x):
        return np.zeros((self.n,) * 3)


class MetricField(LorentzianModel):
    """Lorentzian model from a user metric field, with optional analytic partials."""

    def __init__(self, metric_field, n, metric_derivative=None, margin=None, time_orientation=None, name='lorentzian'):
        super().__init__(name, n, time_orientation=time_orientation)
        self._field = metric_field
        self._derivative = metric_derivative
        self._margin = margin
        self.analytic_level = 'third' if metric_derivative is not None else 'second'

    def metric(self, x):
        h = self._field(x)
        if not isinstance(h, torch.Tensor):
            h = np.asarray(h, dtype=float)
            if abs(np.linalg.det(h)) < finsler.degeneracy_threshold * max(1.0, np.abs(h).max()) ** self.n:
                raise DegenerateMetric("metric field degenerates", x=np.asarray(x, dtype=float).tolist())
        return h

    def metric_derivative(self, x):
        if self._derivative is not None:
            return np.asarray(self._derivative(x), dtype=float)
        return super().metric_derivative(x)

    def margin(self, x, y):
        base = float(np.linalg.norm(y))
        return min(base, float(self._margin(x))) if self._margin is not None else base


class Schwarzschild(LorentzianModel):
    chart_description = 'Schwarzschild coordinates (t, r, theta, phi)'

    def __init__(self, m: float = 1.0):
        if not m > 0:
            raise BadParameter("mass must be positive", field='m', value=m)
        super().__init__('schwarzschild', 4, params={'m': m}, time_orientation=np.array([1.0, 0, 0, 0]))
        self.m = float(m)

    def metric(self, x):
        xp = array_namespace(x)
        r, theta = x[1], x[2]
        f = 1 - 2 * self.m / r
        s = xp.sin(theta)
        return diag(xp, [-f, 1 / f, r * r, r * r * s * s])

    def metric_derivative(self, x):
        r, theta = float(x[1]), float(x[2])
        m = self.m
        f = 1 - 2 * m / r
        s, c = math.sin(theta), math.cos(theta)
        dh = np.zeros((4, 4, 4))
        dh[1] = np.diag([-2 * m / r ** 2, -(2 * m / r ** 2) / f ** 2, 2 * r, 2 * r * s * s])
        dh[2, 3, 3] = 2 * r * r * s * c
        return dh

    def margin(self, x, y):
        return min(float(x[1]) - 2 * self.m, abs(math.sin(float(x[2]))), float(np.linalg.norm(y)))


class ProductSphere(LorentzianModel):
    """Static product R x S^2 of radius `radius`, coordinates (t, theta, phi)."""
    chart_description = 'static product coordinates (t, theta, phi)'

    def __init__(self, radius: float = 1.0):
        if not radius > 0:
            raise BadParameter("radius must be positive", field='radius', value=radius)
        super().__init__('product_sphere', 3, params={'radius': radius}, time_orientation=np.array([1.0, 0, 0]))
        self.radius = float(radius)

    def metric(self, x):
        xp = array_namespace(x)
        s = xp.sin(x[1])
        R2 = self.radius ** 2
        one = x[1] * 0 + 1
        return diag(xp, [-one, R2 * one, R2 * s * s])

    def metric_derivative(self, x):
        theta = float(x[1])
        dh = np.zeros((3, 3, 3))
        dh[1, 2, 2] = 2 * self.radius ** 2 * math.sin(theta) * math.cos(theta)
        return dh

    def margin(self, x, y):
        return min(abs(math.sin(float(x[1]))), float(np.linalg.norm(y)))


# === Finsler models ===
class Rutz(LagrangianModel):
    analytic_level = 'second'
    chart_description = 'Schwarzschild coordinates (t, r, theta, phi)'
    # |dOmega/dt| below this is treated as singular.
    angular_threshold = 1e-8

    def __init__(self, m: float = 1.0, delta: float = 0.01):
        if not m > 0:
            raise BadParameter("mass must be positive", field='m', value=m)
        super().__init__('rutz', 4, params={'m': m, 'delta': delta}, time_orientation=np.array([1.0, 0, 0, 0]))
        self.m = float(m)
        self.delta = float(delta)

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        r, theta = x[1], x[2]
        f = 1 - 2 * self.m / r
        s2 = xp.sin(theta) ** 2
        angular = xp.sqrt(y[2] ** 2 + s2 * y[3] ** 2)
        # (1 - delta dOmega/dt) y_t^2 with dOmega/dt = angular / y_t
        time_part = y[0] ** 2 - self.delta * angular * y[0]
        return -f * time_part + y[1] ** 2 / f + r * r * (y[2] ** 2 + s2 * y[3] ** 2)

    def angular_velocity(self, x, y) -> float:
        s = math.sin(float(x[2]))
        return math.sqrt(y[2] ** 2 + s * s * y[3] ** 2) / y[0]

    def margin(self, x, y):
        norm = float(np.linalg.norm(y))
        if norm == 0 or y[0] == 0 or abs(self.angular_velocity(x, y)) < self.angular_threshold:
            return 0.0
        return min(float(x[1]) - 2 * self.m, abs(math.sin(float(x[2]))), abs(float(y[0])) / norm)


class BeemR3(LagrangianModel):
    """
    The planar cubic-over-norm Lagrangian in (y^1, y^2) extended by a spacelike
    (y^3)^2 term, so the vertical Hessian is non-degenerate on R^3.
    """
    x_independent = True
    chart_description = 'Cartesian coordinates (x^1, x^2, x^3)'

    def __init__(self):
        super().__init__('beem_r3', 3)

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        rho = xp.sqrt(y[0] ** 2 + y[1] ** 2)
        return (y[0] ** 3 - y[0] * y[1] ** 2) / rho + y[2] ** 2

    @staticmethod
    def planar_determinant(phi: float) -> float:
        """det of the planar Hessian at unit radius and polar angle phi."""
        c1, c3 = math.cos(phi), math.cos(3 * phi)
        s1, s3 = math.sin(phi), math.sin(3 * phi)
        return (c3 + c1) * (0.5 * c1 - 3.5 * c3) - 0.25 * (3 * s3 + s1) ** 2

    def margin(self, x, y):
        norm = float(np.linalg.norm(y))
        rho = math.hypot(float(y[0]), float(y[1]))
        if norm == 0 or rho == 0:
            return 0.0
        return min(rho / norm, abs(self.planar_determinant(math.atan2(y[1], y[0]))))


class Bogoslovsky(LagrangianModel):
    x_independent = True
    analytic_level = 'second'
    chart_description = 'inertial coordinates (t, x, y, z)'

    def __init__(self, b: float = 0.1, null_direction=(1.0, 0.0, 0.0, 1.0)):
        if b == 1:
            raise BadParameter("b = 1 is excluded", field='b', value=b)
        nu = np.asarray(null_direction, dtype=float)
        if nu.shape != (4,) or abs(minkowski_form(nu, nu)) > 1e-12 or nu[0] <= 0:
            raise BadParameter("null_direction must be a future null vector", field='null_direction', value=nu.tolist())
        super().__init__('bogoslovsky', 4, params={'b': b, 'null_direction': tuple(nu.tolist())}, time_orientation=np.array([1.0, 0, 0, 0]))
        self.b = float(b)
        self.nu = nu

    def null_form(self, y):
        xp = array_namespace(y)
        return -minkowski_form(as_array(xp, self.nu), y)

    def lagrangian(self, x, y):
        eta = minkowski_form(y, y)
        return -(-eta) ** (1 - self.b) * abs(self.null_form(y)) ** (2 * self.b)

    def margin(self, x, y):
        y = np.asarray(y, dtype=float)
        norm2 = float(y @ y)
        eta = minkowski_form(y, y)
        if norm2 == 0 or eta >= 0:
            return 0.0
        return min(-eta / norm2, abs(self.null_form(y)) / math.sqrt(norm2))


class Bimetric(LagrangianModel):
    """L = sign(L+) sqrt(L+ L-): negative on the common timelike cone."""
    analytic_level = 'second'

    def __init__(self, h_plus: LorentzianModel, h_minus: LorentzianModel):
        if h_plus.n != h_minus.n:
            raise DimensionMismatch("factor metrics differ in dimension", plus=h_plus.n, minus=h_minus.n)
        T = h_plus._time_orientation
        super().__init__('bimetric', h_plus.n, params={'plus': h_plus.name, 'minus': h_minus.name}, time_orientation=T)
        self.plus = h_plus
        self.minus = h_minus
        self.x_independent = h_plus.x_independent and h_minus.x_independent
        self.chart_description = h_plus.chart_description

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        lp = self.plus.lagrangian(x, y)
        lm = self.minus.lagrangian(x, y)
        return xp.sign(lp) * xp.sqrt(lp * lm)

    def margin(self, x, y):
        lp = self.plus.value(x, y)
        lm = self.minus.value(x, y)
        if lp * lm <= 0:
            return 0.0
        norm2 = float(np.dot(y, y))
        return min(min(abs(lp), abs(lm)) / norm2, self.plus.margin(x, y), self.minus.margin(x, y))


def euclidean_spatial_norm(x, y):
    xp = array_namespace(x, y)
    return xp.sqrt((y[1:] * y[1:]).sum())


class DielectricMedium(LagrangianModel):
    """L = 1/2 (ell(x, y)^2 - (U_x(y))^2) for a norm-like ell and a 1-form field U."""
    analytic_level = 'second'
    chart_description = 'medium rest-frame coordinates (t, x^1, ..., x^{n-1})'

    def __init__(self, n: int = 4, ell=euclidean_spatial_norm, U=None, x_independent: bool = True):
        U = np.eye(n)[0] if U is None else U
        super().__init__('dielectric_medium', n, params={'n': n}, time_orientation=np.eye(n)[0])
        self.ell = ell
        self.U = U
        self.x_independent = x_independent

    def one_form(self, x):
        xp = array_namespace(x)
        return as_array(xp, self.U(x) if callable(self.U) else self.U)

    def lagrangian(self, x, y):
        u = self.one_form(x) @ y
        ell = self.ell(x, y)
        return 0.5 * (ell * ell - u * u)

    def margin(self, x, y):
        norm = float(np.linalg.norm(y))
        return min(norm, float(self.ell(np.asarray(x, float), np.asarray(y, float))) / norm) if norm else 0.0

    def check_conditions(self, x, y, strict: bool = False) -> typing.Dict[str, bool]:
        """
        Pointwise checks on (ell, U): ell positive and degree-1 homogeneous,
        Hess(ell^2) positive definite on ker U, and a vector V with U(V) = -1
        spanning the kernel of Hess(ell^2).
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ell = float(self.ell(x, y))
        homogeneous = abs(float(self.ell(x, 2.0 * y)) - 2.0 * ell) <= 1e-10 * (1.0 + ell)
        xt = torch.as_tensor(x, dtype=torch.float64)
        hess = torch.func.hessian(lambda w: self.ell(xt, w) ** 2)(torch.as_tensor(y, dtype=torch.float64)).numpy()
        U = np.asarray(self.one_form(x), dtype=float)
        kernel_U = scipy.linalg.null_space(U[None, :])
        restricted = kernel_U.T @ hess @ kernel_U
        positive = bool(np.all(np.linalg.eigvalsh(restricted) > 0))
        kernel_h = scipy.linalg.null_space(hess, rcond=1e-10)
        transversal = bool(kernel_h.shape[1] == 1 and abs(U @ kernel_h[:, 0]) > 1e-10)
        report = {'ell_positive': ell > 0 and homogeneous, 'positive_on_kernel': positive, 'transversal_kernel': transversal}
        if strict and not all(report.values()):
            raise DegenerateMetric("dielectric medium conditions fail", x=x.tolist(), y=y.tolist(), **report)
        return report


class Rainbow(LagrangianModel):
    """
    L = s (sqrt(s eta) - o C1 etabar^{3/2} / (s eta))^2 with s = -1 on the timelike
    reading and s = +1 on the literal (spacelike radicand) reading. The
    correction is divided by eta, not its square root, so L stays degree-2
    homogeneous. o is the sign of the component of y along W, which makes the
    correction odd in y and L(x, -y) != L(x, y) once C1 != 0.
    """
    analytic_level = 'second'

    def __init__(self, base: LorentzianModel, C1: typing.Union[float, typing.Callable[[float], float]] = 0.0, W=None, mass: float = 0.0, cone: str = 'timelike'):
        if cone not in ('timelike', 'spacelike'):
            raise BadParameter("cone must be 'timelike' or 'spacelike'", field='cone', value=cone)
        if mass < 0:
            raise BadParameter("mass must be non-negative", field='mass', value=mass)
        coefficient = float(C1(mass)) if callable(C1) else float(C1)
        super().__init__('rainbow', base.n, params={'C1': coefficient, 'mass': mass, 'cone': cone, 'base': base.name}, time_orientation=base._time_orientation)
        self.base = base
        self.C1 = coefficient
        self.W = np.eye(base.n)[0] if W is None else np.asarray(W, dtype=float)
        self.sign = -1.0 if cone == 'timelike' else 1.0
        self.x_independent = base.x_independent
        self.chart_description = base.chart_description

    def spatial_form(self, x, y):
        """etabar(ybar, ybar): eta restricted to the W-orthogonal complement."""
        xp = array_namespace(x, y)
        h = as_array(xp, self.base.metric(x))
        W = as_array(xp, self.W)
        yW = y @ h @ W
        return y @ h @ y - yW * yW / (W @ h @ W)

    def orientation(self, x, y):
        """Sign of the component of y along W."""
        xp = array_namespace(x, y)
        h = as_array(xp, self.base.metric(x))
        W = as_array(xp, self.W)
        return xp.sign((y @ h @ W) / (W @ h @ W))

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        radicand = self.sign * self.base.lagrangian(x, y)
        bar = self.spatial_form(x, y)
        inner = xp.sqrt(radicand) - self.orientation(x, y) * self.C1 * abs(bar) ** 1.5 / radicand
        return self.sign * inner * inner

    def margin(self, x, y):
        radicand = self.sign * self.base.value(x, y)
        norm2 = float(np.dot(y, y))
        if norm2 == 0 or radicand <= 0:
            return 0.0
        margin = min(radicand / norm2, self.base.margin(x, y))
        if self.C1 != 0:
            # the |ybar|^3 term is C^2 only; its autodiff Hessian needs ybar != 0
            margin = min(margin, float(np.sqrt(abs(self.spatial_form(x, y)) / norm2)))
            # o jumps where y has no W component
            h = np.asarray(self.base.metric(x), dtype=float)
            along = abs(float(y @ h @ self.W)) / np.sqrt(abs(float(self.W @ h @ self.W)) * norm2)
            margin = min(margin, along)
        return margin


class BerwaldMoorPerturbed(LagrangianModel):
    """
    L = eta(y, y) + etahat(y, y)^{1-p} phi(yhat, ..., yhat) / p on Minkowski space,
    with etahat the Euclidean metric induced by W and yhat the part of y
    orthogonal to W.
    """
    x_independent = True
    analytic_level = 'second'
    chart_description = 'inertial coordinates (t, x^1, ..., x^{n-1})'
    # Frobenius norm of phi allowed before the metric is declared degenerate.
    max_ratio = 0.1

    def __init__(self, phi, p: int = 2, W=None, max_ratio: typing.Optional[float] = None):
        phi = np.asarray(phi, dtype=float)
        n = phi.shape[0]
        if p < 1 or phi.shape != (n,) * (2 * p):
            raise BadParameter("phi must be a 2p-tensor over the model dimension", field='phi', value=phi.shape)
        bound = self.max_ratio if max_ratio is None else max_ratio
        ratio = float(np.linalg.norm(phi.ravel()))
        if ratio > bound:
            raise DegenerateMetric("phi too large relative to the induced Euclidean metric", ratio=ratio, bound=bound)
        W = np.eye(n)[0] if W is None else np.asarray(W, dtype=float)
        if minkowski_form(W, W) >= 0:
            raise BadParameter("W must be timelike", field='W', value=W.tolist())
        super().__init__('berwald_moor_perturbed', n, params={'p': p, 'phi_norm': ratio}, time_orientation=W)
        self.phi = phi
        self.p = int(p)
        self.W = W
        self._subscripts = ''.join(chr(ord('a') + k) for k in range(2 * p)) + ',' + ','.join(chr(ord('a') + k) for k in range(2 * p))

    def lagrangian(self, x, y):
        xp = array_namespace(x, y)
        W = as_array(xp, self.W)
        eta = minkowski_form(y, y)
        yW = minkowski_form(y, W)
        WW = minkowski_form(W, W)
        hat = eta - 2 * yW * yW / WW
        yhat = y - (yW / WW) * W
        contraction = xp.einsum(self._subscripts, as_array(xp, self.phi), *([yhat] * (2 * self.p)))
        return eta + hat ** (1 - self.p) * contraction / self.p

    def margin(self, x, y):
        return float(np.linalg.norm(y))


def sym_tensor(n: int, index: typing.Sequence[int], weight: float = 1.0) -> np.ndarray:
    """Totally symmetric tensor whose full contraction with yhat is weight * prod yhat[index]."""
    rank = len(index)
    phi = np.zeros((n,) * rank)
    perms = set(itertools.permutations(index))
    for perm in perms:
        phi[perm] = weight / len(perms)
    return phi


# === Factories ===
def minkowski(n: int = 4) -> Minkowski:
    return Minkowski(n)


def lorentzian_from_metric(metric_field, n: int, metric_derivative=None, margin=None, time_orientation=None) -> MetricField:
    return MetricField(metric_field, n, metric_derivative=metric_derivative, margin=margin, time_orientation=time_orientation)


def schwarzschild(m: float = 1.0) -> Schwarzschild:
    return Schwarzschild(m)


def product_sphere(radius: float = 1.0) -> ProductSphere:
    return ProductSphere(radius)


def rutz(m: float = 1.0, delta: float = 0.01) -> Rutz:
    return Rutz(m, delta)


def beem_r3() -> BeemR3:
    return BeemR3()


def bogoslovsky(b: float = 0.1, null_direction=(1.0, 0.0, 0.0, 1.0)) -> Bogoslovsky:
    return Bogoslovsky(b, null_direction)


def bimetric(h_plus: LorentzianModel, h_minus: LorentzianModel) -> Bimetric:
    return Bimetric(h_plus, h_minus)


def dielectric_medium(ell=euclidean_spatial_norm, U=None, n: int = 4) -> DielectricMedium:
    return DielectricMedium(n, ell=ell, U=U)


def rainbow(eta_model: LorentzianModel, C1_of_m=0.0, W=None, mass: float = 0.0, cone: str = 'timelike') -> Rainbow:
    return Rainbow(eta_model, C1_of_m, W=W, mass=mass, cone=cone)


def berwald_moor_perturbed(phi, p: int = 2, W=None, max_ratio=None) -> BerwaldMoorPerturbed:
    return BerwaldMoorPerturbed(phi, p, W=W, max_ratio=max_ratio)
