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

# Jacobi fields along geodesics and conjugate point detection.
#
# With M(s) the connection matrix and K(s) the Jacobi operator of a CurveFrame,
# the Jacobi equation nabla nabla Y + R(Y, V)V = 0 is the first order system
#   Y' = Z - M Y,   Z' = -M Z - K Y,   Z = nabla Y.

import dataclasses
import typing

import bittensor as bt
import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize

from finsler.connection import CurveFrame
from finsler.errors import BadParameter
from finsler.tolerances import DEFAULT, Tolerances

# parameter grid used to bracket dips of the smallest singular value
SCAN_POINTS = 400
# singular values below this fraction of the largest count toward multiplicity
RANK_RATIO = 1e-5


@dataclasses.dataclass
class JacobiField:
    frame: CurveFrame
    solution: typing.Any
    columns: int = 1

    def _state(self, s):
        n = self.frame.n
        z = self.solution.sol(s)
        return z[:n * self.columns].reshape(n, self.columns), z[n * self.columns:].reshape(n, self.columns)

    def Y(self, s) -> np.ndarray:
        Y, _ = self._state(s)
        return Y[:, 0] if self.columns == 1 else Y

    def nabla_Y(self, s) -> np.ndarray:
        _, Z = self._state(s)
        return Z[:, 0] if self.columns == 1 else Z

    def residual(self, s, h: float = 1e-5) -> float:
        """|nabla nabla Y + R(Y, V)V| at s from a central difference of nabla Y."""
        frame = self.frame
        s0, s1 = frame.span
        h = min(h, s - s0, s1 - s) if s0 < s < s1 else h
        a, b = max(s - h, s0), min(s + h, s1)
        dZ = (self._state(b)[1] - self._state(a)[1]) / (b - a)
        Y, Z = self._state(s)
        return float(np.max(np.abs(dZ + frame.connection_matrix(s) @ Z + frame.jacobi_operator(s) @ Y)))


def _system(frame: CurveFrame, columns: int):
    n = frame.n

    def rhs(s, z):
        Y = z[:n * columns].reshape(n, columns)
        Z = z[n * columns:].reshape(n, columns)
        M = frame.connection_matrix(s)
        K = frame.jacobi_operator(s)
        return np.concatenate([(Z - M @ Y).ravel(), (-M @ Z - K @ Y).ravel()])
    return rhs


def jacobi_integrate(frame: CurveFrame, Y0, nabla_Y0, tol: Tolerances = DEFAULT) -> JacobiField:
    """
    Integrates the Jacobi equation along the frame.

    Y0 and nabla_Y0 are vectors, or n x m matrices for m fields at once.
    """
    Y0 = np.asarray(Y0, dtype=float)
    Z0 = np.asarray(nabla_Y0, dtype=float)
    if Y0.shape != Z0.shape or Y0.shape[0] != frame.n:
        raise BadParameter("initial data must be n-vectors or n x m matrices of equal shape", Y0=Y0.shape, nabla_Y0=Z0.shape)
    columns = 1 if Y0.ndim == 1 else Y0.shape[1]
    z0 = np.concatenate([Y0.reshape(frame.n, columns).ravel(), Z0.reshape(frame.n, columns).ravel()])
    solution = scipy.integrate.solve_ivp(_system(frame, columns), frame.span, z0, method='DOP853', rtol=max(tol.rtol, 1e-13), atol=tol.atol, dense_output=True)
    if not solution.success:
        raise BadParameter(f"Jacobi integration failed: {solution.message}")
    return JacobiField(frame=frame, solution=solution, columns=columns)


def transverse_basis(frame: CurveFrame, T=None, tol: Tolerances = DEFAULT) -> typing.Tuple[np.ndarray, bool]:
    """
    Initial covariant derivatives for the conjugate point search: a basis of
    the g-orthogonal complement of the velocity at s = 0, or for a lightlike
    velocity, of the vectors orthogonal to both the velocity and T.
    Returns (basis, lightlike).
    """
    s0 = frame.span[0]
    V = frame.velocity(s0)
    g = frame.metric(s0)
    L = 0.5 * float(V @ g @ V)
    lightlike = abs(L) <= tol.lightlike_band * (1.0 + float(V @ V))
    constraints = [g @ V]
    if lightlike:
        if T is None:
            T = frame.model.time_orientation(frame.position(s0))
        constraints.append(g @ np.asarray(T, dtype=float))
    basis = scipy.linalg.null_space(np.asarray(constraints))
    return basis, lightlike


def _scan_matrix(field: JacobiField, s: float) -> np.ndarray:
    frame = field.frame
    Y = field.Y(s).reshape(frame.n, -1) / (s - frame.span[0])
    V = frame.velocity(s)
    return np.column_stack([Y, V / np.linalg.norm(V)])


def _sigma(field: JacobiField, s: float) -> np.ndarray:
    return scipy.linalg.svd(_scan_matrix(field, s), compute_uv=False)


@dataclasses.dataclass(frozen=True)
class ConjugatePoint:
    s: float
    multiplicity: int
    endpoint: bool = False

    def as_dict(self) -> dict:
        return {'s': self.s, 'mult': self.multiplicity}


@dataclasses.dataclass
class ConjugateScan:
    """Smallest singular value and determinant of the scan matrix on a grid, for plotting."""
    s: np.ndarray
    sigma_min: np.ndarray
    determinant: np.ndarray
    lightlike: bool


def jacobi_matrix(frame: CurveFrame, T=None, tol: Tolerances = DEFAULT) -> typing.Tuple[JacobiField, bool]:
    basis, lightlike = transverse_basis(frame, T, tol)
    return jacobi_integrate(frame, np.zeros_like(basis), basis, tol), lightlike


def scan(field: JacobiField, lightlike: bool, points: int = SCAN_POINTS) -> ConjugateScan:
    s0, s1 = field.frame.span
    grid = np.linspace(s0, s1, points + 1)[1:]
    sigma, det = [], []
    for s in grid:
        A = _scan_matrix(field, s)
        sigma.append(float(scipy.linalg.svd(A, compute_uv=False)[-1]))
        det.append(float(np.linalg.det(A)) if A.shape[0] == A.shape[1] else float('nan'))
    return ConjugateScan(s=grid, sigma_min=np.asarray(sigma), determinant=np.asarray(det), lightlike=lightlike)


def find_conjugate_points(frame: CurveFrame, T=None, tol: Tolerances = DEFAULT, points: int = SCAN_POINTS) -> typing.List[ConjugatePoint]:
    """
    Conjugate points of lambda(s0) along the frame.

    Integrates the matrix Jacobi system with Y(s0) = 0 and nabla Y(s0) spanning
    the transverse space, then locates the parameters where
    [Y(s) / (s - s0), V(s)] loses rank. Dips of the smallest singular value
    are refined with a bounded scalar minimisation; where the determinant
    changes sign the root is polished with brentq. The multiplicity is the
    number of singular values below RANK_RATIO times the largest.
    """
    field, lightlike = jacobi_matrix(frame, T, tol)
    return locate_conjugate_points(field, scan(field, lightlike, points), tol)


def locate_conjugate_points(field: JacobiField, table: ConjugateScan, tol: Tolerances = DEFAULT) -> typing.List[ConjugatePoint]:
    """Refines the dips of an existing scan of `field` into conjugate points."""
    frame, lightlike = field.frame, table.lightlike
    if lightlike:
        bt.logging.warning('lightlike geodesic: conjugate multiplicities count transverse fields only (experimental)')
    s0, s1 = frame.span
    grid, sigma = table.s, table.sigma_min
    found = []
    for k in range(len(grid)):
        left = sigma[k - 1] if k > 0 else np.inf
        right = sigma[k + 1] if k + 1 < len(grid) else np.inf
        if not (sigma[k] <= left and sigma[k] <= right):
            continue
        a = grid[k - 1] if k > 0 else s0 + 1e-3 * (s1 - s0)
        b = grid[k + 1] if k + 1 < len(grid) else s1
        if not (sigma[k] < 0.1 * np.max(sigma)):
            continue
        refined = scipy.optimize.minimize_scalar(lambda s: _sigma(field, s)[-1], bounds=(a, b), method='bounded', options={'xatol': 1e-13})
        s_star = float(refined.x)
        if not lightlike:
            try:
                fa, fb = np.linalg.det(_scan_matrix(field, a)), np.linalg.det(_scan_matrix(field, b))
                if fa * fb < 0:
                    s_star = float(scipy.optimize.brentq(lambda s: np.linalg.det(_scan_matrix(field, s)), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
            except ValueError:
                pass
        values = _sigma(field, s_star)
        multiplicity = int(np.sum(values < RANK_RATIO * values[0]))
        if multiplicity == 0:
            continue
        if any(abs(s_star - p.s) < 1e-9 for p in found):
            continue
        endpoint = abs(s_star - s1) < tol.endpoint_conjugate
        found.append(ConjugatePoint(s=s_star, multiplicity=multiplicity, endpoint=endpoint))
    bt.logging.debug(f'conjugate points along {frame.model.name}: {[(p.s, p.multiplicity) for p in found]}')
    return found


@dataclasses.dataclass(frozen=True)
class PairingFit:
    slope: float
    intercept: float
    residual: float


def jacobi_pairing_fit(field: JacobiField, nodes: typing.Optional[np.ndarray] = None) -> PairingFit:
    """Linear regression of g(Y, lambda')(s); the residual is the largest deviation from the fitted line."""
    frame = field.frame
    s = frame.nodes if nodes is None else np.asarray(nodes, dtype=float)
    pairing = np.asarray([float(np.asarray(field.Y(t)).reshape(frame.n, -1)[:, 0] @ frame.metric(t) @ frame.velocity(t)) for t in s])
    slope, intercept = np.polyfit(s, pairing, 1)
    residual = float(np.max(np.abs(pairing - (slope * s + intercept))))
    return PairingFit(slope=float(slope), intercept=float(intercept), residual=residual)
