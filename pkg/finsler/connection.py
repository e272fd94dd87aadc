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

# Connection and curvature: formal Christoffel symbols, the nonlinear
# connection, Chern coefficients and the hh-curvature, pointwise and along
# geodesics.
#
# Curvature convention:
#   R^i_jkl = d_k G^i_jl - d_l G^i_jk + G^i_hk G^h_jl - G^i_hl G^h_jk
# with d_k = delta/delta x^k for the hh-curvature and plain d/dx^k (at fixed y)
# for the formal Riemann tensor. The Jacobi operator is
#   R(Y, V)V^i = R^i_jkl V^j Y^k V^l.

import dataclasses
import typing

import bittensor as bt
import numpy as np
import scipy.interpolate
from tqdm import tqdm

from finsler import differentiation
from finsler.errors import SingularPoint
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances
from finsler.vertical import PointedVector, check_nondegenerate, derivative_bundle


@dataclasses.dataclass(frozen=True)
class ConnectionCoefficients:
    gamma2: np.ndarray
    Nmat: np.ndarray
    chern: np.ndarray
    base: PointedVector

    def symmetry_residual(self) -> float:
        """Worst asymmetry in the lower indices of gamma2 and chern."""
        return max(
            float(np.max(np.abs(self.gamma2 - np.swapaxes(self.gamma2, 1, 2)))),
            float(np.max(np.abs(self.chern - np.swapaxes(self.chern, 1, 2)))),
        )


@dataclasses.dataclass(frozen=True)
class CurvatureTensor:
    R: np.ndarray
    base: PointedVector

    def antisymmetry_residual(self) -> float:
        return float(np.max(np.abs(self.R + np.swapaxes(self.R, 2, 3))))

    def jacobi_operator(self, V=None) -> np.ndarray:
        """K with K Y = R(Y, V)V; V defaults to the base fiber vector."""
        V = self.base.y if V is None else np.asarray(V, dtype=float)
        return np.einsum('ijkl,j,l->ik', self.R, V, V)


def _zeros(n: int, rank: int) -> np.ndarray:
    return np.zeros((n,) * rank)


def _pieces(model: LagrangianModel, p: PointedVector, tol: Tolerances):
    bundle = derivative_bundle(model, p, order=3, tol=tol)
    g = 0.5 * (bundle.d2L_dydy + bundle.d2L_dydy.T)
    check_nondegenerate(g, p, tol)
    return bundle, g, np.linalg.inv(g)


def _christoffel(dg: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    # dg[i, j, k] = d_k g_ij
    lowered = 0.5 * (np.einsum('skj->sjk', dg) + dg - np.einsum('jks->sjk', dg))
    return np.einsum('is,sjk->ijk', ginv, lowered)


def _coefficients(model: LagrangianModel, p: PointedVector, tol: Tolerances) -> ConnectionCoefficients:
    n = model.n
    if model.x_independent:
        # translation invariant: every horizontal derivative vanishes
        zero = _zeros(n, 3)
        return ConnectionCoefficients(gamma2=zero, Nmat=_zeros(n, 2), chern=zero, base=p)
    bundle, g, ginv = _pieces(model, p, tol)
    gamma2 = _christoffel(bundle.d3L_dydydx, ginv)
    C_up = np.einsum('il,ljk->ijk', ginv, 0.5 * bundle.d3L_dydydy)
    y = p.y
    spray = np.einsum('krs,r,s->k', gamma2, y, y)
    Nmat = gamma2 @ y - np.einsum('ijk,k->ij', C_up, spray)
    # delta_k g_ij = d_k g_ij - N^m_k dg_ij/dy^m
    delta_g = bundle.d3L_dydydx - np.einsum('ijm,mk->ijk', bundle.d3L_dydydy, Nmat)
    chern = _christoffel(delta_g, ginv)
    return ConnectionCoefficients(gamma2=gamma2, Nmat=Nmat, chern=chern, base=p)


def connection_coefficients(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> ConnectionCoefficients:
    """
    All connection coefficients at one point of the slit bundle.

    Parameters:
        model (LagrangianModel): The spacetime.
        p (PointedVector): Base point (x, y).
    Returns:
        ConnectionCoefficients: gamma2[i, j, k] = gamma^i_jk, Nmat[i, j] = N^i_j,
        chern[i, j, k] = Gamma^i_jk.
    """
    return _coefficients(model, p, tol)


def christoffel_formal(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> np.ndarray:
    """gamma^i_jk = 1/2 g^is (d_k g_sj - d_s g_jk + d_j g_sk) at fixed y."""
    if model.x_independent:
        return _zeros(model.n, 3)
    bundle, _, ginv = _pieces(model, p, tol)
    return _christoffel(bundle.d3L_dydydx, ginv)


def nonlinear_connection(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> np.ndarray:
    """N^i_j = gamma^i_jk y^k - C^i_jk gamma^k_rs y^r y^s."""
    return _coefficients(model, p, tol).Nmat


def chern_coefficients(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Christoffel trick applied to the delta/delta x derivatives of g."""
    return _coefficients(model, p, tol).chern


def _shifted(model: LagrangianModel, x, y, tol: Tolerances) -> PointedVector:
    if not model.is_regular(x, y, tol.margin_floor):
        raise SingularPoint("finite-difference stencil leaves the regular domain", x=np.asarray(x).tolist(), y=np.asarray(y).tolist())
    return PointedVector(x, y)


def _curvature(gamma: np.ndarray, d_gamma: np.ndarray) -> np.ndarray:
    # d_gamma[i, j, l, k] = d_k gamma^i_jl
    R = np.einsum('ijlk->ijkl', d_gamma) - d_gamma
    R += np.einsum('ihk,hjl->ijkl', gamma, gamma) - np.einsum('ihl,hjk->ijkl', gamma, gamma)
    return R


def hh_curvature(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> CurvatureTensor:
    """
    hh-curvature of the Chern connection. The outer x- and y-derivatives of the
    Chern coefficients are Richardson-extrapolated central differences.
    """
    n = model.n
    if model.x_independent:
        return CurvatureTensor(R=_zeros(n, 4), base=p)
    coefficients = _coefficients(model, p, tol)

    def in_x(x):
        return _coefficients(model, _shifted(model, x, p.y, tol), tol).chern

    def in_y(y):
        return _coefficients(model, _shifted(model, p.x, y, tol), tol).chern

    d_x = differentiation.jacobian(in_x, p.x, base=differentiation.OUTER_STEP)
    d_y = differentiation.jacobian(in_y, p.y, base=differentiation.OUTER_STEP)
    delta = d_x - np.einsum('ijlm,mk->ijlk', d_y, coefficients.Nmat)
    return CurvatureTensor(R=_curvature(coefficients.chern, delta), base=p)


def riemann_formal(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> CurvatureTensor:
    """Riemann tensor of the formal Christoffel symbols, differentiated in x at fixed y."""
    n = model.n
    if model.x_independent:
        return CurvatureTensor(R=_zeros(n, 4), base=p)
    gamma = christoffel_formal(model, p, tol)

    def in_x(x):
        return christoffel_formal(model, _shifted(model, x, p.y, tol), tol)

    d_x = differentiation.jacobian(in_x, p.x, base=differentiation.OUTER_STEP)
    return CurvatureTensor(R=_curvature(gamma, d_x), base=p)


def compatibility_residual(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> float:
    """max |delta_k g_ij - g_mj Gamma^m_ik - g_im Gamma^m_jk|, the horizontal part of almost g-compatibility."""
    if model.x_independent:
        return 0.0
    bundle, g, _ = _pieces(model, p, tol)
    coefficients = _coefficients(model, p, tol)
    delta_g = bundle.d3L_dydydx - np.einsum('ijm,mk->ijk', bundle.d3L_dydydy, coefficients.Nmat)
    chern = coefficients.chern
    expected = np.einsum('mj,mik->ijk', g, chern) + np.einsum('im,mjk->ijk', g, chern)
    return float(np.max(np.abs(delta_g - expected)))


@dataclasses.dataclass(frozen=True)
class AdaptedFrame:
    """
    Columns of `frame` are delta/delta x^i (first n) and d/dy^i (last n) in the
    coordinate basis (d/dx, d/dy); rows of `coframe` are dx^i and
    delta y^i = dy^i + N^i_j dx^j.
    """
    frame: np.ndarray
    coframe: np.ndarray
    base: PointedVector


def adapted_frame(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> AdaptedFrame:
    N = nonlinear_connection(model, p, tol)
    n = model.n
    eye, zero = np.eye(n), np.zeros((n, n))
    frame = np.block([[eye, zero], [-N, eye]])
    coframe = np.block([[eye, zero], [N, eye]])
    return AdaptedFrame(frame=frame, coframe=coframe, base=p)


# === Along curves ===
@dataclasses.dataclass
class CurveFrame:
    """
    Connection and curvature data sampled at the nodes of a geodesic with base
    fiber vector equal to the velocity. Coefficients are interpolated with
    cubic splines between nodes.
    """
    model: LagrangianModel
    nodes: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    metrics: np.ndarray
    chern: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        V = self.velocities
        self.connection_matrices = np.einsum('sijk,sj->sik', self.chern, V)
        self.jacobi_operators = np.einsum('sijkl,sj,sl->sik', self.curvature, V, V)
        self._splines = {
            'position': scipy.interpolate.CubicSpline(self.nodes, self.positions, axis=0),
            'velocity': scipy.interpolate.CubicSpline(self.nodes, self.velocities, axis=0),
            'metric': scipy.interpolate.CubicSpline(self.nodes, self.metrics, axis=0),
            'connection': scipy.interpolate.CubicSpline(self.nodes, self.connection_matrices, axis=0),
            'jacobi': scipy.interpolate.CubicSpline(self.nodes, self.jacobi_operators, axis=0),
        }

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    @property
    def span(self) -> typing.Tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def position(self, s):
        return self._splines['position'](s)

    def velocity(self, s):
        return self._splines['velocity'](s)

    def metric(self, s):
        """Stored fundamental tensor g at (lambda(s), lambda'(s))."""
        return self._splines['metric'](s)

    def connection_matrix(self, s):
        """M^i_k = Gamma^i_jk lambda'^j, so that (nabla A)^i = A'^i + M^i_k A^k."""
        return self._splines['connection'](s)

    def jacobi_operator(self, s):
        """K^i_k with (K Y)^i = R(Y, lambda')lambda'^i."""
        return self._splines['jacobi'](s)

    def inner(self, s, u, v) -> float:
        return float(np.asarray(u) @ self.metric(s) @ np.asarray(v))


def riemann_along_geodesic(model: LagrangianModel, geodesic, nodes: typing.Optional[int] = None, curvature: str = 'formal', tol: Tolerances = DEFAULT) -> CurveFrame:
    """
    Samples the Chern coefficients and the curvature along a geodesic.

    Parameters:
        model (LagrangianModel): The spacetime.
        geodesic: Curve exposing `span`, `position(s)` and `velocity(s)`.
        nodes (int): Number of nodes; defaults to tol.frame_nodes.
        curvature (str): 'formal' (x-derivatives of gamma2 at fixed y) or 'hh'.
    Returns:
        CurveFrame: sampled connection and curvature data.
    """
    if curvature not in ('formal', 'hh'):
        raise ValueError(f"unknown curvature kind {curvature}")
    s0, s1 = geodesic.span
    grid = np.linspace(s0, s1, nodes or tol.frame_nodes)
    positions, velocities, metrics, cherns, curvatures = [], [], [], [], []
    for s in tqdm(grid, desc=f'frame {model.name}', leave=False, disable=None):
        x, v = np.asarray(geodesic.position(s)), np.asarray(geodesic.velocity(s))
        p = _shifted(model, x, v, tol)
        bundle, g, _ = _pieces(model, p, tol)
        positions.append(x)
        velocities.append(v)
        metrics.append(g)
        cherns.append(_coefficients(model, p, tol).chern)
        R = riemann_formal(model, p, tol) if curvature == 'formal' else hh_curvature(model, p, tol)
        curvatures.append(R.R)
    bt.logging.trace(f'curve frame for {model.name}: {grid.size} nodes on [{s0}, {s1}]')
    return CurveFrame(
        model=model,
        nodes=grid,
        positions=np.asarray(positions),
        velocities=np.asarray(velocities),
        metrics=np.asarray(metrics),
        chern=np.asarray(cherns),
        curvature=np.asarray(curvatures),
    )


def covariant_derivative_along(frame: CurveFrame, A: typing.Callable, dA: typing.Optional[typing.Callable] = None, s=None) -> np.ndarray:
    """
    (nabla A)^i = A'^i + Gamma^i_jk lambda'^j A^k at the parameters `s`
    (default: the frame nodes). Without `dA`, A' is taken from a cubic spline
    through A at the nodes.
    """
    s_values = frame.nodes if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    if dA is None:
        spline = scipy.interpolate.CubicSpline(frame.nodes, np.asarray([A(t) for t in frame.nodes]), axis=0)
        dA = spline.derivative()
    out = [np.asarray(dA(t)) + frame.connection_matrix(t) @ np.asarray(A(t)) for t in s_values]
    return np.asarray(out)


def cartan_along(frame: CurveFrame, tol: Tolerances = DEFAULT) -> np.ndarray:
    """max_ij |C_ijk lambda'^k| at every node; zero along any curve by Euler's theorem."""
    out = []
    for x, v in zip(frame.positions, frame.velocities):
        bundle = derivative_bundle(frame.model, PointedVector(x, v), order=3, tol=tol)
        out.append(float(np.max(np.abs(0.5 * bundle.d3L_dydydy @ v))))
    return np.asarray(out)


def metric_compatibility_along(frame: CurveFrame, A: typing.Callable, B: typing.Callable, dA: typing.Callable, dB: typing.Callable, s=None) -> float:
    """
    max over s of |d/ds g(A, B) - g(nabla A, B) - g(A, nabla B)| along the frame,
    with d/ds g taken from the metric spline derivative.
    """
    s_values = frame.nodes if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    dmetric = frame._splines['metric'].derivative()
    nabla_A = covariant_derivative_along(frame, A, dA, s_values)
    nabla_B = covariant_derivative_along(frame, B, dB, s_values)
    worst = 0.0
    for k, t in enumerate(s_values):
        a, b = np.asarray(A(t)), np.asarray(B(t))
        g = frame.metric(t)
        lhs = a @ dmetric(t) @ b + np.asarray(dA(t)) @ g @ b + a @ g @ np.asarray(dB(t))
        rhs = nabla_A[k] @ g @ b + a @ g @ nabla_B[k]
        worst = max(worst, abs(float(lhs - rhs)))
    return worst
