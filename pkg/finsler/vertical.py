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

# Vertical calculus: L and its fiber and base derivatives, the fundamental and
# Cartan tensors, and the axiom checks of a Finsler spacetime.
#
# Convention: g_ij is stored as the full Hessian d^2 L / dy^i dy^j, so that
# L = 1/2 g_ij y^i y^j. For a Lorentzian model L = h(y, y) this makes g = 2 h;
# `metric_tensor` returns g / 2 when the usual normalisation is wanted. The
# uniform factor cancels in every sign test, orthogonality condition and ratio.

import dataclasses
import typing

import bittensor as bt
import numpy as np
from tqdm import tqdm

from finsler.errors import DegenerateMetric, DimensionMismatch, FinslerError, SingularPoint
from finsler.models import LagrangianModel
from finsler.tolerances import DEFAULT, Tolerances

HOMOGENEITY_FACTORS = (0.5, 2.0, 3.0)


@dataclasses.dataclass(frozen=True)
class PointedVector:
    """A base point x and a nonzero fiber vector y: a point of the slit tangent bundle."""
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DimensionMismatch("x and y must be vectors of equal length", x=x.shape, y=y.shape)
        if not np.any(y):
            raise SingularPoint("y = 0 is not in the slit tangent bundle", x=x.tolist())
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'y', y)

    @property
    def n(self) -> int:
        return self.x.size

    def reversed(self) -> "PointedVector":
        return PointedVector(self.x, -self.y)

    def scaled(self, k: float) -> "PointedVector":
        return PointedVector(self.x, k * self.y)

    def as_dict(self) -> dict:
        return {'x': self.x.tolist(), 'y': self.y.tolist()}


@dataclasses.dataclass(frozen=True)
class DerivativeBundle:
    L_value: float
    dL_dy: np.ndarray
    dL_dx: np.ndarray
    d2L_dydy: np.ndarray
    d2L_dxdy: np.ndarray
    d3L_dydydy: typing.Optional[np.ndarray] = None
    d3L_dydydx: typing.Optional[np.ndarray] = None
    base: typing.Optional[PointedVector] = None

    def euler_residuals(self) -> typing.Tuple[float, float, float]:
        """(|dL_dy.y - 2L|, max|g y - dL_dy|, |1/2 g y y - L|) at the base point."""
        y = self.base.y
        gy = self.d2L_dydy @ y
        return (
            abs(float(self.dL_dy @ y) - 2.0 * self.L_value),
            float(np.max(np.abs(gy - self.dL_dy))),
            abs(0.5 * float(y @ gy) - self.L_value),
        )


@dataclasses.dataclass(frozen=True)
class FundamentalTensor:
    g: np.ndarray
    base: PointedVector

    def inner(self, u, v) -> float:
        return float(np.asarray(u) @ self.g @ np.asarray(v))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    def signature(self) -> typing.Tuple[int, int]:
        """(negative, positive) eigenvalue counts."""
        eig = np.linalg.eigvalsh(0.5 * (self.g + self.g.T))
        return int(np.sum(eig < 0)), int(np.sum(eig > 0))


@dataclasses.dataclass(frozen=True)
class CartanTensor:
    C: np.ndarray
    base: PointedVector

    def contraction(self) -> np.ndarray:
        """C_ijk y^k, zero by Euler's theorem."""
        return self.C @ self.base.y

    def raised(self, g_inverse: np.ndarray) -> np.ndarray:
        """C^i_jk = g^il C_ljk."""
        return np.einsum('il,ljk->ijk', g_inverse, self.C)


@dataclasses.dataclass
class AxiomReport:
    model: str
    samples: int
    homogeneity: float = 0.0
    signature_violations: int = 0
    symmetry: float = 0.0
    euler: float = 0.0
    cartan_contraction: float = 0.0
    singular_samples: typing.List[int] = dataclasses.field(default_factory=list)
    tolerance: float = DEFAULT.abs

    @property
    def max_violation(self) -> float:
        return max(self.homogeneity, self.symmetry, self.euler, self.cartan_contraction)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance and self.signature_violations == 0

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out['passed'] = self.passed
        out['max_violation'] = self.max_violation
        return out


def _point(model: LagrangianModel, p: PointedVector, tol: Tolerances) -> PointedVector:
    if p.n != model.n:
        raise DimensionMismatch("point dimension differs from model dimension", model=model.name, n=model.n, point=p.n)
    if not model.is_regular(p.x, p.y, tol.margin_floor):
        raise SingularPoint(f"point is not regular for {model.name}", point=p.as_dict())
    return p


def evaluate(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> float:
    """
    Value of L at a regular point.

    Parameters:
        model (LagrangianModel): The spacetime.
        p (PointedVector): Point of the slit tangent bundle.
    Returns:
        float: L(x, y)
    """
    _point(model, p, tol)
    value = model.value(p.x, p.y)
    if not np.isfinite(value):
        raise SingularPoint(f"{model.name} is not finite here", point=p.as_dict())
    return value


def derivative_bundle(model: LagrangianModel, p: PointedVector, order: int = 3, tol: Tolerances = DEFAULT) -> DerivativeBundle:
    """All derivatives of L up to third order in y and first order in x of the y-Hessian."""
    _point(model, p, tol)
    d = model.derivatives(p.x, p.y, order=order)
    for key, value in d.items():
        if not np.all(np.isfinite(value)):
            raise SingularPoint(f"non-finite {key} for {model.name}", point=p.as_dict())
    return DerivativeBundle(
        L_value=float(d['L']),
        dL_dy=d['dL_dy'],
        dL_dx=d['dL_dx'],
        d2L_dydy=d['d2L_dydy'],
        d2L_dxdy=d['d2L_dxdy'],
        d3L_dydydy=d.get('d3L_dydydy'),
        d3L_dydydx=d.get('d3L_dydydx'),
        base=p,
    )


def check_nondegenerate(g: np.ndarray, base: PointedVector, tol: Tolerances = DEFAULT) -> None:
    scale = float(np.max(np.abs(g)))
    if scale == 0 or abs(np.linalg.det(g)) < tol.degeneracy * scale ** g.shape[0]:
        raise DegenerateMetric("fundamental tensor is degenerate", point=base.as_dict(), det=float(np.linalg.det(g)))


def fundamental_tensor(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> FundamentalTensor:
    """g_ij = d^2 L / dy^i dy^j (stored convention, L = 1/2 g y y)."""
    bundle = derivative_bundle(model, p, order=2, tol=tol)
    g = 0.5 * (bundle.d2L_dydy + bundle.d2L_dydy.T)
    check_nondegenerate(g, p, tol)
    return FundamentalTensor(g=g, base=p)


def metric_tensor(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> np.ndarray:
    """g / 2: equals h for a Lorentzian model L = h(y, y)."""
    return 0.5 * fundamental_tensor(model, p, tol).g


def cartan_tensor(model: LagrangianModel, p: PointedVector, tol: Tolerances = DEFAULT) -> CartanTensor:
    """C_ijk = 1/2 d g_ij / dy^k."""
    bundle = derivative_bundle(model, p, order=3, tol=tol)
    return CartanTensor(C=0.5 * bundle.d3L_dydydy, base=p)


def check_axioms(model: LagrangianModel, sample_points: typing.Sequence[PointedVector], tol: Tolerances = DEFAULT) -> AxiomReport:
    """
    Measures, over the samples, the worst violation of degree-2 homogeneity,
    Lorentz signature, symmetry of g, the Euler identities and the Cartan
    contraction. Violations are reported, never raised; samples that turn out
    singular are listed by index.
    """
    report = AxiomReport(model=model.name, samples=len(sample_points), tolerance=tol.abs)
    for index, p in enumerate(tqdm(sample_points, desc=f'axioms {model.name}', leave=False, disable=None)):
        try:
            bundle = derivative_bundle(model, p, order=3, tol=tol)
        except FinslerError as e:
            bt.logging.debug(f'axiom sample {index} skipped: {e}')
            report.singular_samples.append(index)
            continue
        L = bundle.L_value
        scale = 1.0 + abs(L)
        for k in HOMOGENEITY_FACTORS:
            deviation = abs(model.value(p.x, k * p.y) - k * k * L) / (scale * k * k)
            report.homogeneity = max(report.homogeneity, deviation)
        g = bundle.d2L_dydy
        gscale = 1.0 + float(np.max(np.abs(g)))
        report.symmetry = max(report.symmetry, float(np.max(np.abs(g - g.T))) / gscale)
        negative, positive = FundamentalTensor(g=g, base=p).signature()
        if (negative, positive) != (1, model.n - 1):
            report.signature_violations += 1
        yscale = scale * (1.0 + float(np.linalg.norm(p.y)))
        report.euler = max(report.euler, max(bundle.euler_residuals()) / yscale)
        C = 0.5 * bundle.d3L_dydydy
        cscale = 1.0 + float(np.max(np.abs(C)))
        report.cartan_contraction = max(report.cartan_contraction, float(np.max(np.abs(C @ p.y))) / (cscale * (1.0 + float(np.linalg.norm(p.y)))))
    bt.logging.debug(f'axioms for {model.name}: {report.as_dict()}')
    return report


@dataclasses.dataclass
class ReversibilityReport:
    reversible: bool
    max_deviation: float
    singular_samples: typing.List[int]


def check_reversibility(model: LagrangianModel, sample_points: typing.Sequence[PointedVector], tol: Tolerances = DEFAULT) -> ReversibilityReport:
    """Max |L(x, y) - L(x, -y)| over the samples where both branches are regular."""
    deviation = 0.0
    within = True
    singular = []
    for index, p in enumerate(sample_points):
        try:
            forward = evaluate(model, p, tol)
            backward = evaluate(model, p.reversed(), tol)
        except SingularPoint:
            singular.append(index)
            continue
        gap = abs(forward - backward)
        deviation = max(deviation, gap)
        within = within and gap <= tol.bound(forward)
    return ReversibilityReport(reversible=within, max_deviation=deviation, singular_samples=singular)
