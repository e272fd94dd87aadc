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

# Dormand-Prince 5(4) embedded Runge-Kutta pair with a PI step-size
# controller and event detection against a regularity predicate.

import dataclasses
import typing

import bittensor as bt
import numpy as np

from finsler.errors import FinslerError, LeftRegularDomain, StepFailure

# stage nodes
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])

# extended butcher table, row k holds the coefficients of stage k + 1
BT = {
    0: [1 / 5],
    1: [3 / 40, 9 / 40],
    2: [44 / 45, -56 / 15, 32 / 9],
    3: [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    4: [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    5: [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
}

# 5th order weights (first same as last: stage 7 is f at the new point)
B = np.array(BT[5] + [0.0])

# difference between the 5th and the embedded 4th order solution
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# PI controller exponents for a 4th order error estimate
ALPHA = 0.17
BETA = 0.04
BISECTIONS = 60


@dataclasses.dataclass
class IntegrationResult:
    ts: np.ndarray
    zs: np.ndarray
    fs: np.ndarray
    accepted: int
    rejected: int
    rtol: float
    atol: float

    def stats(self) -> dict:
        return {'steps': self.accepted, 'rejected_steps': self.rejected, 'rtol': self.rtol, 'atol': self.atol}


class _Irregular(Exception):
    pass


class DormandPrince54:
    """
    Fixed-coefficient explicit pair. `fun(t, z)` returns dz/dt; `regular(z)`
    returns False once the state leaves the domain where `fun` may be
    evaluated. Exceptions raised by `fun` for states outside that domain are
    treated the same way.
    """

    def __init__(self, fun: typing.Callable, rtol: float = 1e-10, atol: float = 1e-12, max_steps: int = 100000,
                 regular: typing.Optional[typing.Callable[[np.ndarray], bool]] = None, first_step: typing.Optional[float] = None):
        self.fun = fun
        self.rtol = rtol
        self.atol = atol
        self.max_steps = max_steps
        self.regular = regular or (lambda z: True)
        self.first_step = first_step

    def _eval(self, t, z):
        if not self.regular(z):
            raise _Irregular()
        try:
            f = np.asarray(self.fun(t, z), dtype=float)
        except (FinslerError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise _Irregular() from e
        if not np.all(np.isfinite(f)):
            raise _Irregular()
        return f

    def _norm(self, err, z, znew) -> float:
        scale = self.atol + self.rtol * np.maximum(np.abs(z), np.abs(znew))
        return float(np.sqrt(np.mean((err / scale) ** 2)))

    def step(self, t, z, f, h):
        """One trial step; returns (z_new, f_new, error norm). Raises _Irregular."""
        K = np.empty((7, z.size))
        K[0] = f
        for k in range(1, 6):
            K[k] = self._eval(t + C[k] * h, z + h * (np.asarray(BT[k - 1]) @ K[:k]))
        znew = z + h * (B[:6] @ K[:6])
        K[6] = self._eval(t + h, znew)
        err = h * (E @ K)
        return znew, K[6], self._norm(err, z, znew)

    def _initial_step(self, t, z, f, direction) -> float:
        scale = self.atol + self.rtol * np.abs(z)
        d0 = np.sqrt(np.mean((z / scale) ** 2))
        d1 = np.sqrt(np.mean((f / scale) ** 2))
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        try:
            f1 = self._eval(t + direction * h0, z + direction * h0 * f)
            d2 = np.sqrt(np.mean(((f1 - f) / scale) ** 2)) / h0
        except _Irregular:
            return h0
        h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** (1 / 5)
        return min(100 * h0, h1)

    def solve(self, span: typing.Tuple[float, float], z0) -> IntegrationResult:
        """
        Integrates over `span` and records every accepted step.

        Raises:
            LeftRegularDomain: the solution reaches the boundary of the regular
                domain; `state` holds the last regular (t, z).
            StepFailure: step size underflow or too many steps.
        """
        t0, t1 = float(span[0]), float(span[1])
        direction = 1.0 if t1 >= t0 else -1.0
        z = np.asarray(z0, dtype=float).copy()
        try:
            f = self._eval(t0, z)
        except _Irregular:
            raise LeftRegularDomain("initial state is not regular", state={'t': t0, 'z': z.tolist()})
        h = abs(self.first_step) if self.first_step else self._initial_step(t0, z, f, direction)
        ts, zs, fs = [t0], [z.copy()], [f.copy()]
        t = t0
        accepted = rejected = 0
        previous_error = 1e-4
        while direction * (t1 - t) > 0:
            if accepted + rejected >= self.max_steps:
                raise StepFailure("maximum number of steps exceeded", state={'t': t, 'z': z.tolist()}, steps=accepted)
            h = min(h, abs(t1 - t))
            if h <= 16 * np.finfo(float).eps * max(1.0, abs(t)):
                raise StepFailure("step size underflow", state={'t': t, 'z': z.tolist()})
            try:
                znew, fnew, error = self.step(t, z, f, direction * h)
            except _Irregular:
                taken, znew, fnew = self._to_boundary(t, z, f, h, direction)
                if taken == 0.0:
                    raise LeftRegularDomain("trajectory left the regular domain", state={'t': t, 'z': z.tolist()})
                t, z, f = t + direction * taken, znew, fnew
                ts.append(t), zs.append(z.copy()), fs.append(f.copy())
                accepted += 1
                if self._crosses(t, z, f, h - taken, direction):
                    bt.logging.debug(f'integration stopped at the regular-domain boundary t={t}')
                    raise LeftRegularDomain("trajectory left the regular domain", state={'t': t, 'z': z.tolist()})
                h = max(taken, h / 4)
                continue
            if error <= 1.0:
                t = t1 if h == abs(t1 - t) else t + direction * h
                z, f = znew, fnew
                ts.append(t), zs.append(z.copy()), fs.append(f.copy())
                accepted += 1
                factor = SAFETY * max(error, 1e-10) ** -ALPHA * previous_error ** BETA
                h *= min(MAX_FACTOR, max(MIN_FACTOR, factor))
                previous_error = max(error, 1e-4)
            else:
                rejected += 1
                h *= min(1.0, max(MIN_FACTOR, SAFETY * error ** -ALPHA))
        bt.logging.trace(f'dp54: {accepted} accepted, {rejected} rejected steps')
        return IntegrationResult(ts=np.asarray(ts), zs=np.asarray(zs), fs=np.asarray(fs), accepted=accepted, rejected=rejected, rtol=self.rtol, atol=self.atol)

    def _to_boundary(self, t, z, f, h, direction):
        """Bisects for the longest accurate step that stays regular."""
        lo, hi = 0.0, h
        best = (z, f)
        for _ in range(BISECTIONS):
            mid = 0.5 * (lo + hi)
            try:
                znew, fnew, error = self.step(t, z, f, direction * mid)
                ok = error <= 1.0
            except _Irregular:
                ok = False
            if ok:
                lo, best = mid, (znew, fnew)
            else:
                hi = mid
            if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(t)):
                break
        return lo, best[0], best[1]

    def _crosses(self, t, z, f, remaining, direction) -> bool:
        """True if an arbitrarily short step from (t, z) is already irregular."""
        h = min(remaining, 1e3 * np.finfo(float).eps * max(1.0, abs(t)))
        if h <= 0:
            return False
        try:
            self.step(t, z, f, direction * h)
        except _Irregular:
            return True
        return False


def solve(fun: typing.Callable, span, z0, rtol: float = 1e-10, atol: float = 1e-12, max_steps: int = 100000, regular=None, first_step=None) -> IntegrationResult:
    return DormandPrince54(fun, rtol=rtol, atol=atol, max_steps=max_steps, regular=regular, first_step=first_step).solve(span, z0)
