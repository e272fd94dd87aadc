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

# Central differences with Richardson extrapolation. Used when a model has no
# autodiff path and for the outer layer of nested derivatives (x-derivatives of
# connection coefficients).

import typing

import numpy as np

from finsler.errors import NumericalBreakdown

# Step for differencing values that are themselves computed in floating point.
INNER_STEP = np.cbrt(np.finfo(float).eps)
# Step for differencing smooth, exactly evaluated data; Richardson removes the
# truncation error so a wide step keeps roundoff small.
OUTER_STEP = 1e-3
LEVELS = 3


def richardson(estimate: typing.Callable[[float], np.ndarray], h: float, levels: int = LEVELS, tol: float = 1e-6) -> typing.Tuple[np.ndarray, float]:
    """
    Extrapolates a central-difference estimate with an even error expansion.

    Parameters:
        estimate (callable): h -> finite-difference approximation with error a2 h^2 + a4 h^4 + ...
        h (float): Initial step.
        levels (int): Number of step halvings.
        tol (float): Relative tolerance for the final error estimate.
    Returns:
        tuple: (extrapolated value, error estimate)
    """
    table = [np.asarray(estimate(h), dtype=float)]
    for k in range(1, levels):
        row = [np.asarray(estimate(h / 2 ** k), dtype=float)]
        for j in range(1, k + 1):
            factor = 4.0 ** j
            row.append(row[j - 1] + (row[j - 1] - table[j - 1]) / (factor - 1.0))
        table = row
    value = table[-1]
    error = float(np.max(np.abs(table[-1] - table[-2]))) if len(table) > 1 else 0.0
    if not np.all(np.isfinite(value)):
        raise NumericalBreakdown("non-finite finite-difference estimate", step=h)
    scale = 1.0 + float(np.max(np.abs(value))) if value.size else 1.0
    if error > tol * scale:
        raise NumericalBreakdown("Richardson extrapolation did not converge", step=h, error=error)
    return value, error


def steps(z: np.ndarray, base: float) -> np.ndarray:
    """Per-component step base * (1 + |z_k|)."""
    return base * (1.0 + np.abs(np.asarray(z, dtype=float)))


def jacobian(fun: typing.Callable[[np.ndarray], np.ndarray], z: np.ndarray, base: float = INNER_STEP, tol: float = 1e-6) -> np.ndarray:
    """
    Richardson-extrapolated Jacobian of `fun` at `z`; derivative index last.
    """
    z = np.asarray(z, dtype=float)
    h = steps(z, base)
    columns = []
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = 1.0

        def central(t, e=e):
            return (np.asarray(fun(z + t * e)) - np.asarray(fun(z - t * e))) / (2.0 * t)

        value, _ = richardson(central, h[k], tol=tol)
        columns.append(value)
    return np.stack(columns, axis=-1)


def hessian(fun: typing.Callable[[np.ndarray], float], z: np.ndarray, base: float = OUTER_STEP, tol: float = 1e-6) -> np.ndarray:
    """
    Richardson-extrapolated Hessian of a scalar function from second differences.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    h = steps(z, base)
    eye = np.eye(n)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            if i == j:
                def second(t, i=i):
                    return (fun(z + t * eye[i]) - 2.0 * fun(z) + fun(z - t * eye[i])) / (t * t)
                value, _ = richardson(second, h[i], tol=tol)
            else:
                ratio = h[j] / h[i]

                def mixed(t, i=i, j=j, ratio=ratio):
                    a, b = t * eye[i], t * ratio * eye[j]
                    return (fun(z + a + b) - fun(z + a - b) - fun(z - a + b) + fun(z - a - b)) / (4.0 * t * t * ratio)
                value, _ = richardson(mixed, h[i], tol=tol)
            out[i, j] = out[j, i] = value
    return out
