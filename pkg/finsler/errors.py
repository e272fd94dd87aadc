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

# Exceptions raised across the toolkit. Every error carries the context
# needed to reproduce it as plain attributes.

import typing


class FinslerError(Exception):
    """Base class of every error raised by the toolkit."""

    def __init__(self, message: str = "", **context):
        super().__init__(message)
        self.message = message
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)

    def __str__(self):
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={_short(v)}" for k, v in sorted(self.context.items()))
        return f"{self.message} ({details})"


def _short(value: typing.Any) -> str:
    text = repr(value)
    return text if len(text) <= 120 else text[:117] + "..."


# === Evaluation ===
class SingularPoint(FinslerError):
    """The point lies on (or within the margin floor of) the model's singular set."""


class DimensionMismatch(FinslerError):
    pass


class DegenerateMetric(FinslerError):
    """The fundamental tensor is (numerically) not invertible."""


class NumericalBreakdown(FinslerError):
    """Richardson extrapolation did not settle below tolerance, or produced non-finite values."""


# === Integration ===
class EnergyDriftExceeded(FinslerError):
    pass


class StepFailure(FinslerError):
    pass


class NotAGeodesic(FinslerError):
    pass


class NotTimelike(FinslerError):
    pass


# === Fermat ===
class NoIntersection(FinslerError):
    pass


class AmbiguousIntersection(FinslerError):
    pass


class NoConvergence(FinslerError):
    pass


class LeftRegularDomain(SingularPoint):
    """A shooting iterate left the regular domain of the model."""


class NotFuturePointed(FinslerError):
    pass


class WrongShell(FinslerError):
    pass


class VariationConstructionFailed(FinslerError):
    pass


class DegenerateBoundaryPairing(FinslerError):
    pass


class EndpointConjugate(FinslerError):
    pass


# === Configuration and IO ===
class ParseError(FinslerError):
    pass


class UnknownModel(FinslerError):
    pass


class BadParameter(FinslerError):
    pass


class IoError(FinslerError, OSError):
    pass
