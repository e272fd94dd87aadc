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

import dataclasses
import typing

import finsler
from finsler.errors import BadParameter


@dataclasses.dataclass(frozen=True)
class Tolerances:
    """
    Numerical tolerances shared by every analysis. Defaults come from the
    package level constants so a run can be tuned by editing one place.
    """
    abs: float = finsler.tolerance_abs
    rel: float = finsler.tolerance_rel
    margin_floor: float = finsler.margin_floor
    lightlike_band: float = finsler.lightlike_band
    degeneracy: float = finsler.degeneracy_threshold
    rtol: float = finsler.rtol
    atol: float = finsler.atol
    energy: float = finsler.energy_tol
    residual: float = finsler.residual_tol
    max_steps: int = finsler.max_steps
    capture_radius: float = finsler.capture_radius
    max_iterations: int = finsler.max_iterations
    endpoint_conjugate: float = finsler.endpoint_conjugate_tol
    frame_nodes: int = finsler.frame_nodes

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not value > 0:
                raise BadParameter("tolerances must be positive", field=field.name, value=value)

    def bound(self, scale: float = 0.0) -> float:
        """Absolute plus relative tolerance around a value of magnitude `scale`."""
        return self.abs + self.rel * abs(scale)

    def replace(self, **overrides: typing.Any) -> "Tolerances":
        names = {f.name: f for f in dataclasses.fields(self)}
        cleaned = {}
        for key, value in overrides.items():
            if key not in names:
                raise BadParameter(f"unknown tolerance '{key}'", field=key)
            kind = int if names[key].type in (int, "int") else float
            try:
                cleaned[key] = kind(value)
            except (TypeError, ValueError):
                raise BadParameter(f"tolerance '{key}' is not a number", field=key, value=value)
        return dataclasses.replace(self, **cleaned)

    def as_dict(self) -> typing.Dict[str, float]:
        return dataclasses.asdict(self)


DEFAULT = Tolerances()
