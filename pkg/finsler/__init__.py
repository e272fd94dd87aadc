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

__version__ = "1.0.0"
version_split = __version__.split(".")
__spec_version__ = (
    (1000 * int(version_split[0]))
    + (10 * int(version_split[1]))
    + (1 * int(version_split[2]))
)
WANDB_PROJECT = 'finsler-fermat'

# invariant checks: absolute and relative tolerance.
tolerance_abs = 1e-8
tolerance_rel = 1e-8
# refuse points closer than this to a model's singular set (chart units).
margin_floor = 1e-6
# |L| below lightlike_band * (1 + |y|^2) counts as lightlike.
lightlike_band = 1e-9
# |det g| below degeneracy_threshold * max|g_ij|^n flags a degenerate metric.
degeneracy_threshold = 1e-10
# geodesic integrator tolerances.
rtol = 1e-10
atol = 1e-12
energy_tol = 1e-8
residual_tol = 1e-6
max_steps = 100000
# shooting solver.
capture_radius = 1e-9
max_iterations = 200
# |s* - 1| below this makes the endpoint conjugate.
endpoint_conjugate_tol = 1e-6
# nodes per CurveFrame.
frame_nodes = 65
# seed used when a scenario does not set one.
default_seed = 0

from . import errors as errors
from . import tolerances as tolerances
from . import differentiation as differentiation
from . import models as models
from . import vertical as vertical
from . import causal as causal
from . import catalog as catalog
from . import connection as connection
from . import integrator as integrator
from . import geodesic as geodesic
from . import jacobi as jacobi
from . import fermat as fermat
from . import config as config
from . import reporting as reporting
