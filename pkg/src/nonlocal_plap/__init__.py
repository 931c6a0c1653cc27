"""Simulation and audit toolkit for the zero-order nonlocal p-Laplacian flow."""
from .errors import *  # noqa: F401,F403
from .kernel import (Kernel, WeightStencil, make_step_kernel, make_power_kernel,
                     make_bump_kernel, make_kernel, discrete_weights,
                     kernel_modulus, neumann_kappa)
from .grid import (Grid, GridFunction, ProblemSpec, Trajectory, lq_norm,
                   oscillation, modulus_estimate, jump_detect)
from .operator import (lp_scalar, mp_scalar, apply_operator, energy,
                       functional, inequality_suite)

__version__ = "0.1.0"
