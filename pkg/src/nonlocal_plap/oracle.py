"""Reference solver for the linear flow ``u_t = J * u - u``.

With ``v = e^t u`` the decay term disappears and ``v_t = J * v`` is a pure
convolution, integrated here with classical RK4.  The convolution matrix is
assembled directly from the stencil, independently of the operator module.
"""
from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import InvalidParameterError, UnsupportedProblemError
from .grid import GridFunction, ProblemSpec, region_weights
from .kernel import WeightStencil

__all__ = ["convolution_matrix", "linear_evolve"]


def convolution_matrix(grid, stencil: WeightStencil, spec: ProblemSpec):
    """Sparse ``C`` with ``(C v)_i = sum_d w(d) mu_{i+d} v_{i+d}`` on the region."""
    mu = region_weights(grid, spec).ravel()
    shape = grid.shape
    N = mu.size
    inside = mu > 0
    coords = np.array(np.unravel_index(np.arange(N), shape)).T
    mats = []
    for d, w in zip(stencil.offsets, stencil.weights):
        nb = coords + d
        ok = np.all((nb >= 0) & (nb < np.array(shape)), axis=1) & inside
        src = np.flatnonzero(ok)
        dst = np.ravel_multi_index(nb[ok].T, shape)
        vals = w * mu[dst]
        mats.append(sparse.csr_matrix((vals, (src, dst)), shape=(N, N)))
    C = mats[0]
    for M in mats[1:]:
        C = C + M
    # exterior rows stay frozen
    return sparse.diags(inside.astype(float)) @ C


def linear_evolve(u0: GridFunction, stencil: WeightStencil, spec: ProblemSpec,
                  T: float, dt_fine: float) -> GridFunction:
    """Solution of the linear problem at time ``T``.

    Parameters
    ----------
    u0 : GridFunction
    stencil : WeightStencil
    spec : ProblemSpec
        Cauchy or Dirichlet; for these the full row mass including the zero
        exterior is one, so the operator is exactly ``J * u - u``.
    T : float
    dt_fine : float
        RK4 step; the last step is shortened to land on ``T``.
    """
    if spec.variant == "neumann":
        raise UnsupportedProblemError(
            "the Neumann row mass varies near the boundary, so the operator is "
            "not J*u - u there; use the generic solver")
    if T < 0 or not dt_fine > 0:
        raise InvalidParameterError("need T >= 0 and dt_fine > 0")
    grid = u0.grid
    inside = region_weights(grid, spec).ravel() > 0
    C = convolution_matrix(grid, stencil, spec).tocsr()
    v = np.where(inside, u0.values.ravel(), 0.0)
    outside = np.where(inside, 0.0, u0.values.ravel())
    t = 0.0
    while t < T - 1e-14 * max(1.0, T):
        dt = min(dt_fine, T - t)
        k1 = C @ v
        k2 = C @ (v + 0.5 * dt * k1)
        k3 = C @ (v + 0.5 * dt * k2)
        k4 = C @ (v + dt * k3)
        v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    u = np.exp(-T) * v + outside
    return GridFunction(grid, u.reshape(grid.shape))
