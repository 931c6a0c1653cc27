"""Time stepping: explicit Euler and the implicit proximal (minimizing) step."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

from .errors import (ConditionViolatedError, InvalidParameterError,
                     StepFailureError)
from .grid import GridFunction, ProblemSpec, Trajectory, ensure_finite
from .kernel import Kernel, WeightStencil, discrete_weights
from .operator import boundary_activity, make_plan

__all__ = [
    "StepperConfig", "StepRecord", "TruncationWarning", "stable_dt",
    "explicit_step", "proximal_step", "evolve", "evolve_coupled",
]

SCHEMES = ("explicit", "proximal")
_ACTIVITY_WARN = 1e-6


class TruncationWarning(UserWarning):
    """The Cauchy solution reaches the edge of the computational box."""


@dataclass(frozen=True)
class StepperConfig:
    """Time-stepping parameters.

    ``dt_max`` caps the explicit step and is the fixed step of the proximal
    scheme (the last step is shortened to land on ``T``).
    """

    scheme: str = "explicit"
    cfl_theta: float = 0.5
    dt_max: float = 0.1
    prox_tol: float = 1e-10
    prox_max_iters: int = 10_000
    snapshot_times: tuple = ()

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"unknown scheme {self.scheme!r}")
        if not 0 < self.cfl_theta <= 1:
            raise InvalidParameterError("cfl_theta must lie in (0, 1]")
        if not self.dt_max > 0 or not self.prox_tol > 0:
            raise InvalidParameterError("dt_max and prox_tol must be positive")
        if int(self.prox_max_iters) < 1:
            raise InvalidParameterError("prox_max_iters must be >= 1")
        object.__setattr__(self, "snapshot_times",
                           tuple(sorted(float(s) for s in self.snapshot_times)))

    def validate_for(self, p: float):
        if p < 2 and self.scheme == "explicit":
            raise InvalidParameterError(
                f"explicit stepping is not allowed for p={p} < 2: the right-hand "
                "side is not Lipschitz where differences vanish; use scheme=proximal")


@dataclass(frozen=True)
class StepRecord:
    t: float
    dt: float
    scheme: str
    prox_iters: int | None = None
    evi_residual: float | None = None
    grad_norm: float | None = None


def stable_dt(u: GridFunction, p: float, theta: float = 0.5,
              dt_max: float = math.inf) -> float:
    """Explicit step bound ``theta / (2 (p-1) (2 |u|_inf)^(p-2))``."""
    if p < 2:
        raise InvalidParameterError("stable_dt is defined for p >= 2")
    return _stable_dt_norm(float(np.max(np.abs(u.values))), p, theta, dt_max)


def _stable_dt_norm(norm, p, theta, dt_max):
    if p == 2:
        return min(theta / 2.0, dt_max)
    if norm == 0:
        return dt_max
    return min(theta / (2 * (p - 1) * (2 * norm) ** (p - 2)), dt_max)


def _explicit(plan, v, p, dt):
    """One guarded Euler step; returns (new values, dt used, operator value)."""
    Lv = plan.apply(v, p)
    bound = 2 * np.max(np.abs(v)) + 1
    for _ in range(60):
        w = v + dt * Lv
        if np.all(np.isfinite(w)) and np.max(np.abs(w)) <= bound:
            return w, dt, Lv
        dt *= 0.5
    raise StepFailureError("explicit step stayed unstable after 60 halvings")


def explicit_step(u: GridFunction, stencil: WeightStencil, spec: ProblemSpec,
                  p: float, dt: float) -> GridFunction:
    """``u + dt L u``, halving ``dt`` if the instability guard trips."""
    plan = make_plan(u.grid, stencil, spec)
    w, _, _ = _explicit(plan, u.values, p, dt)
    return u.with_values(w)


def _objective(plan, v, u, p, dt):
    d = v - u
    return (plan.energy(v, v, p) / p
            + 0.5 / dt * float(np.sum(plan.measure * d * d)))


def _prox_solve(plan, u, p, dt, tol, max_iters, v0=None):
    """Minimize ``I_p(v) + |v - u|^2 / (2 dt)`` by damped Newton.

    The gradient is measured in the node-measure inner product, so the
    stopping rule ``|g| <= tol`` is resolution independent.  For ``p < 2``
    the tolerance is raised to the rounding floor ``(eps |u|_inf)^(p-1)``.  Newton
    directions come from the sparse Hessian; if the Armijo search fails
    on one, the plain gradient direction is tried.
    """
    m = plan.measure
    reg = plan.region.ravel()
    idx = np.flatnonzero(reg)
    mr = m.ravel()[idx]
    scale = max(1.0, float(np.max(np.abs(u))))
    eps = np.finfo(float).eps * scale
    floor = eps
    if p < 2:
        # a difference is only known to one ulp, so L_p of it only to
        # eps^(p-1); below that the gradient is rounding noise
        tol = max(tol, eps ** (p - 1))
    v = u.copy() if v0 is None else v0.copy()

    def grad(v):
        return (v - u) / dt - plan.apply(v, p)

    g = grad(v)
    phi = _objective(plan, v, u, p, dt)
    gn = math.sqrt(float(np.sum(m * g * g)))
    it = 0
    while gn > tol:
        if it >= max_iters:
            raise StepFailureError(
                f"proximal solver hit {max_iters} iterations with gradient "
                f"norm {gn:.3e}", grad_norm=gn)
        it += 1
        H = plan.hessian(v, p, floor)[idx][:, idx]
        Hm = diags(mr) @ (H + diags(np.full(len(idx), 1.0 / dt)))
        rhs = -(mr * g.ravel()[idx])
        step = np.zeros(v.size)
        try:
            step[idx] = spsolve(Hm.tocsc(), rhs)
        except Exception:  # singular factorization: fall back to gradient
            step[idx] = -g.ravel()[idx]
        if not np.all(np.isfinite(step)):
            step[idx] = -g.ravel()[idx]
        accepted = False
        for direction in (step, -g.ravel() * reg):
            D = direction.reshape(v.shape)
            slope = float(np.sum(m * g * D))
            if slope >= 0:
                continue
            alpha = 1.0
            for _ in range(60):
                w = v + alpha * D
                phi_w = _objective(plan, w, u, p, dt)
                if phi_w <= phi + 1e-4 * alpha * slope:
                    accepted = True
                    break
                # near the minimizer the decrease drowns in rounding; accept a
                # step that still reduces the gradient
                if phi_w <= phi + 64 * np.finfo(float).eps * abs(phi):
                    gw = grad(w)
                    if math.sqrt(float(np.sum(m * gw * gw))) < gn:
                        accepted = True
                        break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            raise StepFailureError(
                f"line search failed with gradient norm {gn:.3e}", grad_norm=gn)
        v = w
        phi = phi_w
        g = grad(v)
        gn = math.sqrt(float(np.sum(m * g * g)))
    return v, it, gn


def proximal_step(u: GridFunction, stencil: WeightStencil, spec: ProblemSpec,
                  p: float, dt: float, config: StepperConfig | None = None,
                  t: float = 0.0):
    """Implicit step as the minimizer of ``I_p(v) + |v - u|^2 / (2 dt)``.

    Returns
    -------
    v : GridFunction
    record : StepRecord
    """
    config = config or StepperConfig(scheme="proximal")
    plan = make_plan(u.grid, stencil, spec)
    v, it, gn = _prox_solve(plan, u.values, p, dt, config.prox_tol,
                            int(config.prox_max_iters))
    return u.with_values(v), StepRecord(t + dt, dt, "proximal", it, None, gn)


def _series_row(plan, v, p):
    m = plan.measure
    reg = plan.region
    a = np.abs(v)
    return (float(np.sum(m * a)), float(np.sqrt(np.sum(m * a * a))),
            float(np.max(a[reg], initial=0.0)), plan.energy(v, v, p),
            float(np.sum(m * v)))


def evolve(u0: GridFunction, spec: ProblemSpec, kernel: Kernel, p: float,
           T: float, config: StepperConfig, stencil: WeightStencil | None = None,
           t0: float = 0.0, observer=None) -> Trajectory:
    """Advance ``u0`` from ``t0`` to ``T`` and record a trajectory."""
    return evolve_coupled([u0], spec, kernel, p, T, config, stencil, t0,
                          observer)[0]


def evolve_coupled(data: Sequence[GridFunction], spec: ProblemSpec,
                   kernel: Kernel, p: float, T: float, config: StepperConfig,
                   stencil: WeightStencil | None = None,
                   t0: float = 0.0, observer=None) -> list:
    """Evolve several data with one shared time-step schedule.

    Pairs evolved together are what the contraction and comparison audits
    compare step by step.  The explicit step size uses the largest sup norm
    of the group.  ``observer(t, dt, old_states, new_states)`` is called with
    raw arrays after every accepted step.
    """
    if not T > t0:
        raise InvalidParameterError(f"final time {T} must exceed start {t0}")
    config.validate_for(p)
    grid = data[0].grid
    if stencil is None:
        stencil = discrete_weights(kernel, grid.h)
    plan = make_plan(grid, stencil, spec)
    if spec.variant == "neumann":
        kappa = float(np.min(plan.row_mass[plan.region]))
        if not kappa > 0:
            raise ConditionViolatedError(
                f"kernel mass inside the domain drops to {kappa}")
    states = []
    for u in data:
        v = np.array(u.values, dtype=float)
        # nothing lives outside the Dirichlet domain
        if spec.variant == "dirichlet":
            v = np.where(plan.region, v, 0.0)
        states.append(v)
    trajs = [Trajectory(meta={
        "p": p, "variant": spec.variant, "kernel": kernel.describe(),
        "scheme": config.scheme, "h": grid.h, "dimension": grid.dimension,
        "t0": t0, "T": T,
        "nonnegative": bool(np.all(v >= 0)),
        "kappa": float(np.min(plan.row_mass[plan.region])),
        "boundary_activity": 0.0,
    }, spec=spec, stencil=stencil, kernel=kernel) for v in states]
    targets = [s for s in config.snapshot_times if t0 < s <= T]
    is_prox = config.scheme == "proximal"

    # operator values at the current states (u_t proxy for t = t0)
    cur_ut = [plan.apply(v, p) for v in states]
    t = t0
    for tr, v, ut in zip(trajs, states, cur_ut):
        tr.add_snapshot(t, grid_fn(grid, v), grid_fn(grid, ut))
        tr.add_record(t, *_series_row(plan, v, p), 0.0)
    ti = 0
    activity_warned = False
    eps_t = 1e-12 * max(1.0, abs(T))
    while t < T - eps_t:
        prev_t = t
        prev_states = states
        prev_ut = cur_ut
        if is_prox:
            dt = min(config.dt_max, T - t)
            new, uts, recs = [], [], []
            for v in states:
                w, it, gn = _prox_solve(plan, v, p, dt, config.prox_tol,
                                        int(config.prox_max_iters))
                new.append(w)
                uts.append((w - v) / dt)
                recs.append(StepRecord(t + dt, dt, "proximal", it, None, gn))
        else:
            norm = max(float(np.max(np.abs(v))) for v in states)
            dt = min(_stable_dt_norm(norm, p, config.cfl_theta, config.dt_max),
                     T - t)
            dt = _shared_guarded_dt(states, cur_ut, dt)
            new = [v + dt * Lv for v, Lv in zip(states, cur_ut)]
            uts = None
            recs = [StepRecord(t + dt, dt, "explicit") for _ in states]
        t = t + dt
        if T - t <= eps_t:
            t = T
        new = [ensure_finite(w, "state") for w in new]
        if observer is not None:
            observer(t, dt, states, new)
        states = new
        cur_ut = uts if is_prox else [plan.apply(v, p) for v in states]
        for tr, v, rec in zip(trajs, states, recs):
            tr.steps.append(replace(rec, t=t))
            tr.add_record(t, *_series_row(plan, v, p), dt)
        if spec.variant == "cauchy":
            act = max(boundary_activity(grid_fn(grid, v), kernel.support_radius)
                      for v in states)
            for tr in trajs:
                tr.meta["boundary_activity"] = max(tr.meta["boundary_activity"], act)
            if act > _ACTIVITY_WARN and not activity_warned:
                warnings.warn(f"solution reaches the box edge (|u| = {act:.2e} "
                              f"at t = {t:.4g}); enlarge the padding",
                              TruncationWarning, stacklevel=2)
                activity_warned = True
        # nearest accepted step for every target crossed by this step
        while ti < len(targets) and targets[ti] <= t + eps_t:
            s = targets[ti]
            take_prev = (s - prev_t) <= (t - s)
            when = prev_t if take_prev else t
            for k, tr in enumerate(trajs):
                if when > tr.snapshots[-1][0]:
                    vals = prev_states[k] if take_prev else states[k]
                    ut = prev_ut[k] if take_prev else cur_ut[k]
                    tr.add_snapshot(when, grid_fn(grid, vals), grid_fn(grid, ut))
            ti += 1
    for k, tr in enumerate(trajs):
        if t > tr.snapshots[-1][0]:
            tr.add_snapshot(t, grid_fn(grid, states[k]), grid_fn(grid, cur_ut[k]))
    return trajs


def _shared_guarded_dt(states, uts, dt):
    """Halve ``dt`` until ``|v + dt Lv|_inf <= 2 |v|_inf + 1`` for every state."""
    for _ in range(60):
        ok = True
        for v, Lv in zip(states, uts):
            w = v + dt * Lv
            if not (np.all(np.isfinite(w))
                    and np.max(np.abs(w)) <= 2 * np.max(np.abs(v)) + 1):
                ok = False
                break
        if ok:
            return dt
        dt *= 0.5
    raise StepFailureError("explicit step stayed unstable after 60 halvings")


def grid_fn(grid, values) -> GridFunction:
    return GridFunction(grid, values)
