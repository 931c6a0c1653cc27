"""Audits of discrete trajectories against the a-priori estimates.

Each audit returns a :class:`CheckResult`; :class:`DiagnosticsReport`
collects them.  Inequality residuals are ``lhs - rhs`` (or ``-slack``) so a
check passes when the worst residual is ``<= tolerance``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (InsufficientDataError, InsufficientResolutionError,
                     InvalidParameterError)
from .grid import (GridFunction, Trajectory, jump_detect, lq_norm,
                   modulus_estimate, region_weights)
from .kernel import kernel_modulus
from .operator import make_plan

__all__ = [
    "SmoothingConstants", "CheckResult", "DiagnosticsReport", "PairLog",
    "EviLog", "smoothing_constants", "check_smoothing", "check_ut_smoothing",
    "check_benilan_crandall", "check_time_monotonicity", "decay_rate_fit",
    "check_modulus_preservation", "check_singularity_stationarity",
    "time_holder_seminorm", "check_functional_inequality", "slope_jump",
    "CHECKS",
]

# every check the report enumerates, with the estimate it audits
CHECKS = {
    "contraction": "Lq contraction of differences",
    "comparison": "weak comparison principle",
    "linf_monotone": "sup-norm monotonicity",
    "mass_conservation": "Neumann mass conservation",
    "energy_dissipation": "energy dissipation",
    "integration_by_parts": "integration by parts",
    "smoothing": "Lq-Linf smoothing",
    "smoothing_two_regime": "two-regime smoothing with crossover time",
    "ut_smoothing": "Linf bound on u_t",
    "benilan_crandall": "Benilan-Crandall lower bound on u_t",
    "time_monotonicity": "monotonicity of t^(1/(p-2)) u",
    "decay_rate": "large-time decay t^(-1/p)",
    "modulus_preservation": "modulus of continuity preservation",
    "singularity_stationarity": "singular set does not move",
    "time_holder": "Hoelder regularity in time",
    "functional_inequality": "L2 functional inequality",
    "evi": "evolution variational inequality",
    "kernel_condition": "Neumann kernel mass lower bound",
    "truncation": "Cauchy truncation error proxy",
}


@dataclass(frozen=True)
class SmoothingConstants:
    k_tilde: float
    k_pqj: float
    p: float
    q: float
    j_inf: float


def smoothing_constants(p: float, q: float, j_inf: float) -> SmoothingConstants:
    """Explicit constants of the Lq-Linf smoothing estimate.

    ``K~ = 2 (8/(p-2))^(1/((p-2)(p-1)))`` and
    ``K = (q (8p)^(p(p+q)/q) j_inf^((p-1)/q))^(1/(p-1))``.
    """
    if not p > 2:
        raise InvalidParameterError(f"smoothing constants need p > 2, got {p}")
    if not (1 <= q < math.inf) or not j_inf > 0:
        raise InvalidParameterError("need q in [1, inf) and j_inf > 0")
    kt = 2.0 * (8.0 / (p - 2)) ** (1.0 / ((p - 2) * (p - 1)))
    # logs keep the huge intermediate power finite
    logk = (math.log(q) + p * (p + q) / q * math.log(8 * p)
            + (p - 1) / q * math.log(j_inf)) / (p - 1)
    return SmoothingConstants(kt, math.exp(logk), p, q, j_inf)


@dataclass
class CheckResult:
    name: str
    status: str  # "pass", "fail" or "skipped"
    residual: float = float("nan")
    tolerance: float = float("nan")
    detail: str = ""
    values: dict = field(default_factory=dict)

    @property
    def theorem(self) -> str:
        return CHECKS.get(self.name, self.name)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @classmethod
    def judge(cls, name, residual, tolerance, detail="", **values):
        ok = bool(np.isfinite(residual)) and residual <= tolerance
        return cls(name, "pass" if ok else "fail", float(residual),
                   float(tolerance), detail, values)

    @classmethod
    def skip(cls, name, reason):
        return cls(name, "skipped", detail=reason)


class DiagnosticsReport:
    """Per-check records; every registered check appears exactly once."""

    def __init__(self, results: Sequence[CheckResult] = (), seed=None):
        self.results = {}
        self.seed = seed
        for r in results:
            self.add(r)

    def add(self, result: CheckResult):
        self.results[result.name] = result

    def complete(self):
        for name in CHECKS:
            if name not in self.results:
                self.add(CheckResult.skip(name, "not evaluated for this run"))
        return self

    @property
    def failures(self) -> list:
        return [r.name for r in self.results.values() if r.status == "fail"]

    @property
    def passed(self) -> bool:
        return not self.failures

    def ordered(self) -> list:
        names = list(CHECKS) + [n for n in self.results if n not in CHECKS]
        return [self.results[n] for n in names if n in self.results]

    def rows(self):
        for r in self.ordered():
            yield (r.name, r.theorem, r.status, r.residual, r.tolerance)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "theorem", "status", "residual", "tolerance"])
        for row in self.rows():
            w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> str:
        lines = [f"seed: {self.seed}"] if self.seed is not None else []
        for r in self.ordered():
            if r.status == "skipped":
                lines.append(f"SKIP {r.name}: {r.detail}")
            else:
                lines.append(f"{r.status.upper():4s} {r.name}: residual "
                             f"{r.residual:.3e} (tol {r.tolerance:.1e}) "
                             f"{r.detail}".rstrip())
        n_fail = len(self.failures)
        lines.append("all applicable checks passed" if n_fail == 0
                     else f"{n_fail} check(s) failed: {', '.join(self.failures)}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# helpers

def _p(traj):
    return float(traj.meta["p"])


def _elapsed(traj, t):
    return t - float(traj.meta.get("t0", 0.0))


def _norm(u, q, traj):
    return lq_norm(u, q, traj.spec)


def _region(traj):
    return region_weights(traj.snapshots[0][1].grid, traj.spec) > 0


def _max_ut(traj):
    reg = _region(traj)
    return max(float(np.max(np.abs(ut.values[reg]), initial=0.0))
               for ut in traj.ut if ut is not None)


def _max_dt(traj):
    dts = [s.dt for s in traj.steps]
    return max(dts) if dts else 0.0


# ---------------------------------------------------------------------------
# smoothing family

def check_smoothing(traj: Trajectory, constants: SmoothingConstants,
                    q: float | None = None, kappa: float | None = None,
                    signed: bool | None = None) -> dict:
    """Residuals of the Lq-Linf smoothing bound and of its two-regime form.

    Parameters
    ----------
    traj : Trajectory
    constants : SmoothingConstants
    q : float, optional
        Defaults to ``constants.q``.
    kappa : float, optional
        Neumann runs divide the bound by the kernel mass lower bound; taken
        from the trajectory when omitted.
    signed : bool, optional
        Sign-changing data use ``2 K~``; detected from the datum by default.

    Returns
    -------
    dict
        ``times``, ``residuals`` (one per snapshot with ``t > t0``),
        ``worst``, ``t_star``, ``two_regime`` residuals and their worst.
    """
    p = _p(traj)
    q = constants.q if q is None else q
    u0 = traj.snapshots[0][1]
    if signed is None:
        signed = bool(np.any(u0.values < 0) and np.any(u0.values > 0))
    kt = constants.k_tilde * (2.0 if signed else 1.0)
    K = constants.k_pqj
    div = 1.0
    if traj.spec is not None and traj.spec.variant == "neumann":
        div = float(traj.meta["kappa"]) if kappa is None else kappa
    nq = _norm(u0, q, traj)
    times, res, res2 = [], [], []
    t_star = (K * nq / constants.k_tilde) ** (2 - p) if nq > 0 else math.inf
    for t, u in traj.snapshots[1:]:
        s = _elapsed(traj, t)
        if s <= 0:
            continue
        linf = _norm(u, math.inf, traj)
        bound = (kt * s ** (-1.0 / (p - 2)) + K * nq) / div
        times.append(t)
        res.append(linf - bound)
        if s <= t_star:
            b2 = 2 * kt * s ** (-1.0 / (p - 2))
        else:
            b2 = 2 * K * nq
        res2.append(linf - b2 / div)
    return {"times": np.array(times), "residuals": np.array(res),
            "worst": float(np.max(res, initial=-math.inf)), "t_star": t_star,
            "two_regime": np.array(res2),
            "two_regime_worst": float(np.max(res2, initial=-math.inf))}


def check_ut_smoothing(traj: Trajectory) -> float:
    """``max_t |u_t(t)|_inf - 2^p |u(t0)|_inf^(p-1)``."""
    p = _p(traj)
    reg = _region(traj)
    bound = 2.0 ** p * _norm(traj.snapshots[0][1], math.inf, traj) ** (p - 1)
    worst = -math.inf
    for ut in traj.ut:
        if ut is None:
            continue
        worst = max(worst, float(np.max(np.abs(ut.values[reg]), initial=0.0)) - bound)
    return worst


def _applicable_positive(traj):
    p = _p(traj)
    if not p > 2:
        return f"needs p > 2 (p = {p})"
    if not traj.meta.get("nonnegative", False):
        return "needs a nonnegative datum"
    return None


def bc_tolerance(traj) -> float:
    """``1e-8 + 2 dt |L u|_inf`` with the largest step of the run."""
    return 1e-8 + 2 * _max_dt(traj) * _max_ut(traj)


def check_benilan_crandall(traj: Trajectory) -> float:
    """Minimum over snapshots ``t > t0`` and region nodes of
    ``u_t + u / ((p-2) t)``."""
    why = _applicable_positive(traj)
    if why:
        raise InvalidParameterError(why)
    p = _p(traj)
    reg = _region(traj)
    worst = math.inf
    for (t, u), ut in zip(traj.snapshots, traj.ut):
        s = _elapsed(traj, t)
        if s <= 0 or ut is None:
            continue
        slack = ut.values[reg] + u.values[reg] / ((p - 2) * s)
        worst = min(worst, float(np.min(slack)))
    return worst


def check_time_monotonicity(traj: Trajectory) -> float:
    """Minimum increment of ``t^(1/(p-2)) u`` between consecutive snapshots.

    Increments are divided by ``t2^(1/(p-2))`` so the value is on the scale
    of ``u`` and comparable with the same tolerance at every time.
    """
    why = _applicable_positive(traj)
    if why:
        raise InvalidParameterError(why)
    p = _p(traj)
    reg = _region(traj)
    worst = math.inf
    snaps = traj.snapshots
    for (t1, u1), (t2, u2) in zip(snaps[:-1], snaps[1:]):
        s1, s2 = _elapsed(traj, t1), _elapsed(traj, t2)
        if s2 <= 0:
            continue
        ratio = (s1 / s2) ** (1.0 / (p - 2)) if s1 > 0 else 0.0
        inc = u2.values[reg] - ratio * u1.values[reg]
        worst = min(worst, float(np.min(inc)))
    return worst


# ---------------------------------------------------------------------------
# large-time behaviour

def decay_rate_fit(traj: Trajectory, window: Sequence[float],
                   mode: str = "dirichlet") -> dict:
    """Least-squares slope of ``log |u - c|_inf`` against ``log t``.

    ``c`` is zero for ``mode="dirichlet"`` and the mean of the datum for
    ``mode="neumann"``.  Also returns ``sup t^(1/p) |u - c|_inf`` over the
    window.
    """
    if mode not in ("dirichlet", "neumann"):
        raise InvalidParameterError(f"unknown decay mode {mode!r}")
    p = _p(traj)
    ta, tb = window
    u0 = traj.snapshots[0][1]
    c = 0.0
    if mode == "neumann":
        mu = region_weights(u0.grid, traj.spec)
        c = float(np.sum(mu * u0.values) / np.sum(mu))
    reg = _region(traj)
    ts, dev = [], []
    for t, u in traj.snapshots:
        if ta <= t <= tb:
            ts.append(t)
            dev.append(float(np.max(np.abs(u.values[reg] - c))))
    if len(ts) < 4:
        raise InsufficientDataError(
            f"{len(ts)} snapshots in [{ta}, {tb}]; at least 4 are needed")
    ts, dev = np.array(ts), np.array(dev)
    weighted = dev * ts ** (1.0 / p)
    if np.all(dev <= 1e-14 * max(1.0, abs(c))):
        return {"slope": float("nan"), "exact_equilibrium": True,
                "weighted_sup": float(np.max(weighted)), "mean": c,
                "times": ts, "deviation": dev}
    good = dev > 0
    slope = float(np.polyfit(np.log(ts[good]), np.log(dev[good]), 1)[0])
    return {"slope": slope, "exact_equilibrium": False,
            "weighted_sup": float(np.max(weighted)),
            "weighted": weighted, "mean": c, "times": ts, "deviation": dev,
            "threshold": -1.0 / p + 0.15}


# ---------------------------------------------------------------------------
# spatial regularity

def check_modulus_preservation(traj: Trajectory, radii: Sequence[float],
                               center, radius: float,
                               growth: float | None = None) -> dict:
    """Ratio of the sampled modulus of ``u(t)`` on a ball to the reference.

    The reference at ``rho`` is ``max(w_u0(rho), w_J(rho), rho, rho^(p-2))``
    with ``w_u0`` taken on the same ball.  The check passes when every ratio
    is finite and ``r(t) <= (r(t0) + 1) exp(A (t - t0))`` with
    ``A = 2^p |u0|_inf^(p-1)`` unless ``growth`` is given.
    """
    p = _p(traj)
    u0 = traj.snapshots[0][1]
    grid = u0.grid
    X = grid.coordinates()
    c = np.broadcast_to(np.asarray(center, float), (grid.dimension,))
    mask = np.sqrt(np.sum((X - c) ** 2, axis=-1)) <= radius + 1e-9 * grid.h
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < grid.h * (1 - 1e-9)):
        raise InvalidParameterError("modulus radii must be at least h")
    w0 = modulus_estimate(u0, radii, mask)
    wj = (kernel_modulus(traj.kernel, radii) if traj.kernel is not None
          else np.zeros_like(radii))
    ref = np.maximum.reduce([w0, wj, radii, radii ** (p - 2)])
    ratios = []
    for t, u in traj.snapshots:
        ratios.append(float(np.max(modulus_estimate(u, radii, mask) / ref)))
    ratios = np.array(ratios)
    A = growth if growth is not None else 2.0 ** p * float(np.max(np.abs(u0.values))) ** (p - 1)
    times = traj.times - float(traj.meta.get("t0", 0.0))
    envelope = (ratios[0] + 1.0) * np.exp(A * times)
    ok = bool(np.all(np.isfinite(ratios)) and np.all(ratios <= envelope))
    return {"times": traj.times, "ratios": ratios, "envelope": envelope,
            "sup_ratio": float(np.max(ratios)), "bounded": ok,
            "reference": ref}


def slope_jump(f: GridFunction, x0: float, width: float) -> dict:
    """One-sided slopes of a 1D grid function at ``x0``.

    Least-squares lines are fitted on ``[x0 - width, x0]`` and
    ``[x0, x0 + width]``; a kink shows up as a jump that does not shrink
    with ``width``, while for a C^1 profile it is ``O(width)``.
    """
    if f.grid.dimension != 1:
        raise InvalidParameterError("slope_jump is one-dimensional")
    x = f.grid.axis
    i0 = f.grid.index_of(x0)
    k = max(2, int(round(width / f.grid.h)))
    left = slice(max(0, i0 - k), i0 + 1)
    right = slice(i0, min(len(x), i0 + k + 1))
    sl = np.polyfit(x[left], f.values[left], 1)[0]
    sr = np.polyfit(x[right], f.values[right], 1)[0]
    return {"left": float(sl), "right": float(sr), "jump": float(abs(sr - sl))}


def check_singularity_stationarity(traj: Trajectory, factor: float = 10.0,
                                   floor: float = 1e-6,
                                   window: int | None = 8) -> dict:
    """Track detected jumps across snapshots.

    Returns the maximum drift in cells of any detected jump from the nearest
    initial jump (``inf`` for a jump appearing without an initial
    counterpart), the height series at each initial jump, and whether every
    height series is nonincreasing.
    """
    u0 = traj.snapshots[0][1]
    if u0.grid.dimension != 1:
        raise InvalidParameterError("singular set tracking is one-dimensional")
    h = u0.grid.h
    x = u0.grid.axis
    # exterior values of Dirichlet and Neumann runs are not part of the solution
    reg = _region(traj) if traj.spec is not None else None
    initial = jump_detect(u0, factor, floor, window, reg)
    drift = 0.0
    new_jumps = []
    heights = {pos: [] for pos in initial}
    for t, u in traj.snapshots:
        found = jump_detect(u, factor, floor, window, reg)
        for pos in found:
            if initial:
                d = min(abs(pos - q) for q in initial) / h
            else:
                d = math.inf
            if d > 1 + 1e-9:
                new_jumps.append((t, pos))
            drift = max(drift, d)
        for pos in initial:
            i = int(round((pos - x[0]) / h - 0.5))
            heights[pos].append(abs(u.values[i + 1] - u.values[i]))
        if initial and not found:
            drift = math.inf
    nonincreasing = all(np.all(np.diff(hs) <= 1e-12 * max(1.0, hs[0]))
                        for hs in heights.values())
    persistent = all(len(jump_detect(u, factor, floor, window, reg)) >= len(initial)
                     for _, u in traj.snapshots)
    return {"initial": initial, "drift_cells": float(drift),
            "heights": {k: np.array(v) for k, v in heights.items()},
            "nonincreasing": bool(nonincreasing), "new_jumps": new_jumps,
            "persistent": bool(persistent),
            "passed": bool(drift <= 1 + 1e-9 and nonincreasing)}


def time_holder_seminorm(traj: Trajectory, x_probe, k: int, gamma: float,
                         stride: int = 1, window=None) -> float:
    """Hoelder seminorm in time of the k-th finite-difference derivative.

    Samples ``u(x_probe, t)`` on the snapshot times (taking every
    ``stride``-th), which must be uniformly spaced; the k-th difference
    quotient is centred between its nodes.  Returns
    ``sup |D^k u(t1) - D^k u(t2)| / |t1 - t2|^gamma``.
    """
    if not 0 <= k <= 3:
        raise InvalidParameterError("time derivatives are audited up to order 3")
    if not 0 < gamma <= 1:
        raise InvalidParameterError("gamma must lie in (0, 1]")
    grid = traj.snapshots[0][1].grid
    idx = tuple(grid.index_of(c) for c in np.atleast_1d(x_probe))
    ts = traj.times
    vals = np.array([u.values[idx] for _, u in traj.snapshots])
    if window is not None:
        sel = (ts >= window[0] - 1e-12) & (ts <= window[1] + 1e-12)
        ts, vals = ts[sel], vals[sel]
    ts, vals = ts[::stride], vals[::stride]
    if len(ts) < 4 * (k + 1):
        raise InsufficientResolutionError(
            f"{len(ts)} samples for order {k}; need at least {4 * (k + 1)}")
    steps = np.diff(ts)
    s = float(np.mean(steps))
    if np.max(np.abs(steps - s)) > 1e-6 * s:
        raise InsufficientResolutionError("snapshot times are not uniformly spaced")
    d = vals.copy()
    for _ in range(k):
        d = np.diff(d) / s
    tc = ts[:len(d)] + 0.5 * k * s
    if len(d) < 2:
        raise InsufficientResolutionError("too few differences for a seminorm")
    diff = np.abs(d[:, None] - d[None, :])
    dist = np.abs(tc[:, None] - tc[None, :])
    iu = np.triu_indices(len(d), 1)
    return float(np.max(diff[iu] / dist[iu] ** gamma))


def check_functional_inequality(u: GridFunction, stencil, spec, p: float,
                                q: float, constants: SmoothingConstants) -> dict:
    """Residual of the L2 bound in terms of the energy and the Lq norm.

    ``|u|_2^2 <= (K~ + 2) max(E^(1/(p-1)), E^(-(p-2)/(p-1))) + K |u|_q``.
    A nonzero ``u`` with zero energy is reported as degenerate.
    """
    if not p > 2:
        raise InvalidParameterError("the functional inequality needs p > 2")
    plan = make_plan(u.grid, stencil, spec)
    E = plan.energy(u.values, u.values, p)
    l2sq = lq_norm(u, 2, spec) ** 2
    nq = lq_norm(u, q, spec)
    if l2sq == 0:
        return {"residual": 0.0, "energy": E, "degenerate": False}
    if E <= 0:
        return {"residual": float("nan"), "energy": E, "degenerate": True}
    m = max(E ** (1 / (p - 1)), E ** (-(p - 2) / (p - 1)))
    rhs = (constants.k_tilde + 2) * m + constants.k_pqj * nq
    return {"residual": float(l2sq - rhs), "energy": E, "degenerate": False,
            "lhs": l2sq, "rhs": rhs}


# ---------------------------------------------------------------------------
# step-level logs used by the evolution observer

class PairLog:
    """Observer recording distances and ordering of two coupled states."""

    def __init__(self, measure: np.ndarray, region: np.ndarray,
                 qs=(1.0, 2.0, math.inf)):
        self.m = measure
        self.reg = region
        self.qs = tuple(qs)
        self.dist = {q: [] for q in self.qs}
        self.min_gap = []
        self.times = []

    def _record(self, t, a, b):
        d = np.abs(a - b)
        for q in self.qs:
            if np.isinf(q):
                self.dist[q].append(float(np.max(d[self.reg], initial=0.0)))
            else:
                self.dist[q].append(float(np.sum(self.m * d ** q) ** (1 / q)))
        self.min_gap.append(float(np.min((b - a)[self.reg])))
        self.times.append(t)

    def start(self, t, states):
        self._record(t, states[0], states[1])

    def __call__(self, t, dt, old, new):
        if not self.times:
            self._record(t - dt, old[0], old[1])
        self._record(t, new[0], new[1])

    def worst_increase(self) -> float:
        """Largest relative step-to-step increase of any distance."""
        worst = -math.inf
        for q, series in self.dist.items():
            s = np.array(series)
            if len(s) > 1:
                inc = np.diff(s) / np.maximum(1.0, s[:-1])
                worst = max(worst, float(np.max(inc)))
        return worst


class EviLog:
    """Observer evaluating the discrete EVI against fixed probe states."""

    def __init__(self, plan, p: float, probes: Sequence[np.ndarray]):
        self.plan = plan
        self.p = p
        self.probes = [np.asarray(w, float) for w in probes]
        self.f_probes = [plan.energy(w, w, p) / p for w in self.probes]
        self.residuals = []

    def __call__(self, t, dt, old, new):
        u, v = old[0], new[0]
        m = self.plan.measure
        fv = self.plan.energy(v, v, self.p) / self.p
        worst = -math.inf
        for w, fw in zip(self.probes, self.f_probes):
            lhs = (np.sum(m * (v - w) ** 2) - np.sum(m * (u - w) ** 2)) / (2 * dt)
            worst = max(worst, float(lhs - (fw - fv)))
        self.residuals.append(worst)

    @property
    def worst(self) -> float:
        return max(self.residuals, default=-math.inf)


class ChainObserver:
    def __init__(self, *observers):
        self.observers = [o for o in observers if o is not None]

    def __call__(self, t, dt, old, new):
        for o in self.observers:
            o(t, dt, old, new)
