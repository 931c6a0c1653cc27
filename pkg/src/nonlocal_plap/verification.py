"""Built-in verification suites shared by the command line and the tests.

Each suite returns a JSON-ready dict ``{"suite", "seed", "passed",
"checks": [...]}``; every check carries its residual and tolerance.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .diagnostics import PairLog
from .evolve import StepperConfig, evolve, evolve_coupled
from .grid import Grid, GridFunction, ProblemSpec
from .kernel import discrete_weights, make_kernel, make_step_kernel
from .operator import inequality_suite, make_plan
from .oracle import linear_evolve
from .presets import make_datum

__all__ = ["SUITES", "run_suite", "verify_inequalities", "verify_oracle",
           "verify_invariants", "oracle_discrepancy", "pair_audit"]

INEQUALITY_PS = (1.5, 2.0, 2.5, 3.0, 4.0)


def _check(name, residual, tolerance, **extra):
    residual = float(residual)
    ok = bool(np.isfinite(residual) and residual <= tolerance)
    return dict(name=name, passed=ok, residual=residual, tolerance=tolerance, **extra)


def _suite(name, seed, checks, started):
    return {"suite": name, "seed": seed, "passed": all(c["passed"] for c in checks),
            "seconds": round(time.perf_counter() - started, 3), "checks": checks}


def verify_inequalities(seed: int = 0, n_samples: int = 100_000) -> dict:
    """Scalar inequalities on uniform samples from ``[-5, 5]^2`` for each p."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = []
    for p in INEQUALITY_PS:
        samples = rng.uniform(-5.0, 5.0, (n_samples, 2))
        for name, r in inequality_suite(samples, p).items():
            checks.append(_check(f"{name}[p={p:g}]", r["residual"], 1e-12,
                                 count=int(r["count"])))
    return _suite("inequalities", seed, checks, started)


def oracle_discrepancy(h: float = 1 / 128, dt: float = 1e-3, dt_fine: float = 1e-4,
                       T: float = 1.0, scheme: str = "explicit") -> float:
    """Max-norm gap between the generic solver at ``p = 2`` and the linear oracle.

    1D Dirichlet problem on ``(-2, 2)`` with the step kernel of radius 1/2
    and the indicator of ``[-1, 1]`` as datum.
    """
    grid = Grid(1, 2.5, h)
    spec = ProblemSpec("dirichlet", [(-2.0, 2.0)])
    kernel = make_step_kernel(0.5)
    stencil = discrete_weights(kernel, h)
    u0 = make_datum(grid, "indicator", spec, a=-1.0, b=1.0)
    cfg = StepperConfig(scheme=scheme, cfl_theta=1.0, dt_max=dt)
    u = evolve(u0, spec, kernel, 2.0, T, cfg, stencil).final
    ref = linear_evolve(u0, stencil, spec, T, dt_fine)
    return float(np.max(np.abs(u.values - ref.values)))


def verify_oracle(seed: int = 0) -> dict:
    started = time.perf_counter()
    gap = oracle_discrepancy()
    checks = [_check("linear_oracle_explicit", gap, 5e-3)]
    return _suite("oracle", seed, checks, started)


def pair_audit(p: float, n_pairs: int = 20, seed: int = 0, h: float = 1 / 32,
               T: float = 0.5, dt: float = 0.05) -> dict:
    """Contraction and comparison on random ordered pairs (proximal scheme).

    Returns the worst relative step increase of ``|u - v|_q`` over
    ``q in {1, 2, inf}`` and the most negative ``v - u`` over all pairs.
    """
    rng = np.random.default_rng(seed)
    grid = Grid(1, 1.5, h)
    spec = ProblemSpec("dirichlet", [(-1.0, 1.0)])
    kernel = make_step_kernel(0.5)
    stencil = discrete_weights(kernel, h)
    plan = make_plan(grid, stencil, spec)
    cfg = StepperConfig(scheme="proximal", dt_max=dt, prox_tol=1e-12)
    worst_inc, worst_gap = -math.inf, math.inf
    for _ in range(n_pairs):
        u = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
        v = u + np.where(plan.region, rng.uniform(0, 0.5, grid.shape), 0.0)
        log = PairLog(plan.measure, plan.region)
        log.start(0.0, [u, v])
        evolve_coupled([GridFunction(grid, u), GridFunction(grid, v)], spec, kernel,
                       p, T, cfg, stencil, observer=log)
        worst_inc = max(worst_inc, log.worst_increase())
        worst_gap = min(worst_gap, min(log.min_gap))
    return {"worst_increase": worst_inc, "min_gap": worst_gap}


def verify_invariants(seed: int = 0) -> dict:
    """Exact discrete identities and the pairwise order properties."""
    started = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = []
    cases = [("cauchy", None), ("dirichlet", [(-1.0, 1.0)]), ("neumann", [(-1.0, 1.0)])]
    for family in ("step", "power", "bump"):
        kernel = make_kernel(family, 0.5)
        h = 1 / 32
        stencil = discrete_weights(kernel, h)
        off = {tuple(d): w for d, w in zip(stencil.offsets, stencil.weights)}
        asym = max(abs(w - off.get(tuple(-np.asarray(d)), math.inf))
                   for d, w in off.items())
        checks.append(_check(f"stencil_symmetry[{family}]", asym, 0.0))
        grid = Grid(1, 1.5, h)
        for variant, dom in cases:
            spec = ProblemSpec(variant, dom, 2 if variant == "cauchy" else 1)
            plan = make_plan(grid, stencil, spec)
            for p in (1.5, 2.0, 3.0, 4.0):
                u = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
                v = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
                lhs = plan.energy(u, v, p)
                rhs = -float(np.sum(plan.measure * plan.apply(u, p) * v))
                ibp = abs(lhs - rhs) / max(abs(lhs), abs(rhs))
                odd = float(np.max(np.abs(plan.apply(-u, p) + plan.apply(u, p))))
                scale = max(float(np.max(np.abs(plan.apply(u, p)))), 1.0)
                tag = f"{family},{variant},p={p:g}"
                checks.append(_check(f"integration_by_parts[{tag}]", ibp, 1e-12))
                checks.append(_check(f"oddness[{tag}]", odd / scale, 1e-12))

    # mass conservation along full Neumann runs
    grid = Grid(1, 1.5, 1 / 32)
    spec = ProblemSpec("neumann", [(-1.0, 1.0)])
    kernel = make_step_kernel(0.5)
    for p, scheme in ((3.0, "explicit"), (1.5, "proximal")):
        u0 = make_datum(grid, "random", spec, seed=seed, nonnegative=True)
        traj = evolve(u0, spec, kernel, p, 1.0,
                      StepperConfig(scheme=scheme, dt_max=0.05))
        mass = traj.column("mass")
        drift = float(np.max(np.abs(mass - mass[0]))) / abs(mass[0])
        checks.append(_check(f"mass_conservation[{scheme},p={p:g}]", drift, 1e-12))

    for p in (1.5, 3.0):
        res = pair_audit(p, n_pairs=20, seed=seed)
        checks.append(_check(f"contraction[p={p:g}]", res["worst_increase"], 1e-10))
        checks.append(_check(f"comparison[p={p:g}]", -res["min_gap"], 1e-10))
    return _suite("invariants", seed, checks, started)


SUITES = {"inequalities": verify_inequalities, "oracle": verify_oracle,
          "invariants": verify_invariants}


def run_suite(name: str, seed: int = 0) -> dict:
    """Run one suite, or every suite for ``name == "all"``."""
    if name == "all":
        started = time.perf_counter()
        parts = [fn(seed) for fn in SUITES.values()]
        return {"suite": "all", "seed": seed,
                "passed": all(s["passed"] for s in parts),
                "seconds": round(time.perf_counter() - started, 3), "suites": parts}
    return SUITES[name](seed)
