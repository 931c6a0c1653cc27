"""The ten acceptance criteria, each at its stated tolerance.

Every test records one pass/fail line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""
import time

import numpy as np

from nonlocal_plap.cli import figure_properties
from nonlocal_plap.config import config_from_mapping
from nonlocal_plap.diagnostics import (EviLog, bc_tolerance, check_benilan_crandall,
                                       check_modulus_preservation,
                                       check_singularity_stationarity, check_smoothing,
                                       check_time_monotonicity, decay_rate_fit,
                                       smoothing_constants, time_holder_seminorm)
from nonlocal_plap.evolve import StepperConfig, evolve
from nonlocal_plap.grid import Grid, ProblemSpec
from nonlocal_plap.kernel import discrete_weights, make_step_kernel
from nonlocal_plap.operator import make_plan
from nonlocal_plap.presets import FIGURE_PRESETS, make_datum
from nonlocal_plap.runner import run_experiment
from nonlocal_plap.verification import (oracle_discrepancy, pair_audit,
                                        verify_inequalities, verify_invariants)

KERNEL = make_step_kernel(0.5)


def test_01_inequality_suite(acceptance):
    start = time.perf_counter()
    summary = verify_inequalities(seed=0, n_samples=100_000)
    elapsed = time.perf_counter() - start
    worst = max(c["residual"] for c in summary["checks"])
    ok = summary["passed"] and elapsed < 5.0
    acceptance(1, "scalar inequalities, 1e5 samples per p", ok,
               f"{len(summary['checks'])} checks, worst residual {worst:.2e} "
               f"(tol 1e-12), {elapsed:.2f} s (limit 5 s)")
    assert ok


def test_02_discrete_structure_exact(acceptance):
    summary = verify_invariants(seed=0)
    exact = [c for c in summary["checks"]
             if c["name"].split("[")[0] in ("integration_by_parts", "oddness",
                                            "stencil_symmetry", "mass_conservation")]
    worst = max(c["residual"] for c in exact)
    ok = all(c["passed"] for c in exact) and worst <= 1e-12
    acceptance(2, "integration by parts, mass, stencil symmetry, oddness", ok,
               f"{len(exact)} checks, worst relative residual {worst:.2e} (tol 1e-12)")
    assert ok


def test_03_linear_oracle(acceptance):
    start = time.perf_counter()
    gap = oracle_discrepancy(h=1 / 128, dt=1e-3, dt_fine=1e-4, T=1.0)
    elapsed = time.perf_counter() - start
    ok = gap <= 5e-3 and elapsed < 30.0
    acceptance(3, "p = 2 generic solver vs linear oracle", ok,
               f"max gap {gap:.2e} (tol 5e-3), {elapsed:.2f} s (limit 30 s)")
    assert ok


def test_04_contraction_and_comparison(acceptance):
    rows = {p: pair_audit(p, n_pairs=20, seed=0) for p in (1.5, 3.0)}
    worst_inc = max(r["worst_increase"] for r in rows.values())
    worst_gap = min(r["min_gap"] for r in rows.values())
    ok = worst_inc <= 1e-10 and worst_gap >= -1e-10
    acceptance(4, "Lq contraction and comparison, 20 pairs, p in {1.5, 3}", ok,
               f"largest step increase {worst_inc:.2e}, smallest v-u {worst_gap:.2e} "
               f"(slack 1e-10)")
    assert ok


def test_05_smoothing_with_explicit_constants(acceptance):
    grid = Grid(1, 4.0, 1 / 64)
    spec = ProblemSpec("cauchy", padding_layers=2)
    u0 = make_datum(grid, "spike", spec, mass=1.0)
    cfg = StepperConfig("explicit", dt_max=0.01,
                        snapshot_times=np.geomspace(1e-3, 2.0, 25))
    tr = evolve(u0, spec, KERNEL, 3.0, 2.0, cfg)
    const = smoothing_constants(3.0, 1.0, KERNEL.j_inf)
    out = check_smoothing(tr, const, q=1.0)
    ok = (out["worst"] <= 0 and out["two_regime_worst"] <= 0
          and len(out["residuals"]) == len(tr.snapshots) - 1)
    acceptance(5, "Lq-Linf smoothing bound, p = 3, q = 1, unit spike", ok,
               f"worst residual {out['worst']:.3e}, two-regime {out['two_regime_worst']:.3e}, "
               f"t* = {out['t_star']:.2e}, {len(out['residuals'])} snapshots, "
               f"boundary activity {tr.meta['boundary_activity']:.1e}")
    assert ok


def test_06_benilan_crandall_and_time_monotonicity(acceptance):
    grid = Grid(1, 3.0, 1 / 64)
    spec = ProblemSpec("cauchy", padding_layers=2)
    u0 = make_datum(grid, "figure", spec)
    cfg = StepperConfig("explicit", dt_max=0.01,
                        snapshot_times=np.linspace(0.05, 2.0, 40))
    tr = evolve(u0, spec, KERNEL, 3.0, 2.0, cfg)
    tol = bc_tolerance(tr)
    bc = check_benilan_crandall(tr)
    tm = check_time_monotonicity(tr)
    ok = bc >= -tol and tm >= -tol
    acceptance(6, "Benilan-Crandall and time monotonicity, p = 3", ok,
               f"min slack {bc:.3e}, min increment {tm:.3e} (tol -{tol:.2e})")
    assert ok


def test_07_asymptotic_decay(acceptance):
    start = time.perf_counter()
    grid = Grid(1, 1.5, 1 / 64)
    snaps = np.geomspace(1.0, 1e3, 31)
    cfg = StepperConfig("explicit", dt_max=5.0, snapshot_times=snaps)
    fits = {}
    for variant in ("dirichlet", "neumann"):
        spec = ProblemSpec(variant, [(-1.0, 1.0)])
        a, b = (-0.5, 0.5) if variant == "dirichlet" else (-0.75, 0.25)
        u0 = make_datum(grid, "indicator", spec, a=a, b=b)
        tr = evolve(u0, spec, KERNEL, 3.0, 1e3, cfg)
        fits[variant] = decay_rate_fit(tr, (10.0, 1e3), variant)
    elapsed = time.perf_counter() - start
    threshold = -1 / 3 + 0.15
    ok = elapsed < 300 and all(
        f["slope"] <= threshold and np.isfinite(f["weighted_sup"]) for f in fits.values())
    acceptance(7, "large-time decay, p = 3, t in [10, 1000]", ok,
               "; ".join(f"{k}: slope {f['slope']:.3f}, sup t^(1/3)|u| "
                         f"{f['weighted_sup']:.3g}" for k, f in fits.items())
               + f" (threshold {threshold:.3f}), {elapsed:.1f} s")
    assert ok


def _preset_run(name):
    cfg = config_from_mapping(dict(FIGURE_PRESETS[name]), name)
    return run_experiment(cfg, write=False).trajectory


def test_08_figure_presets(acceptance):
    h = 1 / 128
    fig1 = _preset_run("fig1")
    st1 = check_singularity_stationarity(fig1)
    at_pm1 = (len(st1["initial"]) == 2
              and all(abs(abs(x) - 1.0) <= h for x in st1["initial"]))
    mod1 = check_modulus_preservation(fig1, [h, 2 * h, 4 * h, 8 * h], 1.5, 0.25)
    kink1 = figure_properties("fig1", fig1)
    ok1 = (at_pm1 and st1["persistent"] and st1["drift_cells"] <= 1
           and st1["nonincreasing"] and mod1["bounded"] and kink1["passed"])

    fig2 = _preset_run("fig2")
    st2 = check_singularity_stationarity(fig2)
    smooth2 = figure_properties("fig2", fig2)
    ok2 = not st2["new_jumps"] and smooth2["passed"]
    heights = st1["heights"][st1["initial"][-1]] if st1["initial"] else []
    acceptance(8, "figure presets", ok1 and ok2,
               f"fig1 jumps at {['%.4f' % x for x in st1['initial']]}, drift "
               f"{st1['drift_cells']:g} cells, heights {np.round(heights, 3).tolist()}, "
               f"modulus ratio <= {mod1['sup_ratio']:.3f}, slope jump at 1.5 "
               f"{kink1['slope_jumps'][-1][1]:.3f}; fig2 new jumps {len(st2['new_jumps'])}, "
               f"slope jump at 1.5 {smooth2['slope_jumps'][-1][1]:.4f}")
    assert ok1 and ok2


def test_09_evi_residual(acceptance):
    grid = Grid(1, 1.5, 1 / 64)
    spec = ProblemSpec("dirichlet", [(-1.0, 1.0)])
    stencil = discrete_weights(KERNEL, grid.h)
    plan = make_plan(grid, stencil, spec)
    rng = np.random.default_rng(0)
    u0 = make_datum(grid, "figure", spec)
    probes = [u0.values, np.zeros(grid.shape), -0.5 * u0.values,
              np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0),
              make_datum(grid, "bump", spec, width=0.7).values]
    log = EviLog(plan, 3.0, probes)
    evolve(u0, spec, KERNEL, 3.0, 1.0, StepperConfig("proximal", dt_max=0.1),
           stencil, observer=log)
    ok = len(log.residuals) == 10 and log.worst <= 1e-8
    acceptance(9, "EVI on a 10-step proximal run, 5 probes", ok,
               f"{len(log.residuals)} steps, worst residual {log.worst:.3e} (slack 1e-8)")
    assert ok


def test_10_time_holder_estimator_stability(acceptance):
    grid = Grid(1, 1.5, 1 / 64)
    spec = ProblemSpec("dirichlet", [(-1.0, 1.0)])
    u0 = make_datum(grid, "figure", spec)
    dt = 1e-3
    times = np.arange(1, 1001) * dt
    cfg = StepperConfig("proximal", dt_max=dt, prox_tol=1e-12, snapshot_times=times)
    tr = evolve(u0, spec, KERNEL, 2.5, 1.0, cfg)
    window = (0.1, 1.0)
    fine = time_holder_seminorm(tr, 0.5, 2, 0.5, stride=1, window=window)
    coarse = time_holder_seminorm(tr, 0.5, 2, 0.5, stride=2, window=window)
    change = abs(coarse - fine) / fine
    ok = change < 0.2
    acceptance(10, "time Hoelder estimator, p = 2.5, k = 2, gamma = 1/2", ok,
               f"seminorm {fine:.4g} at step {dt:g}, {coarse:.4g} at {2 * dt:g}: "
               f"change {100 * change:.2f}% (limit 20%)")
    assert ok
