"""Run one configured experiment: evolve, audit and write the outputs."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .diagnostics import (ChainObserver, CheckResult, DiagnosticsReport, EviLog,
                          PairLog, bc_tolerance, check_benilan_crandall,
                          check_functional_inequality, check_modulus_preservation,
                          check_singularity_stationarity, check_smoothing,
                          check_time_monotonicity, check_ut_smoothing,
                          decay_rate_fit, smoothing_constants, time_holder_seminorm)
from .errors import NonlocalPLapError
from .evolve import TruncationWarning, evolve_coupled
from .grid import GridFunction, region_weights
from .io import write_checkpoint, write_trajectory
from .kernel import discrete_weights
from .operator import make_plan
from .presets import make_datum

__all__ = ["RunResult", "run_experiment", "companion_datum", "audit", "write_outputs"]

TOL = 1e-8          # one-sided inequality audits
STEP_SLACK = 1e-10  # step-to-step monotone quantities
EXACT = 1e-12       # identities that hold to rounding


@dataclass
class RunResult:
    config: RunConfig
    trajectory: object
    companion: object
    report: DiagnosticsReport
    output: str | None

    @property
    def exit_code(self) -> int:
        return 0 if self.report.passed else 1


def companion_datum(u0: GridFunction, spec, rng, amplitude=None) -> GridFunction:
    """``u0`` plus a nonnegative random perturbation on the support of ``u0``.

    The companion is ordered above ``u0`` and shares its support, so a
    Cauchy run needs no extra padding.
    """
    support = (u0.values != 0) & (region_weights(u0.grid, spec) > 0)
    if amplitude is None:
        amplitude = 0.1 * max(float(np.max(np.abs(u0.values))), 1e-3)
    bump = amplitude * rng.uniform(0.0, 1.0, u0.grid.shape)
    return u0.with_values(u0.values + np.where(support, bump, 0.0))


def _evi_probes(u0, v0, plan, rng):
    reg = plan.region
    scale = max(float(np.max(np.abs(u0.values))), 1.0)
    noise = np.where(reg, scale * rng.uniform(-1, 1, u0.grid.shape), 0.0)
    return [u0.values, v0.values, np.zeros(u0.grid.shape), noise, -0.5 * u0.values]


def _monotone_increase(series):
    s = np.asarray(series, float)
    if len(s) < 2:
        return -math.inf
    return float(np.max(np.diff(s) / np.maximum(1.0, np.abs(s[:-1]))))


def audit(traj, cfg: RunConfig, pair: PairLog | None = None,
          evi: EviLog | None = None, rng=None, truncation_warned=False) -> DiagnosticsReport:
    """Every audit applicable to ``traj``; the rest are recorded as skipped."""
    rng = rng or np.random.default_rng(cfg.seed)
    rep = DiagnosticsReport(seed=cfg.seed)
    p = cfg.p
    spec = traj.spec
    diag = cfg.diagnostics
    grid = traj.snapshots[0][1].grid
    plan = make_plan(grid, traj.stencil, spec)
    q = float(diag.get("q", 1.0))

    def guarded(name, fn):
        try:
            rep.add(fn())
        except NonlocalPLapError as e:
            rep.add(CheckResult.skip(name, str(e)))

    if pair is not None and len(pair.times) > 1:
        rep.add(CheckResult.judge("contraction", pair.worst_increase(), STEP_SLACK,
                                  "relative step increase of |u-v|_q, q in {1,2,inf}"))
        rep.add(CheckResult.judge("comparison", -min(pair.min_gap), STEP_SLACK,
                                  "ordered data stay ordered"))
    else:
        for name in ("contraction", "comparison"):
            rep.add(CheckResult.skip(name, "no companion trajectory"))
    rep.add(CheckResult.judge("linf_monotone", _monotone_increase(traj.column("linf")),
                              STEP_SLACK))
    if spec.variant == "neumann":
        mass = traj.column("mass")
        drift = float(np.max(np.abs(mass - mass[0]))) / max(1.0, abs(mass[0]))
        rep.add(CheckResult.judge("mass_conservation", drift, EXACT))
        kappa = float(traj.meta["kappa"])
        rep.add(CheckResult.judge("kernel_condition", -kappa, 0.0,
                                  f"kappa = {kappa:.6g}", kappa=kappa))
    else:
        rep.add(CheckResult.skip("mass_conservation", "Neumann problems only"))
        rep.add(CheckResult.skip("kernel_condition", "Neumann problems only"))
    rep.add(CheckResult.judge("energy_dissipation",
                              _monotone_increase(traj.column("energy")), STEP_SLACK))

    # integration by parts at the final state against a random test function
    u = traj.final.values
    v = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
    lhs = plan.energy(u, v, p)
    rhs = -float(np.sum(plan.measure * plan.apply(u, p) * v))
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    rep.add(CheckResult.judge("integration_by_parts", rel if lhs or rhs else 0.0, EXACT))

    if p > 2:
        const = smoothing_constants(p, q, traj.kernel.j_inf)
        sm = check_smoothing(traj, const, q)
        if len(sm["times"]):
            rep.add(CheckResult.judge("smoothing", sm["worst"], TOL, f"q = {q:g}"))
            rep.add(CheckResult.judge("smoothing_two_regime", sm["two_regime_worst"],
                                      TOL, f"t* = {sm['t_star']:.4g}"))
        else:
            for name in ("smoothing", "smoothing_two_regime"):
                rep.add(CheckResult.skip(name, "no snapshot after t0"))
        worst_fi = -math.inf
        degenerate = False
        for _, s in traj.snapshots:
            fi = check_functional_inequality(s, traj.stencil, spec, p, q, const)
            degenerate |= fi["degenerate"]
            if not fi["degenerate"]:
                worst_fi = max(worst_fi, fi["residual"])
        if degenerate and worst_fi == -math.inf:
            rep.add(CheckResult.skip("functional_inequality",
                                     "nonzero state with zero energy"))
        else:
            rep.add(CheckResult.judge("functional_inequality", worst_fi, TOL,
                                      "degenerate states excluded" if degenerate else ""))
        tol_bc = bc_tolerance(traj)
        guarded("benilan_crandall", lambda: CheckResult.judge(
            "benilan_crandall", -check_benilan_crandall(traj), tol_bc))
        guarded("time_monotonicity", lambda: CheckResult.judge(
            "time_monotonicity", -check_time_monotonicity(traj), tol_bc))
    else:
        for name in ("smoothing", "smoothing_two_regime", "functional_inequality",
                     "benilan_crandall", "time_monotonicity"):
            rep.add(CheckResult.skip(name, f"needs p > 2 (p = {p:g})"))
    rep.add(CheckResult.judge("ut_smoothing", check_ut_smoothing(traj), TOL))

    if "decay_window" in diag and spec.variant in ("dirichlet", "neumann"):
        def decay():
            fit = decay_rate_fit(traj, diag["decay_window"], spec.variant)
            if fit["exact_equilibrium"]:
                return CheckResult.judge("decay_rate", 0.0, 0.0, "exact equilibrium")
            ok_sup = bool(np.isfinite(fit["weighted_sup"]))
            res = fit["slope"] - fit["threshold"] if ok_sup else math.inf
            return CheckResult.judge("decay_rate", res, 0.0,
                                     f"slope {fit['slope']:.4f}, "
                                     f"sup t^(1/p)|u| = {fit['weighted_sup']:.4g}",
                                     slope=fit["slope"])
        guarded("decay_rate", decay)
    else:
        rep.add(CheckResult.skip("decay_rate",
                                 "needs diagnostics.decay_window on a bounded domain"))

    if "modulus_center" in diag:
        def modulus():
            radius = float(diag.get("modulus_radius", 0.25))
            radii = diag.get("modulus_radii") or [grid.h * k for k in (1, 2, 4, 8)]
            mod = check_modulus_preservation(traj, radii, diag["modulus_center"], radius)
            res = float(np.max(mod["ratios"] - mod["envelope"]))
            return CheckResult.judge("modulus_preservation", res, 0.0,
                                     f"sup ratio {mod['sup_ratio']:.4g}")
        guarded("modulus_preservation", modulus)
    else:
        rep.add(CheckResult.skip("modulus_preservation",
                                 "needs diagnostics.modulus_center"))

    if cfg.datum == "random":
        rep.add(CheckResult.skip("singularity_stationarity",
                                 "random data are discontinuous on their whole support"))
    elif grid.dimension == 1:
        def stationarity():
            st = check_singularity_stationarity(
                traj, float(diag.get("jump_factor", 10.0)), 1e-6,
                int(diag.get("jump_window", 8)) or None)
            res = st["drift_cells"] - 1.0
            if not st["nonincreasing"]:
                res = max(res, 1.0)
            return CheckResult.judge("singularity_stationarity", res, 1e-9,
                                     f"{len(st['initial'])} jump(s), drift "
                                     f"{st['drift_cells']:g} cells")
        guarded("singularity_stationarity", stationarity)
    else:
        rep.add(CheckResult.skip("singularity_stationarity", "one-dimensional only"))

    if "holder_probe" in diag:
        def holder():
            k = int(diag.get("holder_order", 2))
            gamma = float(diag.get("holder_gamma", 0.5))
            s1 = time_holder_seminorm(traj, diag["holder_probe"], k, gamma, 1)
            s2 = time_holder_seminorm(traj, diag["holder_probe"], k, gamma, 2)
            change = abs(s2 - s1) / max(abs(s1), 1e-300)
            return CheckResult.judge("time_holder", change, 0.2,
                                     f"seminorm {s1:.4g} vs {s2:.4g} at double step")
        guarded("time_holder", holder)
    else:
        rep.add(CheckResult.skip("time_holder", "needs diagnostics.holder_probe"))

    if evi is not None and evi.residuals:
        rep.add(CheckResult.judge("evi", evi.worst, TOL,
                                  f"{len(evi.probes)} probes, {len(evi.residuals)} steps"))
    else:
        rep.add(CheckResult.skip("evi", "proximal scheme only"))

    if spec.variant == "cauchy":
        act = float(traj.meta["boundary_activity"])
        rep.add(CheckResult.judge("truncation", act, 1e-6,
                                  "max |u| within one kernel radius of the box edge"
                                  + ("; warned during the run" if truncation_warned else "")))
    else:
        rep.add(CheckResult.skip("truncation", "Cauchy problems only"))
    enabled = _enabled_checks(diag)
    if enabled is not None:
        for name, r in list(rep.results.items()):
            if name not in enabled and r.status != "skipped":
                rep.add(CheckResult.skip(name, "disabled by diagnostics.enable"))
    return rep.complete()


def _enabled_checks(diag) -> set | None:
    """Names listed in ``diagnostics.enable``; None means every check."""
    raw = diag.get("enable", "all")
    names = {s.strip() for s in raw.split(",") if s.strip()}
    return None if not names or "all" in names else names


def run_experiment(cfg: RunConfig, output: str | None = None,
                   write: bool = True) -> RunResult:
    """Evolve the configured datum together with an ordered companion and audit.

    Parameters
    ----------
    cfg : RunConfig
    output : str, optional
        Output directory; defaults to ``cfg.output``.
    write : bool
        Skip all file output when false.
    """
    rng = np.random.default_rng(cfg.seed)
    grid, spec, kernel = cfg.grid(), cfg.spec(), cfg.kernel()
    params = dict(cfg.datum_params)
    if cfg.datum == "random":
        params.setdefault("seed", cfg.seed)
    u0 = make_datum(grid, cfg.datum, spec, **params)
    stencil = discrete_weights(kernel, grid.h)
    plan = make_plan(grid, stencil, spec)
    use_companion = cfg.diagnostics.get("companion", "on") not in ("off", "none", "false")
    data = [u0]
    pair = None
    if use_companion:
        v0 = companion_datum(u0, spec, rng)
        data.append(v0)
        pair = PairLog(plan.measure, plan.region)
    evi = None
    if cfg.stepper.scheme == "proximal":
        n_probes = int(cfg.diagnostics.get("evi_probes", 5))
        probes = _evi_probes(u0, data[-1], plan, rng)[:n_probes]
        evi = EviLog(plan, cfg.p, probes)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", TruncationWarning)
        trajs = evolve_coupled(data, spec, kernel, cfg.p, cfg.T, cfg.stepper,
                               stencil, 0.0, ChainObserver(pair, evi))
    warned = any(issubclass(w.category, TruncationWarning) for w in caught)
    traj = trajs[0]
    report = audit(traj, cfg, pair, evi, rng, warned)
    out = output or cfg.output
    if write:
        write_outputs(out, cfg, traj, report)
    return RunResult(cfg, traj, trajs[1] if len(trajs) > 1 else None, report,
                     out if write else None)


def write_outputs(directory, cfg: RunConfig, traj, report: DiagnosticsReport):
    """Snapshots, series, the report (CSV and text) and a restart checkpoint."""
    os.makedirs(directory, exist_ok=True)
    write_trajectory(directory, traj)
    report.to_csv(os.path.join(directory, "report.csv"))
    with open(os.path.join(directory, "report.txt"), "w") as fh:
        fh.write(report.summary() + "\n")
    with open(os.path.join(directory, "config.txt"), "w") as fh:
        for k, v in sorted(cfg.as_mapping().items()):
            fh.write(f"{k} = {v}\n")
    t_final, u_final = traj.snapshots[-1]
    write_checkpoint(os.path.join(directory, "checkpoint.csv"), u_final, t_final,
                     cfg.p, traj.kernel, traj.spec, cfg.stepper)

