"""Command line: ``nlplap run | sweep | verify | figures``.

Exit codes: 0 when every applicable audit passes, 1 on an audit failure,
2 on a configuration error.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import config_from_mapping, parse_config
from .diagnostics import slope_jump
from .errors import ConfigError, NonlocalPLapError
from .presets import FIGURE_PRESETS
from .runner import run_experiment
from .verification import SUITES, run_suite

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG = 0, 1, 2
WORKERS_ENV = "NLPLAP_WORKERS"


def _print_config_error(source, err):
    print(f"configuration error in {source}:", file=sys.stderr)
    for e in err.errors:
        print(f"  - {e}", file=sys.stderr)


def _report(result, quiet=False):
    if not quiet:
        print(result.report.summary())
    if result.output:
        print(f"outputs written to {result.output}")
    if not result.report.passed:
        print("FAILED: " + ", ".join(result.report.failures), file=sys.stderr)


def cmd_run(args) -> int:
    try:
        cfg = parse_config(args.config)
    except ConfigError as e:
        _print_config_error(args.config, e)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    result = run_experiment(cfg, args.output)
    _report(result, args.quiet)
    return result.exit_code


def _sweep_one(path, output_root):
    """Worker: returns (path, exit code, failing checks or config errors)."""
    try:
        cfg = parse_config(path)
    except ConfigError as e:
        return path, EXIT_CONFIG, e.errors
    out = cfg.output
    if output_root:
        out = os.path.join(output_root, os.path.splitext(os.path.basename(path))[0])
    try:
        result = run_experiment(cfg, out)
    except NonlocalPLapError as e:
        return path, EXIT_AUDIT, [f"{type(e).__name__}: {e}"]
    return path, result.exit_code, result.report.failures


def cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.pattern))
    if not paths:
        print(f"no configuration matches {args.pattern!r}", file=sys.stderr)
        return EXIT_CONFIG
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "0")) or os.cpu_count() or 1
    workers = max(1, min(workers, len(paths)))
    if workers == 1:
        outcomes = [_sweep_one(p, args.output) for p in paths]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_one, paths, [args.output] * len(paths)))
    code = EXIT_OK
    for path, rc, problems in outcomes:
        status = {EXIT_OK: "pass", EXIT_AUDIT: "FAIL", EXIT_CONFIG: "CONFIG"}[rc]
        print(f"{status:6s} {path}" + (f": {'; '.join(problems)}" if problems else ""))
        code = max(code, rc)
    return code


def cmd_verify(args) -> int:
    summary = run_suite(args.suite, args.seed or 0)
    text = json.dumps(summary, indent=2)
    if args.json:
        with open(args.json, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if summary["passed"] else EXIT_AUDIT


def figure_properties(name, traj) -> dict:
    """Qualitative properties of a figure preset run near the kink point 1.5.

    ``fig1`` is expected to keep a kink (slope jump that does not shrink
    with the fitting width); ``fig2`` a smooth profile.
    """
    jumps = []
    for t, u in traj.snapshots:
        if t < 0.5:
            continue
        j1 = slope_jump(u, 1.5, 0.05)["jump"]
        j2 = slope_jump(u, 1.5, 0.1)["jump"]
        jumps.append((t, j1, j1 / j2 if j2 > 0 else np.inf))
    if name == "fig1":
        ok = all(j > 0.1 and r > 0.6 for _, j, r in jumps)
    else:
        ok = all(j < 0.02 and r < 0.6 for _, j, r in jumps)
    return {"slope_jumps": jumps, "passed": bool(ok)}


def cmd_figures(args) -> int:
    code = EXIT_OK
    for name, mapping in FIGURE_PRESETS.items():
        cfg = config_from_mapping(dict(mapping), f"<preset {name}>")
        out = os.path.join(args.output, name)
        result = run_experiment(cfg, out)
        props = figure_properties(name, result.trajectory)
        print(f"[{name}] audits {'pass' if result.report.passed else 'FAIL'}; "
              f"kink/smoothness at x = 1.5 {'pass' if props['passed'] else 'FAIL'}")
        for t, j, r in props["slope_jumps"]:
            print(f"    t = {t:.3g}: slope jump {j:.4f} (width ratio {r:.3f})")
        if not args.quiet:
            print(result.report.summary())
        if not (result.report.passed and props["passed"]):
            code = EXIT_AUDIT
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nlplap",
        description="Simulate and audit the nonlocal p-Laplacian evolution.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int, help="override the configured seed")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every configuration matching a glob")
    s.add_argument("pattern")
    s.add_argument("-o", "--output", help="root directory; one subdirectory per config")
    s.add_argument("-j", "--workers", type=int,
                   help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run a built-in verification suite")
    v.add_argument("suite", choices=list(SUITES) + ["all"])
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--json", help="also write the summary to this file")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("figures", help="run the two built-in figure presets")
    f.add_argument("-o", "--output", default="figures")
    f.add_argument("-q", "--quiet", action="store_true")
    f.set_defaults(func=cmd_figures)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        _print_config_error(getattr(args, "config", "input"), e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
