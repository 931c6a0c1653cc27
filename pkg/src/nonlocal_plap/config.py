"""Plain-text ``key = value`` run configuration.

Every problem found while parsing is collected and reported together in
one :class:`ConfigError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import CHECKS
from .errors import ConfigError, NonlocalPLapError
from .evolve import SCHEMES, StepperConfig
from .grid import VARIANTS, Grid, ProblemSpec
from .kernel import make_kernel
from .presets import DATUM_FAMILIES, make_datum

__all__ = ["RunConfig", "parse_config", "parse_config_text", "config_from_mapping",
           "KNOWN_KEYS"]

KNOWN_KEYS = {
    "problem", "domain", "padding_layers", "dimension", "p",
    "kernel.family", "kernel.radius", "kernel.exponent",
    "datum", "grid.L", "grid.h", "time.T", "time.snapshots",
    "stepper.scheme", "stepper.cfl_theta", "stepper.dt_max",
    "stepper.prox_tol", "stepper.prox_max_iters",
    "diagnostics.enable", "diagnostics.q", "diagnostics.decay_window",
    "diagnostics.modulus_center", "diagnostics.modulus_radius",
    "diagnostics.modulus_radii", "diagnostics.jump_factor",
    "diagnostics.jump_window", "diagnostics.holder_probe",
    "diagnostics.holder_order", "diagnostics.holder_gamma",
    "diagnostics.companion", "diagnostics.evi_probes",
    "seed", "output",
}
# datum.<name> keys are forwarded to the datum family
DATUM_PREFIX = "datum."


@dataclass
class RunConfig:
    problem: str = "dirichlet"
    domain: tuple | None = None
    padding_layers: int = 1
    dimension: int = 1
    p: float = 3.0
    kernel_family: str = "step"
    kernel_radius: float = 0.5
    kernel_exponent: float | None = None
    datum: str = "indicator"
    datum_params: dict = field(default_factory=dict)
    L: float = 2.0
    h: float = 1 / 64
    T: float = 1.0
    snapshots: tuple = ()
    stepper: StepperConfig = field(default_factory=StepperConfig)
    diagnostics: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "out"
    source: str = ""

    # builders -------------------------------------------------------------
    def grid(self) -> Grid:
        return Grid(self.dimension, self.L, self.h)

    def spec(self) -> ProblemSpec:
        return ProblemSpec(self.problem, self.domain, self.padding_layers)

    def kernel(self):
        return make_kernel(self.kernel_family, self.kernel_radius,
                           self.kernel_exponent, self.dimension)

    def initial_datum(self, grid=None, spec=None):
        grid = grid or self.grid()
        return make_datum(grid, self.datum, spec or self.spec(),
                          **self.datum_params)

    def as_mapping(self) -> dict:
        d = {"problem": self.problem, "dimension": str(self.dimension),
             "p": repr(self.p), "kernel.family": self.kernel_family,
             "kernel.radius": repr(self.kernel_radius), "datum": self.datum,
             "grid.L": repr(self.L), "grid.h": repr(self.h), "time.T": repr(self.T),
             "stepper.scheme": self.stepper.scheme,
             "stepper.cfl_theta": repr(self.stepper.cfl_theta),
             "stepper.dt_max": repr(self.stepper.dt_max),
             "stepper.prox_tol": repr(self.stepper.prox_tol),
             "stepper.prox_max_iters": str(self.stepper.prox_max_iters),
             "padding_layers": str(self.padding_layers),
             "seed": str(self.seed), "output": self.output}
        if self.domain is not None:
            d["domain"] = ",".join(repr(v) for ab in self.domain for v in ab)
        if self.kernel_exponent is not None:
            d["kernel.exponent"] = repr(self.kernel_exponent)
        if self.snapshots:
            d["time.snapshots"] = ",".join(repr(s) for s in self.snapshots)
        for k, v in self.datum_params.items():
            d[DATUM_PREFIX + k] = str(v)
        for k, v in self.diagnostics.items():
            if isinstance(v, (list, tuple)):
                v = ",".join(repr(float(x)) for x in v)
            d["diagnostics." + k] = v if isinstance(v, str) else repr(v)
        return d


def _read_pairs(text: str, errors: list) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {n}: expected key = value, got {raw.strip()!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out:
            errors.append(f"line {n}: duplicate key {k!r}")
        out[k] = v
    return out


def _floats(text: str) -> list:
    return [float(s) for s in text.replace(";", ",").split(",") if s.strip()]


def _schedule(text: str) -> tuple:
    """Comma list, or ``linspace:a:b:n`` / ``geomspace:a:b:n``."""
    text = text.strip()
    for kind, fn in (("linspace", np.linspace), ("geomspace", np.geomspace)):
        if text.startswith(kind + ":"):
            a, b, n = text.split(":")[1:]
            return tuple(float(v) for v in fn(float(a), float(b), int(n)))
    return tuple(_floats(text))


def _value(v: str):
    """Datum parameters: numbers where possible, booleans, else strings."""
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        f = float(v)
    except ValueError:
        return v
    return int(f) if f.is_integer() and "." not in v and "e" not in low else f


def config_from_mapping(pairs: dict, source: str = "<mapping>") -> RunConfig:
    """Validate a key/value mapping; raise :class:`ConfigError` listing all problems."""
    errors = []
    cfg = RunConfig(source=source)
    datum_params = {}
    for k in pairs:
        if k.startswith(DATUM_PREFIX):
            datum_params[k[len(DATUM_PREFIX):]] = _value(pairs[k])
        elif k not in KNOWN_KEYS:
            errors.append(f"unknown key {k!r}")

    def get(key, conv, default, check=None, why=""):
        if key not in pairs:
            return default
        try:
            val = conv(pairs[key])
        except (ValueError, TypeError):
            errors.append(f"{key}: cannot parse {pairs[key]!r}")
            return default
        if check is not None and not check(val):
            errors.append(f"{key} = {pairs[key]}: {why}")
        return val

    cfg.problem = get("problem", str.lower, cfg.problem, lambda v: v in VARIANTS,
                      f"must be one of {', '.join(VARIANTS)}")
    cfg.dimension = get("dimension", int, cfg.dimension, lambda v: v in (1, 2),
                        "must be 1 or 2")
    cfg.p = get("p", float, cfg.p, lambda v: v > 1, "p must exceed 1")
    cfg.padding_layers = get("padding_layers", int, cfg.padding_layers,
                             lambda v: v >= 1, "must be >= 1")
    cfg.kernel_family = get("kernel.family", str.lower, cfg.kernel_family,
                            lambda v: v in ("step", "power", "bump"),
                            "must be step, power or bump")
    cfg.kernel_radius = get("kernel.radius", float, cfg.kernel_radius,
                            lambda v: v > 0, "kernel radius must be positive")
    cfg.kernel_exponent = get("kernel.exponent", float, cfg.kernel_exponent,
                              lambda v: v > 0, "kernel exponent must be positive")
    cfg.datum = get("datum", str.lower, cfg.datum, lambda v: v in DATUM_FAMILIES,
                    f"must be one of {', '.join(DATUM_FAMILIES)}")
    cfg.datum_params = datum_params
    cfg.L = get("grid.L", float, cfg.L, lambda v: v > 0, "must be positive")
    cfg.h = get("grid.h", float, cfg.h, lambda v: v > 0, "must be positive")
    cfg.T = get("time.T", float, cfg.T, lambda v: v > 0, "final time must be positive")
    cfg.snapshots = get("time.snapshots", _schedule, cfg.snapshots,
                        lambda v: all(s >= 0 for s in v), "times must be >= 0")
    cfg.seed = get("seed", int, cfg.seed)
    cfg.output = pairs.get("output", cfg.output)
    if "domain" in pairs:
        vals = get("domain", _floats, None)
        if vals is not None:
            if len(vals) != 2 * cfg.dimension:
                errors.append(f"domain needs {2 * cfg.dimension} numbers, got {len(vals)}")
            else:
                cfg.domain = tuple((vals[2 * i], vals[2 * i + 1])
                                   for i in range(cfg.dimension))
    if cfg.problem in ("dirichlet", "neumann") and cfg.domain is None:
        errors.append(f"problem = {cfg.problem} requires a domain")

    scheme = get("stepper.scheme", str.lower, "explicit", lambda v: v in SCHEMES,
                 f"must be one of {', '.join(SCHEMES)}")
    if scheme == "explicit" and cfg.p < 2 and "stepper.scheme" in pairs:
        errors.append(f"stepper.scheme = explicit is not allowed for p = {cfg.p} < 2: "
                      "the right-hand side is not Lipschitz there; use proximal")
    elif scheme == "explicit" and cfg.p < 2:
        scheme = "proximal"
    theta = get("stepper.cfl_theta", float, 0.5, lambda v: 0 < v <= 1, "must lie in (0, 1]")
    dt_max = get("stepper.dt_max", float, 0.1, lambda v: v > 0, "must be positive")
    tol = get("stepper.prox_tol", float, 1e-10, lambda v: v > 0, "must be positive")
    iters = get("stepper.prox_max_iters", lambda s: int(float(s)), 10_000,
                lambda v: v >= 1, "must be >= 1")

    diag = {}
    for key in KNOWN_KEYS:
        if key.startswith("diagnostics.") and key in pairs:
            name = key.split(".", 1)[1]
            if name in ("enable", "companion"):
                diag[name] = pairs[key].strip().lower()
                if name == "enable":
                    unknown = {s.strip() for s in diag[name].split(",")} - set(CHECKS) - {"all", ""}
                    if unknown:
                        errors.append(f"diagnostics.enable: unknown checks {sorted(unknown)}")
            elif name in ("decay_window", "modulus_radii", "modulus_center",
                          "holder_probe"):
                diag[name] = get(key, _floats, None)
            elif name in ("jump_window", "holder_order", "evi_probes"):
                diag[name] = get(key, int, None, lambda v: v >= 0, "must be >= 0")
            else:
                diag[name] = get(key, float, None, lambda v: v > 0, "must be positive")
    cfg.diagnostics = diag

    # cross-field checks only when the pieces parsed
    if not errors:
        try:
            grid = cfg.grid()
        except NonlocalPLapError as e:
            errors.append(f"grid: {e}")
            grid = None
        if cfg.h > cfg.kernel_radius * (1 + 1e-12):
            errors.append(f"grid.h = {cfg.h} exceeds kernel.radius = {cfg.kernel_radius}; "
                          "the stencil would have no off-center weight")
        if grid is not None:
            try:
                spec = cfg.spec()
                spec.check_grid(grid)
            except NonlocalPLapError as e:
                errors.append(f"domain: {e}")
            if any(s > cfg.T for s in cfg.snapshots):
                errors.append("time.snapshots contains times beyond time.T")
    if not errors:
        try:
            cfg.stepper = StepperConfig(scheme, theta, dt_max, tol, iters, cfg.snapshots)
        except NonlocalPLapError as e:
            errors.append(f"stepper: {e}")
    if not errors:
        try:
            u0 = cfg.initial_datum()
        except (NonlocalPLapError, TypeError) as e:
            errors.append(f"datum: {e}")
        else:
            if cfg.problem == "cauchy":
                _check_padding(cfg, u0, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _check_padding(cfg, u0, errors):
    """The datum support must stay ``padding_layers`` kernel radii inside the box."""
    nz = np.argwhere(u0.values != 0)
    if len(nz) == 0:
        return
    ax = u0.grid.axis
    reach = max(float(np.max(np.abs(ax[nz]))), 0.0)
    need = reach + cfg.padding_layers * cfg.kernel_radius
    if need > cfg.L + 1e-12:
        errors.append(f"Cauchy padding: datum reaches |x| = {reach:g}, so grid.L must be "
                      f">= {need:g} for padding_layers = {cfg.padding_layers}")


def parse_config_text(text: str, source: str = "<text>") -> RunConfig:
    errors = []
    pairs = _read_pairs(text, errors)
    try:
        cfg = config_from_mapping(pairs, source)
    except ConfigError as e:
        raise ConfigError(errors + e.errors) from None
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a configuration file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError([f"cannot read {path}: {e}"]) from None
    return parse_config_text(text, str(path))
