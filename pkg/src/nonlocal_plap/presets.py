"""Initial-datum families and the two built-in figure presets."""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError
from .grid import Grid, GridFunction, region_weights

__all__ = ["DATUM_FAMILIES", "make_datum", "FIGURE_PRESETS"]


def _radius(grid: Grid):
    X = grid.coordinates()
    return np.sqrt(np.sum(X * X, axis=-1)), X


def indicator(grid, a=-1.0, b=1.0, height=1.0, **_):
    """``height`` on the closed cube ``[a, b]^n``."""
    _, X = _radius(grid)
    inside = np.all((X >= a - 1e-12) & (X <= b + 1e-12), axis=-1)
    return height * inside.astype(float)


def spike(grid, mass=1.0, center=0.0, **_):
    """All mass on the node nearest ``center`` (interior trapezoid weight)."""
    u = np.zeros(grid.shape)
    i = grid.index_of(center)
    u[(i,) * grid.dimension] = mass / grid.h ** grid.dimension
    return u


def figure(grid, a=-1.0, b=1.0, **_):
    """``1 - |x|^2/4`` on ``[a, b]^n`` and zero outside: jumps at the ends."""
    r, _ = _radius(grid)
    return (1 - r * r / 4) * indicator(grid, a, b)


def bump(grid, center=0.0, width=1.0, height=1.0, **_):
    """Smooth compactly supported ``height (1 - |x-c|^2/w^2)_+^3``."""
    _, X = _radius(grid)
    r2 = np.sum((X - center) ** 2, axis=-1) / width ** 2
    return height * np.maximum(1 - r2, 0.0) ** 3


def constant(grid, height=1.0, **_):
    return np.full(grid.shape, float(height))


def zero(grid, **_):
    return np.zeros(grid.shape)


def random(grid, amplitude=1.0, seed=0, nonnegative=False, support=None, **_):
    """I.i.d. uniform values, optionally restricted to ``|x| <= support``."""
    rng = np.random.default_rng(int(seed))
    lo = 0.0 if nonnegative else -amplitude
    u = rng.uniform(lo, amplitude, grid.shape)
    if support is not None:
        r, _ = _radius(grid)
        u = np.where(r <= support, u, 0.0)
    return u


DATUM_FAMILIES = {
    "indicator": indicator, "spike": spike, "figure": figure, "bump": bump,
    "constant": constant, "zero": zero, "random": random,
}


def make_datum(grid: Grid, family: str, spec=None, **params) -> GridFunction:
    """Sample a named datum family; values outside Omega are zeroed."""
    try:
        fn = DATUM_FAMILIES[family]
    except KeyError:
        raise InvalidParameterError(f"unknown datum family {family!r}") from None
    u = fn(grid, **params)
    if spec is not None and spec.variant != "cauchy":
        u = np.where(region_weights(grid, spec) > 0, u, 0.0)
    return GridFunction(grid, u)


# Built-in reproductions: p = 3, datum with jumps at +-1 and zero outside,
# evolved on a zero-padded box.  They differ only in the kernel.
_FIG_COMMON = {
    "problem": "cauchy", "padding_layers": "2", "dimension": "1", "p": "3",
    "grid.L": "3", "grid.h": "0.0078125", "datum": "figure",
    "time.T": "2", "time.snapshots": "0.25,0.5,1,1.5,2",
    "stepper.scheme": "explicit", "stepper.dt_max": "0.01",
    "diagnostics.modulus_center": "1.5", "diagnostics.modulus_radius": "0.25",
}

FIGURE_PRESETS = {
    "fig1": dict(_FIG_COMMON, **{"kernel.family": "step", "kernel.radius": "0.5"}),
    "fig2": dict(_FIG_COMMON, **{"kernel.family": "bump", "kernel.radius": "0.5",
                                 "kernel.exponent": "4"}),
}
