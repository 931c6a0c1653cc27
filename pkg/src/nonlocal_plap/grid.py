"""Uniform grids, grid functions, problem descriptors and spatial estimators.

Integrals over a box use the trapezoid rule: interior nodes carry measure
``h^n``, nodes on a face of the box carry half of it (a quarter at 2D
corners).  The same node measure is used by the operator, so discrete mass
and the discrete energy identity hold exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (GridMismatchError, InvalidParameterError,
                     NonFiniteError)

__all__ = [
    "Grid", "GridFunction", "ProblemSpec", "Trajectory", "SERIES_COLUMNS",
    "box_face_weights", "region_weights", "lq_norm", "oscillation",
    "modulus_estimate", "jump_detect", "ensure_finite",
]

VARIANTS = ("cauchy", "dirichlet", "neumann")
SERIES_COLUMNS = ("t", "l1", "l2", "linf", "energy", "mass", "dt")
_ALIGN = 1e-9


def ensure_finite(values: np.ndarray, what: str = "grid function") -> np.ndarray:
    if not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise NonFiniteError(f"{what} has {bad} non-finite entries")
    return values


@dataclass(frozen=True)
class Grid:
    """Cartesian grid on ``[-L, L]^n`` with spacing ``h``."""

    dimension: int
    L: float
    h: float

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise InvalidParameterError("grid dimension must be 1 or 2")
        if not (self.h > 0 and self.L > 0):
            raise InvalidParameterError("grid needs h > 0 and L > 0")
        cells = 2 * self.L / self.h
        if abs(cells - round(cells)) > _ALIGN * max(1.0, cells):
            raise InvalidParameterError(
                f"2L/h = {cells} is not an integer; the grid must end at L")
        if round(cells) + 1 < 3:
            raise InvalidParameterError("grid needs at least 3 points per axis")

    @property
    def N(self) -> int:
        return int(round(2 * self.L / self.h)) + 1

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.dimension

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (n,)``."""
        axes = [self.axis] * self.dimension
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def index_of(self, x: float) -> int:
        """Nearest node index along an axis."""
        return int(np.clip(round((x + self.L) / self.h), 0, self.N - 1))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))


class GridFunction:
    """Real values sampled on a :class:`Grid`; always finite."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise GridMismatchError(
                f"values of shape {values.shape} do not fit grid {grid.shape}")
        self.grid = grid
        self.values = ensure_finite(values)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy())

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other(other))

    def __rsub__(self, other):
        return self.with_values(self._other(other) - self.values)

    def __mul__(self, c):
        return self.with_values(self.values * self._other(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def __repr__(self):
        return f"GridFunction(N={self.grid.N}, n={self.grid.dimension})"


@dataclass(frozen=True)
class ProblemSpec:
    """Boundary semantics of the evolution.

    Parameters
    ----------
    variant : {"cauchy", "dirichlet", "neumann"}
    domain : sequence of (lo, hi) per axis, optional
        The box Omega for Dirichlet and Neumann problems.  Endpoints must be
        grid nodes.
    padding_layers : int
        Cauchy only: number of kernel radii of zero padding placed around the
        support of the initial datum when a grid is built for the run.  The
        operator itself extends by zero beyond the computational box.
    """

    variant: str
    domain: tuple | None = None
    padding_layers: int = 1

    def __post_init__(self):
        v = self.variant.lower()
        object.__setattr__(self, "variant", v)
        if v not in VARIANTS:
            raise InvalidParameterError(f"unknown problem variant {self.variant!r}")
        if v == "cauchy":
            if int(self.padding_layers) < 1:
                raise InvalidParameterError("Cauchy problems need padding_layers >= 1")
        else:
            if self.domain is None:
                raise InvalidParameterError(f"{v} problems need a domain box")
            dom = tuple((float(a), float(b)) for a, b in self.domain)
            if any(not b > a for a, b in dom):
                raise InvalidParameterError(f"empty domain box {dom}")
            object.__setattr__(self, "domain", dom)

    def check_grid(self, grid: Grid):
        if self.variant == "cauchy":
            return
        if len(self.domain) != grid.dimension:
            raise GridMismatchError("domain box dimension differs from grid")
        for lo, hi in self.domain:
            if lo < -grid.L - _ALIGN or hi > grid.L + _ALIGN:
                raise GridMismatchError(
                    f"domain ({lo}, {hi}) leaves the grid extent [-{grid.L}, {grid.L}]")
            for e in (lo, hi):
                k = (e + grid.L) / grid.h
                if abs(k - round(k)) > 1e-7:
                    raise GridMismatchError(
                        f"domain endpoint {e} is not a grid node (h={grid.h})")


def _axis_weights(n_nodes: int) -> np.ndarray:
    mu = np.ones(n_nodes)
    mu[0] = mu[-1] = 0.5
    return mu


def box_face_weights(domain: Sequence, h: float) -> np.ndarray:
    """Trapezoid factors for the nodes of a grid-aligned box."""
    factors = []
    for lo, hi in domain:
        m = int(round((hi - lo) / h)) + 1
        if m < 2:
            raise InvalidParameterError(f"box side ({lo}, {hi}) holds < 2 nodes")
        factors.append(_axis_weights(m))
    mu = factors[0]
    for f in factors[1:]:
        mu = np.multiply.outer(mu, f)
    return mu


def region_weights(grid: Grid, spec: ProblemSpec | None = None) -> np.ndarray:
    """Trapezoid factors of the integration region embedded in the grid.

    The region is the whole box for Cauchy problems (and when ``spec`` is
    None) and Omega otherwise; nodes outside it get zero.
    """
    if spec is None or spec.variant == "cauchy":
        return box_face_weights([(-grid.L, grid.L)] * grid.dimension, grid.h)
    spec.check_grid(grid)
    mu = np.zeros(grid.shape)
    sl = tuple(slice(grid.index_of(lo), grid.index_of(hi) + 1)
               for lo, hi in spec.domain)
    mu[sl] = box_face_weights(spec.domain, grid.h)
    return mu


def lq_norm(f: GridFunction, q: float, spec: ProblemSpec | None = None) -> float:
    """Trapezoid L^q norm over the problem region; ``q = inf`` gives the max."""
    if not q >= 1:
        raise InvalidParameterError(f"q must be >= 1, got {q}")
    mu = region_weights(f.grid, spec)
    a = np.abs(f.values)
    if np.isinf(q):
        return float(np.max(a[mu > 0], initial=0.0))
    m = f.grid.h ** f.grid.dimension * mu
    if q == 1:
        return float(np.sum(m * a))
    # scale by the max so tiny or huge entries survive the power
    top = float(np.max(a[mu > 0], initial=0.0))
    if top == 0.0 or not np.isfinite(top):
        return top
    b = a / top
    if q == 2:
        return top * float(np.sqrt(np.sum(m * b * b)))
    return top * float(np.sum(m * b ** q) ** (1.0 / q))


def _ball_mask(grid: Grid, center, radius: float) -> np.ndarray:
    X = grid.coordinates()
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    dist = np.sqrt(np.sum((X - c) ** 2, axis=-1))
    return dist <= radius + _ALIGN * grid.h


def oscillation(f: GridFunction, center, radius: float) -> float:
    """``max - min`` of ``f`` over the grid nodes in the closed ball."""
    mask = _ball_mask(f.grid, center, radius)
    if not np.any(mask):
        raise InvalidParameterError("ball contains no grid node")
    v = f.values[mask]
    return float(v.max() - v.min())


def _disc_offsets(k: int, n: int, rho_cells: float) -> list:
    if n == 1:
        return [(s,) for s in range(1, k + 1)]
    out = []
    for i in range(0, k + 1):
        for j in range(-k, k + 1):
            if (i, j) <= (0, 0):
                continue
            if i * i + j * j <= rho_cells ** 2 + 1e-9:
                out.append((i, j))
    return out


def modulus_estimate(f: GridFunction, radii: Sequence[float],
                     mask: np.ndarray | None = None) -> np.ndarray:
    """Sampled modulus ``sup_{|x-y| <= rho} |f(x) - f(y)|`` on grid pairs.

    If ``mask`` is given only pairs with both nodes inside it are used.
    """
    grid = f.grid
    radii = np.asarray(radii, dtype=float)
    v = f.values
    h = grid.h
    out = np.zeros(len(radii))
    if mask is None:
        mask = np.ones(grid.shape, dtype=bool)
    for k, rho in enumerate(radii):
        cells = rho / h
        kk = int(np.floor(cells + 1e-9))
        best = 0.0
        for d in _disc_offsets(kk, grid.dimension, cells):
            a, b = _shift_pair(v, d)
            ma, mb = _shift_pair(mask, d)
            sel = ma & mb
            if np.any(sel):
                best = max(best, float(np.max(np.abs(a - b)[sel])))
        out[k] = best
    return np.maximum.accumulate(out)


def _shift_pair(v, d):
    """Views ``v[x]`` and ``v[x + d]`` over the overlap."""
    src, dst = [], []
    for dk, s in zip(d, v.shape):
        if dk >= 0:
            src.append(slice(0, s - dk))
            dst.append(slice(dk, s))
        else:
            src.append(slice(-dk, s))
            dst.append(slice(0, s + dk))
    return v[tuple(src)], v[tuple(dst)]


def jump_detect(f: GridFunction, factor: float = 10.0, floor: float = 1e-6,
                window: int | None = 8, mask: np.ndarray | None = None) -> list:
    """Positions of cell interfaces carrying a jump.

    An interface ``(x_i, x_{i+1})`` is flagged when ``|f_{i+1} - f_i|``
    exceeds both ``floor`` and ``factor`` times a reference increment.  The
    reference is the median over the ``2*window`` neighbouring interfaces;
    ``window=None`` uses the median over all interfaces, which misfires when
    most of the box is flat (median zero) and the rest merely smooth.
    With a node ``mask`` only interfaces between two masked nodes count.
    """
    if f.grid.dimension != 1:
        raise InvalidParameterError("jump detection is one-dimensional")
    x = f.grid.axis
    d = np.abs(np.diff(f.values))
    if window is None:
        ref = np.full_like(d, np.median(d))
    else:
        ref = _local_median(d, int(window))
    hit = (d > factor * ref) & (d > floor)
    if mask is not None:
        mask = np.asarray(mask, bool)
        hit &= mask[:-1] & mask[1:]
    return [float(0.5 * (x[i] + x[i + 1])) for i in np.flatnonzero(hit)]


def _local_median(d: np.ndarray, w: int) -> np.ndarray:
    """Median of the ``2w`` neighbours of each entry, excluding itself."""
    m = len(d)
    out = np.empty(m)
    for i in range(m):
        lo, hi = max(0, i - w), min(m, i + w + 1)
        nb = np.concatenate([d[lo:i], d[i + 1:hi]])
        out[i] = np.median(nb) if len(nb) else 0.0
    return out


@dataclass
class Trajectory:
    """Snapshots of an evolution together with per-step scalar series.

    ``ut`` holds, for each snapshot, the time derivative actually used by the
    stepper at that state.  ``meta`` carries run parameters and applicability
    flags consumed by the diagnostics; ``spec``, ``stencil`` and ``kernel``
    are the objects the run used.
    """

    snapshots: list = field(default_factory=list)
    ut: list = field(default_factory=list)
    series: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    spec: object = None
    stencil: object = None
    kernel: object = None

    def add_snapshot(self, t: float, u: GridFunction, ut: GridFunction | None = None):
        if self.snapshots and not t > self.snapshots[-1][0]:
            raise InvalidParameterError("snapshot times must increase strictly")
        self.snapshots.append((float(t), u))
        self.ut.append(ut)

    def add_record(self, t, l1, l2, linf, energy, mass, dt):
        self.series.append((float(t), float(l1), float(l2), float(linf),
                            float(energy), float(mass), float(dt)))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def series_array(self) -> np.ndarray:
        return np.array(self.series, dtype=float).reshape(-1, len(SERIES_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.series_array()[:, SERIES_COLUMNS.index(name)]

    @property
    def final(self) -> GridFunction:
        return self.snapshots[-1][1]
