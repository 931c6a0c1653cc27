"""Radial convolution kernels, their grid stencils and derived quantities.

A kernel is a nonnegative, even, compactly supported weight ``J`` with
``J(0) > 0`` and unit mass.  It is stored through its radial profile so that
the same object serves one and two space dimensions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .errors import (ConditionViolatedError, DegenerateStencilError,
                     InvalidParameterError)

__all__ = [
    "Kernel", "WeightStencil", "make_step_kernel", "make_power_kernel",
    "make_bump_kernel", "make_kernel", "discrete_weights", "kernel_modulus",
    "neumann_kappa", "unit_ball_volume", "power_kernel_constant",
]

# relative tolerance used when deciding whether a grid point sits on the
# support boundary |z| = R (step kernel is closed there)
_SNAP = 1e-12


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in R^n."""
    return np.pi ** (n / 2.0) / special.gamma(n / 2.0 + 1.0)


def power_kernel_constant(n: int, a: float, R: float) -> float:
    """Closed-form mass of ``(R - |z|)^a`` on R^n."""
    return n * unit_ball_volume(n) * R ** (n + a) * special.beta(n, a + 1.0)


def _check_dimension(n):
    if n not in (1, 2):
        raise InvalidParameterError(f"dimension must be 1 or 2, got {n}")


def _radial_mass(raw: Callable[[float], float], R: float, n: int) -> float:
    """Integrate a radial profile over R^n with adaptive quadrature."""
    shell = n * unit_ball_volume(n)
    val, _ = integrate.quad(lambda r: raw(r) * r ** (n - 1), 0.0, R,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return shell * val


@dataclass(frozen=True)
class Kernel:
    """Normalized radial kernel.

    Attributes
    ----------
    profile : callable
        Vectorized function of the radius ``r = |z| >= 0``.
    support_radius : float
        ``R_J``; the profile vanishes for ``r > R_J``.
    dimension : int
        Space dimension, 1 or 2.
    l1_mass : float
        Quadrature value of the integral of the normalized kernel.
    family, exponent, scale
        Construction parameters; ``scale`` is the multiplier applied to the
        raw profile (for the power kernel this is ``1/c_{n,a,R}``).
    """

    profile: Callable[[np.ndarray], np.ndarray]
    support_radius: float
    dimension: int
    l1_mass: float
    family: str = "custom"
    exponent: float | None = None
    scale: float = 1.0

    def __call__(self, z) -> np.ndarray:
        """Evaluate ``J`` at points ``z`` (shape ``(..., n)`` or scalars in 1D)."""
        z = np.asarray(z, dtype=float)
        if self.dimension == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            r = np.abs(z)
        else:
            r = np.sqrt(np.sum(z * z, axis=-1))
        return self.profile(r)

    @property
    def j_inf(self) -> float:
        """Sup norm; every provided family peaks at the origin."""
        return float(self.profile(np.array(0.0)))

    def describe(self) -> dict:
        return {"family": self.family, "radius": self.support_radius,
                "exponent": self.exponent, "dimension": self.dimension}


def _finish(raw, R, n, family, exponent) -> Kernel:
    mass = _radial_mass(raw, R, n)
    scale = 1.0 / mass

    def profile(r, _raw=raw, _s=scale):
        return _s * _raw(r)

    l1 = _radial_mass(profile, R, n)
    return Kernel(profile, float(R), n, l1, family, exponent, scale)


def make_step_kernel(radius: float, dimension: int = 1) -> Kernel:
    """Indicator of the closed ball of the given radius, unit mass."""
    _check_dimension(dimension)
    if not radius > 0:
        raise InvalidParameterError(f"radius must be positive, got {radius}")
    R = float(radius)

    def raw(r, _R=R):
        r = np.asarray(r, dtype=float)
        return np.where(r <= _R, 1.0, 0.0)

    return _finish(raw, R, dimension, "step", None)


def make_power_kernel(R: float, a: float, dimension: int = 1) -> Kernel:
    """Profile ``(R - |z|)_+^a`` normalized to unit mass."""
    _check_dimension(dimension)
    if not R > 0 or not a > 0:
        raise InvalidParameterError(
            f"power kernel needs R > 0 and a > 0, got R={R}, a={a}")
    R, a = float(R), float(a)

    def raw(r, _R=R, _a=a):
        r = np.asarray(r, dtype=float)
        return np.maximum(_R - r, 0.0) ** _a

    return _finish(raw, R, dimension, "power", a)


def make_bump_kernel(R: float, a: float, dimension: int = 1) -> Kernel:
    """Profile ``(R^2 - |z|^2)_+^a`` normalized to unit mass."""
    _check_dimension(dimension)
    if not R > 0 or not a > 0:
        raise InvalidParameterError(
            f"bump kernel needs R > 0 and a > 0, got R={R}, a={a}")
    R, a = float(R), float(a)

    def raw(r, _R=R, _a=a):
        r = np.asarray(r, dtype=float)
        return np.maximum(_R * _R - r * r, 0.0) ** _a

    return _finish(raw, R, dimension, "bump", a)


def make_kernel(family: str, radius: float, exponent: float | None = None,
                dimension: int = 1) -> Kernel:
    """Dispatch on the family name used in configuration files."""
    if family == "step":
        return make_step_kernel(radius, dimension)
    if family == "power":
        return make_power_kernel(radius, 1.0 if exponent is None else exponent,
                                 dimension)
    if family == "bump":
        return make_bump_kernel(radius, 4.0 if exponent is None else exponent,
                                dimension)
    raise InvalidParameterError(f"unknown kernel family {family!r}")


@dataclass(frozen=True)
class WeightStencil:
    """Discrete kernel weights on integer offsets.

    ``weights[k] = c_h * h^n * J(offsets[k] * h)`` with one global ``c_h``
    making the interior row sum equal to one.
    """

    offsets: np.ndarray
    weights: np.ndarray
    row_sum_interior: float
    grid_spacing: float
    scale: float
    raw_row_sum: float
    dimension: int = 1
    kernel: Kernel | None = field(default=None, compare=False, repr=False)

    @property
    def reach(self) -> int:
        """Largest offset component, in cells."""
        return int(np.max(np.abs(self.offsets)))

    def weight_map(self) -> dict:
        return {tuple(int(c) for c in d): float(w)
                for d, w in zip(self.offsets, self.weights)}


def discrete_weights(kernel: Kernel, h: float) -> WeightStencil:
    """Sample the kernel on the cube of offsets reaching ``R_J``."""
    if not h > 0:
        raise InvalidParameterError(f"grid spacing must be positive, got {h}")
    R = kernel.support_radius
    if h > R * (1 + _SNAP):
        raise DegenerateStencilError(
            f"spacing h={h} exceeds the kernel radius {R}; no off-center weight")
    n = kernel.dimension
    k = int(np.floor(R / h * (1 + _SNAP)))
    rng = range(-k, k + 1)
    offs = np.array(list(itertools.product(rng, repeat=n)), dtype=int)
    r = np.sqrt(np.sum(offs.astype(float) ** 2, axis=1)) * h
    # points within rounding of the support boundary count as on it
    r = np.where(np.abs(r - R) <= _SNAP * R, R, r)
    raw = h ** n * kernel.profile(r)
    keep = raw > 0
    offs, raw = offs[keep], raw[keep]
    if len(offs) < 2:
        raise DegenerateStencilError(
            f"stencil at h={h} has no off-center weight")
    raw_sum = float(np.sum(raw))
    c_h = 1.0 / raw_sum
    w = c_h * raw
    return WeightStencil(offs, w, float(np.sum(w)), float(h), c_h, raw_sum,
                         n, kernel)


def kernel_modulus(kernel: Kernel, radii: Sequence[float],
                   n_quad: int = 4001, n_dirs: int = 8) -> np.ndarray:
    """Sampled L1 modulus ``sup_|x-y|=rho int |J(x-z) - J(y-z)| dz``.

    By translation invariance the supremum reduces to a supremum over
    directions of the translate difference; in 1D one direction suffices.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 0) or np.any(np.diff(radii) < 0):
        raise InvalidParameterError("radii must be nonnegative and ascending")
    R = kernel.support_radius
    out = np.zeros_like(radii)
    for k, rho in enumerate(radii):
        if rho == 0:
            continue
        if kernel.dimension == 1:
            out[k] = _quad_with_breaks(kernel, rho, R)
        else:
            best = 0.0
            m = int(np.sqrt(n_quad)) | 1
            g = np.linspace(-R - rho, R + rho, m)
            X, Y = np.meshgrid(g, g, indexing="ij")
            dA = (g[1] - g[0]) ** 2
            P = np.stack([X, Y], axis=-1)
            for th in np.linspace(0, np.pi / 2, n_dirs):
                s = rho * np.array([np.cos(th), np.sin(th)])
                f = np.abs(kernel(P) - kernel(P - s))
                best = max(best, float(np.sum(f) * dA))
            out[k] = best
    return np.maximum.accumulate(out)


def _quad_with_breaks(kernel, rho, R):
    """Adaptive 1D quadrature honouring the profile breakpoints."""
    pts = []
    for x in sorted({-R, R, -R + rho, R + rho, 0.0, rho}):
        # breakpoints closer than rounding would leave slivers quad dislikes
        if not pts or x - pts[-1] > 1e-12 * R:
            pts.append(x)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b <= a:
            continue
        v, _ = integrate.quad(
            lambda z: abs(float(kernel(z)) - float(kernel(z - rho))), a, b,
            epsabs=1e-13, epsrel=1e-12, limit=200)
        total += v
    return total


def neumann_kappa(kernel: Kernel, domain, h: float) -> float:
    """Minimum over grid points of ``int_Omega J(x - y) dy``.

    ``domain`` is a sequence of ``(lo, hi)`` pairs, one per axis, with
    endpoints on the grid ``lo + i h``.  The inner integral uses the same
    stencil and trapezoid face weights as the operator, so the value is the
    exact discrete row mass seen by the Neumann operator.
    """
    stencil = discrete_weights(kernel, h)
    from .grid import box_face_weights

    mu = box_face_weights(domain, h)
    rows = _row_mass(mu, stencil)
    region = mu > 0
    kappa = float(np.min(rows[region]))
    if not kappa > 0:
        raise ConditionViolatedError(
            f"kernel mass inside the domain drops to {kappa}; the Neumann "
            "problem needs a positive lower bound")
    return kappa


def _row_mass(mu: np.ndarray, stencil: WeightStencil) -> np.ndarray:
    """``sum_d w(d) mu(i + d)`` with zero outside the array."""
    r = stencil.reach
    pad = np.pad(mu, r)
    out = np.zeros_like(mu)
    shape = mu.shape
    for d, w in zip(stencil.offsets, stencil.weights):
        sl = tuple(slice(r + int(dk), r + int(dk) + s)
                   for dk, s in zip(d, shape))
        out += w * pad[sl]
    return out
