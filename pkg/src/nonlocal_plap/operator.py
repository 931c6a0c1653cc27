"""Discrete nonlocal p-Laplacian, its energy form and scalar inequalities.

For a node ``i`` of the integration region the operator is

    (L u)_i = sum_j K_ij L_p(u_j - u_i) - a_i L_p(u_i)

with ``K_ij = w(j - i) mu_j`` over region nodes ``j`` (``mu`` being the
trapezoid factor of the node) and ``a_i = 1 - sum_j K_ij`` the kernel mass
that falls outside the region.  The last term is the zero exterior of the
Dirichlet and Cauchy problems; it is dropped for Neumann.  Because
``h^n mu_i K_ij`` is symmetric, summation by parts is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import GridMismatchError, InvalidParameterError, SingularityError
from .grid import GridFunction, ProblemSpec, ensure_finite, region_weights
from .kernel import WeightStencil

__all__ = [
    "NonlinearityParams", "lp_scalar", "mp_scalar", "lp", "OperatorPlan",
    "make_plan", "apply_operator", "energy", "functional", "boundary_activity",
    "inequality_suite", "INEQUALITIES",
]


@dataclass(frozen=True)
class NonlinearityParams:
    p: float

    def __post_init__(self):
        if not self.p > 1:
            raise InvalidParameterError(f"p must exceed 1, got {self.p}")

    @property
    def singular(self) -> bool:
        return self.p < 2

    @property
    def linear(self) -> bool:
        return self.p == 2

    @property
    def degenerate(self) -> bool:
        return self.p > 2

    @property
    def integer(self) -> bool:
        return float(self.p).is_integer()


def _check_p(p):
    if not p > 1:
        raise InvalidParameterError(f"p must exceed 1, got {p}")


def lp(x, p: float):
    """Vectorized ``|x|^(p-2) x`` with the value 0 at the origin."""
    x = np.asarray(x, dtype=float)
    if p == 2:
        return x.copy()
    if p == 3:
        return x * np.abs(x)
    return np.sign(x) * np.abs(x) ** (p - 1)


def lp_scalar(tau: float, p: float) -> float:
    _check_p(p)
    return float(lp(tau, p))


def mp(x, p: float):
    """Vectorized ``|x|^(p-2)``; callers must avoid 0 when ``p < 2``."""
    x = np.asarray(x, dtype=float)
    if p == 2:
        return np.ones_like(x)
    with np.errstate(divide="ignore"):
        return np.abs(x) ** (p - 2)


def mp_scalar(tau: float, p: float) -> float:
    _check_p(p)
    if tau == 0 and p < 2:
        raise SingularityError(f"|0|^(p-2) is unbounded for p={p} < 2")
    return float(mp(tau, p))


class OperatorPlan:
    """Precomputed index structure for one (grid, stencil, problem) triple.

    Attributes
    ----------
    mu : array
        Trapezoid factor of every grid node (zero outside the region).
    measure : array
        Node measure ``h^n mu``.
    absorption : array
        Kernel mass ``a_i`` leaving the region (zero for Neumann).
    rows, cols, coef : arrays
        Flat index pairs ``(i, j)``, ``i != j`` both in the region, with
        ``coef = w(j - i) mu_j``.
    """

    def __init__(self, grid, stencil: WeightStencil, spec: ProblemSpec):
        if abs(stencil.grid_spacing - grid.h) > 1e-12 * grid.h:
            raise GridMismatchError(
                f"stencil spacing {stencil.grid_spacing} differs from grid h={grid.h}")
        if stencil.dimension != grid.dimension:
            raise GridMismatchError("stencil and grid dimensions differ")
        spec.check_grid(grid)
        self.grid, self.stencil, self.spec = grid, stencil, spec
        self.shape = grid.shape
        mu = region_weights(grid, spec)
        self.mu = mu
        self.region = mu > 0
        self.measure = grid.h ** grid.dimension * mu
        idx = np.arange(mu.size).reshape(mu.shape)
        r = stencil.reach
        mu_pad = np.pad(mu, r)
        idx_pad = np.pad(idx, r, constant_values=-1)
        rows, cols, coef = [], [], []
        row_mass = np.zeros(mu.shape)
        for d, w in zip(stencil.offsets, stencil.weights):
            sl = tuple(slice(r + int(dk), r + int(dk) + s)
                       for dk, s in zip(d, mu.shape))
            mj = mu_pad[sl]
            row_mass += w * mj
            if not np.any(d):
                continue
            sel = self.region & (mj > 0)
            rows.append(idx[sel])
            cols.append(idx_pad[sl][sel])
            coef.append(w * mj[sel])
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.coef = np.concatenate(coef)
        self.row_mass = np.where(self.region, row_mass, 0.0)
        if spec.variant == "neumann":
            self.absorption = np.zeros(mu.shape)
        else:
            # 1 - row mass, clipped against rounding in the interior
            a = np.where(self.region, 1.0 - row_mass, 0.0)
            a[np.abs(a) < 1e-14] = 0.0
            self.absorption = a
        self._abs_flat = self.absorption.ravel()
        self._meas_flat = self.measure.ravel()
        self._size = mu.size

    # operator and energy on raw arrays -------------------------------------
    def apply(self, v: np.ndarray, p: float) -> np.ndarray:
        f = v.ravel()
        diff = f[self.cols] - f[self.rows]
        out = np.bincount(self.rows, self.coef * lp(diff, p),
                          minlength=self._size)
        out -= self._abs_flat * lp(f, p)
        return out.reshape(self.shape)

    def energy(self, u: np.ndarray, v: np.ndarray, p: float) -> float:
        fu, fv = u.ravel(), v.ravel()
        m = self._meas_flat
        du = fu[self.rows] - fu[self.cols]
        dv = fv[self.rows] - fv[self.cols]
        pair = 0.5 * np.sum(m[self.rows] * self.coef * lp(du, p) * dv)
        ext = np.sum(m * self._abs_flat * lp(fu, p) * fv)
        return float(pair + ext)

    def hessian(self, v: np.ndarray, p: float, floor: float = 0.0):
        """Linearization of ``-L`` at ``v`` as a sparse matrix.

        For ``p < 2`` the weight ``|t|^(p-2)`` is evaluated at ``max(|t|,
        floor)``, which caps the curvature and keeps the matrix finite.
        """
        f = v.ravel()
        diff = np.abs(f[self.cols] - f[self.rows])
        if p < 2:
            diff = np.maximum(diff, floor)
        g = (p - 1) * self.coef * mp(diff, p)
        absf = np.abs(f)
        if p < 2:
            absf = np.maximum(absf, floor)
        diag = np.bincount(self.rows, g, minlength=self._size)
        diag += (p - 1) * self._abs_flat * mp(absf, p) * (self._abs_flat > 0)
        # nodes outside the region are frozen: identity rows keep it regular
        diag = np.where(self.region.ravel(), diag, 0.0)
        off = sparse.csr_matrix((-g, (self.rows, self.cols)),
                                shape=(self._size, self._size))
        return off + sparse.diags(diag)


_PLANS: dict = {}


def make_plan(grid, stencil: WeightStencil, spec: ProblemSpec) -> OperatorPlan:
    """Build (or reuse) the plan for a grid, stencil and problem."""
    key = (grid, spec, id(stencil))
    hit = _PLANS.get(key)
    if hit is not None and hit.stencil is stencil:
        return hit
    plan = OperatorPlan(grid, stencil, spec)
    if len(_PLANS) > 32:
        _PLANS.clear()
    _PLANS[key] = plan
    return plan


def apply_operator(u: GridFunction, stencil: WeightStencil, spec: ProblemSpec,
                   p: float) -> GridFunction:
    """Evaluate the discrete operator; zero at nodes outside the region."""
    _check_p(p)
    plan = make_plan(u.grid, stencil, spec)
    return GridFunction(u.grid, ensure_finite(plan.apply(u.values, p),
                                              "operator output"))


def energy(u: GridFunction, v: GridFunction, stencil: WeightStencil,
           spec: ProblemSpec, p: float) -> float:
    """Discrete energy form ``E_p(u, v)`` over the problem region."""
    if u.grid != v.grid:
        raise GridMismatchError("energy arguments live on different grids")
    _check_p(p)
    return make_plan(u.grid, stencil, spec).energy(u.values, v.values, p)


def functional(u: GridFunction, stencil, spec, p: float) -> float:
    """``I_p(u) = E_p(u, u) / p``."""
    return energy(u, u, stencil, spec, p) / p


def boundary_activity(u: GridFunction, radius: float) -> float:
    """Max of ``|u|`` within ``radius`` of the computational box edge."""
    g = u.grid
    X = g.coordinates()
    near = np.any(np.abs(X) >= g.L - radius - 1e-12, axis=-1)
    return float(np.max(np.abs(u.values[near]), initial=0.0))


# ---------------------------------------------------------------------------
# scalar inequalities

def _lemma42(a, b, p):
    a, b = np.abs(a), np.abs(b)
    lhs = a ** (p - 1) - lp(a - b, p)
    # for 0 <= b <= a the difference of powers cancels; use expm1/log1p
    near = (b <= a) & (a > 0)
    ratio = np.divide(b, a, out=np.zeros_like(a), where=near)
    stable = -(a ** (p - 1)) * np.expm1((p - 1) * np.log1p(-np.minimum(ratio, 1.0)))
    lhs = np.where(near, stable, lhs)
    rhs = (p - 1) * np.maximum(a ** (p - 2), b ** (p - 2)) * b
    return lhs, rhs


def _lp_holder(a, b, p):
    return np.abs(lp(a, p) - lp(b, p)), 2.0 ** (2 - p) * np.abs(a - b) ** (p - 1)


def _lp_lipschitz(a, b, p):
    lhs = np.abs(lp(a, p) - lp(b, p))
    rhs = 2.0 ** (p - 2) * (p - 1) * np.abs(a - b) * (np.abs(a) + np.abs(b)) ** (p - 2)
    return lhs, rhs


def _mp_lipschitz(a, b, p):
    lhs = np.abs(mp(a, p) - mp(b, p))
    rhs = (p - 1) * np.abs(a - b) * (np.abs(a) ** (p - 3) + np.abs(b) ** (p - 3))
    return lhs, rhs


def _mp_holder(a, b, p):
    if p == 2:
        return np.zeros_like(a), np.ones_like(a)
    return np.abs(mp(a, p) - mp(b, p)), np.abs(a - b) ** (p - 2)


def _monotone_lower(a, b, p):
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    lhs = (p - 1) * (hi - lo) / (1 + lo * lo + hi * hi) ** ((2 - p) / 2)
    rhs = lp(hi, p) - lp(lo, p)
    return lhs, rhs


def _falling(p, r):
    c = 1.0
    for k in range(1, r + 1):
        c *= p - k
    return c


def _derivative(x, p, r):
    """r-th derivative of ``L_p``: even r gives ``L``, odd r gives ``M``."""
    c = _falling(p, r)
    return c * (lp(x, p - r) if r % 2 == 0 else mp(x, p - r + 1))


def _make_derivative_check(r):
    def check(a, b, p):
        c = _falling(p, r)
        q = p - r
        lhs = np.abs(_derivative(a, p, r) - _derivative(b, p, r))
        d = np.abs(a - b)
        if r % 2 == 0:
            if q >= 2:
                rhs = c * (q - 1) * 2.0 ** (q - 2) * d * (np.abs(a) + np.abs(b)) ** (q - 2)
            else:
                rhs = c * 2.0 ** (2 - q) * d ** (q - 1)
        else:
            if q >= 2:
                rhs = c * (q + 1) * d * (np.abs(a) ** (q - 2) + np.abs(b) ** (q - 2))
            else:
                rhs = c * d ** (q - 1)
        return lhs, rhs
    return check


def _derivative_orders(p):
    """Orders r >= 1 with r < p - 1 (both arguments stay away from 0 issues)."""
    return [r for r in range(1, 4) if r < p - 1]


# name -> (applicability predicate on p, evaluator returning (lhs, rhs))
INEQUALITIES = {
    "sign_gap": (lambda p: p >= 2, _lemma42),
    "lp_holder": (lambda p: 1 < p <= 2, _lp_holder),
    "lp_lipschitz": (lambda p: p >= 2, _lp_lipschitz),
    "mp_lipschitz": (lambda p: p >= 3, _mp_lipschitz),
    "mp_holder": (lambda p: 2 <= p < 3, _mp_holder),
    "monotone_lower": (lambda p: 1 < p <= 2, _monotone_lower),
}


def inequality_suite(samples, p: float) -> dict:
    """Worst residual ``lhs - rhs`` of every applicable inequality.

    Parameters
    ----------
    samples : array of shape (m, 2)
        Pairs ``(a, b)``.  The sign-gap inequality uses ``|a|, |b|``.
    p : float

    Returns
    -------
    dict
        ``name -> {"residual", "relative", "count"}`` where ``relative``
        divides each residual by ``max(1, |lhs|, |rhs|)``.  All residuals
        are expected to be ``<= 0`` up to rounding.
    """
    _check_p(p)
    s = np.asarray(samples, dtype=float).reshape(-1, 2)
    a, b = s[:, 0], s[:, 1]
    checks = {k: v[1] for k, v in INEQUALITIES.items() if v[0](p)}
    for r in _derivative_orders(p):
        checks[f"derivative_r{r}"] = _make_derivative_check(r)
    out = {}
    with np.errstate(divide="ignore", invalid="ignore"):
        for name, fn in checks.items():
            lhs, rhs = fn(a, b, p)
            res = lhs - rhs
            rel = res / np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
            out[name] = {"residual": float(np.max(res, initial=-np.inf)),
                         "relative": float(np.max(rel, initial=-np.inf)),
                         "count": int(len(res))}
    return out
