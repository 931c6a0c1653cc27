import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nonlocal_plap.errors import (GridMismatchError, InvalidParameterError,
                                  SingularityError)
from nonlocal_plap.grid import Grid, GridFunction, ProblemSpec
from nonlocal_plap.kernel import discrete_weights, make_kernel, make_step_kernel
from nonlocal_plap.operator import (INEQUALITIES, NonlinearityParams, apply_operator,
                                    boundary_activity, energy, functional,
                                    inequality_suite, lp, lp_scalar, make_plan,
                                    mp_scalar)
from nonlocal_plap.oracle import convolution_matrix

PS = [1.5, 2.0, 2.5, 3.0, 4.0]
SPECS = {
    "cauchy": ProblemSpec("cauchy"),
    "dirichlet": ProblemSpec("dirichlet", [(-1.0, 1.0)]),
    "neumann": ProblemSpec("neumann", [(-1.0, 1.0)]),
}


def setup(variant, family="step", h=1 / 16, L=1.5):
    grid = Grid(1, L, h)
    stencil = discrete_weights(make_kernel(family, 0.5), h)
    return grid, stencil, SPECS[variant]


def test_nonlinearity_values():
    assert lp_scalar(-2.0, 3.0) == -4.0
    assert lp_scalar(0.0, 1.5) == 0.0
    assert lp_scalar(4.0, 1.5) == pytest.approx(2.0)
    assert mp_scalar(2.0, 4.0) == 4.0
    assert mp_scalar(0.0, 3.0) == 0.0
    with pytest.raises(SingularityError):
        mp_scalar(0.0, 1.5)
    with pytest.raises(InvalidParameterError):
        lp_scalar(1.0, 1.0)


def test_nonlinearity_regimes():
    assert NonlinearityParams(1.5).singular
    assert NonlinearityParams(2).linear
    assert NonlinearityParams(3).degenerate and NonlinearityParams(3).integer
    with pytest.raises(InvalidParameterError):
        NonlinearityParams(0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e3, 1e3), st.sampled_from(PS))
def test_lp_odd_and_monotone(x, p):
    assert lp(-x, p) == -lp(x, p)
    assert lp(x + 1.0, p) >= lp(x, p)


def test_linear_case_matches_convolution_matrix():
    grid, stencil, spec = setup("dirichlet")
    u = np.random.default_rng(0).uniform(-1, 1, grid.shape)
    u[make_plan(grid, stencil, spec).region == 0] = 0.0
    C = convolution_matrix(grid, stencil, spec)
    plan = make_plan(grid, stencil, spec)
    ref = C @ u - np.where(plan.region, u, 0.0)
    assert np.max(np.abs(plan.apply(u, 2.0) - ref)) < 1e-14


def test_small_frozen_operator():
    # step kernel R=1/2, h=1/4: interior weights are 1/5 on offsets -2..2
    grid = Grid(1, 1.0, 0.25)
    stencil = discrete_weights(make_step_kernel(0.5), 0.25)
    u = GridFunction(grid, np.eye(9)[4])
    Lu = apply_operator(u, stencil, ProblemSpec("cauchy"), 3.0).values
    # centre: four neighbours at difference -1 each
    assert Lu[4] == pytest.approx(-0.8)
    assert Lu[3] == pytest.approx(0.2) and Lu[2] == pytest.approx(0.2)
    assert Lu[1] == 0.0


@pytest.mark.parametrize("variant", list(SPECS))
@pytest.mark.parametrize("family", ["step", "power", "bump"])
@pytest.mark.parametrize("p", PS)
def test_integration_by_parts_exact(variant, family, p):
    grid, stencil, spec = setup(variant, family)
    plan = make_plan(grid, stencil, spec)
    rng = np.random.default_rng(1)
    u = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
    v = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
    lhs = plan.energy(u, v, p)
    rhs = -np.sum(plan.measure * plan.apply(u, p) * v)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 25, elements=st.floats(-5, 5)), st.sampled_from(PS),
       st.sampled_from(list(SPECS)))
def test_oddness_and_homogeneity(values, p, variant):
    grid, stencil, spec = setup(variant, h=1 / 8, L=1.5)
    u = GridFunction(grid, values)
    Lu = apply_operator(u, stencil, spec, p).values
    Lm = apply_operator(-u, stencil, spec, p).values
    scale = max(1.0, float(np.max(np.abs(Lu))))
    assert np.max(np.abs(Lu + Lm)) <= 1e-12 * scale
    L2 = apply_operator(2.0 * u, stencil, spec, p).values
    assert np.allclose(L2, 2.0 ** (p - 1) * Lu, rtol=1e-12, atol=1e-12 * scale)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 25, elements=st.floats(-5, 5)), st.sampled_from(PS))
def test_neumann_mass_identity(values, p):
    grid, stencil, spec = setup("neumann", h=1 / 8, L=1.5)
    plan = make_plan(grid, stencil, spec)
    Lu = plan.apply(values, p)
    scale = np.sum(plan.measure * np.abs(Lu)) + 1e-300
    assert abs(np.sum(plan.measure * Lu)) <= 1e-13 * max(scale, 1.0)


@settings(max_examples=30, deadline=None)
@given(arrays(float, 9, elements=st.floats(-3, 3)), st.integers(-6, 6),
       st.sampled_from(PS))
def test_translation_equivariance(bump_vals, shift, p):
    # compactly supported data well inside the box: shifting commutes with L
    grid = Grid(1, 2.0, 1 / 8)
    stencil = discrete_weights(make_step_kernel(0.5), 1 / 8)
    spec = ProblemSpec("cauchy")
    u = np.zeros(grid.shape)
    c = grid.N // 2
    u[c - 4:c + 5] = bump_vals
    Lu = make_plan(grid, stencil, spec).apply(u, p)
    Ls = make_plan(grid, stencil, spec).apply(np.roll(u, shift), p)
    assert np.allclose(Ls, np.roll(Lu, shift), rtol=0, atol=1e-12 * max(1, np.abs(Lu).max()))


def test_energy_positive_and_symmetric_at_p2():
    grid, stencil, spec = setup("dirichlet")
    rng = np.random.default_rng(3)
    plan = make_plan(grid, stencil, spec)
    u = np.where(plan.region, rng.normal(size=grid.shape), 0.0)
    v = np.where(plan.region, rng.normal(size=grid.shape), 0.0)
    assert plan.energy(u, v, 2.0) == pytest.approx(plan.energy(v, u, 2.0), rel=1e-12)
    for p in PS:
        assert plan.energy(u, u, p) > 0
    U = GridFunction(grid, u)
    assert functional(U, stencil, spec, 3.0) == pytest.approx(
        energy(U, U, stencil, spec, 3.0) / 3.0)
    with pytest.raises(GridMismatchError):
        energy(U, GridFunction(Grid(1, 1.5, 1 / 8), np.zeros(25)), stencil, spec, 3.0)


def test_hessian_matches_finite_difference():
    grid, stencil, spec = setup("dirichlet", h=1 / 8)
    plan = make_plan(grid, stencil, spec)
    rng = np.random.default_rng(4)
    v = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
    d = np.where(plan.region, rng.uniform(-1, 1, grid.shape), 0.0)
    for p in (2.5, 3.0, 4.0):
        H = plan.hessian(v, p)
        eps = 1e-6
        fd = -(plan.apply(v + eps * d, p) - plan.apply(v - eps * d, p)) / (2 * eps)
        assert np.allclose(H @ d, fd, atol=1e-7)


def test_boundary_activity():
    grid = Grid(1, 2.0, 0.25)
    u = GridFunction(grid, np.where(np.abs(grid.axis) >= 1.75, 3.0, 0.1))
    assert boundary_activity(u, 0.25) == 3.0
    assert boundary_activity(grid.zeros(), 0.5) == 0.0


def test_sign_gap_frozen_example():
    res = inequality_suite(np.array([[2.0, 1.0]]), 3.0)
    # lhs = 4 - 1 = 3, rhs = 2 * max(2, 1) * 1 = 4
    assert res["sign_gap"]["residual"] == pytest.approx(-1.0)


@pytest.mark.parametrize("p", PS)
def test_inequality_suite_random(p):
    rng = np.random.default_rng(5)
    res = inequality_suite(rng.uniform(-5, 5, (20_000, 2)), p)
    assert res, "at least one inequality applies"
    for name, r in res.items():
        assert r["residual"] <= 1e-12, name


def test_inequality_applicability():
    names = {p: set(inequality_suite(np.array([[1.0, 0.5]]), p)) for p in PS}
    assert "lp_holder" in names[1.5] and "sign_gap" not in names[1.5]
    assert "mp_lipschitz" in names[4.0]
    assert "derivative_r2" in names[4.0] and "derivative_r1" in names[2.5]
    assert set(INEQUALITIES) <= set().union(*names.values())


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.sampled_from(PS))
def test_inequalities_hold_pointwise(a, b, p):
    for name, r in inequality_suite(np.array([[a, b]]), p).items():
        assert r["relative"] <= 1e-12, (name, a, b)
