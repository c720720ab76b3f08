import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robinmc import (
    ContractViolation,
    InsufficientBoundaryGrid,
    ProblemSpec,
    PropagatedNaN,
    SimParams,
    estimate_boundary_potential,
    estimate_dirichlet,
    estimate_resolvent,
    estimate_robin,
    estimate_robin_schedule,
    fixed_point_residual,
)
from robinmc import _kernels as K
from robinmc.feynman_kac import reflected_functional, reflected_rows
from robinmc.functions import constant, coordinate, sin_product, zero
from robinmc.sde import simulate_reflected

from conftest import constant_problem, fibonacci_sphere

QUICK = SimParams(dt=1e-3, weight_floor=1e-4)


@pytest.mark.parametrize("n", [1.0, 100.0])
def test_robin_telescopes_pathwise(ball, half, n):
    p = constant_problem(ball, half, 1.0, 2.0)
    rows = reflected_rows(p, [0.3, 0.4, 0.0], QUICK, 300, 1, ns=[n], g_coefs=[n])
    fv, bv = rows.part(0)
    np.testing.assert_allclose(fv + bv, 2.0 * (1.0 - rows.column(K.C_WEIGHT)), rtol=1e-12, atol=0)


def test_schedule_rows_match_single_n(ball, half, linear_ball):
    """One walk, several penalties: each column equals the single-penalty functional."""
    rec = simulate_reflected([0.5, 0, 0], linear_ball, 1.0, QUICK, 5, 2)
    rows = reflected_rows(linear_ball, [0.5, 0, 0], QUICK, 3, 5, ns=[1.0, 4.0], g_coefs=[1.0, 4.0])
    for j, n in enumerate([1.0, 4.0]):
        f, b = reflected_functional(rec, linear_ball.eval_f, lambda q, n=n: n * linear_ball.eval_g(q), 1.0, n, QUICK.dt)
        fv, bv = rows.part(j)
        assert fv[2] == pytest.approx(f, abs=1e-13) and bv[2] == pytest.approx(b, abs=1e-13)


def test_estimates_of_constant_problem(box, half):
    p = constant_problem(box, half, 0.5, 2.0)
    for e in (estimate_robin(p, [0.2, 0.5, 0.5], 4.0, QUICK, 200, 3),
              estimate_dirichlet(p, [0.2, 0.5, 0.5], QUICK, 200, 3)):
        assert abs(e.mean - 2.0) <= 2 * QUICK.weight_floor * 2.0 + 1e-12


def test_dirichlet_boundary_start_exact(linear_ball):
    e = estimate_dirichlet(linear_ball, [0.6, 0.8, 0.0], QUICK, 50, 1)
    assert e.mean == pytest.approx(0.6, abs=1e-15) and e.stderr == 0.0


def test_resolvent_examples(ball, half):
    p = ProblemSpec(ball, half, 2.0, constant(2.0), zero())
    e = estimate_resolvent(p, [0.1, 0.0, 0.0], QUICK, 200, 1, keep_values=True)
    assert np.all(np.abs(e.values - 1.0) <= QUICK.weight_floor + 1e-12)
    q = ProblemSpec(ball, half, 2.0, constant(1.0), zero())
    assert estimate_resolvent(q, [0.1, 0, 0], QUICK, 200, 1).mean == pytest.approx(0.5, abs=QUICK.weight_floor)


def test_resolvent_antisymmetric_start(ball, half):
    p = ProblemSpec(ball, half, 1.0, coordinate(0), zero())
    e = estimate_resolvent(p, np.zeros(3), QUICK, 3000, 2)
    assert abs(e.mean) <= 3 * e.stderr


def test_boundary_potential_examples(ball, half):
    p = ProblemSpec(ball, half, 1.0, zero(), zero())
    e = estimate_boundary_potential(p, [0.2, 0, 0], QUICK, 100, 1)
    assert e.mean == 0.0 and e.stderr == 0.0
    far = ProblemSpec(ball, half, 100.0, zero(), constant(1.0))
    e = estimate_boundary_potential(far, np.zeros(3), SimParams(dt=1e-4), 2000, 1)
    assert 0.0 <= e.mean <= 1e-3


def test_robin_dominated_by_resolvent(ball, half):
    p = ProblemSpec(ball, half, 1.0, sin_product(1.0, [1, 1, 1], [2, 2, 2]), zero())  # f >= 0 on the ball
    r = estimate_robin(p, [0.7, 0, 0], 3.0, QUICK, 400, 8, keep_values=True)
    v = estimate_resolvent(p, [0.7, 0, 0], QUICK, 400, 8, keep_values=True)
    assert np.all(r.values >= 0) and np.all(r.values <= v.values + QUICK.weight_floor)


@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_monotone_discount(n1, n2):
    from robinmc import Ball, ConstantField

    lo, hi = sorted((n1, n2))
    p = ProblemSpec(Ball(np.zeros(3), 1.0), ConstantField.isotropic(0.5), 1.0, constant(1.0), zero())
    rows = reflected_rows(p, [0.8, 0, 0], QUICK, 20, 4, ns=[lo, hi])
    assert np.all(rows.part(1)[0] <= rows.part(0)[0] + 1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_pathwise(alpha, beta):
    from robinmc import Box, ConstantField

    box = Box(np.zeros(3), np.ones(3))
    fld = ConstantField(np.diag([0.5, 1.0, 0.7]), lambda_ell=2.0)
    f1, g1 = coordinate(0), constant(1.0)
    f2, g2 = sin_product(1.0, [3, 1, 2]), coordinate(2, 2.0)
    x = [0.2, 0.7, 0.4]

    def vals(f, g):
        fv, bv = reflected_rows(ProblemSpec(box, fld, 1.0, f, g), x, QUICK, 10, 6, ns=[2.0], g_coefs=[2.0]).part(0)
        return fv + bv

    lhs = vals(alpha * f1 + beta * f2, alpha * g1 + beta * g2)
    rhs = alpha * vals(f1, g1) + beta * vals(f2, g2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_worker_count_independence(linear_ball):
    runs = [estimate_robin_schedule(linear_ball, [0.5, 0, 0], [1.0, 16.0], QUICK, 2500, 9, workers=w) for w in (1, 2, 8)]
    for other in runs[1:]:
        for a, b in zip(runs[0], other):
            assert a.mean == b.mean and a.stderr == b.stderr
    d = [estimate_dirichlet(linear_ball, [0.5, 0, 0], QUICK, 2500, 9, workers=w).mean for w in (1, 2)]
    assert d[0] == d[1]


def test_contract_errors(linear_ball):
    with pytest.raises(ContractViolation):
        estimate_robin(linear_ball, [0.5, 0, 0], 1.0, QUICK, 0, 1)
    with pytest.raises(ContractViolation):
        estimate_robin(linear_ball, [0.5, 0, 0], 0.0, QUICK, 10, 1)
    with pytest.raises(ContractViolation):
        estimate_dirichlet(linear_ball, [1.5, 0, 0], QUICK, 10, 1)
    with pytest.raises(ContractViolation):
        ProblemSpec(linear_ball.domain, linear_ball.field, 0.0, zero(), zero())


def test_nan_reported(ball, half):
    bad = ProblemSpec(ball, half, 1.0, sin_product(1.0, [np.inf, 1, 1]), zero())
    with pytest.raises(PropagatedNaN) as info:
        estimate_robin(bad, [0.1, 0.2, 0.3], 1.0, QUICK, 5, 1)
    assert info.value.point is not None
    slow = ProblemSpec(ball, half, 1.0, lambda x: float("nan"), lambda p: 0.0, 1.0, 1.0)
    with pytest.raises(PropagatedNaN):
        estimate_dirichlet(slow, [0.1, 0.2, 0.3], QUICK, 2, 1)


def test_fixed_point_constant_problem(ball, half):
    p = constant_problem(ball, half, 1.0, 2.0)
    grid = [[0.2, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [-1.0, 0, 0], [0.0, -0.5, 0.3]]
    # a tiny floor: the truncated tail of v_n re-enters the right side through n (g - v_n)
    params = SimParams(dt=1e-3, weight_floor=1e-10)
    r = fixed_point_residual(p, 4.0, grid, params, 200, 2)
    assert r.residual_max <= 3 * max(r.combined_stderr) + 1e-7
    dense = [[0.2, 0, 0], *fibonacci_sphere(400)]
    r = fixed_point_residual(p, 4.0, dense, params, 20, 2, rhs_paths=100, interpolation="nearest", check=[0])
    assert r.residual_per_point[0] <= 3 * r.combined_stderr[0] + 1e-7


def test_fixed_point_zero_penalty(linear_ball):
    r = fixed_point_residual(linear_ball, 0.0, [[0.3, 0, 0]], QUICK, 2000, 2)
    assert r.residual_max <= 3 * r.combined_stderr[0]


def test_fixed_point_grid_coverage(linear_ball):
    with pytest.raises(InsufficientBoundaryGrid):
        fixed_point_residual(linear_ball, 4.0, [[0.3, 0, 0]], QUICK, 20, 2)
    with pytest.raises(InsufficientBoundaryGrid):
        fixed_point_residual(linear_ball, 4.0, [[0.3, 0, 0], [1.0, 0, 0]], QUICK, 200, 2, interpolation="nearest")


def test_fixed_point_grid_streams_independent(linear_ball):
    # a repeated point gets its own streams, and the affine fit error reaches the error bar
    grid = [[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0], [0, 0, -1.0], [0.3, 0, 0], [0.3, 0, 0]]
    r = fixed_point_residual(linear_ball, 4.0, grid, QUICK, 100, 3, check=[5, 6], sensitivity_paths=50)
    assert r.lhs[0].mean != r.lhs[1].mean
    assert all(e > 0 for e in r.fit_stderr) and len(r.fit_stderr) == 2
    assert all(c > a.stderr + b.stderr for c, a, b in zip(r.combined_stderr, r.lhs, r.rhs))
