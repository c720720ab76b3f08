import numpy as np
import pytest
from scipy.stats import chisquare

from robinmc import (
    Ball,
    Box,
    ConstantField,
    ContractViolation,
    DiagonalPolynomialField,
    KAPPA,
    Location,
    ProblemSpec,
    SimParams,
    simulate_killed,
    simulate_reflected,
    step_reflected,
)
from robinmc import _kernels as K
from robinmc.feynman_kac import dirichlet_rows
from robinmc.functions import coordinate, zero

ANISO = ConstantField(np.array([[1.0, 0.3, 0.1], [0.3, 0.7, 0.0], [0.1, 0.0, 0.5]]), lambda_ell=3.0)
POLY = DiagonalPolynomialField(np.array([[1.0, 0.2, 0.1], [0.8, -0.1, 0.0], [1.2, 0.0, 0.05]]), lambda_ell=3.0)
QUICK = SimParams(dt=1e-3, weight_floor=1e-2)


def test_zero_noise_interior_step(ball, half):
    x, dA = step_reflected(np.zeros(3), half, ball, 1e-4, np.zeros(3))
    np.testing.assert_array_equal(x, np.zeros(3))
    assert dA == 0.0


def test_half_space_like_step(box, half):
    # sigma = chol(2a) = I, so noise = (y - x) / sqrt(dt)
    x = np.array([0.5, 0.5, 0.001])
    noise = np.array([0.0, 0.0, -0.004]) / np.sqrt(1e-4)
    x_next, dA = step_reflected(x, half, box, 1e-4, noise)
    np.testing.assert_allclose(x_next, [0.5, 0.5, 0.003], atol=1e-15)
    assert dA == pytest.approx(KAPPA * 0.003 / 0.5, rel=1e-12)


def test_step_rejects_exterior_start(ball, half):
    with pytest.raises(ContractViolation):
        step_reflected(np.array([2.0, 0, 0]), half, ball, 1e-4, np.zeros(3))


def test_oblique_push_follows_conormal(box):
    a = np.array([[1.0, 0.4, 0.0], [0.4, 1.0, 0.0], [0.0, 0.0, 1.0]])
    fld = ConstantField(a, lambda_ell=2.0)
    x = np.array([0.01, 0.5, 0.5])
    sig = fld.diffusion_sqrt(None)
    dt = 1e-4
    y = np.array([-0.02, 0.5, 0.5])
    noise = np.linalg.solve(sig, (y - x) / np.sqrt(dt))
    x_next, dA = step_reflected(x, fld, box, dt, noise)
    nu = a[:, 0] / np.linalg.norm(a[:, 0])
    s = 0.02 / nu[0]
    np.testing.assert_allclose(x_next, y + 2 * s * nu, atol=1e-14)
    assert dA == pytest.approx(KAPPA * s / np.linalg.norm(a[:, 0]), rel=1e-12)


def test_reflected_horizon_and_invariants(ball, linear_ball):
    params = SimParams(dt=1e-3, weight_floor=1e-6)
    rec = simulate_reflected([0.2, 0.1, 0.0], linear_ball, 0.0, params, 4)
    assert rec.times[-1] == pytest.approx(np.log(1e6), abs=2e-3)
    assert all(ball.classify(p) is not Location.EXTERIOR for p in rec.positions)
    assert rec.local_time[0] == 0.0 and np.all(np.diff(rec.local_time) >= 0)
    assert rec.local_time[-1] > 0


@pytest.mark.parametrize("dom,fld,x", [
    (Ball(np.zeros(3), 1.0), ANISO, [0.5, 0.3, 0.0]),
    (Box(np.zeros(3), np.ones(3)), POLY, [0.9, 0.5, 0.1]),
    (Box(np.zeros(3), np.ones(3)), ANISO, [0.5, 0.5, 0.5]),
])
def test_kernel_matches_python_reference(dom, fld, x):
    compiled = ProblemSpec(dom, fld, 1.0, coordinate(0), coordinate(0))
    python = ProblemSpec(dom, fld, 1.0, lambda p: p[0], lambda p: p[0], 1.0, 1.0)
    assert python.encoding() is None
    for i in range(3):
        a = simulate_reflected(x, compiled, 2.0, QUICK, 9, i)
        b = simulate_reflected(x, python, 2.0, QUICK, 9, i)
        assert a.positions.shape == b.positions.shape
        np.testing.assert_allclose(a.positions, b.positions, rtol=0, atol=1e-13)
        np.testing.assert_allclose(a.local_time, b.local_time, rtol=0, atol=1e-13)
        assert a.retries == b.retries
        kk = simulate_killed(x, compiled, QUICK, 9, i)
        kp = simulate_killed(x, python, QUICK, 9, i)
        np.testing.assert_allclose(kk.positions, kp.positions, rtol=0, atol=1e-13)
        assert kk.exited == kp.exited


def test_local_time_only_on_contact_steps(box, half):
    p = ProblemSpec(box, half, 1.0, zero(), zero())
    for i in range(5):
        rec = simulate_reflected([0.3, 0.6, 0.5], p, 1.0, QUICK, 2, i)
        contact = ~np.isnan(rec.contact_points[:, 0]) & np.any(rec.contact_points != 0, axis=1)
        inc = rec.increments
        assert np.all(inc[~contact] == 0.0)
        first = np.flatnonzero(inc > 0)
        if first.size:
            assert np.all(rec.local_time[: first[0] + 1] == 0.0)
        for cp in rec.contact_points[inc > 0]:
            assert box.classify(cp) is Location.BOUNDARY


def test_seed_determinism(linear_ball):
    a = simulate_reflected([0.5, 0, 0], linear_ball, 3.0, QUICK, 11, 5)
    b = simulate_reflected([0.5, 0, 0], linear_ball, 3.0, QUICK, 11, 5)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.local_time, b.local_time)


def test_killed_is_prefix_of_reflected(linear_ball):
    for i in range(4):
        r = simulate_reflected([0.5, 0, 0], linear_ball, 1.0, QUICK, 3, i)
        k = simulate_killed([0.5, 0, 0], linear_ball, QUICK, 3, i)
        m = k.positions.shape[0]
        np.testing.assert_array_equal(k.positions, r.positions[:m])


def test_killed_boundary_start(linear_ball):
    rec = simulate_killed([0.0, 1.0, 0.0], linear_ball, QUICK, 1)
    assert rec.exited and rec.exit_time == 0.0
    np.testing.assert_array_equal(rec.exit_point, [0.0, 1.0, 0.0])


def test_killed_horizon(linear_ball, ball):
    params = SimParams(dt=1e-3)
    for i in range(20):
        rec = simulate_killed([0.1, 0.0, 0.0], linear_ball, params, 8, i)
        assert (rec.exited and rec.exit_time <= 13.9) or not rec.exited
        if rec.exited:
            assert abs(ball.signed_distance(rec.exit_point)) <= ball.boundary_tolerance


def test_boundary_start_with_huge_penalty(linear_ball):
    """Weight floor is reached within a few contact steps; the median is a regression baseline."""
    params = SimParams(dt=1e-4)
    contacts = []
    for i in range(200):
        rec = simulate_reflected([0.0, 0.0, 1.0], linear_ball, 1e6, params, 6, i)
        assert np.exp(-params.dt * (len(rec.times) - 1) - 1e6 * rec.local_time[-1]) < params.weight_floor
        contacts.append(np.count_nonzero(rec.increments))
    assert np.median(contacts) == 1


def test_exit_distribution_uniform(ball, half):
    """Exit points from the centre: 100 equal-area cells (10 bands in z x 10 sectors in phi)."""
    p = ProblemSpec(ball, half, 1.0, zero(), zero())
    rows = dirichlet_rows(p, np.zeros(3), SimParams(dt=1e-3, weight_floor=1e-12), 100_000, 17)
    assert np.all(rows.flags & K.F_EXITED)
    pts = rows.data[:, K.C_POINT : K.C_POINT + 3]
    band = np.minimum(((pts[:, 2] + 1) / 2 * 10).astype(int), 9)
    sector = np.minimum(((np.arctan2(pts[:, 1], pts[:, 0]) + np.pi) / (2 * np.pi) * 10).astype(int), 9)
    counts = np.bincount(band * 10 + sector, minlength=100)
    assert chisquare(counts).pvalue > 1e-3


def test_params_validation():
    with pytest.raises(ValueError):
        SimParams(dt=0.0)
    with pytest.raises(ValueError):
        SimParams(weight_floor=1.0)
    with pytest.raises(ValueError):
        SimParams(kappa=-1.0)
    with pytest.raises(ValueError):
        SimParams(reflection="sideways")
