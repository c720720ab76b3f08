import numpy as np
import pytest

from robinmc import CalibrationBracketFailure, ConfigError, ContractViolation, ProblemSpec, SimParams
from robinmc.experiments import calibrate_local_time, calibration_problem, local_time_audit, run_convergence, run_validation
from robinmc.functions import coordinate
from robinmc.sde import KAPPA

from conftest import constant_problem

QUICK = SimParams(dt=1e-3, weight_floor=1e-4)


def test_constant_problem_gaps(ball, half):
    p = constant_problem(ball, half, 1.0, 2.0)
    rep = run_convergence(p, [[0.3, 0, 0], [0, 1.0, 0]], [1, 4, 16], QUICK, 300, 1)
    tails = 2 * QUICK.weight_floor * 2.0
    assert np.all(rep.gaps <= 3 * rep.gap_errors + tails)
    assert rep.gaps.shape == (2, 3) and len(rep.table()) == 6


def test_boundary_point_dirichlet_exact(linear_ball):
    rep = run_convergence(linear_ball, [[0.5, 0, 0], [0.6, 0.8, 0]], [1, 4], QUICK, 200, 3)
    assert rep.dirichlet[1].mean == pytest.approx(0.6, abs=1e-15) and rep.dirichlet[1].stderr == 0.0
    fg, bg = rep.component_gaps()
    assert fg.shape == bg.shape == (2, 2)


def test_convergence_preconditions(linear_ball):
    with pytest.raises(ContractViolation):
        run_convergence(linear_ball, [[0.5, 0, 0]], [1, 4], QUICK, 10, 1)
    with pytest.raises(ContractViolation):
        run_convergence(linear_ball, [[0.5, 0, 0], [1, 0, 0]], [4, 1], QUICK, 10, 1)


def test_local_time_audit_interior(ball, half):
    p = ProblemSpec(ball, half, 1.0, coordinate(0), coordinate(0))
    audit = local_time_audit(p, [0.3, 0.2, 0.1], 5.0, QUICK, 300, 2)
    assert audit["before_contact"] == 0 and audit["outside"] == 0 and audit["negative_increment"] == 0


def test_validation_suite_and_kappa_sensitivity():
    good = run_validation(SimParams(), 5, paths=300, kappa_paths=300, resolution=17)
    assert good.passed, [c for c in good.checks if not c.passed]
    bad = run_validation(SimParams(kappa=2 * KAPPA), 5, paths=300, kappa_paths=300, resolution=17)
    failed = {c.name for c in bad.checks if not c.passed}
    assert "kappa_box" in failed


def test_validation_zero_paths():
    with pytest.raises(ConfigError):
        run_validation(SimParams(), 1, paths=0)


def test_calibration_ci_scaling_and_bracket():
    p = calibration_problem()
    params = SimParams(dt=1e-3)
    a = calibrate_local_time(p, params, 400, 3, resolution=17)
    b = calibrate_local_time(p, params, 800, 3, resolution=17)
    ratio = (a.ci_high - a.ci_low) / (b.ci_high - b.ci_low)
    assert 1.3 <= ratio <= 1.7
    assert a.ci_low < a.kappa < a.ci_high
    with pytest.raises(CalibrationBracketFailure):
        calibrate_local_time(p, params, 50, 3, resolution=17, bracket=(10.0, 20.0))
