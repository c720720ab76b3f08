"""One test per acceptance criterion, at the stated tolerances and budgets.

These are slow (tens of minutes in total on one core). Select them with
``pytest -m acceptance`` or skip them with ``-m "not acceptance"``.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from robinmc import (
    Ball,
    Box,
    ConstantField,
    ProblemSpec,
    SimParams,
    estimate_boundary_potential,
    estimate_dirichlet,
    estimate_robin,
    fixed_point_residual,
    solve_dirichlet_fd,
    solve_neumann_flux_fd,
    solve_robin_fd,
)
from robinmc.cli import main
from robinmc.experiments import calibration_problem, local_time_audit, run_convergence
from robinmc.functions import constant, coordinate, robin_data_for_affine, sin_product, trig_conormal_flux, trig_mode, zero

from conftest import fibonacci_sphere

pytestmark = pytest.mark.acceptance

BALL = Ball(np.zeros(3), 1.0)
BOX = Box(np.zeros(3), np.ones(3))
HALF = ConstantField.isotropic(0.5)
LINEAR = ProblemSpec(BALL, HALF, 1.0, coordinate(0), coordinate(0))
ROOT = Path(__file__).resolve().parents[1]


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, budget {self.seconds} s"


def test_c1_telescoping():
    params = SimParams(dt=1e-3)
    eps = params.weight_floor
    with Budget(10):
        for c in (1.0, 2.0):
            for lam in (0.5, 1.0):
                p = ProblemSpec(BALL, HALF, lam, constant(lam * c), constant(c))
                d = estimate_dirichlet(p, [0.3, -0.2, 0.1], params, 1000, 11)
                assert abs(d.mean - c) <= c * (eps + 1e-10) and d.stderr * 1000**0.5 <= c * eps
                for n in (1.0, 100.0):
                    r = estimate_robin(p, [0.3, -0.2, 0.1], n, params, 1000, 11)
                    assert abs(r.mean - c) <= c * (eps + 1e-10) and r.stderr * 1000**0.5 <= c * eps


@pytest.mark.parametrize("domain,x", [(BALL, [0.2, 0.1, -0.3]), (BOX, [0.4, 0.6, 0.5])], ids=["ball", "box"])
def test_c2a_no_local_time_before_contact(domain, x):
    p = ProblemSpec(domain, HALF, 1.0, coordinate(0), coordinate(0))
    audit = local_time_audit(p, x, 1.0, SimParams(dt=1e-3, max_steps=1000), 100_000, 21)
    assert audit["paths"] == 100_000
    assert audit["before_contact"] == 0 and audit["outside"] == 0


def test_c2b_boundary_start_immediate_local_time():
    audit = local_time_audit(LINEAR, [1.0, 0.0, 0.0], 1e6, SimParams(dt=1e-4, max_steps=200), 10_000, 22, window=100)
    frac = audit["early_local_time"] / audit["paths"]
    assert frac >= 0.99, f"only {frac:.4f} of boundary-started paths gained local time within 100 steps"


def test_c3_manufactured_dirichlet():
    with Budget(120):
        a = estimate_dirichlet(LINEAR, [0.5, 0, 0], SimParams(dt=1e-4), 200_000, 31)
        b = estimate_dirichlet(LINEAR, [0.5, 0, 0], SimParams(dt=5e-5), 200_000, 31)
    assert abs(a.mean - 0.5) <= max(3 * a.stderr, 0.005)
    assert abs(a.mean - b.mean) < np.hypot(a.stderr, b.stderr)


def test_c4_calibration_transfer():
    params = SimParams()
    p = calibration_problem()
    oracle = solve_neumann_flux_fd(p, 65)
    for x in ([0.25, 0.5, 0.5], [0.3, 0.3, 0.7]):
        target = oracle.interpolate(x)
        e = estimate_boundary_potential(p, x, params, 4000, 41)
        assert abs(e.mean - target) <= 0.02 * target + 3 * e.stderr, (x, e.mean, e.stderr, target)
    n = 4.0
    robin = ProblemSpec(BALL, HALF, 1.0, coordinate(0), robin_data_for_affine(0, [1, 0, 0], 0.5 * np.eye(3), n))
    e = estimate_robin(robin, [0.5, 0, 0], n, params, 20_000, 42)
    assert abs(e.mean - 0.5) <= max(3 * e.stderr, 0.01), (e.mean, e.stderr)


def test_c5_convergence_in_penalty():
    with Budget(15 * 60):
        rep = run_convergence(LINEAR, [[0.5, 0, 0], [0, 0, 1.0]], [1, 4, 16, 64, 256], SimParams(dt=C5_DT),
                              200_000, 51)
    assert rep.nonincreasing(0)
    assert rep.gaps[0, -1] <= max(0.01, 3 * rep.gap_errors[0, -1])
    # boundary point: v_n(p) against g(p) = p_1 = 0
    for e in rep.robin[1]:
        assert abs(e.mean - 0.0) <= 3 * e.stderr


C5_DT = 4e-4


def test_c6_fixed_point():
    n = 4.0
    p = ProblemSpec(BALL, HALF, 1.0, coordinate(0), robin_data_for_affine(0, [1, 0, 0], 0.5 * np.eye(3), n))
    grid = [*fibonacci_sphere(10), *(0.9 * BALL.sample(np.random.default_rng(0), 10))]
    with Budget(300):
        r = fixed_point_residual(p, n, grid, SimParams(dt=1e-3), 2000, 61, rhs_paths=4000)
    assert len(r.residual_per_point) == 20
    assert r.residual_max <= 3 * max(r.combined_stderr) + 0.02


def _trig_solvers():
    u = trig_mode(3)
    src = (1.5 * np.pi**2 + 1.0) * u
    flux = trig_conormal_flux([0.5, 0.5, 0.5])
    return u, {
        "dirichlet": lambda r: solve_dirichlet_fd(ProblemSpec(BOX, HALF, 1.0, src, zero()), r),
        "robin": lambda r: solve_robin_fd(ProblemSpec(BOX, HALF, 1.0, src, u + 0.25 * flux), 4.0, r),
        "neumann": lambda r: solve_neumann_flux_fd(ProblemSpec(BOX, HALF, 1.0, src, flux), r),
    }


def test_c7_fd_oracle_integrity():
    with Budget(120):
        u, solvers = _trig_solvers()
        for name, solve in solvers.items():
            errs = []
            for r in (17, 33, 65):
                gf = solve(r)
                errs.append(float(np.max(np.abs(gf.values.ravel() - u.evaluate(gf.nodes())))))
            ratios = [errs[0] / errs[1], errs[1] / errs[2]]
            assert all(3.6 <= q <= 4.4 for q in ratios), (name, ratios)
        problems = [
            ProblemSpec(BOX, HALF, 1.0, coordinate(0), sin_product(1.0, [3, 2, 1], [0.1, 0.2, 0.3])),
            ProblemSpec(BOX, HALF, 1.0, zero(), constant(1.0)),
            ProblemSpec(BOX, ConstantField(np.diag([0.3, 0.5, 0.8]), 4.0), 0.5, constant(1.0), coordinate(1, 2.0)),
        ]
        for p in problems:
            ud = solve_dirichlet_fd(p, 17, rtol=1e-13)
            gaps = [np.max(np.abs(solve_robin_fd(p, n, 17, precondition=True, rtol=1e-13).values - ud.values))
                    for n in 10.0 ** np.arange(1, 7)]
            assert all(b <= a for a, b in zip(gaps, gaps[1:])), gaps


def test_c8_cli_determinism(tmp_path, capsys):
    cfg = str(ROOT / "configs" / "smoke.toml")
    outputs = []
    for run, workers in enumerate((1, 1, 2, 8)):
        out = tmp_path / f"run{run}"
        assert main(["converge", "--config", cfg, "--seed", "81", "--workers", str(workers), "--out", str(out)]) == 0
        outputs.append((out / "convergence.csv").read_bytes())
    capsys.readouterr()
    assert all(o == outputs[0] for o in outputs[1:])
