"""Convergence tables, the validation suite and the local-time calibration."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .coefficients import ConstantField
from .errors import CalibrationBracketFailure, ConfigError, ContractViolation
from .fd_oracle import solve_dirichlet_fd, solve_neumann_flux_fd
from .feynman_kac import (
    ProblemSpec,
    estimate_boundary_potential,
    estimate_dirichlet,
    dirichlet_rows,
    estimate_robin_schedule,
    reflected_rows,
)
from .functions import constant, coordinate, zero
from .geometry import Ball, Box, Location
from .reference import ball_boundary_potential
from .sde import SimParams

DEFAULT_SCHEDULE = (1.0, 4.0, 16.0, 64.0, 256.0)
DEFAULT_PATHS = 200_000
CI_Z = 1.959963984540054  # two-sided 95%


# ------------------------------------------------------------- convergence


@dataclass
class ConvergenceReport:
    problem: dict
    points: list
    n_schedule: list
    robin: list  # robin[i][j]: Estimate at points[i], n_schedule[j]
    dirichlet: list
    metadata: dict = field(default_factory=dict)

    @property
    def gaps(self) -> np.ndarray:
        return np.array([[abs(e.mean - v.mean) for e in row] for row, v in zip(self.robin, self.dirichlet)])

    @property
    def gap_errors(self) -> np.ndarray:
        return np.array([[e.stderr + v.stderr for e in row] for row, v in zip(self.robin, self.dirichlet)])

    def component_gaps(self) -> tuple[np.ndarray, np.ndarray]:
        """|f-part of v_n - f-part of v| and the same for the boundary parts."""
        fg = np.array([[abs(e.f_part - v.f_part) for e in row] for row, v in zip(self.robin, self.dirichlet)])
        bg = np.array([[abs(e.b_part - v.b_part) for e in row] for row, v in zip(self.robin, self.dirichlet)])
        return fg, bg

    def nonincreasing(self, i: int, k: float = 1.0) -> bool:
        """Gap sequence at point i never rises by more than k combined error bars."""
        g, e = self.gaps[i], self.gap_errors[i]
        return bool(np.all(g[1:] <= g[:-1] + k * (e[1:] + e[:-1])))

    COLUMNS = ("n", "estimate", "stderr", "gap", "gap_stderr", "dirichlet", "dirichlet_stderr",
               "f_part", "g_part", "dirichlet_f_part", "dirichlet_g_part")

    def header(self) -> list[str]:
        d = len(self.points[0])
        return [f"x{i}" for i in range(d)] + list(self.COLUMNS)

    def table(self) -> list[list[float]]:
        out = []
        for x, row, v in zip(self.points, self.robin, self.dirichlet):
            for n, e in zip(self.n_schedule, row):
                out.append([*map(float, x), n, e.mean, e.stderr, abs(e.mean - v.mean), e.stderr + v.stderr,
                            v.mean, v.stderr, e.f_part, e.b_part, v.f_part, v.b_part])
        return out


def _check_schedule(ns):
    ns = [float(n) for n in ns]
    if not ns or ns[0] <= 0 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ContractViolation(f"n_schedule must be positive and strictly increasing, got {ns}")
    return ns


def run_convergence(problem: ProblemSpec, points, n_schedule, params: SimParams, paths: int, seed: int,
                    workers: int = 1, dirichlet_paths: int = None, require_both: bool = True) -> ConvergenceReport:
    ns = _check_schedule(n_schedule)
    if paths < 1:
        raise ContractViolation("paths must be >= 1")
    points = [np.asarray(x, dtype=float) for x in points]
    kinds = [problem.domain.classify(x) for x in points]
    if any(k is Location.EXTERIOR for k in kinds):
        raise ContractViolation("evaluation points must lie in the closed domain")
    if require_both and (Location.INTERIOR not in kinds or Location.BOUNDARY not in kinds):
        raise ContractViolation("need at least one interior and one boundary evaluation point")
    t0 = time.perf_counter()
    robin, dirichlet = [], []
    for x in points:
        try:
            robin.append(estimate_robin_schedule(problem, x, ns, params, paths, seed, workers))
            dirichlet.append(estimate_dirichlet(problem, x, params, dirichlet_paths or paths, seed, workers))
        except Exception as exc:
            raise type(exc)(f"at x={x.tolist()}: {exc}") from exc
    meta = {
        "seed": seed,
        "dt": params.dt,
        "weight_floor": params.weight_floor,
        "paths": paths,
        "dirichlet_paths": dirichlet_paths or paths,
        "kappa": params.kappa,
        "reflection": params.reflection,
        "wall_time_s": time.perf_counter() - t0,
    }
    return ConvergenceReport(_describe(problem), points, ns, robin, dirichlet, meta)


def _describe(problem):
    out = {"lambda": problem.lam, "domain": problem.domain.to_config()}
    for key in ("f", "g"):
        fn = getattr(problem, key)
        out[key] = getattr(fn, "name", repr(fn))
    out["field"] = type(problem.field).__name__
    return out


# ------------------------------------------------------------- calibration


@dataclass
class CalibrationResult:
    kappa: float
    ci_low: float
    ci_high: float
    target: float
    unit_mean: float  # boundary potential estimate at kappa = 1
    unit_stderr: float
    point: list
    paths: int
    dt: float
    seed: int

    @property
    def halfwidth(self) -> float:
        """Relative CI half-width."""
        return 0.5 * (self.ci_high - self.ci_low) / self.kappa

    def to_dict(self):
        return {
            "kappa": self.kappa,
            "ci": [self.ci_low, self.ci_high],
            "relative_halfwidth": self.halfwidth,
            "target": self.target,
            "unit_mean": self.unit_mean,
            "unit_stderr": self.unit_stderr,
            "point": self.point,
            "paths": self.paths,
            "dt": self.dt,
            "seed": self.seed,
        }


def calibrate_local_time(problem: ProblemSpec, params: SimParams, paths: int, seed: int, point=None,
                         resolution: int = 65, bracket=(0.5, 8.0), workers: int = 1) -> CalibrationResult:
    """Fit kappa so the boundary potential of g matches the finite-difference flux solve.

    The walks do not depend on kappa when n = 0, and the local time scales
    linearly with it, so one set of walks at kappa = 1 prices every kappa in the
    bracket.  The root and both CI ends are found by Brent's method on that
    common path set.
    """
    if not isinstance(problem.domain, Box) or not problem.field.is_diagonal():
        raise ContractViolation("calibration needs a box with a diagonal coefficient field")
    if paths < 2:
        raise ContractViolation("calibration needs at least 2 paths")
    x = problem.domain.center if point is None else np.asarray(point, dtype=float)
    target = solve_neumann_flux_fd(problem.with_data(f=zero()), resolution).interpolate(x)
    unit = estimate_boundary_potential(problem, x, replace(params, kappa=1.0), paths, seed, workers)
    lo, hi = bracket

    def root(m):
        fn = lambda k: k * m - target  # noqa: E731
        if fn(lo) * fn(hi) > 0:
            raise CalibrationBracketFailure(f"no sign change for kappa in [{lo:g}, {hi:g}] (estimate at 1: {m:.6g}, target {target:.6g})")
        return brentq(fn, lo, hi, xtol=1e-14, rtol=1e-14)

    k = root(unit.mean)
    ends = sorted(root(unit.mean + s * CI_Z * unit.stderr) for s in (1.0, -1.0))
    return CalibrationResult(k, ends[0], ends[1], target, unit.mean, unit.stderr, x.tolist(), paths, params.dt, seed)


def calibration_problem(lam: float = 1.0) -> ProblemSpec:
    return ProblemSpec(Box(np.zeros(3), np.ones(3)), ConstantField.isotropic(0.5), lam, zero(), constant(1.0))


# -------------------------------------------------------------- validation


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.__dict__ for c in self.checks]}


def _run_check(checks, name, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # failures are report entries
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    checks.append(Check(name, bool(ok), detail))


def run_validation(params: SimParams, seed: int, paths: int = 2000, kappa_paths: int = 2000, workers: int = 1,
                   resolution: int = 33) -> ValidationReport:
    """Cheap versions of the structural and oracle checks, one entry per check."""
    if paths < 1 or kappa_paths < 1:
        raise ConfigError("paths must be >= 1", key="paths")
    ball = Ball(np.zeros(3), 1.0)
    box = Box(np.zeros(3), np.ones(3))
    half = ConstantField.isotropic(0.5)
    checks: list[Check] = []
    # shorter walks for the pathwise checks keep the suite cheap
    quick = replace(params, dt=max(params.dt, 1e-3))

    def telescoping():
        worst = 0.0
        for dom in (ball, box):
            for lam in (0.5, 1.0):
                p = ProblemSpec(dom, half, lam, constant(2.0 * lam), constant(2.0))
                x = np.full(3, 0.3) if dom is ball else np.full(3, 0.6)
                for n in (1.0, 100.0):
                    rows = reflected_rows(p, x, quick, min(paths, 500), seed, ns=[n], g_coefs=[n])
                    fv, bv = rows.part(0)
                    exact = 2.0 * (1.0 - rows.column(K.C_WEIGHT))
                    worst = max(worst, float(np.max(np.abs(fv + bv - exact))))
                drows = dirichlet_rows(p, x, quick, min(paths, 500), seed)
                fv, bv = drows.part(0)
                exact = np.where(drows.flags & K.F_EXITED, 2.0, 2.0 * (1.0 - drows.column(K.C_WEIGHT)))
                worst = max(worst, float(np.max(np.abs(fv + bv - exact))))
        return worst <= 1e-12, f"max pathwise deviation {worst:.3g}"

    def local_time_support():
        before = 0
        for dom, x in ((ball, np.array([0.2, 0.1, 0.0])), (box, np.full(3, 0.4))):
            p = ProblemSpec(dom, half, 1.0, zero(), zero())
            rows = reflected_rows(p, x, quick, paths, seed, ns=[1.0], g_coefs=[1.0])
            before += int(np.count_nonzero(rows.column(K.C_BEFORE)))
        return before == 0, f"{before} paths with A > 0 before first contact"

    def linearity():
        x = np.array([0.3, -0.2, 0.4])
        f1, g1, f2, g2 = coordinate(0), constant(1.0), coordinate(1, 2.0), coordinate(2)
        def part(f, g):
            p = ProblemSpec(ball, half, 1.0, f, g)
            fv, bv = reflected_rows(p, x, quick, min(paths, 500), seed, ns=[4.0], g_coefs=[4.0]).part(0)
            return fv + bv
        lhs = part(2.0 * f1 + (-3.0) * f2, 2.0 * g1 + (-3.0) * g2)
        rhs = 2.0 * part(f1, g1) - 3.0 * part(f2, g2)
        dev = float(np.max(np.abs(lhs - rhs)))
        return dev <= 1e-12 * max(1.0, float(np.max(np.abs(rhs)))), f"max pathwise deviation {dev:.3g}"

    def monotone_discount():
        x = np.array([0.5, 0.0, 0.0])
        p = ProblemSpec(ball, half, 1.0, constant(1.0), zero())
        rows = reflected_rows(p, x, quick, min(paths, 500), seed, ns=[0.0, 1.0, 16.0], g_coefs=[0.0, 0.0, 0.0])
        vals = np.stack([rows.part(j)[0] for j in range(3)])
        ok = bool(np.all(vals[1] <= vals[0] + 1e-15) and np.all(vals[2] <= vals[1] + 1e-15) and np.all(vals >= 0))
        return ok, "pathwise ordering in n"

    def fd_linear():
        p = ProblemSpec(box, half, 1.0, coordinate(0), coordinate(0))
        gf = solve_dirichlet_fd(p, 17)
        err = float(np.max(np.abs(gf.values.ravel() - gf.nodes()[:, 0])))
        return err <= 1e-8, f"max node error {err:.3g}"

    def dirichlet_boundary():
        p = ProblemSpec(ball, half, 1.0, coordinate(0), coordinate(0))
        e = estimate_dirichlet(p, [0.0, 0.6, 0.8], params, 10, seed)
        return e.mean == 0.0 and e.stderr == 0.0, f"value {e.mean}, stderr {e.stderr}"

    def kappa_box():
        p = calibration_problem()
        x = np.array([0.25, 0.5, 0.5])
        target = solve_neumann_flux_fd(p, resolution).interpolate(x)
        e = estimate_boundary_potential(p, x, params, kappa_paths, seed, workers)
        tol = 0.02 * target + 3.0 * e.stderr
        return abs(e.mean - target) <= tol, f"MC {e.mean:.5g} +- {e.stderr:.2g} vs oracle {target:.5g} (kappa {params.kappa:g})"

    def kappa_ball():
        p = ProblemSpec(ball, half, 1.0, zero(), constant(1.0))
        x = np.array([0.5, 0.0, 0.0])
        target = ball_boundary_potential(x)
        e = estimate_boundary_potential(p, x, params, kappa_paths, seed, workers)
        tol = 0.03 * target + 3.0 * e.stderr
        return abs(e.mean - target) <= tol, f"MC {e.mean:.5g} +- {e.stderr:.2g} vs closed form {target:.5g}"

    for name, fn in (
        ("telescoping", telescoping),
        ("local_time_support", local_time_support),
        ("linearity", linearity),
        ("monotone_discount", monotone_discount),
        ("fd_linear_exact", fd_linear),
        ("dirichlet_boundary_start", dirichlet_boundary),
        ("kappa_box", kappa_box),
        ("kappa_ball", kappa_ball),
    ):
        _run_check(checks, name, fn)
    return ValidationReport(checks)


def local_time_audit(problem: ProblemSpec, x, n: float, params: SimParams, paths: int, seed: int, window: int = 100,
                workers: int = 1) -> dict:
    """Counts for the local-time support checks: A before first contact, A > 0 within ``window`` steps."""
    rows = reflected_rows(problem, x, params, paths, seed, ns=[n], g_coefs=[n], window=window, workers=workers)
    return {
        "paths": len(rows),
        "before_contact": int(np.count_nonzero(rows.column(K.C_BEFORE))),
        "early_local_time": int(rows.column(K.C_EARLY).sum()),
        "outside": int(rows.column(K.C_OUTSIDE).sum()),
        "negative_increment": int(rows.column(K.C_NEGATIVE).sum()),
        "first_contact_step": rows.column(K.C_FIRST).copy(),
        "steps": rows.column(K.C_STEPS).copy(),
    }
