"""Monte Carlo estimators of the probabilistic Robin and Dirichlet solutions.

Robin:      v_n(x) = E_x int_0^inf exp(-lam t - n A_t) (f(X_t) dt + n g(X_t) dA_t)
Dirichlet:  v(x)   = E_x [exp(-lam tau) g(X_tau) + int_0^tau exp(-lam t) f(X_t) dt]

Per step the discount is integrated exactly under linear growth of
S = lam t + n A, so that f = lam c, g = c telescopes to c (1 - exp(-S_end))
on every path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels as K
from .coefficients import CoefficientField, ellipticity_report
from .errors import ContractViolation, DegenerateGeometry, EllipticityViolation, InsufficientBoundaryGrid, PropagatedNaN
from .functions import ScalarFunction, constant, coordinate, zero
from .geometry import Domain, Location
from .sde import SimParams, simulate_killed, simulate_reflected
from .streams import TAG_FIXED_POINT_RHS, TAG_MAIN, grid_tag, mean_and_stderr, run_paths

Data = Union[ScalarFunction, Callable[[np.ndarray], float]]


@dataclass(eq=False)
class ProblemSpec:
    domain: Domain
    field: CoefficientField
    lam: float
    f: Data
    g: Data
    f_bound: Optional[float] = None
    g_bound: Optional[float] = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ContractViolation(f"lambda must be positive, got {self.lam}")
        if self.field.dimension != self.domain.dimension:
            raise ContractViolation("coefficient field and domain dimensions differ")
        if self.f_bound is None:
            if not isinstance(self.f, ScalarFunction):
                raise ContractViolation("f_bound is required for callable f")
            self.f_bound = self.f.sup_bound(self.domain)
        if self.g_bound is None:
            if not isinstance(self.g, ScalarFunction):
                raise ContractViolation("g_bound is required for callable g")
            self.g_bound = self.g.sup_bound(self.domain)
        self._encoding = None

    def check_ellipticity(self, samples: int = 256, rng_seed: int = 0):
        rep = ellipticity_report(self.field, self.domain, samples, rng_seed)
        if not rep.passed:
            raise EllipticityViolation(
                f"eigenvalues of a(x) span [{rep.min_eig:.6g}, {rep.max_eig:.6g}], "
                f"outside [1/{self.field.lambda_ell:g}, {self.field.lambda_ell:g}]"
            )
        return rep

    def eval_f(self, x) -> float:
        return self.f(x, self.domain) if isinstance(self.f, ScalarFunction) else float(self.f(x))

    def eval_g(self, p) -> float:
        return self.g(p, self.domain) if isinstance(self.g, ScalarFunction) else float(self.g(p))

    def with_data(self, f: Data = None, g: Data = None) -> "ProblemSpec":
        return ProblemSpec(self.domain, self.field, self.lam, self.f if f is None else f, self.g if g is None else g)

    def encoding(self):
        """Kernel encoding, or None when some ingredient is not compilable."""
        if self._encoding is None:
            coef = self.field.encode()
            if coef is None or not isinstance(self.f, ScalarFunction) or not isinstance(self.g, ScalarFunction):
                return None
            d = self.domain.dimension
            self._encoding = {
                "geometry": self.domain.encode(),
                "coefficients": coef,
                "f": self.f.encode(d),
                "g": self.g.encode(d),
            }
        return self._encoding


@dataclass
class Estimate:
    mean: float
    stderr: float
    paths: int
    dt: float
    truncation_flagged: int
    seed: int
    kappa: float = float("nan")
    aborted: int = 0
    tail_bound: Optional[float] = None
    f_part: float = 0.0
    f_stderr: float = 0.0
    b_part: float = 0.0
    b_stderr: float = 0.0
    retries: int = 0
    degenerate: int = 0
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.paths < 1 or self.stderr < 0:
            raise ValueError("invalid estimate")

    def to_dict(self) -> dict:
        return {
            "value": self.mean,
            "stderr": self.stderr,
            "paths": self.paths,
            "dt": self.dt,
            "kappa": self.kappa,
            "seed": self.seed,
            "truncation_flagged": self.truncation_flagged,
            "aborted": self.aborted,
            "tail_bound": self.tail_bound,
            "f_part": self.f_part,
            "f_stderr": self.f_stderr,
            "b_part": self.b_part,
            "b_stderr": self.b_stderr,
            "retries": self.retries,
            "degenerate": self.degenerate,
        }


@dataclass
class PathRows:
    """Per-path kernel output with its dimension and number of penalties."""

    data: np.ndarray
    d: int
    parts: int = 1

    def __len__(self):
        return self.data.shape[0]

    def column(self, c):
        return self.data[:, c]

    @property
    def flags(self):
        return self.data[:, K.C_FLAGS].astype(np.int64)

    def part(self, j=0):
        c = K.part_column(self.d, j)
        return self.data[:, c], self.data[:, c + 1]

    def point(self, i):
        return self.data[i, K.C_POINT : K.C_POINT + self.d].copy()


def _check_rows(rows: PathRows, what):
    flags = rows.flags
    bad = np.flatnonzero(flags & K.F_NAN)
    if bad.size:
        pt = rows.point(bad[0])
        raise PropagatedNaN(f"{what}: NaN in f or g at {pt}", point=pt)
    if np.any(flags & K.F_INTERIOR_G):
        raise DegenerateGeometry(f"{what}: boundary data evaluated at an interior point")
    if np.any(flags & K.F_NO_TABLE):
        raise InsufficientBoundaryGrid(f"{what}: a boundary contact point has no grid point within 10% of the diameter")
    return flags


def _summarise(rows, params, seed, tail_bound, keep_values, j=0):
    flags = _check_rows(rows, "estimator")
    fvals, bvals = rows.part(j)
    total = fvals + bvals
    mean, se = mean_and_stderr(total)
    fm, fse = mean_and_stderr(fvals)
    bm, bse = mean_and_stderr(bvals)
    return Estimate(
        mean=mean,
        stderr=se,
        paths=len(rows),
        dt=params.dt,
        truncation_flagged=int(np.count_nonzero(flags & K.F_MAXSTEPS)),
        seed=seed,
        kappa=params.kappa,
        aborted=int(np.count_nonzero(flags & K.F_ABORTED)),
        tail_bound=tail_bound,
        f_part=fm,
        f_stderr=fse,
        b_part=bm,
        b_stderr=bse,
        retries=int(rows.column(K.C_RETRIES).sum()),
        degenerate=int(rows.column(K.C_DEGEN).sum()),
        values=total if keep_values else None,
    )


# ------------------------------------------------------- python functionals


def reflected_functional(record, f, h, lam, n_disc, dt):
    """(f-part, boundary part) of one reflected path record."""
    w = 1.0
    fterms, bterms = [], []
    for k, dA in enumerate(record.increments):
        dS = lam * dt + n_disc * dA
        wn = w * math.exp(-dS)
        dw = w - wn
        fterms.append(f(record.positions[k]) * dt * (dw / dS))
        if dA > 0:
            bterms.append(h(record.contact_points[k]) * dA * (dw / dS))
        w = wn
    return math.fsum(fterms), math.fsum(bterms)


def killed_functional(record, f, g, lam, dt):
    """(f-part, exit part) of one killed path record."""
    if record.exited and record.exit_time == 0.0:
        return 0.0, g(record.exit_point)
    steps = record.positions.shape[0] if record.exited else record.positions.shape[0] - 1
    w = 1.0
    terms = []
    for k in range(steps):
        wn = w * math.exp(-lam * dt)
        terms.append(f(record.positions[k]) * ((w - wn) / lam))
        w = wn
    exit_part = w * g(record.exit_point) if record.exited else 0.0
    return math.fsum(terms), exit_part


def _python_reflected_rows(problem, x, paths, seed, tag, params, ns, hs, f_on):
    d = problem.domain.dimension
    rows = np.zeros((paths, K.width(d, len(ns))))
    f = problem.eval_f if f_on else (lambda x: 0.0)
    lead = float(min(ns))
    for i in range(paths):
        rec = simulate_reflected(x, problem, lead, params, seed, path_index=i, tag=tag)
        for j, (n, h) in enumerate(zip(ns, hs)):
            c = K.part_column(d, j)
            rows[i, c], rows[i, c + 1] = reflected_functional(rec, f, h, problem.lam, n, params.dt)
            if np.isnan(rows[i, c] + rows[i, c + 1]):
                rows[i, K.C_FLAGS] = int(rows[i, K.C_FLAGS]) | K.F_NAN
                rows[i, K.C_POINT : K.C_POINT + d] = x
        rows[i, K.C_LOCAL] = rec.local_time[-1]
        rows[i, K.C_FLAGS] = int(rows[i, K.C_FLAGS]) | (K.F_MAXSTEPS if rec.truncation_incomplete else 0) | (
            K.F_ABORTED if rec.aborted else 0
        )
        rows[i, K.C_RETRIES] = rec.retries
        rows[i, K.C_DEGEN] = rec.degenerate
        rows[i, K.C_STEPS] = rec.positions.shape[0] - 1
    return PathRows(rows, d, len(ns))


def _python_killed_rows(problem, x, paths, seed, tag, params):
    d = problem.domain.dimension
    rows = np.zeros((paths, K.width(d)))
    c = K.part_column(d, 0)
    for i in range(paths):
        rec = simulate_killed(x, problem, params, seed, path_index=i, tag=tag)
        rows[i, c], rows[i, c + 1] = killed_functional(rec, problem.eval_f, problem.eval_g, problem.lam, params.dt)
        flags = (K.F_MAXSTEPS if rec.truncation_incomplete else 0) | (K.F_EXITED if rec.exited else 0)
        if np.isnan(rows[i, c] + rows[i, c + 1]):
            flags |= K.F_NAN
            rows[i, K.C_POINT : K.C_POINT + d] = x
        rows[i, K.C_FLAGS] = flags
        rows[i, K.C_STEPS] = rec.positions.shape[0] - (0 if rec.exited else 1)
    return PathRows(rows, d, 1)


# ---------------------------------------------------------------- estimators


def _check_point(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.domain.dimension,):
        raise ContractViolation(f"point {x} does not have dimension {problem.domain.dimension}")
    if problem.domain.classify(x) is Location.EXTERIOR:
        raise ContractViolation(f"evaluation point {x} is outside the closed domain")
    return x


def _check_paths(paths):
    if int(paths) < 1:
        raise ContractViolation("paths must be >= 1")
    return int(paths)


def reflected_rows(problem, x, params, paths, seed, *, ns, g_coefs=None, f_on=True, g_fn=None, table=None,
                   tab_coefs=None, tab_maxdist=np.inf, tag=TAG_MAIN, workers=1, window=0, max_steps=None):
    """Per-path rows of the reflected functional for the penalties ``ns``.

    All penalties share the same walks.  For penalty j the boundary integrand
    is h_j(p) = g_coefs[j] * g_fn(p) - tab_coefs[j] * table(p), where
    ``table`` = (points, values) is a nearest-neighbour lookup.
    """
    x = _check_point(problem, x)
    paths = _check_paths(paths)
    ns = np.atleast_1d(np.asarray(ns, dtype=float))
    if np.any(ns < 0):
        raise ContractViolation("penalties must be >= 0")
    g_coefs = np.zeros_like(ns) if g_coefs is None else np.atleast_1d(np.asarray(g_coefs, dtype=float))
    tab_coefs = np.zeros_like(ns) if tab_coefs is None or table is None else np.atleast_1d(np.asarray(tab_coefs, dtype=float))
    g_fn = problem.g if g_fn is None else g_fn
    if max_steps is not None:
        params = replace(params, max_steps=int(max_steps))
    enc = problem.encoding()
    if enc is not None and not isinstance(g_fn, ScalarFunction):
        enc = None
    d = problem.domain.dimension
    if enc is None:
        def g_eval(p):
            return g_fn(p, problem.domain) if isinstance(g_fn, ScalarFunction) else float(g_fn(p))

        def table_eval(p):
            dist = np.linalg.norm(table[0] - p, axis=1)
            i = int(np.argmin(dist))
            if dist[i] > tab_maxdist:
                raise InsufficientBoundaryGrid(f"no boundary grid point within {tab_maxdist:g} of contact point {p}")
            return table[1][i]

        def make_h(gc, tc):
            def h(p):
                v = gc * g_eval(p) if gc else 0.0
                return v - tc * table_eval(p) if tc else v

            return h

        hs = [make_h(gc, tc) for gc, tc in zip(g_coefs, tab_coefs)]
        return _python_reflected_rows(problem, x, paths, seed, tag, params, ns, hs, f_on)
    fT = enc["f"] if f_on else zero().encode(d)
    if table is None:
        tab_pts, tab_vals = np.zeros((1, d)), np.zeros(1)
    else:
        tab_pts = np.ascontiguousarray(table[0], dtype=float)
        tab_vals = np.ascontiguousarray(table[1], dtype=float)
    empty = np.zeros((1, d)), np.zeros(1)
    args = (
        x, *enc["geometry"], *enc["coefficients"], float(problem.lam), ns, fT, g_coefs, g_fn.encode(d), tab_coefs,
        tab_pts, tab_vals, float(tab_maxdist), params.dt, params.weight_floor, int(params.max_steps),
        float(params.kappa), params.mode, int(window),
    )
    rec = (empty[0], empty[1], empty[1], empty[0])
    rows = run_paths("reflected_paths", args, paths, seed, K.width(d, len(ns)), tag=tag, workers=workers, trailing=rec)
    return PathRows(rows, d, len(ns))


def _robin_tail(problem, params):
    return params.weight_floor * (problem.f_bound / problem.lam + problem.g_bound)


def estimate_robin_schedule(problem, x, ns, params: SimParams, paths: int, seed: int, workers: int = 1,
                            keep_values=False) -> list:
    """v_n(x) for every n in ``ns`` from one set of walks (common random numbers)."""
    ns = [float(n) for n in ns]
    if not ns or min(ns) <= 0:
        raise ContractViolation(f"penalties must be positive, got {ns}")
    rows = reflected_rows(problem, x, params, paths, seed, ns=ns, g_coefs=ns, workers=workers)
    tail = _robin_tail(problem, params)
    return [_summarise(rows, params, seed, tail, keep_values, j) for j in range(len(ns))]


def estimate_robin(problem, x, n, params: SimParams, paths: int, seed: int, workers: int = 1, keep_values=False) -> Estimate:
    if not n > 0:
        raise ContractViolation(f"penalty n must be positive, got {n}")
    return estimate_robin_schedule(problem, x, [n], params, paths, seed, workers, keep_values)[0]


def estimate_resolvent(problem, x, params: SimParams, paths: int, seed: int, workers: int = 1, keep_values=False) -> Estimate:
    """R_lam f(x) for the reflected (not killed) diffusion."""
    rows = reflected_rows(problem, x, params, paths, seed, ns=[0.0], workers=workers)
    return _summarise(rows, params, seed, params.weight_floor * problem.f_bound / problem.lam, keep_values)


def estimate_boundary_potential(problem, x, params: SimParams, paths: int, seed: int, workers: int = 1, keep_values=False) -> Estimate:
    """E_x int_0^inf exp(-lam t) g(X_t) dA_t over reflected walks."""
    rows = reflected_rows(problem, x, params, paths, seed, ns=[0.0], g_coefs=[1.0], f_on=False, workers=workers)
    return _summarise(rows, params, seed, None, keep_values)


def dirichlet_rows(problem, x, params, paths, seed, tag=TAG_MAIN, workers=1):
    x = _check_point(problem, x)
    paths = _check_paths(paths)
    enc = problem.encoding()
    if enc is None:
        return _python_killed_rows(problem, x, paths, seed, tag, params)
    d = problem.domain.dimension
    args = (
        x, *enc["geometry"], *enc["coefficients"], float(problem.lam), enc["f"], enc["g"], params.dt,
        params.weight_floor, int(params.max_steps),
    )
    rows = run_paths("killed_paths", args, paths, seed, K.width(d), tag=tag, workers=workers, trailing=(np.zeros((1, d)),))
    return PathRows(rows, d, 1)


def estimate_dirichlet(problem, x, params: SimParams, paths: int, seed: int, workers: int = 1, keep_values=False) -> Estimate:
    rows = dirichlet_rows(problem, x, params, paths, seed, workers=workers)
    est = _summarise(rows, params, seed, None, keep_values)
    not_exited = np.count_nonzero((rows.flags & K.F_EXITED) == 0)
    est.tail_bound = params.weight_floor * (problem.g_bound + problem.f_bound / problem.lam) if not_exited else 0.0
    return est


# --------------------------------------------------------------- fixed point


@dataclass
class FixedPointResult:
    residual_max: float
    residual_per_point: list
    combined_stderr: list
    lhs: list
    rhs: list
    interpolation: str
    fit_stderr: list = field(default_factory=list)


def _affine_design(points, d):
    X = np.hstack([np.ones((len(points), 1)), np.asarray(points)])
    if len(points) < d + 1 or np.linalg.matrix_rank(X) < d + 1:
        raise InsufficientBoundaryGrid(f"affine boundary interpolation needs {d + 1} affinely independent boundary points")
    return X


def _affine_function(coef, d):
    fit = constant(coef[0])
    for i in range(d):
        fit = fit + coordinate(i, coef[i + 1])
    return fit


def fixed_point_residual(problem, n, grid, params: SimParams, paths: int, seed: int, *, rhs_paths: int = None,
                         interpolation: str = "affine", workers: int = 1, check=None,
                         sensitivity_paths: int = None) -> FixedPointResult:
    """Residual |v_n - R_lam(f m + n (g - v_n) sigma)| on a grid of points.

    v_n is estimated on the grid, each point on its own streams; on the
    boundary it is represented either by the least-squares affine fit through
    the boundary grid values (``interpolation="affine"``) or by the nearest
    boundary grid value (``"nearest"``).  The right-hand side is estimated on
    fresh streams at the grid indices in ``check`` (default: every point).

    With the affine fit, the statistical error of the fitted coefficients is
    carried into the right-hand error bar: the right side is linear in the
    coefficients, with sensitivities n E[int e^{-lam t} phi_k dA] measured on
    ``sensitivity_paths`` walks (default min(rhs_paths, 500)).
    """
    grid = [_check_point(problem, x) for x in grid]
    if not grid:
        raise ContractViolation("grid must be non-empty")
    check = list(range(len(grid))) if check is None else [int(i) for i in check]
    if not check or min(check) < 0 or max(check) >= len(grid):
        raise ContractViolation("check must list valid grid indices")
    if n < 0:
        raise ContractViolation(f"penalty n must be >= 0, got {n}")
    if interpolation not in ("affine", "nearest"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    d = problem.domain.dimension
    rhs_paths = paths if rhs_paths is None else rhs_paths
    sens_paths = min(rhs_paths, 500) if sensitivity_paths is None else sensitivity_paths
    fit_se = [0.0] * len(check)
    if n == 0:
        # no boundary term: both sides are the reflected resolvent of f
        tail = params.weight_floor * problem.f_bound / problem.lam
        lhs = [_summarise(reflected_rows(problem, grid[i], params, paths, seed, ns=[0.0], tag=grid_tag(i),
                                         workers=workers), params, seed, tail, False) for i in check]
        rhs = [
            _summarise(reflected_rows(problem, grid[i], params, rhs_paths, seed, ns=[0.0], tag=TAG_FIXED_POINT_RHS,
                                      workers=workers), params, seed, None, False)
            for i in check
        ]
    else:
        bidx = [i for i, x in enumerate(grid) if problem.domain.classify(x) is Location.BOUNDARY]
        if not bidx:
            raise InsufficientBoundaryGrid("grid has no boundary points")
        bpts = np.array([grid[i] for i in bidx])
        X = _affine_design(bpts, d) if interpolation == "affine" else None
        need = sorted(set(bidx) | set(check))
        tail = _robin_tail(problem, params)
        est = {i: _summarise(reflected_rows(problem, grid[i], params, paths, seed, ns=[n], g_coefs=[n],
                                            tag=grid_tag(i), workers=workers), params, seed, tail, False)
               for i in need}
        lhs = [est[i] for i in check]
        bvals = np.array([est[i].mean for i in bidx])
        kw = dict(ns=[0.0], g_coefs=[n], tag=TAG_FIXED_POINT_RHS, workers=workers)
        if interpolation == "affine":
            P = np.linalg.pinv(X)
            fit = _affine_function(P @ bvals, d)
            bse = np.array([est[i].stderr for i in bidx])
            cov = (P * bse**2) @ P.T
            if isinstance(problem.g, ScalarFunction):
                kw["g_fn"] = problem.g - fit
            else:
                kw["g_fn"] = lambda p: problem.eval_g(p) - fit(p)
            basis = [constant(1.0)] + [coordinate(k) for k in range(d)]
            for j, i in enumerate(check):
                s = np.array([
                    _summarise(reflected_rows(problem, grid[i], params, sens_paths, seed, f_on=False, **{**kw, "g_fn": phi}),
                               params, seed, None, False).mean
                    for phi in basis
                ])
                fit_se[j] = float(np.sqrt(max(s @ cov @ s, 0.0)))
        else:
            kw.update(table=(bpts, bvals), tab_coefs=[n], tab_maxdist=0.1 * problem.domain.diameter)
        rhs = [_summarise(reflected_rows(problem, grid[i], params, rhs_paths, seed, **kw), params, seed, None, False)
               for i in check]
    res = [abs(a.mean - b.mean) for a, b in zip(lhs, rhs)]
    comb = [a.stderr + float(np.hypot(b.stderr, e)) for a, b, e in zip(lhs, rhs, fit_se)]
    return FixedPointResult(max(res), res, comb, lhs, rhs, interpolation, fit_se)
