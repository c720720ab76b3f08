"""Reflected and killed diffusions on a closed domain.

The reflected walk is a projection Euler scheme: an Euler proposal that leaves
the closed domain is mirrored back along the unit conormal a(p)n(p)/|a(p)n(p)|
and charges local time dA = kappa * s / |a(p)n(p)|, s being the distance
travelled along the conormal from the proposal to the boundary.

Compilable problems run through the kernels in ``_kernels``; anything else
(callable coefficients or data) uses the pure-Python stepping below, which is
also the reference the kernels are tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import ContractViolation, NormalUndefined
from .geometry import Location
from .streams import TAG_MAIN, generators, path_generator

# Local-time normalisation of the mirrored push, fixed by calibrate_local_time
# against the finite-difference Neumann solve on the unit cube at dt = 1e-4
# (20000 paths, seed 20261014: 2.0273, 95% CI [2.0210, 2.0337]).
KAPPA = 2.0273

REFLECTIONS = {"oblique": K.REFLECT_OBLIQUE, "normal": K.REFLECT_NORMAL}


@dataclass(frozen=True)
class SimParams:
    dt: float = 1e-4
    weight_floor: float = 1e-6
    max_steps: int = 10**8
    kappa: float = KAPPA
    reflection: str = "oblique"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.weight_floor < 1:
            raise ValueError("weight_floor must lie in (0, 1)")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.reflection not in REFLECTIONS:
            raise ValueError(f"reflection must be one of {sorted(REFLECTIONS)}")

    @property
    def mode(self) -> int:
        return REFLECTIONS[self.reflection]


@dataclass
class PathRecord:
    times: np.ndarray
    positions: np.ndarray
    local_time: np.ndarray
    exited: bool = False
    exit_time: Optional[float] = None
    exit_point: Optional[np.ndarray] = None
    # reflected walks only: per-step local time increment and contact point (NaN row if none)
    increments: np.ndarray = field(default_factory=lambda: np.zeros(0))
    contact_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    truncation_incomplete: bool = False
    aborted: bool = False
    retries: int = 0
    degenerate: int = 0


# ------------------------------------------------------------ python stepping


def _push_back(y, field, domain, reflection):
    p, ov = domain.project_to_boundary(y)
    n = domain.inward_normal(p)  # may raise NormalUndefined
    cn = field.conormal(p, n)
    m = float(np.linalg.norm(cn))
    nu = cn / m
    s = ov
    if reflection == "oblique":
        cos = float(nu @ n)
        if hasattr(domain, "radius"):
            v = y - domain.center
            beta = float(nu @ v)
            disc = beta * beta - (float(v @ v) - domain.radius**2)
            s = -beta - np.sqrt(disc) if disc >= 0 and beta < 0 else ov / cos
            q = y + s * nu
            p = domain.center + domain.radius * (q - domain.center) / np.linalg.norm(q - domain.center)
        else:
            s = ov / cos
            q = y + s * nu
            if domain.signed_distance(q) > domain.boundary_tolerance:
                p, s = domain.project_to_boundary(y)
            else:
                p = q
    return p, p + s * nu, s, m


def reflect_detail(x, field, domain, dt, noise, kappa=KAPPA, reflection="oblique"):
    """One reflected step from a given noise vector.

    Returns (x_next, dA, contact_point or None, degenerate).  Raises
    NormalUndefined when the projection lands on a box edge or corner; the
    caller retries with fresh noise.
    """
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != x.shape:
        raise ContractViolation("noise must have the dimension of the point")
    sig = field.diffusion_sqrt(x)
    y = x + field.divergence_drift(x) * dt + (sig @ noise) * np.sqrt(dt)
    if domain.classify(y) is not Location.EXTERIOR:
        return y, 0.0, None, False
    p, z, s, m = _push_back(y, field, domain, reflection)
    dA = kappa * s / m
    tol = domain.boundary_tolerance
    for _ in range(K.MAX_CORRECTIONS):
        if domain.signed_distance(z) <= tol:
            return z, dA, p, False
        try:
            _, z2, s2, m2 = _push_back(z, field, domain, reflection)
        except NormalUndefined:
            return p.copy(), dA, p, True
        dA += kappa * s2 / m2
        z = z2
    if domain.signed_distance(z) <= tol:
        return z, dA, p, False
    return p.copy(), dA, p, True


def step_reflected(x, field, domain, dt, noise, kappa=KAPPA, reflection="oblique"):
    """(x_next, dA) for one projection-Euler step driven by ``noise``."""
    if domain.classify(x) is Location.EXTERIOR:
        raise ContractViolation(f"step_reflected requires x in the closed domain, got {x}")
    x_next, dA, _, _ = reflect_detail(x, field, domain, dt, noise, kappa, reflection)
    return x_next, dA


def _python_reflected(x0, problem, n, params, rng):
    d = problem.domain.dimension
    x = np.array(x0, dtype=float)
    pos = [x.copy()]
    loc = [0.0]
    dAs, cps = [], []
    w, A, k = 1.0, 0.0, 0
    retries = degenerate = 0
    aborted = incomplete = False
    while True:
        if k >= params.max_steps:
            incomplete = True
            break
        for attempt in range(K.MAX_RETRIES + 1):
            try:
                x_next, dA, cp, dg = reflect_detail(
                    x, problem.field, problem.domain, params.dt, rng.standard_normal(d), params.kappa, params.reflection
                )
                break
            except NormalUndefined:
                retries += 1
        else:
            aborted = True
            break
        degenerate += int(dg)
        dAs.append(dA)
        cps.append(cp if cp is not None else np.full(d, np.nan))
        A += dA
        x = x_next
        pos.append(x.copy())
        loc.append(A)
        w *= np.exp(-(problem.lam * params.dt + n * dA))
        k += 1
        if w < params.weight_floor:
            break
    return PathRecord(
        times=params.dt * np.arange(len(pos)),
        positions=np.array(pos),
        local_time=np.array(loc),
        increments=np.array(dAs),
        contact_points=np.array(cps).reshape(-1, d),
        truncation_incomplete=incomplete,
        aborted=aborted,
        retries=retries,
        degenerate=degenerate,
    )


def _python_killed(x0, problem, params, rng):
    d = problem.domain.dimension
    domain, fld = problem.domain, problem.field
    x = np.array(x0, dtype=float)
    if domain.classify(x) is Location.BOUNDARY:
        return PathRecord(np.zeros(1), x[None].copy(), np.zeros(1), True, 0.0, x.copy())
    pos = [x.copy()]
    w, k = 1.0, 0
    sq = np.sqrt(params.dt)
    while True:
        if k >= params.max_steps:
            return _killed_record(pos, params, False, None, incomplete=True)
        y = x + fld.divergence_drift(x) * params.dt + (fld.diffusion_sqrt(x) @ rng.standard_normal(d)) * sq
        k += 1
        w *= np.exp(-problem.lam * params.dt)
        if domain.classify(y) is Location.EXTERIOR:
            p, _ = domain.project_to_boundary(y)
            return _killed_record(pos, params, True, p)
        x = y
        pos.append(x.copy())
        if w < params.weight_floor:
            return _killed_record(pos, params, False, None)


def _killed_record(pos, params, exited, exit_point, incomplete=False):
    pos = np.array(pos)
    m = pos.shape[0]
    return PathRecord(
        times=params.dt * np.arange(m),
        positions=pos,
        local_time=np.zeros(m),
        exited=exited,
        exit_time=params.dt * m if exited else None,
        exit_point=exit_point,
        truncation_incomplete=incomplete,
    )


# ------------------------------------------------------------------ public


def _check_start(problem, x0, allow_boundary=True):
    loc = problem.domain.classify(x0)
    if loc is Location.EXTERIOR or (loc is Location.BOUNDARY and not allow_boundary):
        raise ContractViolation(f"start point {x0} is not in the closed domain")
    return loc


def _record_capacity(problem, params):
    # exp(-lam t) bounds every weight, so the floor is reached by this step
    horizon = int(np.ceil(np.log(1.0 / params.weight_floor) / (problem.lam * params.dt))) + 16
    return max(1, min(params.max_steps, horizon))


def _no_table(d):
    return np.zeros((1, d)), np.zeros(1)


def simulate_reflected(x0, problem, n: float, params: SimParams, seed: int, path_index: int = 0, tag: int = TAG_MAIN) -> PathRecord:
    """Reflected walk from ``x0`` until exp(-lam t - n A) < weight_floor or max_steps.

    Uses the stream of path ``path_index``, so the record reproduces the
    corresponding path of an estimator run with the same seed.
    """
    if not problem.lam > 0:
        raise ContractViolation("lambda must be positive")
    if n < 0:
        raise ContractViolation("penalty n must be >= 0")
    _check_start(problem, x0)
    enc = problem.encoding()
    if enc is None:
        return _python_reflected(x0, problem, n, params, path_generator(seed, path_index, tag))
    d = problem.domain.dimension
    x0 = np.asarray(x0, dtype=float)
    ns = np.array([float(n)])
    zero_T = np.zeros((1, 3 + 2 * d))
    tab_pts, tab_vals = _no_table(d)
    cap = _record_capacity(problem, params)
    while True:
        out = np.zeros((1, K.width(d)))
        pos, loc = np.zeros((cap + 1, d)), np.zeros(cap + 1)
        dAs, cps = np.zeros(cap), np.zeros((cap, d))
        K.reflected_paths(
            generators(seed, path_index, path_index + 1, tag), x0, *enc["geometry"], *enc["coefficients"],
            float(problem.lam), ns, zero_T, np.zeros(1), zero_T, np.zeros(1), tab_pts, tab_vals, np.inf,
            params.dt, params.weight_floor, int(params.max_steps), float(params.kappa), params.mode, 0,
            out, pos, loc, dAs, cps,
        )
        flags = int(out[0, K.C_FLAGS])
        if not flags & K.F_REC_FULL:
            break
        cap *= 2
    k = int(out[0, K.C_STEPS])
    return PathRecord(
        times=params.dt * np.arange(k + 1),
        positions=pos[: k + 1],
        local_time=loc[: k + 1],
        increments=dAs[:k],
        contact_points=cps[:k],
        truncation_incomplete=bool(flags & K.F_MAXSTEPS),
        aborted=bool(flags & K.F_ABORTED),
        retries=int(out[0, K.C_RETRIES]),
        degenerate=int(out[0, K.C_DEGEN]),
    )


def simulate_killed(x0, problem, params: SimParams, seed: int, path_index: int = 0, tag: int = TAG_MAIN) -> PathRecord:
    """Euler walk stopped at the first proposal outside the closed domain.

    Boundary starts exit at time 0 at the start point.
    """
    if not problem.lam > 0:
        raise ContractViolation("lambda must be positive")
    loc = _check_start(problem, x0)
    enc = problem.encoding()
    if enc is None:
        return _python_killed(x0, problem, params, path_generator(seed, path_index, tag))
    d = problem.domain.dimension
    x0 = np.asarray(x0, dtype=float)
    zero_T = np.zeros((1, 3 + 2 * d))
    cap = _record_capacity(problem, params)
    while True:
        out = np.zeros((1, K.width(d)))
        pos = np.zeros((cap + 1, d))
        K.killed_paths(
            generators(seed, path_index, path_index + 1, tag), x0, *enc["geometry"], *enc["coefficients"],
            float(problem.lam), zero_T, zero_T, params.dt, params.weight_floor, int(params.max_steps), out, pos,
        )
        flags = int(out[0, K.C_FLAGS])
        if not flags & K.F_REC_FULL:
            break
        cap *= 2
    k = int(out[0, K.C_STEPS])
    exited = bool(flags & K.F_EXITED)
    if loc is Location.BOUNDARY:
        return PathRecord(np.zeros(1), x0[None].copy(), np.zeros(1), True, 0.0, x0.copy())
    m = k if exited else k + 1
    return PathRecord(
        times=params.dt * np.arange(m),
        positions=pos[:m].copy(),
        local_time=np.zeros(m),
        exited=exited,
        exit_time=params.dt * m if exited else None,
        exit_point=out[0, K.C_POINT : K.C_POINT + d].copy() if exited else None,
        truncation_incomplete=bool(flags & K.F_MAXSTEPS),
    )
