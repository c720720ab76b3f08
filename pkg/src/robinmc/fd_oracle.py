"""Finite-difference ground truth on axis-aligned boxes with diagonal a.

A vertex-centred conservative scheme: interior nodes use the standard
(d+2)-point stencil with coefficients at link midpoints; face nodes own the
half cell inside the box and close it with the boundary flux.  Scaling every
row by its cell volume keeps the matrix symmetric positive definite, so plain
conjugate gradients applies.  On faces the closure coincides with the
reflected ghost-node treatment of the flux condition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import ContractViolation, SolverStalled
from .functions import ScalarFunction
from .geometry import Box

DEFAULT_RESOLUTION = 65
MIN_RESOLUTION = 9
CG_RTOL = 1e-12  # tighter than needed so node errors, not just residuals, reach ~1e-10


@dataclass
class GridFunction:
    box: Box
    resolution: int
    values: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    _interp: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution < MIN_RESOLUTION:
            raise ContractViolation(f"resolution must be >= {MIN_RESOLUTION}, got {self.resolution}")
        shape = (self.resolution,) * self.box.dimension
        self.values = np.asarray(self.values, dtype=float).reshape(shape)
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation("grid function has non-finite values")

    @property
    def axes(self) -> list[np.ndarray]:
        return _axes(self.box, self.resolution)

    @property
    def spacing(self) -> np.ndarray:
        return (self.box.upper - self.box.lower) / (self.resolution - 1)

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (resolution**d, d), C order matching ``values.ravel()``."""
        return _nodes(self.box, self.resolution)

    def interpolate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.box.dimension,):
            raise ContractViolation(f"expected a point of dimension {self.box.dimension}")
        tol = self.box.boundary_tolerance
        if np.any(x < self.box.lower - tol) or np.any(x > self.box.upper + tol):
            raise ContractViolation(f"{x} is outside the box")
        if self._interp is None:
            self._interp = RegularGridInterpolator(self.axes, self.values, method="linear")
        return float(self._interp(np.clip(x, self.box.lower, self.box.upper))[0])

    def rows(self):
        """(index tuple, coordinates, value) in C order."""
        idx = itertools.product(range(self.resolution), repeat=self.box.dimension)
        for ijk, x, v in zip(idx, self.nodes(), self.values.ravel()):
            yield ijk, x, float(v)


def _axes(box, res):
    return [np.linspace(lo, hi, res) for lo, hi in zip(box.lower, box.upper)]


def _nodes(box, res):
    mesh = np.meshgrid(*_axes(box, res), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _check_problem(problem, resolution):
    box = problem.domain
    if not isinstance(box, Box):
        raise ContractViolation("the finite-difference oracle supports box domains only")
    if not problem.field.is_diagonal() or not hasattr(problem.field, "diagonal"):
        raise ContractViolation("the finite-difference oracle needs a diagonal coefficient field")
    if resolution < MIN_RESOLUTION:
        raise ContractViolation(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    return box


def _eval(fn, pts, normals=None, domain=None):
    if isinstance(fn, ScalarFunction):
        if normals is None and any(t.code == 3 for t in fn.terms):
            normals = np.array([_first_normal(domain, p) for p in pts])
        return fn.evaluate(pts, normals)
    return np.array([float(fn(p)) for p in pts])


def _first_normal(box, p):
    e = np.abs(np.stack([p - box.lower, box.upper - p]))
    side, axis = np.unravel_index(np.argmin(e), e.shape)
    nu = np.zeros(box.dimension)
    nu[axis] = 1.0 if side == 0 else -1.0
    return nu


class _Assembly:
    """Volume-scaled operator -div(a grad) + lam on every node of the grid."""

    def __init__(self, box, field, lam, res, half_cells):
        d = box.dimension
        self.box, self.res, self.d = box, res, d
        self.h = (box.upper - box.lower) / (res - 1)
        self.pts = _nodes(box, res)
        idx = np.indices((res,) * d).reshape(d, -1).T
        self.idx = idx
        on_face = (idx == 0) | (idx == res - 1)
        w = np.where(on_face, 0.5, 1.0) if half_cells else np.ones_like(idx, dtype=float)
        self.weights = w
        self.volume = np.prod(w, axis=1)
        m = self.pts.shape[0]
        strides = [res ** (d - 1 - i) for i in range(d)]
        rows, cols, vals = [], [], []
        diag = lam * self.volume
        for i in range(d):
            src = np.nonzero(idx[:, i] < res - 1)[0]
            dst = src + strides[i]
            mid = 0.5 * (self.pts[src] + self.pts[dst])
            a_mid = np.asarray(field.diagonal(mid))[:, i]
            area = np.prod(np.delete(w[src], i, axis=1), axis=1)
            c = a_mid * area / self.h[i] ** 2
            rows += [src, dst]
            cols += [dst, src]
            vals += [-c, -c]
            np.add.at(diag, src, c)
            np.add.at(diag, dst, c)
        self.offdiag = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
        self.diag = diag

    def faces(self):
        """Yield (node ids, inward normal, face-area / h) for each of the 2d faces."""
        for i in range(self.d):
            area = np.prod(np.delete(self.weights, i, axis=1), axis=1)
            for end, sign in ((0, 1.0), (self.res - 1, -1.0)):
                ids = np.nonzero(self.idx[:, i] == end)[0]
                nu = np.zeros((ids.size, self.d))
                nu[:, i] = sign
                yield ids, nu, area[ids] / self.h[i]


def _cg(A, b, precondition, rtol):
    """CG on A x = b; with ``precondition`` on the symmetrically Jacobi-scaled system.

    Scaling (rather than passing M) also moves the stopping test to the scaled
    residual, which keeps large penalty rows from dominating the norm.
    """
    m = b.size
    if not np.any(b):
        return np.zeros(m), 0.0, 0
    count = [0]

    def tick(_):
        count[0] += 1

    if precondition:
        s = 1.0 / np.sqrt(A.diagonal())
        S = sp.diags(s)
        A, b = (S @ A @ S).tocsr(), s * b
    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=10 * m, callback=tick)
    res = float(np.linalg.norm(b - A @ x) / np.linalg.norm(b))
    if info != 0:
        raise SolverStalled(f"conjugate gradients did not converge in {10 * m} iterations (relative residual {res:.3g})")
    if precondition:
        x = s * x
    return x, res, count[0]


def solve_dirichlet_fd(problem, resolution: int = DEFAULT_RESOLUTION, precondition: bool = False,
                       rtol: float = CG_RTOL) -> GridFunction:
    box = _check_problem(problem, resolution)
    asm = _Assembly(box, problem.field, problem.lam, resolution, half_cells=False)
    bnd = np.any((asm.idx == 0) | (asm.idx == resolution - 1), axis=1)
    inner = ~bnd
    u = np.zeros(asm.pts.shape[0])
    u[bnd] = _eval(problem.g, asm.pts[bnd], domain=box)
    A = (asm.offdiag + sp.diags(asm.diag)).tocsr()
    b = _eval(problem.f, asm.pts[inner]) - A[inner][:, bnd] @ u[bnd]
    x, res, its = _cg(A[inner][:, inner], b, precondition, rtol)
    u[inner] = x
    return GridFunction(box, resolution, u, res, its)


def _solve_flux(problem, penalty, resolution, precondition, rtol):
    box = _check_problem(problem, resolution)
    asm = _Assembly(box, problem.field, problem.lam, resolution, half_cells=True)
    diag = asm.diag.copy()
    b = asm.volume * _eval(problem.f, asm.pts)
    for ids, nu, scale in asm.faces():
        gv = _eval(problem.g, asm.pts[ids], normals=nu)
        if penalty is None:
            np.add.at(b, ids, scale * gv)
        else:
            np.add.at(diag, ids, scale * penalty)
            np.add.at(b, ids, scale * penalty * gv)
    A = (asm.offdiag + sp.diags(diag)).tocsr()
    u, res, its = _cg(A, b, precondition, rtol)
    return GridFunction(box, resolution, u, res, its)


def solve_robin_fd(problem, n: float, resolution: int = DEFAULT_RESOLUTION, precondition: bool = False,
                   rtol: float = CG_RTOL) -> GridFunction:
    """-(a grad u).nu + n u = n g on the faces, nu the inward normal."""
    if not n > 0:
        raise ContractViolation(f"penalty n must be > 0, got {n}")
    return _solve_flux(problem, float(n), resolution, precondition, rtol)


def solve_neumann_flux_fd(problem, resolution: int = DEFAULT_RESOLUTION, precondition: bool = False,
                          rtol: float = CG_RTOL) -> GridFunction:
    """-L w + lam w = f with inward conormal flux -(a grad w).nu = g.

    The boundary potential of g is the case f = 0.
    """
    return _solve_flux(problem, None, resolution, precondition, rtol)


def interpolate(gf: GridFunction, x) -> float:
    return gf.interpolate(x)
