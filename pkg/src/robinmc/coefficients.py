"""Symmetric uniformly elliptic coefficient fields a(x).

The generator of the diffusion is div(a grad), so the martingale part has
covariation 2a: every square root computed here factors 2a(x), never a(x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import AsymmetricCoefficient, ConfigError, NotPositiveDefinite

CONSTANT = 0
DIAG_POLY = 1

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class EllipticityReport:
    min_eig: float
    max_eig: float
    passed: bool
    samples: int


class CoefficientField:
    lambda_ell: float
    dimension: int

    def matrix(self, x) -> np.ndarray:
        raise NotImplementedError

    def divergence_drift(self, x) -> np.ndarray:
        raise NotImplementedError

    def checked_matrix(self, x) -> np.ndarray:
        a = np.asarray(self.matrix(x), dtype=float)
        asym = np.max(np.abs(a - a.T))
        if asym > SYMMETRY_TOL:
            raise AsymmetricCoefficient(f"a(x) is not symmetric at x={np.asarray(x)} (max |a_ij - a_ji| = {asym:.3g})")
        return a

    def diffusion_sqrt(self, x) -> np.ndarray:
        """Lower-triangular sigma with sigma @ sigma.T == 2 a(x)."""
        a = self.checked_matrix(x)
        try:
            return np.linalg.cholesky(2.0 * a)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"2a(x) is not positive definite at x={np.asarray(x)}") from exc

    def conormal(self, p, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError("conormal requires a unit normal")
        return self.matrix(p) @ n

    def is_diagonal(self) -> bool:
        return False

    def encode(self):
        """(kind, matrices, poly) for the compiled kernels, or None if not compilable."""
        return None


@dataclass(frozen=True, eq=False)
class ConstantField(CoefficientField):
    a: np.ndarray
    lambda_ell: float = 1.0

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"constant coefficient must be a square matrix, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.lambda_ell < 1:
            raise ValueError("ellipticity constant must be >= 1")

    @classmethod
    def isotropic(cls, value: float, d: int = 3, lambda_ell: float = 1.0):
        return cls(value * np.eye(d), lambda_ell)

    @property
    def dimension(self):
        return self.a.shape[0]

    def matrix(self, x=None):
        return self.a

    def divergence_drift(self, x=None):
        return np.zeros(self.dimension)

    def is_diagonal(self):
        return bool(np.all(self.a == np.diag(np.diag(self.a))))

    def diagonal(self, x):
        return np.broadcast_to(np.diag(self.a), np.shape(x))

    def encode(self):
        a = self.checked_matrix(None)
        mats = np.stack([a, self.diffusion_sqrt(None)])
        return CONSTANT, np.ascontiguousarray(mats), np.zeros((self.dimension, 1))


@dataclass(frozen=True, eq=False)
class DiagonalPolynomialField(CoefficientField):
    """a = diag(a_1(x_1), ..., a_d(x_d)) with a_i(s) = sum_k coeffs[i, k] s**k."""

    coeffs: np.ndarray
    lambda_ell: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("coeffs must have shape (d, degree + 1)")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dimension(self):
        return self.coeffs.shape[0]

    def diagonal(self, x):
        """Diagonal entries at points ``x`` of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k in range(self.coeffs.shape[1] - 1, -1, -1):
            out = out * x + self.coeffs[:, k]
        return out

    def diagonal_derivative(self, x):
        x = np.asarray(x, dtype=float)
        m = self.coeffs.shape[1]
        out = np.zeros(x.shape)
        for k in range(m - 1, 0, -1):
            out = out * x + k * self.coeffs[:, k]
        return out

    def matrix(self, x):
        return np.diag(self.diagonal(np.asarray(x, dtype=float)))

    def divergence_drift(self, x):
        return self.diagonal_derivative(np.asarray(x, dtype=float))

    def is_diagonal(self):
        return True

    def encode(self):
        d = self.dimension
        return DIAG_POLY, np.zeros((2, d, d)), np.ascontiguousarray(self.coeffs)


@dataclass(frozen=True, eq=False)
class CallableField(CoefficientField):
    """User-supplied a(x); drift by central differences unless ``divergence`` is given."""

    fn: Callable[[np.ndarray], np.ndarray]
    dimension: int
    lambda_ell: float = 1.0
    divergence: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5

    def matrix(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def divergence_drift(self, x):
        x = np.asarray(x, dtype=float)
        if self.divergence is not None:
            return np.asarray(self.divergence(x), dtype=float)
        h = self.fd_step
        b = np.zeros(self.dimension)
        for j in range(self.dimension):
            e = np.zeros(self.dimension)
            e[j] = h
            b += (self.matrix(x + e)[:, j] - self.matrix(x - e)[:, j]) / (2.0 * h)
        return b


def ellipticity_report(field: CoefficientField, domain, samples: int, rng_seed: int) -> EllipticityReport:
    """Sample the eigenvalue range of a(x) over the domain and compare with [1/L, L]."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(rng_seed)
    pts = domain.sample(rng, samples)
    lo, hi = np.inf, -np.inf
    for x in pts:
        eig = np.linalg.eigvalsh(field.checked_matrix(x))
        lo = min(lo, eig[0])
        hi = max(hi, eig[-1])
    lam = field.lambda_ell
    passed = bool(lo >= 1.0 / lam - 1e-10 and hi <= lam + 1e-10)
    return EllipticityReport(float(lo), float(hi), passed, samples)


def field_from_config(cfg: dict, d: int) -> CoefficientField:
    cfg = dict(cfg)
    kind = cfg.pop("type", None)
    lam = cfg.pop("lambda_ell", None)
    if lam is None:
        raise ConfigError("missing key coefficients.lambda_ell", key="coefficients.lambda_ell")
    if kind == "constant":
        allowed = {"matrix"}
    elif kind == "isotropic":
        allowed = {"value"}
    elif kind == "diag_poly":
        allowed = {"coeffs"}
    else:
        raise ConfigError(
            f"coefficients.type must be 'constant', 'isotropic' or 'diag_poly', got {kind!r}",
            key="coefficients.type",
        )
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"unknown key coefficients.{key}", key=f"coefficients.{key}")
    for key in allowed:
        if key not in cfg:
            raise ConfigError(f"missing key coefficients.{key}", key=f"coefficients.{key}")
    try:
        if kind == "constant":
            field = ConstantField(np.array(cfg["matrix"], dtype=float), float(lam))
        elif kind == "isotropic":
            field = ConstantField.isotropic(float(cfg["value"]), d, float(lam))
        else:
            field = DiagonalPolynomialField(np.array(cfg["coeffs"], dtype=float), float(lam))
    except ValueError as exc:
        raise ConfigError(f"invalid coefficients: {exc}", key="coefficients") from exc
    if field.dimension != d:
        raise ConfigError(f"coefficient dimension {field.dimension} does not match domain dimension {d}", key="coefficients")
    return field
