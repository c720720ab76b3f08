"""Bounded domains with the four geometric queries the simulator relies on.

Signed distances are negative inside.  Only balls and axis-aligned boxes are
provided; both admit exact projections and normals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NormalUndefined

BALL = 0
BOX = 1


class Location(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    EXTERIOR = "exterior"


def _as_point(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise ContractViolation(f"expected a point of dimension {d}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ContractViolation(f"point {x} is not finite")
    return x


class Domain:
    """Common behaviour; subclasses implement ``signed_distance`` and friends."""

    dimension: int
    boundary_tolerance: float

    @property
    def diameter(self) -> float:  # pragma: no cover - overridden
        raise NotImplementedError

    def classify(self, x) -> Location:
        s = self.signed_distance(_as_point(x, self.dimension))
        if s < -self.boundary_tolerance:
            return Location.INTERIOR
        if abs(s) <= self.boundary_tolerance:
            return Location.BOUNDARY
        return Location.EXTERIOR

    def in_closure(self, x) -> bool:
        return self.classify(x) is not Location.EXTERIOR

    def _check_projectable(self, x):
        x = _as_point(x, self.dimension)
        if self.signed_distance(x) < -self.boundary_tolerance:
            raise ContractViolation(f"cannot project interior point {x} to the boundary")
        return x

    def encode(self):
        """Flat representation consumed by the compiled kernels."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Domain):
    center: np.ndarray
    radius: float
    boundary_tolerance: float = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        if c.ndim != 1 or c.size < 3:
            raise ContractViolation(f"ball center must be a point in R^d with d >= 3, got {c}")
        if not self.radius > 0:
            raise ContractViolation(f"ball radius must be positive, got {self.radius}")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if self.boundary_tolerance is None:
            object.__setattr__(self, "boundary_tolerance", 1e-12 * self.diameter)

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def signed_distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        return float(np.linalg.norm(x - self.center) - self.radius)

    def project_to_boundary(self, x):
        x = self._check_projectable(x)
        v = x - self.center
        r = np.linalg.norm(v)
        p = self.center + self.radius * v / r
        return p, float(np.linalg.norm(x - p))

    def inward_normal(self, p) -> np.ndarray:
        p = _as_point(p, self.dimension)
        if self.classify(p) is not Location.BOUNDARY:
            raise ContractViolation(f"{p} is not a boundary point")
        v = self.center - p
        return v / np.linalg.norm(v)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform points in the open ball."""
        z = rng.standard_normal((size, self.dimension))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        u = rng.random(size) ** (1.0 / self.dimension)
        return self.center + self.radius * u[:, None] * z

    def encode(self):
        c = np.ascontiguousarray(self.center, dtype=float)
        return BALL, c, c.copy(), self.radius, self.boundary_tolerance

    def to_config(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class Box(Domain):
    lower: np.ndarray
    upper: np.ndarray
    boundary_tolerance: float = field(default=None)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 3:
            raise ContractViolation("box corners must be points of equal dimension d >= 3")
        if not np.all(lo < hi):
            raise ContractViolation(f"box requires lower < upper componentwise, got {lo}, {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.boundary_tolerance is None:
            object.__setattr__(self, "boundary_tolerance", 1e-12 * self.diameter)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def signed_distance(self, x) -> float:
        x = _as_point(x, self.dimension)
        e = np.maximum(self.lower - x, x - self.upper)
        outside = np.maximum(e, 0.0)
        if np.any(outside > 0):
            return float(np.linalg.norm(outside))
        return float(e.max())

    def project_to_boundary(self, x):
        x = self._check_projectable(x)
        e = np.maximum(self.lower - x, x - self.upper)
        if np.any(e > 0):
            p = np.clip(x, self.lower, self.upper)
        else:
            # within tolerance inside: snap the nearest face coordinate
            i = int(np.argmax(e))
            p = x.copy()
            p[i] = self.lower[i] if x[i] - self.lower[i] <= self.upper[i] - x[i] else self.upper[i]
        return p, float(np.linalg.norm(x - p))

    def active_faces(self, p) -> list[tuple[int, float]]:
        """(axis, sign of inward normal) for every face within tolerance of ``p``."""
        tol = self.boundary_tolerance
        faces = []
        for i in range(self.dimension):
            if abs(p[i] - self.lower[i]) <= tol:
                faces.append((i, 1.0))
            if abs(p[i] - self.upper[i]) <= tol:
                faces.append((i, -1.0))
        return faces

    def inward_normal(self, p) -> np.ndarray:
        p = _as_point(p, self.dimension)
        if self.classify(p) is not Location.BOUNDARY:
            raise ContractViolation(f"{p} is not a boundary point")
        faces = self.active_faces(p)
        if len(faces) != 1:
            raise NormalUndefined(f"{p} lies on an edge or corner of the box")
        axis, sign = faces[0]
        n = np.zeros(self.dimension)
        n[axis] = sign
        return n

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((size, self.dimension))

    def encode(self):
        return (
            BOX,
            np.ascontiguousarray(self.lower, dtype=float),
            np.ascontiguousarray(self.upper, dtype=float),
            0.0,
            self.boundary_tolerance,
        )

    def to_config(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def domain_from_config(cfg: dict) -> Domain:
    from .errors import ConfigError

    cfg = dict(cfg)
    kind = cfg.pop("type", None)
    if kind == "ball":
        allowed = {"center", "radius"}
    elif kind == "box":
        allowed = {"lower", "upper"}
    else:
        raise ConfigError(f"domain.type must be 'ball' or 'box', got {kind!r}", key="domain.type")
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"unknown key domain.{key}", key=f"domain.{key}")
    for key in allowed:
        if key not in cfg:
            raise ConfigError(f"missing key domain.{key}", key=f"domain.{key}")
    try:
        if kind == "ball":
            return Ball(cfg["center"], cfg["radius"])
        return Box(cfg["lower"], cfg["upper"])
    except ContractViolation as exc:
        raise ConfigError(f"invalid domain: {exc}", key="domain") from exc
