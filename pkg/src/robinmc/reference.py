"""Closed-form solutions used as independent checks.

Ball formulas are for a = alpha I centred at the origin, radius R, in three
dimensions, with k = sqrt(lam / alpha) and modified spherical Bessel
functions i_l.  Box formulas are for the unit-style box [lo, hi]^d.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import spherical_in


def _bessel(l, z, derivative=False):
    return float(spherical_in(l, z, derivative=derivative))


def ball_robin_linear(x, n: float, alpha: float = 0.5, lam: float = 1.0, radius: float = 1.0) -> float:
    """Robin solution with f = lam x_1 and fixed g = x_1 (not the manufactured g_n).

    u = x_1 + c i_1(k r) x_1 / r, where the constant c enforces
    -(a grad u).nu + n u = n x_1 on the sphere (nu = -x / R).
    """
    x = np.asarray(x, dtype=float)
    k = math.sqrt(lam / alpha)
    c = -alpha / (alpha * k * _bessel(1, k * radius, True) + n * _bessel(1, k * radius))
    r = float(np.linalg.norm(x))
    # i_1(kr)/r -> k/3 as r -> 0
    ratio = k / 3.0 if r < 1e-8 else _bessel(1, k * r) / r
    return float(x[0] * (1.0 + c * ratio))


def ball_boundary_potential(x, g: float = 1.0, alpha: float = 0.5, lam: float = 1.0, radius: float = 1.0) -> float:
    """w with -alpha Lap w + lam w = 0 and inward flux -(a grad w).nu = g (constant)."""
    k = math.sqrt(lam / alpha)
    C = g / (alpha * k * _bessel(0, k * radius, True))
    return C * _bessel(0, k * float(np.linalg.norm(x)))


def box_boundary_potential(x, g: float = 1.0, alpha: float = 0.5, lam: float = 1.0, lower=0.0, upper=1.0) -> float:
    """Same flux problem on a cube, separable as a sum of one-dimensional cosh profiles.

    Each profile phi solves -alpha phi'' + lam phi = 0 with -alpha phi' = g at the
    low face and alpha phi' = g at the high face.
    """
    x = np.asarray(x, dtype=float)
    k = math.sqrt(lam / alpha)
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)
    A = g / (alpha * k * math.sinh(k * half))
    return float(np.sum(A * np.cosh(k * (x - mid))))
