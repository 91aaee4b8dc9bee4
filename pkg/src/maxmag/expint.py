"""Exponential integral E1 by power series (z <= 1) and continued fraction (z > 1)."""

from __future__ import annotations

import math

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_TINY = 1e-300
_MAX_TERMS = 500


def _series(z: float) -> float:
    # E1(z) = -gamma - ln z - sum_{k>=1} (-z)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_TERMS):
        term *= -z / k
        contrib = term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total):
            break
    return -EULER_GAMMA - math.log(z) - total


def _continued_fraction_scaled(z: float) -> float:
    """exp(z) * E1(z) via modified Lentz on the even contraction."""
    b = z + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"E1 continued fraction did not converge at z={z}")


def exp_integral_e1(z: float) -> float:
    """E1(z) = integral_z^inf exp(-s)/s ds for z > 0."""
    z = float(z)
    if not z > 0.0:
        raise ValueError(f"E1 is only defined here for z > 0, got {z}")
    if z <= 1.0:
        return _series(z)
    if z > 745.0:
        return 0.0
    return _continued_fraction_scaled(z) * math.exp(-z)


def exp_integral_e1_scaled(z: float) -> float:
    """exp(z) * E1(z); finite for large z where E1 itself underflows."""
    z = float(z)
    if not z > 0.0:
        raise ValueError(f"E1 is only defined here for z > 0, got {z}")
    if z <= 1.0:
        return _series(z) * math.exp(z)
    return _continued_fraction_scaled(z)
