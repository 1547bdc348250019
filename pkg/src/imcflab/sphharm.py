"""Real spherical harmonics with analytic angular derivatives.

Conventions: Y_{l,0} = N_{l,0} P_l(cos theta); for m > 0,
Y_{l,m} = sqrt(2) N_{l,m} P_l^m(cos theta) cos(m phi) and
Y_{l,-m} = sqrt(2) N_{l,m} P_l^m(cos theta) sin(m phi), with the unit-L2
normalization N_{l,m} = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!).  The grid never
contains the poles, so the 1/sin(theta) in the theta derivative recurrence
is safe.
"""

from __future__ import annotations

from math import factorial

import numpy as np
from scipy.special import lpmv

__all__ = ["real_sph_harm", "real_sph_harm_dtheta", "real_sph_harm_dphi", "bump"]


def _norm(l: int, m: int) -> float:
    return np.sqrt((2 * l + 1) / (4.0 * np.pi) * factorial(l - m) / factorial(l + m))


def _angular(m: int, phi: np.ndarray) -> np.ndarray:
    if m > 0:
        return np.sqrt(2.0) * np.cos(m * phi)
    if m < 0:
        return np.sqrt(2.0) * np.sin(-m * phi)
    return np.ones_like(phi)


def _angular_dphi(m: int, phi: np.ndarray) -> np.ndarray:
    if m > 0:
        return -m * np.sqrt(2.0) * np.sin(m * phi)
    if m < 0:
        return -m * np.sqrt(2.0) * np.cos(-m * phi)
    return np.zeros_like(phi)


def real_sph_harm(l: int, m: int, theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    if am > l:
        raise ValueError("need |m| <= l")
    P = lpmv(am, l, np.cos(theta))
    return _norm(l, am) * P * _angular(m, phi)


def real_sph_harm_dtheta(l: int, m: int, theta, phi) -> np.ndarray:
    """d/dtheta of real_sph_harm, via the standard lowering recurrence.

    (1 - x^2) dP_l^m/dx = (l + m) P_{l-1}^m - l x P_l^m, x = cos(theta).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    if am > l:
        raise ValueError("need |m| <= l")
    x = np.cos(theta)
    sin_t = np.sin(theta)
    P_l = lpmv(am, l, x)
    P_lm1 = lpmv(am, l - 1, x) if l - 1 >= am else np.zeros_like(x)
    dP_dtheta = -((l + am) * P_lm1 - l * x * P_l) / sin_t
    return _norm(l, am) * dP_dtheta * _angular(m, phi)


def real_sph_harm_dphi(l: int, m: int, theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    if am > l:
        raise ValueError("need |m| <= l")
    P = lpmv(am, l, np.cos(theta))
    return _norm(l, am) * P * _angular_dphi(m, phi)


def bump(u, deriv: int = 0) -> np.ndarray:
    """Smooth compactly supported bump on (-1, 1), normalized to bump(0) = 1.

    bump(u) = exp(1 - 1/(1 - u^2)) inside, 0 outside; deriv in {0, 1}
    returns the value or d/du.  Compact support keeps endpoint corrections
    out of trapezoid sums in time and keeps perturbations local in radius.
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1.0
    us = np.where(inside, u, 0.0)
    q = 1.0 - us**2
    val = np.exp(1.0 - 1.0 / q)
    if deriv == 0:
        return np.where(inside, val, 0.0)
    if deriv == 1:
        return np.where(inside, val * (-2.0 * us) / q**2, 0.0)
    raise ValueError("deriv must be 0 or 1")
