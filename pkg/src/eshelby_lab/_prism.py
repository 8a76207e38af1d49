"""
Closed-form integrals of the Newtonian-type kernels over axis-aligned boxes.

All functions here are corner functions ``F(u)`` of the relative coordinate
``u = x - y``; the integral over a box is the alternating sum of ``F`` over
its eight corners.  They are used for the cells adjacent to an evaluation
point, where the point rule is useless.
"""

import numpy as np
from scipy.special import xlogy

_OTHERS = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def _log_sum(a, b, c, r):
    # Argument of ln(a + r), r = |(a, b, c)|, without cancellation when a < 0:
    # a + r = (b^2 + c^2) / (r - a).
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a >= 0, a + r, (b * b + c * c) / (r - a))


def _atan_term(c, a, b, r):
    # atan(a b / (c r)), defined as 0 where c == 0 (always multiplied by c or c^2).
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.arctan(a * b / (c * r))
    return np.where(c == 0, 0.0, t)


def phi(u):
    """Triple antiderivative of 1/r."""
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    return (
        xlogy(x * y, _log_sum(z, x, y, r))
        + xlogy(y * z, _log_sum(x, y, z, r))
        + xlogy(z * x, _log_sum(y, z, x, r))
        - 0.5 * x * x * _atan_term(x, y, z, r)
        - 0.5 * y * y * _atan_term(y, z, x, r)
        - 0.5 * z * z * _atan_term(z, x, y, r)
    )


def _comp(u, m):
    x = u[..., m]
    i, j = _OTHERS[m]
    return x, u[..., i], u[..., j]


def phi_grad(u, m):
    """d phi / du_m: double antiderivative of 1/r over the two other axes."""
    x, y, z = _comp(u, m)
    r = np.sqrt(x * x + y * y + z * z)
    return xlogy(y, _log_sum(z, x, y, r)) + xlogy(z, _log_sum(y, x, z, r)) - x * _atan_term(x, y, z, r)


def ntilde(u, q):
    """Triple antiderivative of u_q^2 / r^3 (integration by parts in u_q)."""
    return phi(u) - u[..., q] * phi_grad(u, q)


def ntilde_grad(u, q, m):
    """d/du_m of ``ntilde(u, q)``."""
    if m == q:
        x, y, z = _comp(u, q)
        r = np.sqrt(x * x + y * y + z * z)
        return x * _atan_term(x, y, z, r)
    k = 3 - q - m
    r = np.sqrt((u * u).sum(axis=-1))
    return phi_grad(u, m) - xlogy(u[..., q], _log_sum(u[..., k], u[..., q], u[..., m], r))


def rprism(u):
    """Triple antiderivative of r (the biharmonic kernel up to its constant)."""
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    return (
        0.25 * x * y * z * r
        + (xlogy(y * z * (y * y + z * z), _log_sum(x, y, z, r))
           + xlogy(x * z * (x * x + z * z), _log_sum(y, x, z, r))
           + xlogy(x * y * (x * x + y * y), _log_sum(z, x, y, r))) / 6.0
        - (x**4 * _atan_term(x, y, z, r)
           + y**4 * _atan_term(y, x, z, r)
           + z**4 * _atan_term(z, x, y, r)) / 12.0
    )


def rprism_grad(u, m):
    """d rprism / du_m, up to terms that cancel in ``box_sum``."""
    x, y, z = _comp(u, m)
    r = np.sqrt(x * x + y * y + z * z)
    return (
        y * z * r / 3.0
        + (xlogy(z * (z * z + 3 * x * x), _log_sum(y, x, z, r))
           + xlogy(y * (y * y + 3 * x * x), _log_sum(z, x, y, r))) / 6.0
        - x**3 * _atan_term(x, y, z, r) / 3.0
    )


def box_sum(F):
    """Alternating corner sums over a lattice of corner values.

    ``F`` holds corner-function values at ``u = x - y`` for a lattice of
    corner points ordered by increasing ``y`` (the last three axes); returns
    one integral per cell.
    Increasing ``y`` means decreasing ``u`` along every axis, hence the sign.
    """
    return -np.diff(np.diff(np.diff(F, axis=-3), axis=-2), axis=-1)
