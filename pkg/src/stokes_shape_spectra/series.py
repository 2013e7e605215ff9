"""Truncated power-series arithmetic over complex ndarray coefficients.

A series is an ndarray whose leading axis indexes the power of the
expansion parameter: ``a[n]`` is the coefficient of delta**n.  All
remaining axes broadcast, so one call expands a whole grid of node
pairs at once.  The engine is deliberately tiny: every delta-expansion
in the kernel module (distances, exponentials, quotients, the full
fundamental-tensor expansion) is built from these five operations.
"""

from math import comb, factorial

import numpy as np

from .errors import OrderTooHigh

DEFAULT_ORDER = 4


def from_constant(value, order, shape=()):
    """Series whose only nonzero coefficient is the constant term."""
    out = np.zeros((order + 1,) + np.shape(value) + tuple(shape), dtype=complex)
    out[0] = value
    return out


def truncate(a, order):
    if a.shape[0] > order + 1:
        return a[: order + 1]
    if a.shape[0] == order + 1:
        return a
    pad = np.zeros((order + 1 - a.shape[0],) + a.shape[1:], dtype=a.dtype)
    return np.concatenate([a, pad], axis=0)


def mul(a, b):
    """Cauchy product truncated at the shorter operand's order."""
    order = min(a.shape[0], b.shape[0]) - 1
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((order + 1,) + shape, dtype=complex)
    for n in range(order + 1):
        for k in range(n + 1):
            out[n] = out[n] + a[k] * b[n - k]
    return out


def power(a, exponent):
    """a(delta)**exponent for real exponent; a[0] must be nonzero.

    Computed as a[0]**exponent * sum_n binom(exponent, n) u**n with
    u = a/a[0] - 1, which keeps fractional powers (distance series)
    and negative powers (kernel quotients) in one code path.
    """
    order = a.shape[0] - 1
    a0 = a[0]
    if np.any(np.abs(a0) == 0.0):
        raise ZeroDivisionError("series power of a series with zero constant term")
    u = a / a0
    u[0] = 0.0
    out = np.zeros_like(u)
    out[0] = 1.0
    term = np.zeros_like(u)
    term[0] = 1.0
    for n in range(1, order + 1):
        term = mul(term, u)
        coeff = 1.0
        for j in range(n):
            coeff *= (exponent - j) / (j + 1)
        out = out + coeff * term
    return np.asarray(a0, dtype=complex) ** exponent * out


def reciprocal(a):
    return power(a, -1.0)


def exp(a):
    """exp(a(delta)); the constant term may be any complex array."""
    order = a.shape[0] - 1
    u = a.copy()
    u0 = a[0].copy()
    u[0] = 0.0
    out = np.zeros_like(u)
    out[0] = 1.0
    term = np.zeros_like(u)
    term[0] = 1.0
    for n in range(1, order + 1):
        term = mul(term, u)
        out = out + term / factorial(n)
    return np.exp(u0) * out


def sqrt(a):
    return power(a, 0.5)


def evaluate(a, delta):
    """Horner evaluation of the truncated series at a scalar delta."""
    out = np.zeros(a.shape[1:], dtype=a.dtype)
    for coeff in a[::-1]:
        out = out * delta + coeff
    return out


def require_order(requested, available=DEFAULT_ORDER):
    if requested > available:
        raise OrderTooHigh(
            f"expansion order {requested} exceeds engine order {available}"
        )


def binomial_coefficients(exponent, order):
    """Generalized binomial row used by tests as an independent check."""
    if float(exponent).is_integer() and exponent >= 0:
        return [comb(int(exponent), n) if n <= exponent else 0 for n in range(order + 1)]
    coeffs = [1.0]
    for n in range(1, order + 1):
        coeffs.append(coeffs[-1] * (exponent - n + 1) / n)
    return coeffs
