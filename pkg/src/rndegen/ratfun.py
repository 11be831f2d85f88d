"""Polynomial and power-series helpers on complex coefficient arrays.

Coefficients are ascending-order numpy arrays. Series are truncated Taylor
expansions at 0; Laurent data is carried as (lowest order, coefficients).
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as P


def as_poly(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs, dtype=complex))
    return arr if arr.size else np.zeros(1, dtype=complex)


def trim(coeffs, rel_tol: float = 0.0) -> np.ndarray:
    """Drop trailing coefficients; with rel_tol, drop those tiny vs the max."""
    arr = as_poly(coeffs)
    scale = np.max(np.abs(arr))
    if scale == 0:
        return np.zeros(1, dtype=complex)
    cut = rel_tol * scale
    last = arr.size - 1
    while last > 0 and abs(arr[last]) <= cut:
        last -= 1
    return arr[:last + 1]


def polymul(a, b) -> np.ndarray:
    return P.polymul(as_poly(a), as_poly(b))


def polyadd(a, b) -> np.ndarray:
    return P.polyadd(as_poly(a), as_poly(b))


def polypow(a, n: int) -> np.ndarray:
    out = np.ones(1, dtype=complex)
    base = as_poly(a)
    for _ in range(n):
        out = P.polymul(out, base)
    return out


def polyval(a, Z):
    return P.polyval(Z, as_poly(a))


def polyder(a) -> np.ndarray:
    return P.polyder(as_poly(a)) if as_poly(a).size > 1 else np.zeros(1, dtype=complex)


def degree(a, rel_tol: float = 1e-13) -> int:
    """Degree after relative trimming; the zero polynomial has degree -1."""
    arr = trim(a, rel_tol)
    if arr.size == 1 and arr[0] == 0:
        return -1
    return arr.size - 1


def series_mul(a, b, n: int) -> np.ndarray:
    """Product of two Taylor series, truncated to orders 0..n-1."""
    a, b = as_poly(a)[:n], as_poly(b)[:n]
    return P.polymul(a, b)[:n]


def series_inv_linear(c0: complex, c1: complex, n: int) -> np.ndarray:
    """Series of 1/(c0 + c1 z) up to order n-1; requires c0 != 0."""
    if c0 == 0:
        raise ZeroDivisionError("series of 1/(c1 z) is not a Taylor series")
    out = np.empty(n, dtype=complex)
    t = 1.0 / c0
    ratio = -c1 / c0
    for k in range(n):
        out[k] = t
        t *= ratio
    return out


def series_linear_power(c0: complex, c1: complex, power: int, n: int) -> np.ndarray:
    """Series of (c0 + c1 z)**power for integer power (negative allowed), c0 != 0."""
    if power >= 0:
        return as_poly(polypow([c0, c1], power))[:n] if power else np.ones(1, dtype=complex)
    if c0 == 0:
        raise ZeroDivisionError("(c1 z)**negative is not a Taylor series")
    # binomial series: c0^power * sum C(power, k) (c1/c0)^k z^k
    out = np.empty(n, dtype=complex)
    term = c0 ** power
    ratio = c1 / c0
    for k in range(n):
        out[k] = term
        term *= (power - k) / (k + 1) * ratio
    return out


def series_div(num, den, n: int) -> np.ndarray:
    """Series of num/den at 0 up to order n-1; requires den[0] != 0."""
    num, den = as_poly(num), as_poly(den)
    if den[0] == 0:
        raise ZeroDivisionError("denominator vanishes at 0")
    out = np.zeros(n, dtype=complex)
    acc = np.zeros(n, dtype=complex)
    m = min(n, num.size)
    acc[:m] = num[:m]
    for k in range(n):
        out[k] = acc[k] / den[0]
        top = min(n - k, den.size)
        acc[k:k + top] -= out[k] * den[:top]
    return out


def roots_with_multiplicity(coeffs, cluster_tol: float = 1e-8) -> list[tuple[complex, int]]:
    """Roots of a polynomial, clustered into multiplicities."""
    arr = trim(coeffs, 1e-13)
    if arr.size <= 1:
        return []
    raw = np.roots(arr[::-1])
    scale = 1.0 + max((abs(r) for r in raw), default=0.0)
    groups: list[list[complex]] = []
    for r in sorted(raw, key=lambda z: (z.real, z.imag)):
        for grp in groups:
            if abs(r - np.mean(grp)) <= cluster_tol * scale:
                grp.append(r)
                break
        else:
            groups.append([r])
    return [(complex(np.mean(grp)), len(grp)) for grp in groups]
