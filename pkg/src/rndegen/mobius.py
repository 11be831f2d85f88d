"""Mobius maps of the Riemann sphere, used as local charts at nodes and poles.

Points are complex numbers, with infinity represented by ``INF``. A chart at
a point q is a Mobius map z with z(q) = 0; the standard choices are the
scaled shift (Z - q)/d for finite q and c/Z for q at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INF = complex(float("inf"), 0.0)


def is_inf(p: complex) -> bool:
    return math.isinf(p.real) or math.isinf(p.imag)


@dataclass(frozen=True)
class Mobius:
    """Z -> (a Z + b) / (c Z + d) with nonzero determinant.

    Compositions carry the determinant along as a product: for maps built
    from many plumbing gluings the true determinant is a product of small
    parameters, and computing ad - bc from the composed entries would cancel
    catastrophically.
    """

    a: complex
    b: complex
    c: complex
    d: complex
    det_hint: complex | None = None

    def __post_init__(self):
        if self.det == 0:
            raise ValueError("degenerate Mobius map")

    @property
    def det(self) -> complex:
        if self.det_hint is not None:
            return self.det_hint
        return self.a * self.d - self.b * self.c

    def apply(self, Z: complex) -> complex:
        if is_inf(Z):
            return self.a / self.c if self.c != 0 else INF
        den = self.c * Z + self.d
        if den == 0:
            return INF
        return (self.a * Z + self.b) / den

    def __call__(self, Z):
        return self.apply(Z)

    def apply_array(self, Z):
        import numpy as np
        Z = np.asarray(Z, dtype=complex)
        return (self.a * Z + self.b) / (self.c * Z + self.d)

    def derivative(self, Z: complex) -> complex:
        den = self.c * Z + self.d
        return self.det / (den * den)

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a, det_hint=self.det)

    def compose(self, other: "Mobius") -> "Mobius":
        """self after other: (self o other)(Z) = self(other(Z))."""
        return Mobius(self.a * other.a + self.b * other.c,
                      self.a * other.b + self.b * other.d,
                      self.c * other.a + self.d * other.c,
                      self.c * other.b + self.d * other.d,
                      det_hint=self.det * other.det)

    @property
    def anchor(self) -> complex:
        """The point mapped to 0."""
        return self.inverse().apply(0.0)

    def key(self, digits: int = 12) -> tuple:
        """Scale-normalized key for chart identity tests."""
        entries = (self.a, self.b, self.c, self.d)
        pivot = next(x for x in entries if abs(x) > 0)
        return tuple(complex(round((x / pivot).real, digits),
                             round((x / pivot).imag, digits)) for x in entries)

    @staticmethod
    def shift_scale(q: complex, scale: float | complex = 1.0) -> "Mobius":
        """Chart (Z - q)/scale at a finite point q."""
        return Mobius(1.0 / scale, -q / scale, 0.0, 1.0)

    @staticmethod
    def inversion(c: complex = 1.0) -> "Mobius":
        """Chart c/Z at infinity."""
        return Mobius(0.0, c, 1.0, 0.0)


# -- exact rational composition ----------------------------------------------
#
# Compositions of many plumbing gluings are nearly degenerate: true entries of
# the product matrix can be tiny differences of order-one float products, and
# float composition destroys them.  Floats are dyadic rationals, so matrix
# products over Fraction pairs are exact; rounding happens once at the end.

from fractions import Fraction


def _qc(z: complex) -> tuple[Fraction, Fraction]:
    return (Fraction(float(z.real)), Fraction(float(z.imag)))


def _qc_add(p, q):
    return (p[0] + q[0], p[1] + q[1])


def _qc_mul(p, q):
    return (p[0] * q[0] - p[1] * q[1], p[0] * q[1] + p[1] * q[0])


def _qc_complex(p) -> complex:
    return complex(float(p[0]), float(p[1]))


class ExactMobius:
    """A Mobius map with exact rational entries, for lossless composition."""

    __slots__ = ("m",)

    def __init__(self, m):
        self.m = m

    @staticmethod
    def of(mob: Mobius) -> "ExactMobius":
        return ExactMobius((_qc(mob.a), _qc(mob.b), _qc(mob.c), _qc(mob.d)))

    def compose(self, other: "ExactMobius") -> "ExactMobius":
        a1, b1, c1, d1 = self.m
        a2, b2, c2, d2 = other.m
        return ExactMobius((
            _qc_add(_qc_mul(a1, a2), _qc_mul(b1, c2)),
            _qc_add(_qc_mul(a1, b2), _qc_mul(b1, d2)),
            _qc_add(_qc_mul(c1, a2), _qc_mul(d1, c2)),
            _qc_add(_qc_mul(c1, b2), _qc_mul(d1, d2)),
        ))

    def inverse(self) -> "ExactMobius":
        a, b, c, d = self.m
        neg = lambda p: (-p[0], -p[1])
        return ExactMobius((d, neg(b), neg(c), a))

    def det(self) -> tuple[Fraction, Fraction]:
        a, b, c, d = self.m
        ad = _qc_mul(a, d)
        bc = _qc_mul(b, c)
        return (ad[0] - bc[0], ad[1] - bc[1])

    def rounded(self) -> Mobius:
        a, b, c, d = (_qc_complex(p) for p in self.m)
        return Mobius(a, b, c, d, det_hint=_qc_complex(self.det()))
