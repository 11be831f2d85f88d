"""Rational components, singular parts, and exact meromorphic differentials.

A differential on a genus-0 component is represented structurally as a sum of

  * residue terms ``u dZ/(Z - a)`` for finite anchors (an anchor at infinity
    contributes no explicit term: by the residue theorem its simple pole
    emerges from the finite residues),
  * exact tails ``u_j d(z^{j+1})/(j+1)`` for ``j <= -2`` written in a Mobius
    chart ``z`` vanishing at the anchor (globally well defined, with the
    anchor as the only pole),
  * an optional polynomial part (poles at infinity only).

This makes prescribing singular parts exact: on the sphere the differential
with given tails and zero residue sum exists and is unique, and everything
downstream (evaluation, Laurent expansion in any chart, zero divisors) is
closed-form algebra on the parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import DualGraph
from .kirchhoff import CurrentAssignment
from .mobius import INF, Mobius, is_inf
from . import ratfun as rf

RESIDUE_TOL = 1e-12
ANCHOR_MATCH = 1e-6


class ComponentError(ValueError):
    pass


class ZeroDifferentialError(ValueError):
    pass


# ---------------------------------------------------------------------------
# singular parts and jets

@dataclass(frozen=True)
class SingularPart:
    """Laurent tail sum_{j=-order}^{-1} u_j z^j dz in the chart z.

    ``coeffs[i]`` is u_{-1-i}, so coeffs[0] is the residue and the last entry
    the deepest pole coefficient.
    """

    chart: Mobius
    coeffs: tuple[complex, ...]

    @property
    def residue(self) -> complex:
        return self.coeffs[0] if self.coeffs else 0.0

    @property
    def order(self) -> int:
        """Pole order M+1 (index of the deepest retained coefficient)."""
        return len(self.coeffs)

    @property
    def effective_order(self) -> int:
        for i in range(len(self.coeffs) - 1, -1, -1):
            if self.coeffs[i] != 0:
                return i + 1
        return 0

    @property
    def anchor(self) -> complex:
        return self.chart.anchor

    def coefficient(self, j: int) -> complex:
        """u_j for j <= -1."""
        i = -1 - j
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else 0.0

    def is_zero(self) -> bool:
        return all(u == 0 for u in self.coeffs)

    def scaled(self, factor: complex) -> "SingularPart":
        return SingularPart(self.chart, tuple(factor * u for u in self.coeffs))

    def max_abs(self) -> float:
        return max((abs(u) for u in self.coeffs), default=0.0)

    @staticmethod
    def at_point(p: complex, coeffs_desc, scale: float = 1.0) -> "SingularPart":
        """Singular part at a plain point, coefficients highest-order-first."""
        chart = Mobius.inversion(scale) if is_inf(p) else Mobius.shift_scale(p, scale)
        return SingularPart(chart, tuple(complex(u) for u in reversed(list(coeffs_desc))))


@dataclass(frozen=True)
class Jet:
    """Residue plus holomorphic m-jet at an anchor: u_{-1}, u_0, ..., u_{m-1}."""

    chart: Mobius
    coeffs: tuple[complex, ...]

    @property
    def m(self) -> int:
        return len(self.coeffs) - 1

    @property
    def residue(self) -> complex:
        return self.coeffs[0]

    def coefficient(self, j: int) -> complex:
        """u_j for -1 <= j <= m-1."""
        return self.coeffs[j + 1]

    def max_abs(self) -> float:
        return max(abs(u) for u in self.coeffs)


# ---------------------------------------------------------------------------
# the differential

@dataclass(frozen=True)
class RationalDifferential:
    """Meromorphic differential on the sphere, structured by singular parts."""

    parts: tuple[SingularPart, ...] = ()
    poly: tuple[complex, ...] = ()

    def __post_init__(self):
        anchors = [p.anchor for p in self.parts]
        for i, a in enumerate(anchors):
            for b in anchors[i + 1:]:
                if is_inf(a) and is_inf(b):
                    raise ComponentError("two singular parts anchored at infinity")
                if not is_inf(a) and not is_inf(b) and abs(a - b) < 1e-12 * (1 + abs(a)):
                    raise ComponentError(f"duplicate singular-part anchor at {a}")

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: "RationalDifferential") -> "RationalDifferential":
        merged: dict[tuple, list] = {}
        order: list[tuple] = []
        for part in self.parts + other.parts:
            key = part.chart.key()
            if key not in merged:
                merged[key] = [part.chart, []]
                order.append(key)
            coeffs = merged[key][1]
            while len(coeffs) < len(part.coeffs):
                coeffs.append(0.0)
            for i, u in enumerate(part.coeffs):
                coeffs[i] += u
        parts = tuple(SingularPart(merged[k][0], tuple(merged[k][1])) for k in order)
        poly = tuple(rf.polyadd(self.poly or [0.0], other.poly or [0.0]))
        if all(x == 0 for x in poly):
            poly = ()
        return RationalDifferential(parts, poly)

    def __sub__(self, other: "RationalDifferential") -> "RationalDifferential":
        return self + other.scaled(-1.0)

    def scaled(self, factor: complex) -> "RationalDifferential":
        return RationalDifferential(tuple(p.scaled(factor) for p in self.parts),
                                    tuple(factor * x for x in self.poly))

    def is_zero(self) -> bool:
        return all(p.is_zero() for p in self.parts) and all(x == 0 for x in self.poly)

    def residues(self) -> dict[complex, complex]:
        out = {}
        for p in self.parts:
            if not is_inf(p.anchor):
                out[p.anchor] = out.get(p.anchor, 0.0) + p.residue
        return out

    def residue_sum(self) -> complex:
        """Sum of all residues including the implicit one at infinity; 0 exactly."""
        return sum(p.residue for p in self.parts)

    # -- evaluation ---------------------------------------------------------
    def eval(self, Z):
        """Value against dZ at finite points (vectorized)."""
        Z = np.asarray(Z, dtype=complex)
        out = np.zeros_like(Z)
        if self.poly:
            out = out + rf.polyval(self.poly, Z)
        for part in self.parts:
            A = part.chart
            a = part.anchor
            if part.coeffs and not is_inf(a) and part.coeffs[0] != 0:
                out = out + part.coeffs[0] / (Z - a)
            if len(part.coeffs) > 1:
                w = A.apply_array(Z)
                dw = A.det / (A.c * Z + A.d) ** 2
                tail = np.zeros_like(Z)
                winv = 1.0 / w
                wp = winv
                for i in range(1, len(part.coeffs)):
                    wp = wp * winv            # w^{-(i+1)} = w^j for j = -1-i
                    tail = tail + part.coeffs[i] * wp
                out = out + tail * dw
        return out

    # -- Laurent expansion ---------------------------------------------------
    def laurent(self, chart: Mobius, lo: int, hi: int) -> np.ndarray:
        """Coefficients u_j, lo <= j <= hi, of the expansion in the chart."""
        size = hi - lo + 1
        acc = np.zeros(size, dtype=complex)

        def put(j0: int, coeffs):
            for i, u in enumerate(np.atleast_1d(coeffs)):
                j = j0 + i
                if lo <= j <= hi and u != 0:
                    acc[j - lo] += u

        W = chart.inverse()              # z -> Z
        w1, w2, w3, w4 = W.a, W.b, W.c, W.d
        n = hi + 2 + max(0, -lo)         # series length for Taylor pieces
        target_key = chart.key()

        for part in self.parts:
            same = part.chart.key() == target_key
            # residue term
            u = part.coeffs[0] if part.coeffs else 0.0
            if u != 0 and not is_inf(part.anchor):
                za = chart.apply(part.anchor)
                if same or za == 0:
                    put(-1, [u])
                elif is_inf(za):
                    pass
                else:
                    put(0, -u * rf.series_inv_linear(za, -1.0, n))
                if w3 != 0:
                    if w4 == 0:
                        put(-1, [-u])
                    else:
                        put(0, -u * w3 * rf.series_inv_linear(w4, w3, n))
            # exact tails
            if len(part.coeffs) > 1:
                if same:
                    for i in range(1, len(part.coeffs)):
                        put(-1 - i, [part.coeffs[i]])
                else:
                    mu = part.chart.compose(W)
                    Pc, Qc, Rc, Sc = mu.a, mu.b, mu.c, mu.d
                    for i in range(1, len(part.coeffs)):
                        uj = part.coeffs[i]
                        if uj == 0:
                            continue
                        j = -1 - i
                        kappa = -(j + 1)
                        if Qc != 0:
                            g = rf.series_mul(rf.polypow([Sc, Rc], kappa),
                                              rf.series_linear_power(Qc, Pc, -kappa, n + 1),
                                              n + 1)
                            g0 = 0
                        else:
                            g = rf.polypow([Sc, Rc], kappa) * Pc ** (-kappa)
                            g0 = -kappa
                        scale = uj / (j + 1)
                        der = [scale * (g0 + m) * g[m] for m in range(len(g))]
                        put(g0 - 1, der)
        if self.poly:
            D = len(rf.trim(self.poly)) - 1
            comp = np.zeros(1, dtype=complex)
            for i, p in enumerate(rf.as_poly(self.poly)):
                comp = rf.polyadd(comp, p * rf.polymul(rf.polypow([w2, w1], i),
                                                       rf.polypow([w4, w3], D - i)))
            detW = W.det
            if w4 != 0:
                g = rf.series_mul(comp, rf.series_linear_power(w4, w3, -(D + 2), n + 2), n + 2)
                put(0, detW * g)
            else:
                put(-(D + 2), detW * comp / w3 ** (D + 2))
        return acc

    # -- global rational form -------------------------------------------------
    def global_form(self) -> tuple[np.ndarray, np.ndarray, list[tuple[complex, int]]]:
        """Numerator and denominator polynomials of the value against dZ.

        Returns (num, den, finite_anchor_orders); den is the product of
        (Z - a)^{m_a} over finite anchors.
        """
        anchor_orders: list[tuple[complex, int]] = []
        for part in self.parts:
            if is_inf(part.anchor):
                continue
            o = part.effective_order
            if o > 0:
                anchor_orders.append((part.anchor, o))
        den = np.ones(1, dtype=complex)
        for a, o in anchor_orders:
            den = rf.polymul(den, rf.polypow([-a, 1.0], o))

        def cofactor(idx: int, used: int) -> np.ndarray:
            out = np.ones(1, dtype=complex)
            for i, (a, o) in enumerate(anchor_orders):
                power = o - used if i == idx else o
                out = rf.polymul(out, rf.polypow([-a, 1.0], power))
            return out

        num = np.zeros(1, dtype=complex)
        if self.poly:
            num = rf.polyadd(num, rf.polymul(self.poly, den))
        fin_index = {}
        for i, (a, _) in enumerate(anchor_orders):
            fin_index[i] = a
        idx = 0
        for part in self.parts:
            A = part.chart
            if is_inf(part.anchor):
                for i in range(1, len(part.coeffs)):
                    uj = part.coeffs[i]
                    if uj == 0:
                        continue
                    j = -1 - i
                    kappa = -(j + 1)
                    coef = uj / (j + 1) * A.b ** (j + 1) * kappa * A.c
                    term = coef * rf.polypow([A.d, A.c], kappa - 1)
                    num = rf.polyadd(num, rf.polymul(term, den))
                continue
            if part.effective_order == 0:
                continue
            my = idx
            idx += 1
            if part.coeffs and part.coeffs[0] != 0:
                num = rf.polyadd(num, part.coeffs[0] * cofactor(my, 1))
            for i in range(1, len(part.coeffs)):
                uj = part.coeffs[i]
                if uj == 0:
                    continue
                j = -1 - i
                kappa = -(j + 1)
                coef = uj / (j + 1) * kappa * (-A.det) / A.a ** (kappa + 1)
                term = coef * rf.polypow([A.d, A.c], kappa - 1)
                num = rf.polyadd(num, rf.polymul(term, cofactor(my, kappa + 1)))
        return rf.trim(num, 1e-12), den, anchor_orders

    # -- orders and divisors ---------------------------------------------------
    def order_at(self, chart: Mobius, hi: int = None, tol: float = 1e-9) -> int:
        """Order of vanishing at the chart anchor (negative for poles)."""
        max_order = max((p.order for p in self.parts), default=0)
        hi = hi if hi is not None else max_order + len(rf.as_poly(self.poly)) + 4
        window = self.laurent(chart, -max_order - 1, hi)
        scale = float(np.max(np.abs(window)))
        if scale == 0:
            raise ZeroDifferentialError("differential vanishes identically near anchor")
        for i, u in enumerate(window):
            if abs(u) > tol * scale:
                return (-max_order - 1) + i
        raise ZeroDifferentialError("no nonzero Laurent coefficient found in window")

    def divisor(self, extra_anchors: tuple[Mobius, ...] = (),
                cluster_tol: float = 1e-8) -> list[tuple[complex, int]]:
        """Zeros and poles with multiplicity; degree is checked to equal -2.

        Exact accounting on the global rational form: numerator roots within
        the match radius of a pole anchor reduce its order, everything else is
        a free zero, and the order at infinity comes from the degrees.
        """
        if self.is_zero():
            raise ZeroDifferentialError("the zero differential has no divisor")
        num, den, anchor_orders = self.global_form()
        anchors: dict[complex, int] = {}
        for a, o in anchor_orders:
            anchors[a] = anchors.get(a, 0) - o
        scale = 1.0 + max((abs(a) for a in anchors), default=0.0)

        entries: list[tuple[complex, int]] = []
        for root, mult in rf.roots_with_multiplicity(num, cluster_tol):
            matched = None
            for a in anchors:
                if abs(root - a) <= ANCHOR_MATCH * scale:
                    matched = a
                    break
            if matched is not None:
                anchors[matched] += mult
            else:
                entries.append((root, mult))
        entries.extend((a, o) for a, o in anchors.items() if o != 0)
        d_inf = -(rf.degree(num) - rf.degree(den)) - 2
        if d_inf != 0:
            entries.append((INF, d_inf))
        total = sum(o for _, o in entries)
        if total != -2:
            raise ArithmeticError(
                f"divisor degree {total} != -2: zero/pole accounting failed")
        return entries

    def zeros(self) -> list[tuple[complex, int]]:
        return [(p, o) for p, o in self.divisor() if o > 0]


def zero_differential() -> RationalDifferential:
    return RationalDifferential((), ())


# ---------------------------------------------------------------------------
# components and plumbed curves

@dataclass(frozen=True)
class RationalComponent:
    """A genus-0 component: marked points and node points with disjoint charts."""

    vertex: int
    marked: tuple[tuple[str, complex], ...]
    node_points: tuple[tuple[int, complex], ...]     # oriented edge -> point
    node_charts: tuple[tuple[int, Mobius], ...] = field(default=())
    chart_extents: tuple[tuple[int, float], ...] = field(default=())

    def marked_point(self, label: str) -> complex:
        for lab, p in self.marked:
            if lab == label:
                return p
        raise ComponentError(f"no marked point {label!r} on component {self.vertex}")

    def node_point(self, e: int) -> complex:
        for ee, p in self.node_points:
            if ee == e:
                return p
        raise ComponentError(f"no node point for oriented edge {e} on component {self.vertex}")

    def node_chart(self, e: int) -> Mobius:
        for ee, ch in self.node_charts:
            if ee == e:
                return ch
        raise ComponentError(f"no node chart for oriented edge {e}")

    def chart_extent(self, e: int) -> float:
        for ee, d in self.chart_extents:
            if ee == e:
                return d
        raise ComponentError(f"no chart extent for oriented edge {e}")


DEFAULT_CHART_FACTOR = 0.4
INF_CHART_FACTOR = 2.5


def make_component(vertex: int,
                   marked: dict[str, complex],
                   node_points: dict[int, complex],
                   chart_scales: dict[int, float] | None = None) -> RationalComponent:
    """Build a component, choosing node chart scales and validating geometry.

    Default scales: 0.4 times the distance to the nearest other special point
    for finite nodes; 2.5 times the largest special-point radius for a node at
    infinity.  The closed chart disks must be pairwise disjoint and must
    exclude infinity and every marked point.
    """
    chart_scales = chart_scales or {}
    specials = list(marked.values()) + list(node_points.values())
    finite_specials = [p for p in specials if not is_inf(p)]

    charts: dict[int, Mobius] = {}
    extents: dict[int, float] = {}
    for e, q in node_points.items():
        if is_inf(q):
            c = chart_scales.get(e)
            if c is None:
                c = INF_CHART_FACTOR * max([abs(p) for p in finite_specials] + [1.0])
            charts[e] = Mobius.inversion(c)
            extents[e] = float(c)
        else:
            d = chart_scales.get(e)
            if d is None:
                others = [p for p in finite_specials if p != q]
                gap = min((abs(q - p) for p in others), default=1.0 + abs(q))
                d = DEFAULT_CHART_FACTOR * gap
            charts[e] = Mobius.shift_scale(q, d)
            extents[e] = float(d)

    # disjointness of chart disks, exclusion of marked points and infinity
    items = sorted(node_points)
    problems = []
    for i, e in enumerate(items):
        qe = node_points[e]
        for ee in items[i + 1:]:
            qf = node_points[ee]
            if is_inf(qe) and is_inf(qf):
                problems.append(f"two nodes at infinity ({e}, {ee})")
            elif is_inf(qe):
                if abs(qf) + extents[ee] >= extents[e]:
                    problems.append(f"chart of node {ee} at {qf} reaches the chart at infinity")
            elif is_inf(qf):
                if abs(qe) + extents[e] >= extents[ee]:
                    problems.append(f"chart of node {e} at {qe} reaches the chart at infinity")
            elif abs(qe - qf) <= extents[e] + extents[ee]:
                problems.append(f"node charts at {qe} and {qf} overlap")
        for lab, p in marked.items():
            if is_inf(qe):
                if is_inf(p) or abs(p) >= extents[e]:
                    problems.append(f"marked point {lab} at {p} inside the chart at infinity")
            elif not is_inf(p) and abs(p - qe) <= extents[e]:
                problems.append(f"marked point {lab} at {p} inside the chart of node {e} at {qe}")
    if problems:
        raise ComponentError("component geometry invalid: " + "; ".join(problems))

    return RationalComponent(vertex,
                             tuple(sorted(marked.items())),
                             tuple(sorted(node_points.items())),
                             tuple(sorted(charts.items())),
                             tuple(sorted(extents.items())))


@dataclass(frozen=True)
class PlumbedCurve:
    """Components glued along seams z_e z_{-e} = s_e, with 0 < |s_e| < 1.

    Plumbing parameters are carried as (rho, arg) with rho = -ln|s_e| > 0, so
    extreme degenerations stay representable after |s_e| underflows.
    """

    graph: DualGraph
    components: tuple[RationalComponent, ...]
    rho: tuple[float, ...]
    arg: tuple[float, ...]

    def __post_init__(self):
        g = self.graph
        if len(self.components) != g.n_vertices:
            raise ComponentError("one component per vertex required")
        if len(self.rho) != g.n_edges or len(self.arg) != g.n_edges:
            raise ComponentError("one plumbing parameter per unoriented edge required")
        if any(r <= 0 for r in self.rho):
            raise ComponentError("need 0 < |s_e| < 1, i.e. rho = -ln|s_e| > 0")
        for e in range(g.n_oriented):
            self.components[g.target(e)].node_chart(e)   # raises if missing

    def s(self, k: int) -> complex:
        return math.exp(-self.rho[k]) * complex(math.cos(self.arg[k]),
                                                math.sin(self.arg[k]))

    def seam_radius(self, k: int) -> float:
        return math.exp(-self.rho[k] / 2.0)

    def node_chart(self, e: int) -> Mobius:
        return self.components[self.graph.target(e)].node_chart(e)

    def with_plumbing(self, rho, arg=None) -> "PlumbedCurve":
        arg = tuple(arg) if arg is not None else (0.0,) * self.graph.n_edges
        return PlumbedCurve(self.graph, self.components,
                            tuple(float(r) for r in rho), arg)

    @staticmethod
    def assemble(graph: DualGraph, components, s_values=None,
                 rho=None, arg=None) -> "PlumbedCurve":
        if s_values is not None:
            svals = [complex(s) for s in s_values]
            if any(abs(s) >= 1 or s == 0 for s in svals):
                raise ComponentError("plumbing parameters must satisfy 0 < |s| < 1")
            rho = tuple(-math.log(abs(s)) for s in svals)
            arg = tuple(math.atan2(s.imag, s.real) for s in svals)
        else:
            rho = tuple(float(r) for r in rho)
            arg = tuple(arg) if arg is not None else (0.0,) * graph.n_edges
        return PlumbedCurve(graph, tuple(components), rho, arg)


# ---------------------------------------------------------------------------
# constructions

def rn_genus0(comp: RationalComponent | None,
              parts: list[SingularPart]) -> RationalDifferential:
    """The unique differential on the sphere with the prescribed singular parts.

    At genus 0 the real-periods condition is vacuous, so existence reduces to
    the residue theorem: the residues must sum to zero.
    """
    live = [p for p in parts if not p.is_zero()]
    total = sum(p.residue for p in live)
    scale = 1.0 + sum(p.max_abs() for p in live)
    if abs(total) > RESIDUE_TOL * scale:
        raise ComponentError(f"residues sum to {total:.3e}; no such differential exists")
    return RationalDifferential(tuple(live))


def laurent_expand(omega: RationalDifferential, chart: Mobius, m: int) -> Jet:
    """Residue term plus holomorphic m-jet of omega at the chart anchor."""
    coeffs = omega.laurent(chart, -1, m - 1)
    return Jet(chart, tuple(coeffs))


def zeros_of(omega: RationalDifferential) -> list[tuple[complex, int]]:
    """All zeros with multiplicity, including at infinity."""
    return omega.zeros()


def build_phi(curve: PlumbedCurve, c: CurrentAssignment,
              marked_parts: dict[str, SingularPart]) -> dict[int, RationalDifferential]:
    """Per-component differential with residue i c_e at each node preimage.

    Marked-point singular parts land on the component carrying the label; the
    residue theorem on each component is exactly the conservation condition
    for the currents, and is verified.
    """
    g = curve.graph
    out: dict[int, RationalDifferential] = {}
    for v in range(g.n_vertices):
        parts: list[SingularPart] = []
        for label in g.legs_at(v):
            part = marked_parts.get(label)
            if part is not None and not part.is_zero():
                parts.append(part)
        for e in g.edges_at(v):
            ce = c.current(e)
            if ce != 0.0:
                parts.append(SingularPart(curve.node_chart(e), (1j * ce,)))
        try:
            out[v] = rn_genus0(curve.components[v], parts)
        except ComponentError as exc:
            raise ComponentError(
                f"component {v}: {exc} (inconsistent currents?)") from exc
    return out
