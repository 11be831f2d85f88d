"""Differentials assembled on the plumbed curve.

``build_psi_c`` glues the per-component differential with node residues
``i c_e`` by subtracting the ARN solution of the induced jump problem; the
result has prescribed poles at the marked points only, seam integrals
``2 pi c_e``, and real periods away from the seams.  Imaginary parts of
periods across seams diverge like ``c_e ln|s_e|``; the RN construction
cancels them level by level with force-Kirchhoff corrections at resistances
``rho_e = -ln|s_e|``, producing the genuinely real-normalized differential.

On trees the plumbed curve is again a sphere and the construction collapses
to an exact pushforward under a global Mobius coordinate; that pushforward
(``global_tree_oracle``) is the independent oracle used throughout the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .components import (PlumbedCurve, RationalDifferential, SingularPart,
                         build_phi)
from .graphs import DualGraph, OrientedCycle, cycle_basis, _bfs_tree
from .jump import (ARNSolution, jump_data_from_forms, solve_arn,
                   DEFAULT_MODES, NEGLIGIBLE_RADIUS)
from .kirchhoff import (CurrentAssignment, ElectromotiveForce,
                        solve_flow, solve_force)
from .mobius import Mobius

PERIOD_TOL = 1e-8
LEVEL_TOL = 1e-12
MAX_LEVELS = 60


class PlumbingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# glued differentials

@dataclass
class GluedDifferential:
    """Per-component rational piece defining a differential off the seams."""

    curve: PlumbedCurve
    currents: CurrentAssignment
    pieces: dict[int, RationalDifferential]
    arn: ARNSolution | None = field(repr=False, default=None)

    def piece(self, v: int) -> RationalDifferential:
        return self.pieces[v]

    def eval(self, v: int, Z):
        return self.pieces[v].eval(Z)

    def seam_mismatch(self, n_probe: int = 128) -> float:
        """Sup over seams of the jump of the glued differential (should vanish)."""
        from .jump import seam_restrict, pullback_modes, _grid_sup
        worst = 0.0
        g = self.curve.graph
        for e in range(g.n_oriented):
            r = self.curve.seam_radius(e // 2)
            if r < NEGLIGIBLE_RADIUS:
                continue
            own = seam_restrict(self.pieces[g.target(e)],
                                self.curve.node_chart(e), r, n_probe)
            far = seam_restrict(self.pieces[g.target(e ^ 1)],
                                self.curve.node_chart(e ^ 1), r, n_probe)
            jump = own - pullback_modes(far, self.curve.arg[e // 2], n_probe)
            worst = max(worst, 2 * math.pi * _grid_sup(jump))
        return worst

    def piece_scale(self) -> float:
        """A magnitude scale: max singular-part coefficient across components."""
        out = 0.0
        for w in self.pieces.values():
            for part in w.parts:
                out = max(out, part.max_abs())
            if w.poly:
                out = max(out, max(abs(x) for x in w.poly))
        return out


def _split_at_chart(piece: RationalDifferential, chart: Mobius):
    """Separate the singular part anchored in the given chart from the rest."""
    key = chart.key()
    own = None
    rest = []
    for part in piece.parts:
        if part.chart.key() == key:
            own = part
        else:
            rest.append(part)
    return own, RationalDifferential(tuple(rest), piece.poly)


def build_psi_c(curve: PlumbedCurve, c: CurrentAssignment,
                marked_parts: dict[str, SingularPart],
                n_modes: int = DEFAULT_MODES) -> GluedDifferential:
    """Glued differential Phi(c) minus the ARN solution of its seam mismatch."""
    phi_parts = build_phi(curve, c, marked_parts)
    g = curve.graph
    if g.n_edges == 0 or \
            max(curve.seam_radius(k) for k in range(g.n_edges)) < NEGLIGIBLE_RADIUS:
        return GluedDifferential(curve, c, dict(phi_parts), None)
    forms = {}
    for e in range(g.n_oriented):
        v = g.target(e)
        ce = c.current(e)
        strip = RationalDifferential(
            (SingularPart(curve.node_chart(e), (-1j * ce,)),)) if ce else \
            RationalDifferential(())
        forms[e] = phi_parts[v] + strip
    data = jump_data_from_forms(curve, forms, n_modes)
    sol = solve_arn(curve, data)
    pieces = {v: phi_parts[v] - sol.correction(v) for v in range(g.n_vertices)}
    return GluedDifferential(curve, c, pieces, sol)


def build_omega_holo(curve: PlumbedCurve, c_prime: CurrentAssignment,
                     n_modes: int = DEFAULT_MODES) -> GluedDifferential:
    """The holomorphic differential with seam integrals 2 pi c'_e (zero inflows)."""
    res = c_prime.conservation_residual({})
    if res > 1e-10 * (1.0 + c_prime.max_abs()):
        raise PlumbingError(f"currents have nonzero inflow (residual {res:.3e})")
    return build_psi_c(curve, c_prime, {}, n_modes)


def seam_integral(omega: GluedDifferential, e: int, n_points: int = 512) -> complex:
    """Integral over the seam of edge e, oriented as the component boundary.

    Trapezoid quadrature of the component piece on the circle |z_e| = r_e,
    traversed clockwise; spectrally accurate, and an independent check of the
    residue bookkeeping (the expected value is 2 pi c_e).
    """
    curve = omega.curve
    r = curve.seam_radius(e // 2)
    if r < NEGLIGIBLE_RADIUS:
        return 2 * math.pi * omega.currents.current(e)
    chart = curve.node_chart(e)
    W = chart.inverse()
    theta = 2 * np.pi * np.arange(n_points) / n_points
    z = r * np.exp(1j * theta)
    Z = W.apply_array(z)
    dZ_dtheta = W.det / (W.c * z + W.d) ** 2 * (1j * z)
    vals = omega.eval(curve.graph.target(e), Z) * dZ_dtheta
    return -complex(np.mean(vals) * 2 * np.pi)      # clockwise


# ---------------------------------------------------------------------------
# periods

@dataclass(frozen=True)
class PathRealization:
    """Polyline options for realizing a graph cycle on the plumbed curve."""

    arc_ccw: bool = True
    lift: float = 0.35
    detour: float = 1.6
    side: float = 1.0    # which perpendicular to detour to (+1/-1)


@dataclass
class PeriodReport:
    cycle: OrientedCycle
    value_im: float
    log_term: float
    finite_part: float
    remainder: float | None = None


def _route(curve: PlumbedCurve, v: int, start: complex, end: complex,
           opts: PathRealization, depth: int = 0) -> list[complex]:
    """Waypoints from start to end keeping clear of the poles on the component.

    Only the poles matter: every residue is purely imaginary, so detouring on
    either side of a pole changes the period by a real amount only, and the
    imaginary part is path-independent within the component.  The clearance
    radii just keep the quadrature well conditioned.
    """
    comp = curve.components[v]
    obstacles = []
    for e, q in comp.node_points:
        if not (math.isinf(q.real) or math.isinf(q.imag)):
            obstacles.append((q, 0.45 * comp.chart_extent(e)))
    finite_specials = [p for _, p in comp.node_points + comp.marked
                       if not (math.isinf(p.real) or math.isinf(p.imag))]
    for _, p in comp.marked:
        if math.isinf(p.real) or math.isinf(p.imag):
            continue
        gap = min((abs(p - q) for q in finite_specials if q != p), default=1.0)
        obstacles.append((p, 0.3 * gap))

    def blocked(a, b):
        ab = b - a
        L2 = abs(ab) ** 2
        if L2 == 0:
            return None
        for cpt, rad in obstacles:
            t = max(0.0, min(1.0, ((cpt - a) * ab.conjugate()).real / L2))
            if abs(a + t * ab - cpt) < rad:
                return cpt, rad
        return None

    hit = blocked(start, end)
    if hit is None or depth > 12:
        return [start, end]
    cpt, rad = hit
    direction = (end - start) / abs(end - start)
    mid = cpt + 1j * direction * opts.detour * rad * opts.side
    left = _route(curve, v, start, mid, opts, depth + 1)
    right = _route(curve, v, mid, end, opts, depth + 1)
    return left[:-1] + right


def _gauss_segment(f, a: complex, b: complex, order: int = 24) -> complex:
    x, w = np.polynomial.legendre.leggauss(order)
    mid, half = (a + b) / 2.0, (b - a) / 2.0
    pts = mid + half * x
    return complex(half * np.sum(w * f(pts)))


def _quad_segment(f, a: complex, b: complex, tol: float = 1e-11,
                  depth: int = 0) -> complex:
    coarse = _gauss_segment(f, a, b, 16)
    fine = _gauss_segment(f, (a + b) / 2 + 0 * 1j, b, 16) + \
        _gauss_segment(f, a, (a + b) / 2, 16)
    if abs(fine - coarse) < tol * (1 + abs(fine)) or depth >= 12:
        return fine
    m = (a + b) / 2
    return _quad_segment(f, a, m, tol, depth + 1) + _quad_segment(f, m, b, tol, depth + 1)


def _radial_integral(curve: PlumbedCurve, piece: RationalDifferential, e: int,
                     outward: bool) -> complex:
    """Integral along the radial path between seam and chart boundary at arg 0.

    The singular part anchored at the node integrates in closed form (the
    residue contributes the log divergence exactly); the regular remainder is
    quadratured in the chart, where it is smooth down to the very node.
    """
    chart = curve.node_chart(e)
    r = curve.seam_radius(e // 2)
    rho_half = curve.rho[e // 2] / 2.0          # = -ln r, exact
    own, rest = _split_at_chart(piece, chart)
    total = 0.0 + 0.0j
    if own is not None:
        # residue: u_{-1} (ln 1 - ln r) = u_{-1} rho/2 going outward
        total += own.coeffs[0] * rho_half
        # tails: u_j (1 - r^{j+1})/(j+1); u_j r^{j+1} computed scale-safely
        for i in range(1, len(own.coeffs)):
            j = -1 - i
            uj = own.coeffs[i]
            if uj == 0:
                continue
            mag, ph = abs(uj), uj / abs(uj)
            at_seam = ph * math.exp(math.log(mag) + (j + 1) * (-rho_half))
            total += (uj - at_seam) / (j + 1)
    W = chart.inverse()

    def integrand(z):
        Z = W.apply_array(z)
        return rest.eval(Z) * (W.det / (W.c * z + W.d) ** 2)

    lo = r if r > NEGLIGIBLE_RADIUS else 0.0
    total += _quad_segment(integrand, complex(lo), complex(1.0))
    return total if outward else -total


def _arc_integral(curve: PlumbedCurve, piece: RationalDifferential, e: int,
                  theta_from: float, theta_to: float, ccw: bool) -> complex:
    """Integral along the seam arc of edge e between two chart arguments."""
    if not ccw:
        theta_from, theta_to = theta_to, theta_from
    if theta_to < theta_from:
        theta_to += 2 * math.pi
    chart = curve.node_chart(e)
    r = curve.seam_radius(e // 2)
    own, rest = _split_at_chart(piece, chart)
    total = 0.0 + 0.0j
    if own is not None:
        total += own.coeffs[0] * 1j * (theta_to - theta_from)
        for i in range(1, len(own.coeffs)):
            j = -1 - i
            uj = own.coeffs[i]
            if uj == 0:
                continue
            mag, ph = abs(uj), uj / abs(uj)
            scaled = ph * math.exp(math.log(mag) + (j + 1) * math.log(r))
            total += scaled * (np.exp(1j * (j + 1) * theta_to)
                               - np.exp(1j * (j + 1) * theta_from)) / (j + 1)
    if r > NEGLIGIBLE_RADIUS:
        W = chart.inverse()

        def integrand(t):
            z = r * np.exp(1j * t)
            Z = W.apply_array(z)
            return rest.eval(Z) * (W.det / (W.c * z + W.d) ** 2) * 1j * z

        total += _quad_segment(integrand, complex(theta_from), complex(theta_to))
    sign = 1.0 if ccw else -1.0
    return sign * total


def _interior_integral(curve: PlumbedCurve, piece: RationalDifferential, v: int,
                       start: complex, end: complex, opts: PathRealization) -> complex:
    waypoints = _route(curve, v, start, end, opts)
    total = 0.0 + 0.0j
    for a, b in zip(waypoints, waypoints[1:]):
        total += _quad_segment(piece.eval, a, b)
    return total


def period_im(omega: GluedDifferential, cycle: OrientedCycle,
              opts: PathRealization = PathRealization()) -> PeriodReport:
    """Imaginary part of the period along a polyline realization of the cycle.

    The path crosses each seam radially at chart argument 0, inserting the
    seam arc needed to connect the two crossing charts; the 1-form is
    integrated numerically (log parts in closed form), never via logarithms
    of endpoints.
    """
    curve = omega.curve
    g = curve.graph
    edges = cycle.edges
    total = 0.0 + 0.0j
    log_term = 0.0
    for i, a in enumerate(edges):
        nxt = edges[(i + 1) % len(edges)]
        v = g.target(a)
        piece = omega.piece(v)
        # arrive through the seam of chart a: arc from arg(s) to 0, then radial out
        total += _arc_integral(curve, piece, a, curve.arg[a // 2], 0.0, opts.arc_ccw)
        total += _radial_integral(curve, piece, a, outward=True)
        # interior leg to the departure chart
        exit_e = nxt ^ 1                       # chart of -a_{i+1} lives on v
        start = curve.node_chart(a).inverse().apply(1.0)
        end = curve.node_chart(exit_e).inverse().apply(1.0)
        total += _interior_integral(curve, piece, v, start, end, opts)
        total += _radial_integral(curve, piece, exit_e, outward=False)
        log_term += omega.currents.current(a) * curve.rho[a // 2]
    value = float(total.imag)
    return PeriodReport(cycle, value, log_term, value - log_term)


# ---------------------------------------------------------------------------
# the RN construction

@dataclass
class RNConstruction:
    """Converged current series and the resulting RN differential."""

    curve: PlumbedCurve
    levels: tuple[tuple[float, ...], ...]     # per-level current values
    currents: CurrentAssignment
    differential: GluedDifferential
    period_history: tuple[tuple[float, ...], ...]
    basis: tuple[OrientedCycle, ...]
    converged: bool

    @property
    def level_norms(self) -> tuple[float, ...]:
        return tuple(max(abs(x) for x in lvl) if lvl else 0.0 for lvl in self.levels)

    def certificate(self, opts: PathRealization = PathRealization()) -> dict:
        """Im basis periods and seam-integral reality of the final differential."""
        periods = [period_im(self.differential, cyc, opts) for cyc in self.basis]
        seams = [seam_integral(self.differential, 2 * k)
                 for k in range(self.curve.graph.n_edges)]
        return {
            "max_im_period": max((abs(p.value_im) for p in periods), default=0.0),
            "max_seam_imag": max((abs(s.imag) for s in seams), default=0.0),
            "seam_integrals": seams,
            "periods": periods,
        }


def marked_inflows(marked_parts: dict[str, SingularPart]) -> dict[str, float]:
    """Leg inflows r from residues i r; residues must be purely imaginary."""
    out = {}
    for label, part in marked_parts.items():
        res = part.residue
        if abs(res.real) > 1e-12 * (1.0 + abs(res)):
            raise PlumbingError(
                f"marked residue at {label} is not purely imaginary: {res}")
        out[label] = res.imag
    return out


def rn_construct(curve: PlumbedCurve, marked_parts: dict[str, SingularPart],
                 n_modes: int = DEFAULT_MODES, max_levels: int = MAX_LEVELS,
                 level_tol: float = LEVEL_TOL,
                 opts: PathRealization = PathRealization()) -> RNConstruction:
    """Construct the RN differential as a flow solution plus force corrections.

    Level 0 solves the flow problem with resistances rho_e = -ln|s_e| and
    inflows given by the marked residues; each further level cancels the
    remaining imaginary periods through a force problem.  The level norms
    decay geometrically once |s| is small enough.
    """
    g = curve.graph
    if not g.is_connected():
        raise PlumbingError("plumbed curve must be connected")
    inflows = marked_inflows(marked_parts)
    for _, label in g.legs:
        inflows.setdefault(label, 0.0)
    rho = np.asarray(curve.rho)
    c = solve_flow(g, inflows, rho)
    levels = [c.values]
    basis = tuple(cycle_basis(g))

    psi = build_psi_c(curve, c, marked_parts, n_modes)
    history = []
    converged = not basis
    scale = 1.0 + c.max_abs()
    for _ in range(max_levels):
        if not basis:
            break
        ims = tuple(period_im(psi, cyc, opts).value_im for cyc in basis)
        history.append(ims)
        emf = ElectromotiveForce(basis, tuple(-x for x in ims))
        corr = solve_force(g, emf, rho)
        levels.append(corr.values)
        c = c + corr
        psi = build_psi_c(curve, c, marked_parts, n_modes)
        if corr.max_abs() <= level_tol * scale:
            converged = True
            break
    return RNConstruction(curve, tuple(levels), c, psi, tuple(history),
                          basis, converged)


# ---------------------------------------------------------------------------
# the tree oracle

@dataclass(frozen=True)
class TreeOracle:
    """Global-sphere pushforward of a plumbed tree of rational components."""

    differential: RationalDifferential
    maps: tuple[Mobius, ...]          # component coordinate -> global coordinate
    exact_maps: tuple = ()            # ExactMobius per component
    exact_charts: tuple = ()          # per part: ExactMobius of its chart

    def transported(self, v: int) -> RationalDifferential:
        """The oracle differential pulled back to component v, in closed form.

        All chart compositions happen in exact rational arithmetic: the
        component maps are nearly degenerate (determinant of order prod s_e)
        and their float composition would cancel away the structure.  The
        pullback of each residue term u dZ'/(Z'-a) is u dZ/(Z-b) plus the
        balancing residue -u at the preimage of infinity; exact tails just
        compose their charts.
        """
        from .mobius import ExactMobius, INF, is_inf, _qc_complex
        G = self.exact_maps[v]
        # W = G^{-1} exactly; the preimage of infinity is W.a / W.c
        wa, _, wc, _ = G.inverse().m
        if wc[0] == 0 and wc[1] == 0:
            c_inf = INF
        else:
            c_inf = _qc_complex(wa) / _qc_complex(wc)
        parts: list[list] = []
        res_at_cinf = 0.0 + 0.0j
        for part, exact_chart in zip(self.differential.parts, self.exact_charts):
            chart2 = exact_chart.compose(G).rounded()
            coeffs = list(part.coeffs)
            if coeffs and coeffs[0] != 0:
                res_at_cinf -= coeffs[0]
            parts.append([chart2, coeffs])
        if res_at_cinf != 0 and not is_inf(c_inf):
            for chart2, coeffs in parts:
                b = chart2.anchor
                if not is_inf(b) and abs(b - c_inf) < 1e-9 * (1 + abs(b)):
                    coeffs[0] += res_at_cinf
                    break
            else:
                parts.append([Mobius.shift_scale(c_inf), [res_at_cinf]])
        return RationalDifferential(tuple(
            SingularPart(ch, tuple(cs)) for ch, cs in parts))

    def pullback_eval(self, v: int, Z):
        """Value of the oracle differential in the coordinate of component v."""
        Z = np.asarray(Z, dtype=complex)
        return self.transported(v).eval(Z)


def global_tree_oracle(curve: PlumbedCurve,
                       marked_parts: dict[str, SingularPart]) -> TreeOracle:
    """Exact RN differential for a plumbed tree via the global Mobius coordinate.

    Gluing z_e z_{-e} = s_e identifies each child sphere with a Mobius image
    of the root sphere; transporting the prescribed singular parts and solving
    on the global sphere gives the differential in closed form.
    """
    from .mobius import ExactMobius

    g = curve.graph
    if g.cycle_rank() != 0:
        raise PlumbingError("global-coordinate oracle requires a tree")
    tree = _bfs_tree(g)
    maps: dict[int, ExactMobius] = {0: ExactMobius.of(Mobius(1.0, 0.0, 0.0, 1.0))}
    order = sorted(tree, key=lambda v: _depth(g, tree, v))
    for v in order:
        e = tree[v]                     # oriented edge pointing at v
        parent = g.source(e)
        s_e = curve.s(e // 2)
        if s_e == 0:
            raise PlumbingError("plumbing parameter underflowed; oracle needs |s| > 0")
        into_parent = ExactMobius.of(curve.node_chart(e ^ 1).inverse()) \
            .compose(ExactMobius.of(Mobius.inversion(s_e))) \
            .compose(ExactMobius.of(curve.node_chart(e)))
        maps[v] = maps[parent].compose(into_parent)
    parts = []
    exact_charts = []
    for label, part in marked_parts.items():
        if part.is_zero():
            continue
        v = g.leg_vertex(label)
        exact = ExactMobius.of(part.chart).compose(maps[v].inverse())
        exact_charts.append(exact)
        parts.append(SingularPart(exact.rounded(), part.coeffs))
    total = sum(p.residue for p in parts)
    if abs(total) > 1e-10 * (1.0 + sum(p.max_abs() for p in parts)):
        raise PlumbingError("marked residues do not balance")
    return TreeOracle(RationalDifferential(tuple(parts)),
                      tuple(maps[v].rounded() for v in range(g.n_vertices)),
                      tuple(maps[v] for v in range(g.n_vertices)),
                      tuple(exact_charts))


def _depth(g: DualGraph, tree: dict[int, int], v: int) -> int:
    d = 0
    while v in tree:
        v = g.source(tree[v])
        d += 1
    return d


def probe_points(curve: PlumbedCurve, v: int, count: int = 100,
                 factor: float = 1.8) -> np.ndarray:
    """Deterministic probe grid on a component, away from charts and poles."""
    comp = curve.components[v]
    specials = [p for _, p in comp.marked] + [q for _, q in comp.node_points]
    finite = [p for p in specials if not (math.isinf(p.real) or math.isinf(p.imag))]
    radius = factor * max([abs(p) for p in finite] + [1.0])
    pts = radius * np.exp(2j * np.pi * np.arange(count) / count)
    keep = np.ones(len(pts), dtype=bool)
    for p in finite:
        keep &= np.abs(pts - p) > 0.3
    return pts[keep]


def oracle_deviation(omega: GluedDifferential, oracle: TreeOracle,
                     count: int = 100) -> float:
    """Max relative pointwise error of the glued differential vs the oracle."""
    worst = 0.0
    for v in range(omega.curve.graph.n_vertices):
        pts = probe_points(omega.curve, v, count)
        mine = omega.eval(v, pts)
        ref = oracle.pullback_eval(v, pts)
        scale = np.max(np.abs(ref)) + 1e-300
        worst = max(worst, float(np.max(np.abs(mine - ref)) / scale))
    return worst
