"""Degenerating families: limits, strata, twisted differentials, zeroes.

A family fixes the component geometry and marked singular parts and sends the
plumbing parameters to zero along a resistance schedule, s_e(k) =
exp(-rho_e(k) + i arg_e).  The limit differential is governed by the
multi-scale Kirchhoff problem at the family's blowup point; on components
where it dies, rescaled limits are extracted recursively through jet
balancing, producing the order-of-vanishing stratification and the twisted
limit differential whose zero divisor tracks the limits of zeroes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .blowup import BlowupPoint, ResistanceSchedule, classify_sequence, solve_multiscale
from .components import (Jet, PlumbedCurve, RationalDifferential,
                         SingularPart, build_phi, laurent_expand,
                         make_component, rn_genus0)
from .graphs import DualGraph, build_graph
from .jump import DEFAULT_MODES
from .kirchhoff import CurrentAssignment
from .mobius import Mobius, is_inf
from .plumbing import GluedDifferential, marked_inflows, rn_construct

ORD_TOL = 1e-7
STABILIZE_TOL = 1e-3


class DegenerationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# families

@dataclass(frozen=True)
class DegeneratingFamily:
    """Fixed geometry with plumbing parameters shrinking along a schedule."""

    curve: PlumbedCurve                       # geometry template
    schedule: ResistanceSchedule              # rho_e(k) = -ln|s_e(k)|
    marked_parts: dict[str, SingularPart]
    k_grid: tuple[float, ...]
    args: tuple[float, ...] | None = None     # arg s_e, default 0

    def __post_init__(self):
        if self.schedule.n_edges != self.curve.graph.n_edges:
            raise DegenerationError("schedule does not match the graph")
        rhos = [self.schedule(k) for k in self.k_grid]
        for a, b in zip(rhos, rhos[1:]):
            if not np.all(np.asarray(b) > np.asarray(a)):
                raise DegenerationError("|s_e(k)| must strictly decrease along the grid")

    def curve_at(self, k: float) -> PlumbedCurve:
        return self.curve.with_plumbing(self.schedule(k), self.args)

    def genus(self) -> int:
        return self.curve.graph.cycle_rank()

    def total_pole_degree(self) -> int:
        """Sum of (m_l + 1) over marked points with nonzero singular parts."""
        return sum(p.effective_order for p in self.marked_parts.values())

    def m_zero(self) -> int:
        return 2 * self.genus() - 2 + self.total_pole_degree()


# ---------------------------------------------------------------------------
# limit RN differential

@dataclass
class LimitRN:
    point: BlowupPoint
    currents: CurrentAssignment
    pieces: dict[int, RationalDifferential]
    residue_checks: tuple[tuple[float, float], ...] = ()     # (k, max deviation)


def limit_rn(fam: DegeneratingFamily, cross_check: int = 0,
             n_modes: int = DEFAULT_MODES) -> LimitRN:
    """Limit differential: residues i times the multi-scale flow solution.

    With ``cross_check=n``, the residues of the finite-k construction at the
    last n grid points are compared against the limit currents.
    """
    g = fam.curve.graph
    point = classify_sequence(fam.schedule)
    inflows = marked_inflows(fam.marked_parts)
    for _, label in g.legs:
        inflows.setdefault(label, 0.0)
    c = solve_multiscale(g, inflows, point)
    pieces = build_phi(fam.curve, c, fam.marked_parts)
    checks = []
    for k in fam.k_grid[-cross_check:] if cross_check else []:
        rn = rn_construct(fam.curve_at(k), fam.marked_parts, n_modes)
        dev = max(abs(a - b) for a, b in zip(rn.currents.values, c.values)) \
            if g.n_edges else 0.0
        checks.append((float(k), float(dev)))
    return LimitRN(point, c, pieces, tuple(checks))


# ---------------------------------------------------------------------------
# balancing

def _s_power(rho: float, arg: float, power: int) -> complex:
    """s^power for s = exp(-rho + i arg), safe for extreme rho."""
    return cmath.exp(complex(-rho * power, arg * power))


def balancing_singular_part(jet: Jet, rho: float, arg: float,
                            target_chart: Mobius) -> SingularPart:
    """Pullback of a jet through the node: the prescribed part at the far side.

    sigma_{-e} = -( s_e sum_{j=-1}^{m-1} s_e^j u_j z_{-e}^{-j-2} ) dz_{-e},
    so the order-(j+2) coefficient is -s^{j+1} u_j and the residue is -u_{-1}.
    """
    coeffs = []
    for j in range(-1, jet.m):
        coeffs.append(-_s_power(rho, arg, j + 1) * jet.coefficient(j))
    return SingularPart(target_chart, tuple(coeffs))


# ---------------------------------------------------------------------------
# subcurves

@dataclass(frozen=True)
class Subcurve:
    """A plumbed subcurve: retained components, internal nodes, external legs."""

    curve: PlumbedCurve                    # plumbed at internal nodes only
    vertices: tuple[int, ...]              # new vertex -> old vertex
    edge_map: tuple[int, ...]              # new unoriented edge -> old
    external: tuple[int, ...]              # old oriented edges, target retained

    def external_label(self, e: int) -> str:
        return f"node:{e}"


def extract_subcurve(curve: PlumbedCurve, vertices: set[int]) -> Subcurve:
    """Restrict the plumbed curve to a subset of components.

    Internal nodes stay plumbed; every external node preimage becomes a marked
    point labeled ``node:<oriented edge>``, keeping its original chart scale.
    """
    g = curve.graph
    old_vertices = sorted(vertices)
    vmap = {ov: i for i, ov in enumerate(old_vertices)}
    internal = [k for k in range(g.n_edges)
                if g.edges[k][0] in vmap and g.edges[k][1] in vmap]
    external = [e for e in range(g.n_oriented)
                if g.target(e) in vmap and e // 2 not in internal]
    legs = [(vmap[v], label) for v, label in g.legs if v in vmap]
    for e in external:
        legs.append((vmap[g.target(e)], f"node:{e}"))
    edges = [(vmap[g.edges[k][0]], vmap[g.edges[k][1]]) for k in internal]
    sub_g = build_graph(len(old_vertices), edges, legs)

    comps = []
    for ov in old_vertices:
        comp = curve.components[ov]
        marked = {label: p for label, p in comp.marked}
        node_points: dict[int, complex] = {}
        scales: dict[int, float] = {}
        for e, q in comp.node_points:
            if e // 2 in internal:
                new_e = 2 * internal.index(e // 2) + (e % 2)
                node_points[new_e] = q
                scales[new_e] = comp.chart_extent(e)
            else:
                marked[f"node:{e}"] = q
        comps.append(make_component(vmap[ov], marked, node_points, scales))
    rho = tuple(curve.rho[k] for k in internal)
    arg = tuple(curve.arg[k] for k in internal)
    sub = PlumbedCurve(sub_g, tuple(comps), rho, arg)
    return Subcurve(sub, tuple(old_vertices), tuple(internal), tuple(external))


def _marked_chart(curve: PlumbedCurve, sub: Subcurve, e: int) -> Mobius:
    """Original node chart of an external oriented edge (now a marked point)."""
    return curve.node_chart(e)


def rn_on_subcurve(curve: PlumbedCurve, sub: Subcurve,
                   marked_parts: dict[str, SingularPart],
                   currents: CurrentAssignment,
                   n_modes: int = DEFAULT_MODES) -> dict[int, RationalDifferential]:
    """RN differential on the subcurve with poles i c_e at its external nodes.

    Components of the subcurve are handled independently (it may be
    disconnected); returns pieces indexed by the original vertices.
    """
    sub_labels = {lab for _, lab in sub.curve.graph.legs}
    parts = {label: part for label, part in marked_parts.items()
             if label in sub_labels}
    for e in sub.external:
        ce = currents.current(e)
        parts.setdefault(sub.external_label(e),
                         SingularPart(_marked_chart(curve, sub, e), (1j * ce,)))

    pieces: dict[int, RationalDifferential] = {}
    sub_g = sub.curve.graph
    seen: set[int] = set()
    for start in range(sub_g.n_vertices):
        if start in seen:
            continue
        comp_vs = _graph_component(sub_g, start)
        seen |= comp_vs
        piece_curve, piece_map = _restrict_connected(sub.curve, sorted(comp_vs))
        local_parts = {label: p for label, p in parts.items()
                       if label in {lab for _, lab in piece_curve.graph.legs}}
        rn = rn_construct(piece_curve, local_parts, n_modes)
        for new_v, old_sub_v in enumerate(piece_map):
            pieces[sub.vertices[old_sub_v]] = rn.differential.piece(new_v)
    return pieces


def _graph_component(g: DualGraph, start: int) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for e in g.edges_at(v):
            w = g.source(e)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def _restrict_connected(curve: PlumbedCurve, vertices: list[int]):
    """Restriction of an already-extracted subcurve to one connected component."""
    g = curve.graph
    vmap = {ov: i for i, ov in enumerate(vertices)}
    keep = [k for k in range(g.n_edges)
            if g.edges[k][0] in vmap and g.edges[k][1] in vmap]
    edges = [(vmap[g.edges[k][0]], vmap[g.edges[k][1]]) for k in keep]
    legs = [(vmap[v], label) for v, label in g.legs if v in vmap]
    sub_g = build_graph(len(vertices), edges, legs)
    comps = []
    for ov in vertices:
        comp = curve.components[ov]
        marked = {label: p for label, p in comp.marked}
        node_points, scales = {}, {}
        for e, q in comp.node_points:
            new_e = 2 * keep.index(e // 2) + (e % 2)
            node_points[new_e] = q
            scales[new_e] = comp.chart_extent(e)
        comps.append(make_component(vmap[ov], marked, node_points, scales))
    rho = tuple(curve.rho[k] for k in keep)
    arg = tuple(curve.arg[k] for k in keep)
    return PlumbedCurve(sub_g, tuple(comps), rho, arg), tuple(vertices)


# ---------------------------------------------------------------------------
# stratification

@dataclass
class Stratum:
    index: int
    vertices: tuple[int, ...]
    pieces: dict[int, RationalDifferential]      # projectively normalized
    mu_samples: tuple[tuple[float, float], ...]  # (k, ln mu_k)
    scale_slope: float                           # d ln(mu) / d rho_max
    scale_const: float


@dataclass
class Stratification:
    family: DegeneratingFamily
    m: int
    m0: int
    strata: tuple[Stratum, ...]
    external_orders: dict[int, int]              # ord at q_e for crossed edges
    jet_sums: tuple[int, ...]                    # sum of m_e per step
    point: BlowupPoint

    def stratum_of(self, v: int) -> int:
        for st in self.strata:
            if v in st.vertices:
                return st.index
        raise KeyError(v)

    def piece(self, v: int) -> RationalDifferential:
        return self.strata[self.stratum_of(v)].pieces[v]

    def scale_separation_slopes(self) -> tuple[float, ...]:
        return tuple(b.scale_slope - a.scale_slope
                     for a, b in zip(self.strata, self.strata[1:]))


def _normalize_collection(pieces: dict[int, RationalDifferential]):
    """Divide by the largest singular-part coefficient magnitude (R+ scaling)."""
    top = 0.0
    for w in pieces.values():
        for part in w.parts:
            top = max(top, part.max_abs())
        if w.poly:
            top = max(top, max(abs(x) for x in w.poly))
    if top == 0:
        return pieces, 0.0
    return {v: w.scaled(1.0 / top) for v, w in pieces.items()}, top


def stratify(fam: DegeneratingFamily, m: int | None = None,
             n_modes: int = DEFAULT_MODES, samples: int = 3) -> Stratification:
    """Order-of-vanishing stratification and per-stratum projective limits.

    Recursive: the top stratum carries the limit RN differential; at each step
    the finite-k differential on the current subcurve is jet-expanded at the
    crossing nodes, the balancing singular parts are normalized to unit size
    (defining the next scale), their stabilized limit prescribes the RN
    problem on the complement, and the next stratum is where that limit
    differential survives.
    """
    m0 = fam.m_zero()
    m = m if m is not None else max(2 * m0 + 1, 1)
    g = fam.curve.graph
    lim = limit_rn(fam)
    c0_vertices = tuple(sorted(v for v in range(g.n_vertices)
                               if not lim.pieces[v].is_zero()))
    if not c0_vertices:
        raise DegenerationError("limit differential vanishes identically")
    pieces0, _ = _normalize_collection({v: lim.pieces[v] for v in c0_vertices})
    strata = [Stratum(0, c0_vertices, pieces0,
                      tuple((float(k), 0.0) for k in fam.k_grid[-samples:]),
                      0.0, 0.0)]
    assigned = set(c0_vertices)
    piece_of: dict[int, RationalDifferential] = dict(pieces0)
    external_orders: dict[int, int] = {}
    jet_sums: list[int] = []

    ks = list(fam.k_grid[-samples:])
    rn_cache = {k: rn_construct(fam.curve_at(k), fam.marked_parts, n_modes)
                for k in ks}
    log_mu = {k: 0.0 for k in ks}      # running ln mu^{(lambda)} per k

    lam = 0
    while len(assigned) < g.n_vertices:
        sub = extract_subcurve(fam.curve, assigned)
        ext = [e for e in sub.external]
        if not ext:
            raise DegenerationError("remaining components are disconnected from the strata")
        # orders m_e of the already-extracted limits at the crossing nodes
        m_es = {}
        for e in ext:
            m_es[e] = piece_of[g.target(e)].order_at(fam.curve.node_chart(e),
                                                     tol=ORD_TOL)
            external_orders[e] = m_es[e]
        jet_sums.append(sum(m_es.values()))

        collections = {}
        new_log_mu = {}
        for k in ks:
            curve_k = fam.curve_at(k)
            sub_k = extract_subcurve(curve_k, assigned)
            psi_le = rn_on_subcurve(curve_k, sub_k, fam.marked_parts,
                                    rn_cache[k].currents, n_modes)
            coll: dict[str, SingularPart] = {}
            for e in ext:
                jet = laurent_expand(psi_le[g.target(e)],
                                     curve_k.node_chart(e), m)
                coll[f"sigma:{e}"] = balancing_singular_part(
                    jet, curve_k.rho[e // 2], curve_k.arg[e // 2],
                    curve_k.node_chart(e ^ 1))
            for label, part in fam.marked_parts.items():
                if g.leg_vertex(label) not in assigned:
                    coll[f"marked:{label}"] = part
            top = max((p.max_abs() for p in coll.values()), default=0.0)
            if top == 0:
                raise DegenerationError(
                    f"all balancing parts vanish at step {lam}: jets degenerate")
            collections[k] = {lab: p.scaled(1.0 / top) for lab, p in coll.items()}
            new_log_mu[k] = log_mu[k] - math.log(top)

        # stabilization of the projective limit across the sampled grid points
        ref = collections[ks[-1]]
        for k in ks[:-1]:
            for lab, p in collections[k].items():
                dev = max(abs(a - b) for a, b in
                          zip(_pad(p.coeffs, len(ref[lab].coeffs)),
                              _pad(ref[lab].coeffs, len(p.coeffs))))
                if dev > STABILIZE_TOL:
                    raise DegenerationError(
                        f"projective limit not stabilized at step {lam} "
                        f"({lab}: deviation {dev:.2e} between k={k} and k={ks[-1]}); "
                        "not jet-convergent at the observed resolution")
        ref = _clean_limit(collections, ks)

        # the limit RN problem on the complement
        comp_vertices = sorted(set(range(g.n_vertices)) - assigned)
        limit_parts: dict[str, SingularPart] = {}
        inflow_ext: dict[str, float] = {}
        for lab, p in ref.items():
            if lab.startswith("sigma:"):
                e = int(lab.split(":")[1])
                limit_parts[f"node:{e ^ 1}"] = p
                inflow_ext[f"node:{e ^ 1}"] = p.residue.imag
            else:
                limit_parts[lab.split(":", 1)[1]] = p
        pieces_next = _limit_on_subcurve(fam, comp_vertices, limit_parts,
                                         inflow_ext)
        next_vertices = tuple(sorted(v for v in comp_vertices
                                     if not pieces_next[v].is_zero()))
        if not next_vertices:
            raise DegenerationError(
                f"limit differential vanishes on the whole complement at step {lam}")
        pieces_norm, _ = _normalize_collection(
            {v: pieces_next[v] for v in next_vertices})

        rhos = [max(fam.schedule(k)) for k in ks]
        mus = [new_log_mu[k] for k in ks]
        slope, const = np.polyfit(rhos, mus, 1)
        strata.append(Stratum(lam + 1, next_vertices, pieces_norm,
                              tuple(zip(map(float, ks), map(float, mus))),
                              float(slope), float(const)))
        piece_of.update(pieces_norm)
        assigned |= set(next_vertices)
        log_mu = new_log_mu
        lam += 1
        if lam > g.n_vertices:
            raise DegenerationError("stratification failed to terminate")

    return Stratification(fam, m, m0, tuple(strata), external_orders,
                          tuple(jet_sums), lim.point)


def _pad(coeffs: tuple[complex, ...], size: int) -> tuple[complex, ...]:
    return tuple(coeffs) + (0.0,) * max(0, size - len(coeffs))


def _clean_limit(collections: dict, ks: list[float]) -> dict[str, SingularPart]:
    """Zero out coefficients that are still decaying toward zero at the cutoff.

    A coefficient carrying a positive power of s shrinks along the grid and
    has limit zero; keeping its small finite-k value would pollute the limit
    differential with spurious far-field zeros.
    """
    ref = collections[ks[-1]]
    out = {}
    for lab, part in ref.items():
        size = len(part.coeffs)
        rows = [_pad(collections[k][lab].coeffs, size) for k in ks]
        cleaned = []
        for i in range(size):
            seq = [abs(row[i]) for row in rows]
            decaying = all(b < a or a == 0 for a, b in zip(seq, seq[1:]))
            if seq[-1] <= STABILIZE_TOL and decaying:
                cleaned.append(0.0)
            else:
                cleaned.append(part.coeffs[i])
        out[lab] = SingularPart(part.chart, tuple(cleaned))
    return out


def _limit_on_subcurve(fam: DegeneratingFamily, vertices: list[int],
                       limit_parts: dict[str, SingularPart],
                       inflow_ext: dict[str, float]) -> dict[int, RationalDifferential]:
    """Multi-scale limit RN differential on a subcurve with prescribed parts."""
    g = fam.curve.graph
    sub = extract_subcurve(fam.curve, set(vertices))
    sub_g = sub.curve.graph
    pieces: dict[int, RationalDifferential] = {}
    seen: set[int] = set()
    for start in range(sub_g.n_vertices):
        if start in seen:
            continue
        comp_vs = _graph_component(sub_g, start)
        seen |= comp_vs
        old_vs = [sub.vertices[v] for v in sorted(comp_vs)]
        piece_curve, _ = _restrict_connected(sub.curve, sorted(comp_vs))
        pg = piece_curve.graph
        inflows = {}
        parts = {}
        for _, label in pg.legs:
            part = limit_parts.get(label)
            if part is None or part.is_zero():
                inflows[label] = 0.0
                continue
            parts[label] = part
            res = part.residue
            inflows[label] = res.imag
        if pg.n_edges:
            local_edges = [sub.edge_map[k] for k in
                           _internal_of(piece_curve, sub, comp_vs)]
            point = _restrict_point(classify_sequence(fam.schedule), local_edges)
            c = solve_multiscale(pg, inflows, point)
        else:
            c = CurrentAssignment(pg, ())
        local = build_phi(piece_curve, c, parts)
        for new_v, old_v in enumerate(old_vs):
            pieces[old_v] = local[new_v]
    return pieces


def _internal_of(piece_curve: PlumbedCurve, sub: Subcurve, comp_vs: set[int]):
    """Indices into sub.edge_map of the edges retained by the connected piece."""
    out = []
    ordered = sorted(comp_vs)
    vset = set(ordered)
    for k, (a, b) in enumerate(sub.curve.graph.edges):
        if a in vset and b in vset:
            out.append(k)
    return out


def _restrict_point(point: BlowupPoint, old_edges: list[int]) -> BlowupPoint:
    """Blowup point restricted to a sublist of edges, renormalized per block."""
    local_of = {old: i for i, old in enumerate(old_edges)}
    blocks, coords = [], []
    for block, xs in zip(point.blocks, point.coords):
        ids = [local_of[e] for e in block if e in local_of]
        vals = [x for e, x in zip(block, xs) if e in local_of]
        if ids:
            order = sorted(range(len(ids)), key=lambda i: ids[i])
            top = max(vals)
            blocks.append(tuple(ids[i] for i in order))
            coords.append(tuple(vals[i] / top for i in order))
    return BlowupPoint(len(old_edges), tuple(blocks), tuple(coords))


# ---------------------------------------------------------------------------
# twisted limit differential and zeroes

@dataclass
class TwistedLimitDifferential:
    stratification: Stratification
    node_multiplicities: dict[int, int]          # unoriented edge -> ord+ord+2
    node_orders: dict[int, int]                  # oriented edge -> ord
    marked_multiplicities: dict[str, int]
    free_zeros: tuple[tuple[int, complex, int], ...]   # (vertex, point, mult)

    @property
    def degree(self) -> int:
        return (sum(self.node_multiplicities.values())
                + sum(self.marked_multiplicities.values())
                + sum(m for _, _, m in self.free_zeros))


def twisted_limit(strat: Stratification) -> TwistedLimitDifferential:
    """Assemble the twisted differential's zero divisor and verify its bounds."""
    fam = strat.family
    g = fam.curve.graph
    node_orders: dict[int, int] = {}
    for e in range(g.n_oriented):
        v = g.target(e)
        piece = strat.piece(v)
        node_orders[e] = piece.order_at(fam.curve.node_chart(e), tol=ORD_TOL)
    node_mult = {}
    for k in range(g.n_edges):
        o1, o2 = node_orders[2 * k], node_orders[2 * k + 1]
        mult = o1 + o2 + 2
        if mult < 0:
            raise DegenerationError(
                f"node {k} has negative twisted multiplicity {mult}: "
                "numerical order misclassification")
        lam1 = strat.stratum_of(g.target(2 * k))
        lam2 = strat.stratum_of(g.target(2 * k + 1))
        if lam1 != lam2:
            up, down = (2 * k, 2 * k + 1) if lam1 < lam2 else (2 * k + 1, 2 * k)
            if node_orders[down] < -node_orders[up] - 2:
                raise DegenerationError(
                    f"pole bound violated at node {k}: "
                    f"ord {node_orders[down]} < -(m_e={node_orders[up]})-2")
        node_mult[k] = mult

    marked_mult = {}
    for label, part in fam.marked_parts.items():
        v = g.leg_vertex(label)
        piece = strat.piece(v)
        try:
            o = piece.order_at(part.chart, tol=ORD_TOL)
        except Exception:
            o = 0
        marked_mult[label] = part.effective_order + o

    free = []
    for v in range(g.n_vertices):
        piece = strat.piece(v)
        comp = fam.curve.components[v]
        anchors = [ch for _, ch in comp.node_charts]
        anchors += [fam.marked_parts[lab].chart for lab, _ in comp.marked
                    if lab in fam.marked_parts]
        for p, o in piece.divisor(extra_anchors=tuple(anchors)):
            if o <= 0:
                continue
            if _is_special(fam, v, p):
                continue
            free.append((v, p, o))

    tw = TwistedLimitDifferential(strat, node_mult, node_orders, marked_mult,
                                  tuple(free))
    if tw.degree != strat.m0:
        raise DegenerationError(
            f"twisted divisor degree {tw.degree} != {strat.m0}")
    return tw


def _is_special(fam: DegeneratingFamily, v: int, p: complex) -> bool:
    comp = fam.curve.components[v]
    pts = [q for _, q in comp.node_points] + [q for _, q in comp.marked]
    for q in pts:
        if is_inf(q) and is_inf(p):
            return True
        if not is_inf(q) and not is_inf(p) and abs(p - q) < 1e-6 * (1 + abs(q)):
            return True
    return False


# ---------------------------------------------------------------------------
# zeroes at finite s

@dataclass
class ZeroReport:
    away: tuple[tuple[int, complex, int], ...]       # (vertex, point, mult)
    annulus_counts: dict[int, int]                   # unoriented edge -> count
    total: int
    expected: int
    radii: dict[int, float]


def track_zeros(omega: GluedDifferential, marked_parts: dict[str, SingularPart],
                newton_steps: int = 2) -> ZeroReport:
    """Zero divisor of the glued differential at finite s.

    Zeros away from the seam annuli are the roots of the per-component
    rational pieces (Newton-polished); the count inside each plumbing annulus
    comes from the argument principle against the nonvanishing reference
    differential, evaluated exactly on the root/pole lists:
    count_e = wind_e + wind_{-e} + 2.
    """
    curve = omega.curve
    g = curve.graph
    expected = 2 * g.cycle_rank() - 2 + sum(p.effective_order
                                            for p in marked_parts.values())
    divisors = {}
    for v in range(g.n_vertices):
        comp = curve.components[v]
        anchors = [ch for _, ch in comp.node_charts]
        anchors += [marked_parts[lab].chart for lab, _ in comp.marked
                    if lab in marked_parts]
        divisors[v] = omega.piece(v).divisor(extra_anchors=tuple(anchors))

    radii = {}
    counts = {}
    for k in range(g.n_edges):
        for radius in (1.0, 1.01, 0.99, 1.02, 0.98):
            ok = True
            wind = 0
            for e in (2 * k, 2 * k + 1):
                v = g.target(e)
                chart = curve.node_chart(e)
                for p, o in divisors[v]:
                    t = abs(chart.apply(p))
                    if abs(t - radius) < 1e-6:
                        ok = False
                        break
                    if t < radius:
                        wind += o
                if not ok:
                    break
            if ok:
                radii[k] = radius
                counts[k] = wind + 2
                break
        else:
            raise DegenerationError(
                f"zeros of the differential crowd every counting contour at node {k}")

    away = []
    for v in range(g.n_vertices):
        comp = curve.components[v]
        for p, o in divisors[v]:
            if o <= 0:
                continue
            inside = False
            for e in g.edges_at(v):
                if abs(curve.node_chart(e).apply(p)) < radii[e // 2]:
                    inside = True
                    break
            if inside:
                continue
            if o == 1 and not is_inf(p):
                p = _newton_polish(omega.piece(v), p, newton_steps)
            away.append((v, p, o))

    total = sum(m for _, _, m in away) + sum(counts.values())
    return ZeroReport(tuple(away), counts, total, expected, radii)


def _newton_polish(piece: RationalDifferential, p: complex, steps: int) -> complex:
    h = 1e-6 * (1.0 + abs(p))
    for _ in range(steps):
        f = complex(piece.eval(p))
        df = complex(piece.eval(p + h) - piece.eval(p - h)) / (2 * h)
        if df == 0:
            break
        step = f / df
        if abs(step) > 10 * h:
            break
        p = p - step
    return p


# ---------------------------------------------------------------------------
# m-balanced approximation

@dataclass
class BalancedApproximation:
    curve: PlumbedCurve
    m: int
    pieces: dict[int, RationalDifferential]
    level_norms: tuple[float, ...]
    method: str

    def balancing_residual(self) -> float:
        """Coefficientwise defect of sigma_{-e} = I_e^*(J_e(Phi[m]))."""
        curve = self.curve
        g = curve.graph
        worst = 0.0
        for e in range(g.n_oriented):
            v, w = g.target(e), g.target(e ^ 1)
            jet = laurent_expand(self.pieces[v], curve.node_chart(e), self.m)
            want = balancing_singular_part(jet, curve.rho[e // 2],
                                           curve.arg[e // 2],
                                           curve.node_chart(e ^ 1))
            have = _singular_part_in_chart(self.pieces[w], curve.node_chart(e ^ 1),
                                           self.m + 1)
            dev = max(abs(a - b) for a, b in
                      zip(_pad(have, self.m + 1), _pad(want.coeffs, self.m + 1)))
            worst = max(worst, dev)
        return worst


def _singular_part_in_chart(piece: RationalDifferential, chart: Mobius,
                            order: int) -> tuple[complex, ...]:
    coeffs = piece.laurent(chart, -order, -1)
    return tuple(coeffs[::-1])       # ascending pole order u_{-1}, u_{-2}, ...


def _balance_map(curve: PlumbedCurve, pieces: dict[int, RationalDifferential],
                 m: int) -> dict[int, RationalDifferential]:
    """One application of the balancing operator R (zero-residue output)."""
    g = curve.graph
    new_parts: dict[int, list[SingularPart]] = {v: [] for v in range(g.n_vertices)}
    for e in range(g.n_oriented):
        v = g.target(e)
        jet = laurent_expand(pieces[v], curve.node_chart(e), m)
        holo = Jet(jet.chart, (0.0,) + jet.coeffs[1:])     # drop the residue term
        sigma = balancing_singular_part(holo, curve.rho[e // 2],
                                        curve.arg[e // 2], curve.node_chart(e ^ 1))
        if not sigma.is_zero():
            new_parts[g.target(e ^ 1)].append(sigma)
    return {v: rn_genus0(curve.components[v], parts)
            for v, parts in new_parts.items()}


def balanced_approximation(curve: PlumbedCurve,
                           marked_parts: dict[str, SingularPart], m: int,
                           method: str = "series", n_modes: int = DEFAULT_MODES,
                           max_levels: int = 80,
                           tol: float = 1e-16) -> BalancedApproximation:
    """The unique m-balanced collection of differentials approximating Psi.

    The series starts from the differential with the construction's converged
    currents and repeatedly balances the residual jets; terms decay like |s|.
    The direct method solves the same linear system on singular-part
    coefficients in one shot.
    """
    rn = rn_construct(curve, marked_parts, n_modes)
    c = rn.currents
    base = build_phi(curve, c, marked_parts)
    g = curve.graph

    if method == "series":
        total = dict(base)
        level = dict(base)
        norms = [float(max(_piece_norm(w) for w in level.values()))]
        for _ in range(max_levels):
            level = _balance_map(curve, level, m)
            n = float(max(_piece_norm(w) for w in level.values()))
            norms.append(n)
            if n <= tol * (norms[0] + 1e-300):
                break
            if len(norms) >= 3 and norms[-1] >= norms[-2] >= norms[-3] > 0:
                raise DegenerationError(
                    "balancing series diverges: M_m |s| >= 1 at this plumbing")
            total = {v: total[v] + level[v] for v in total}
        return BalancedApproximation(curve, m, total, tuple(norms), "series")

    # direct: affine system on tail coefficients (orders 2..m+1 per node side)
    slots = [(e, j) for e in range(g.n_oriented) for j in range(m)]
    idx = {slot: i for i, slot in enumerate(slots)}
    size = len(slots)

    def assemble(x: np.ndarray) -> dict[int, RationalDifferential]:
        parts: dict[int, list[SingularPart]] = {v: [] for v in range(g.n_vertices)}
        for e in range(g.n_oriented):
            coeffs = [1j * c.current(e)]
            coeffs += [x[idx[(e, j)]] for j in range(m)]
            parts[g.target(e)].append(SingularPart(curve.node_chart(e),
                                                   tuple(coeffs)))
        out = {}
        for v in range(g.n_vertices):
            marked = [marked_parts[lab] for lab in g.legs_at(v)
                      if lab in marked_parts and not marked_parts[lab].is_zero()]
            out[v] = rn_genus0(curve.components[v], marked + parts[v])
        return out

    def residual(x: np.ndarray) -> np.ndarray:
        pieces = assemble(x)
        r = np.zeros(size, dtype=complex)
        for e in range(g.n_oriented):
            v = g.target(e)
            jet = laurent_expand(pieces[v], curve.node_chart(e), m)
            for j in range(m):
                want = -_s_power(curve.rho[e // 2], curve.arg[e // 2], j + 1) \
                    * jet.coefficient(j)
                r[idx[(e ^ 1, j)]] = x[idx[(e ^ 1, j)]] - want
        return r

    zero = np.zeros(size, dtype=complex)
    b = residual(zero)
    A = np.zeros((size, size), dtype=complex)
    for i in range(size):
        probe = np.zeros(size, dtype=complex)
        probe[i] = 1.0
        A[:, i] = residual(probe) - b
    x = np.linalg.solve(A, -b)
    pieces = assemble(x)
    return BalancedApproximation(curve, m, pieces, (), "direct")


def _piece_norm(w: RationalDifferential) -> float:
    out = 0.0
    for part in w.parts:
        out = max(out, part.max_abs())
    if w.poly:
        out = max(out, max(abs(x) for x in w.poly))
    return out


def approximation_error_l2(curve: PlumbedCurve,
                           marked_parts: dict[str, SingularPart],
                           approx: BalancedApproximation,
                           n_modes: int = DEFAULT_MODES) -> float:
    """L2 norm over the plumbed components of Psi minus the approximation.

    The defect is the ARN solution of the jump problem whose data is the seam
    mismatch of the balanced collection, so its norm is computed through the
    same Stokes formula as any ARN solution.
    """
    from .jump import jump_data_from_forms, solve_arn, arn_l2_norm
    from .components import SingularPart as SP
    g = curve.graph
    rn = rn_construct(curve, marked_parts, n_modes)
    forms = {}
    for e in range(g.n_oriented):
        v = g.target(e)
        ce = rn.currents.current(e)
        strip = RationalDifferential((SP(curve.node_chart(e), (-1j * ce,)),))
        forms[e] = approx.pieces[v] + strip
    data = jump_data_from_forms(curve, forms, n_modes)
    sol = solve_arn(curve, data)
    return max(arn_l2_norm(sol, v) for v in range(g.n_vertices))


# ---------------------------------------------------------------------------
# enhanced balancing (two-sided, higher order)

@dataclass
class EnhancedBalancedPair:
    """Differentials on a subcurve and its complement with two-sided balancing."""

    sigma_inner: dict[int, tuple[complex, ...]]   # e in E^lam -> parts order<=m+1
    sigma_outer: dict[int, tuple[complex, ...]]   # -e side, order <= 2m+1
    pieces_inner: dict[int, RationalDifferential]
    pieces_outer: dict[int, RationalDifferential]
    residual: float


def enhanced_balanced_pair(fam: DegeneratingFamily, k: float,
                           inner_vertices: set[int], m: int,
                           n_modes: int = DEFAULT_MODES) -> EnhancedBalancedPair:
    """Solve the two-sided balancing system at one family point.

    The inner differential carries singular parts of order up to m+1 at the
    crossing nodes (residues fixed by the construction's currents), the outer
    one parts of order up to 2m+1; the jets of each must pull back to the
    other's singular part.  Solved as one affine linear system on the tail
    coefficients; a fixed-point iteration cross-checks the solution.
    """
    curve = fam.curve_at(k)
    g = curve.graph
    rn = rn_construct(curve, fam.marked_parts, n_modes)
    c = rn.currents
    sub_in = extract_subcurve(curve, inner_vertices)
    outer_vertices = set(range(g.n_vertices)) - set(inner_vertices)
    ext = [e for e in sub_in.external]   # oriented, target inner

    slots = [("in", e, j) for e in ext for j in range(m)] + \
            [("out", e, j) for e in ext for j in range(2 * m)]
    idx = {s: i for i, s in enumerate(slots)}
    size = len(slots)

    def assemble(x):
        parts_in = {}
        for e in ext:
            coeffs = [1j * c.current(e)] + [x[idx[("in", e, j)]] for j in range(m)]
            parts_in[sub_in.external_label(e)] = SingularPart(
                curve.node_chart(e), tuple(coeffs))
        inner = rn_on_subcurve(curve, sub_in,
                               {**fam.marked_parts, **parts_in},
                               c, n_modes)
        # replace the fixed simple poles by the richer prescribed parts
        sub_out = extract_subcurve(curve, outer_vertices)
        parts_out = {}
        for e in ext:
            eo = e ^ 1
            coeffs = [1j * c.current(eo)] + [x[idx[("out", e, j)]]
                                             for j in range(2 * m)]
            parts_out[sub_out.external_label(eo)] = SingularPart(
                curve.node_chart(eo), tuple(coeffs))
        outer = rn_on_subcurve(curve, sub_out,
                               {**fam.marked_parts, **parts_out}, c, n_modes)
        return inner, outer

    def residual(x):
        inner, outer = assemble(x)
        r = np.zeros(size, dtype=complex)
        for e in ext:
            eo = e ^ 1
            rho, arg = curve.rho[e // 2], curve.arg[e // 2]
            jet_in = laurent_expand(inner[g.target(e)], curve.node_chart(e), 2 * m)
            jet_out = laurent_expand(outer[g.target(eo)], curve.node_chart(eo), m)
            # sigma_out = I*(holomorphic 2m-jet of inner side)
            for j in range(2 * m):
                want = -_s_power(rho, arg, j + 1) * jet_in.coefficient(j)
                r[idx[("out", e, j)]] = x[idx[("out", e, j)]] - want
            # sigma_in = I*(holomorphic m-jet of outer side)
            for j in range(m):
                want = -_s_power(rho, arg, j + 1) * jet_out.coefficient(j)
                r[idx[("in", e, j)]] = x[idx[("in", e, j)]] - want
        return r

    zero = np.zeros(size, dtype=complex)
    b = residual(zero)
    A = np.zeros((size, size), dtype=complex)
    for i in range(size):
        probe = np.zeros(size, dtype=complex)
        probe[i] = 1.0
        A[:, i] = residual(probe) - b
    x = np.linalg.solve(A, -b)

    # fixed-point fallback cross-check
    y = np.zeros(size, dtype=complex)
    for _ in range(60):
        y_new = y - residual(y)
        if np.max(np.abs(y_new - y)) <= 1e-14 * (1 + np.max(np.abs(y_new))):
            y = y_new
            break
        y = y_new
    if np.max(np.abs(x - y)) > 1e-9 * (1 + np.max(np.abs(x))):
        raise DegenerationError("enhanced balancing: direct and iterative "
                                "solutions disagree")

    inner, outer = assemble(x)
    res = float(np.max(np.abs(residual(x))))
    sig_in = {e: tuple(x[idx[("in", e, j)]] for j in range(m)) for e in ext}
    sig_out = {e: tuple(x[idx[("out", e, j)]] for j in range(2 * m)) for e in ext}
    return EnhancedBalancedPair(sig_in, sig_out, inner, outer, res)
