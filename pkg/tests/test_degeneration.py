import numpy as np
import pytest

from rndegen.blowup import ResistanceSchedule
from rndegen.components import Jet, PlumbedCurve, SingularPart, make_component
from rndegen.degeneration import (DegeneratingFamily,
                                  balanced_approximation, balancing_singular_part,
                                  approximation_error_l2, enhanced_balanced_pair,
                                  extract_subcurve, limit_rn, stratify,
                                  track_zeros, twisted_limit)
from rndegen.graphs import build_graph
from rndegen.mobius import Mobius
from rndegen.plumbing import rn_construct


def part_at(p, coeffs_desc, scale=1.0):
    return SingularPart.at_point(p, coeffs_desc, scale)


def two_sphere_family(kind="second", kmax=14.0, n=7):
    g = build_graph(2, [(0, 1)], [(0, "p1")] if kind == "second"
                    else [(0, "p1"), (1, "p2")])
    c0 = make_component(0, {"p1": 2.0}, {1: 0.0}, chart_scales={1: 0.75})
    c1 = make_component(1, {} if kind == "second" else {"p2": 2.0}, {0: 0.0},
                        chart_scales={0: 0.75})
    curve = PlumbedCurve.assemble(g, [c0, c1], rho=[6.0])
    sched = ResistanceSchedule.parametric([1.0], [1.0])
    marked = {"p1": part_at(2.0, [1.0, 0.0])} if kind == "second" else \
        {"p1": part_at(2.0, [1j]), "p2": part_at(2.0, [-1j])}
    ks = tuple(np.linspace(6.0, kmax, n))
    return DegeneratingFamily(curve, sched, marked, ks)


def banana_family(kmax=24.0, n=6):
    # marked poles off the real axis keep the limit zeros (-i/4) outside the
    # node chart disks, so zero tracking can match the twisted divisor
    g = build_graph(2, [(0, 1), (0, 1)], [(0, "p1"), (1, "p2")])
    c0 = make_component(0, {"p1": 4.0j}, {1: -1.0, 3: 1.0})
    c1 = make_component(1, {"p2": 4.0j}, {0: -1.0, 2: 1.0})
    curve = PlumbedCurve.assemble(g, [c0, c1], rho=[5.0, 5.0])
    sched = ResistanceSchedule.parametric([1.0, 1.0], [1.0, 1.0])
    marked = {"p1": part_at(4.0j, [1j]), "p2": part_at(4.0j, [-1j])}
    return DegeneratingFamily(curve, sched, marked, tuple(np.linspace(5.0, kmax, n)))


def chain3_family(kmax=13.0, n=6):
    g = build_graph(3, [(0, 1), (1, 2)], [(0, "p1")])
    c0 = make_component(0, {"p1": 2.0}, {1: 0.0}, chart_scales={1: 0.75})
    c1 = make_component(1, {}, {0: -1.0, 3: 1.0}, chart_scales={0: 0.7, 3: 0.7})
    c2 = make_component(2, {}, {2: 0.0}, chart_scales={2: 0.75})
    curve = PlumbedCurve.assemble(g, [c0, c1, c2], rho=[5.0, 5.0])
    sched = ResistanceSchedule.parametric([1.0, 1.3], [1.0, 1.0])
    marked = {"p1": part_at(2.0, [1.0, 0.0])}
    return DegeneratingFamily(curve, sched, marked, tuple(np.linspace(5.0, kmax, n)))


# -- limit RN differential -----------------------------------------------------

def test_limit_second_kind_vanishes_off_marked():
    fam = two_sphere_family("second")
    lim = limit_rn(fam)
    assert lim.currents.max_abs() == 0.0
    assert not lim.pieces[0].is_zero()
    assert lim.pieces[1].is_zero()


def test_limit_third_kind_node_poles():
    fam = two_sphere_family("third")
    lim = limit_rn(fam)
    assert lim.currents.values == pytest.approx((1.0,))
    res0 = lim.pieces[0].residues()
    assert res0[0.0] == pytest.approx(-1j)      # q at 0 on component 0


def test_limit_banana_residues_and_convergence():
    fam = banana_family()
    lim = limit_rn(fam, cross_check=3)
    assert lim.currents.values == pytest.approx((0.5, 0.5), abs=1e-12)
    devs = [d for _, d in lim.residue_checks]
    assert devs[-1] <= devs[0]
    assert devs[-1] < 0.05 * 0.5


# -- balancing -----------------------------------------------------------------

def test_balancing_residue_term():
    chart = Mobius.shift_scale(0.0)
    jet = Jet(Mobius.shift_scale(1.0), (1j * 0.7, 0.0, 0.0))
    rho = 2.0
    sig = balancing_singular_part(jet, rho, 0.0, chart)
    assert sig.coeffs[0] == pytest.approx(-1j * 0.7)
    assert all(abs(u) == 0 for u in sig.coeffs[1:])


def test_balancing_order_zero_term():
    chart = Mobius.shift_scale(0.0)
    u0 = 0.3 - 0.1j
    jet = Jet(Mobius.shift_scale(1.0), (0.0, u0, 0.0))
    rho, arg = 3.0, 0.5
    sig = balancing_singular_part(jet, rho, arg, chart)
    s = np.exp(-rho + 1j * arg)
    assert sig.coeffs[1] == pytest.approx(-s * u0)


def test_balancing_zero_jet():
    sig = balancing_singular_part(Jet(Mobius.shift_scale(1.0), (0.0, 0.0)),
                                  2.0, 0.0, Mobius.shift_scale(0.0))
    assert sig.is_zero()


# -- subcurves -------------------------------------------------------------------

def test_extract_subcurve_chain():
    fam = chain3_family()
    sub = extract_subcurve(fam.curve, {0})
    assert sub.curve.graph.n_vertices == 1
    assert sub.curve.graph.n_edges == 0
    assert sub.external == (1,)           # oriented edge 1 targets vertex 0
    labels = [lab for _, lab in sub.curve.graph.legs]
    assert set(labels) == {"p1", "node:1"}

    sub2 = extract_subcurve(fam.curve, {0, 1})
    assert sub2.curve.graph.n_edges == 1   # edge 0 internal now
    assert sub2.external == (3,)


# -- stratification ----------------------------------------------------------------

def test_stratify_two_sphere():
    fam = two_sphere_family("second")
    st = stratify(fam)
    assert len(st.strata) == 2
    assert st.strata[0].vertices == (0,)
    assert st.strata[1].vertices == (1,)
    # scale mu^(1) ~ 1/|s|: d ln mu / d rho = 1
    assert st.strata[1].scale_slope == pytest.approx(1.0, abs=0.05)
    # the rescaled limit is -dw/w^2 in the node chart, coefficientwise
    piece = st.strata[1].pieces[1]
    sig = piece.laurent(fam.curve.node_chart(0), -3, -1)   # [u_-3, u_-2, u_-1]
    assert abs(sig[1] + 1.0) < 1e-6       # u_{-2} = -1 after normalization
    assert abs(sig[0]) < 1e-6 and abs(sig[2]) < 1e-6


def test_stratify_single_stratum_banana():
    fam = banana_family()
    st = stratify(fam)
    assert len(st.strata) == 1
    assert st.strata[0].vertices == (0, 1)


def test_stratify_chain_three_levels():
    fam = chain3_family()
    st = stratify(fam)
    assert [s.vertices for s in st.strata] == [(0,), (1,), (2,)]
    slopes = [s.scale_slope for s in st.strata]
    assert slopes[0] == 0.0
    assert slopes[1] > 0.2
    assert slopes[2] > slopes[1] + 0.2     # strictly separating scales
    assert all(j <= st.m0 for j in st.jet_sums)


def test_stratify_scaled_limit_consistency():
    # mu_k^(lam) Psi_k and mu_k^(lam) Psi_k^{(<=lam)} agree at probe points
    from rndegen.degeneration import rn_on_subcurve
    fam = chain3_family()
    st = stratify(fam)
    k = fam.k_grid[-1]
    curve_k = fam.curve_at(k)
    rn = rn_construct(curve_k, fam.marked_parts)
    sub = extract_subcurve(curve_k, {0, 1})
    psi_le = rn_on_subcurve(curve_k, sub, fam.marked_parts, rn.currents)
    lam = 1
    mu = np.exp(st.strata[lam].scale_slope * max(fam.schedule(k))
                + st.strata[lam].scale_const)
    pts = np.array([0.45 + 0.2j, 0.3 - 0.4j])
    a = mu * np.asarray(rn.differential.eval(1, pts))
    b = mu * np.asarray(psi_le[1].eval(pts))
    assert np.max(np.abs(a - b)) < 1e-4 * (1 + np.max(np.abs(a)))


# -- twisted limit -----------------------------------------------------------------

def test_twisted_two_sphere_divisor():
    fam = two_sphere_family("second")
    tw = twisted_limit(stratify(fam))
    assert tw.node_multiplicities == {0: 0}     # 0 + (-2) + 2
    assert tw.marked_multiplicities == {"p1": 0}
    assert tw.free_zeros == ()
    assert tw.degree == 0 == stratify(fam).m0


def test_twisted_third_kind_dumbbell():
    fam = two_sphere_family("third")
    tw = twisted_limit(stratify(fam))
    assert tw.node_multiplicities == {0: 0}     # (-1) + (-1) + 2
    assert tw.degree == stratify(fam).m0 == 0


def test_twisted_banana_divisor():
    fam = banana_family()
    tw = twisted_limit(stratify(fam))
    # genus 1, two simple marked poles: degree 2(1)-2+2 = 2
    assert tw.degree == 2
    assert all(m >= 0 for m in tw.node_multiplicities.values())


def test_twisted_chain_divisor():
    fam = chain3_family()
    tw = twisted_limit(stratify(fam))
    assert tw.degree == stratify(fam).m0 == 0
    assert all(m == 0 for m in tw.node_multiplicities.values())


# -- zero tracking -----------------------------------------------------------------

def test_track_zeros_tree():
    fam = two_sphere_family("second")
    k = fam.k_grid[2]
    rn = rn_construct(fam.curve_at(k), fam.marked_parts)
    rep = track_zeros(rn.differential, fam.marked_parts)
    assert rep.expected == 0
    assert rep.total == 0
    assert rep.annulus_counts == {0: 0}


def test_track_zeros_banana_conservation():
    fam = banana_family()
    tw = twisted_limit(stratify(fam))
    for k in fam.k_grid[2:]:
        rn = rn_construct(fam.curve_at(k), fam.marked_parts)
        rep = track_zeros(rn.differential, fam.marked_parts)
        assert rep.expected == 2
        assert rep.total == 2
    # at the smallest s, annulus counts match the twisted node multiplicities
    assert rep.annulus_counts == tw.node_multiplicities


def test_track_zeros_chain_matches_twisted():
    fam = chain3_family()
    tw = twisted_limit(stratify(fam))
    rn = rn_construct(fam.curve_at(fam.k_grid[-1]), fam.marked_parts)
    rep = track_zeros(rn.differential, fam.marked_parts)
    assert rep.total == rep.expected == 0
    assert rep.annulus_counts == tw.node_multiplicities


# -- balanced approximation ----------------------------------------------------------

def tree_curve(rho):
    g = build_graph(2, [(0, 1)], [(0, "p1"), (1, "p2")])
    c0 = make_component(0, {"p1": 2.0}, {1: 0.0}, chart_scales={1: 0.75})
    c1 = make_component(1, {"p2": 2.0}, {0: 0.0}, chart_scales={0: 0.75})
    return PlumbedCurve.assemble(g, [c0, c1], rho=[rho])


TREE_PARTS = {"p1": part_at(2.0, [1j]), "p2": part_at(2.0, [-1j])}


def test_balanced_approximation_converges_and_balances():
    curve = tree_curve(np.log(1e3))      # |s| = 1e-3
    ap = balanced_approximation(curve, TREE_PARTS, m=4)
    assert len(ap.level_norms) <= 7
    assert ap.balancing_residual() < 1e-10
    ratios = [b / a for a, b in zip(ap.level_norms, ap.level_norms[1:]) if a > 0]
    s = 1e-3
    M = max(r / s for r in ratios)
    assert all(r <= M * s * (1 + 1e-9) for r in ratios)


def test_balanced_series_equals_direct():
    curve = tree_curve(np.log(1e3))
    a = balanced_approximation(curve, TREE_PARTS, m=4, method="series")
    b = balanced_approximation(curve, TREE_PARTS, m=4, method="direct")
    for v in (0, 1):
        for pa, pb in zip(sorted(a.pieces[v].parts, key=lambda p: str(p.chart.key())),
                          sorted(b.pieces[v].parts, key=lambda p: str(p.chart.key()))):
            la = np.array(pa.coeffs, dtype=complex)
            lb = np.array(pb.coeffs[:len(pa.coeffs)], dtype=complex)
            assert np.max(np.abs(la - lb)) < 1e-9


def test_balanced_zero_data():
    curve = tree_curve(np.log(1e3))
    ap = balanced_approximation(curve, {"p1": part_at(2.0, [0.0])}, m=2)
    assert all(w.is_zero() for w in ap.pieces.values())


def test_balanced_l2_error_slope():
    # || Psi - Phi[m] ||_{L2} ~ |s|^{(m+1)/2}
    m = 2
    errs, svals = [], [1e-2, 1e-3, 1e-4]
    for s in svals:
        curve = tree_curve(-np.log(s))
        ap = balanced_approximation(curve, TREE_PARTS, m=m)
        errs.append(approximation_error_l2(curve, TREE_PARTS, ap))
    slope = np.polyfit(np.log(svals), np.log(errs), 1)[0]
    assert slope == pytest.approx((m + 1) / 2.0, abs=0.15)


def test_enhanced_balancing_two_sphere():
    fam = two_sphere_family("third")
    pair = enhanced_balanced_pair(fam, fam.k_grid[1], {0}, m=2)
    assert pair.residual < 1e-10
    # outer side carries parts up to order 2m+1 with opposite residue
    e = 1
    assert len(pair.sigma_outer[e]) == 4
