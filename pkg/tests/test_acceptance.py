"""Acceptance suite: one test per criterion, printing a PASS/FAIL line each.

Criterion 5's slope assertion is implemented exactly as stated and fails:
the measured period remainder decays a full order faster than the a priori
bound the criterion assumes to be sharp (see the decisions ledger).
"""

import numpy as np

from rndegen.blowup import ResistanceSchedule, classify_sequence, solve_multiscale
from rndegen.components import PlumbedCurve, RationalDifferential, make_component
from rndegen.degeneration import (balanced_approximation, approximation_error_l2,
                                  limit_rn, stratify, track_zeros, twisted_limit)
from rndegen.graphs import build_graph, cycle_basis
from rndegen.jump import arn_l2_norm, jump_data_from_forms, solve_arn
from rndegen.kirchhoff import (ElectromotiveForce, cycle_residual, flow_bound,
                               force_bound, solve_flow, solve_force)
from rndegen.plumbing import (PathRealization, build_psi_c, global_tree_oracle,
                              oracle_deviation, period_im, rn_construct)
from rndegen.scenario import load_fixture

TREE_FIXTURES = ("dumbbell-tree", "two-sphere-second-kind", "chain-3-strata")
ALL_FIXTURES = TREE_FIXTURES + ("banana-genus1", "triangle-of-spheres")


def report(num, passed, detail):
    print(f"\nACCEPTANCE {num}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"acceptance criterion {num}: {detail}"


def random_connected(rng):
    while True:
        n = int(rng.integers(2, 11))
        edges = [(i, i + 1) for i in range(n - 1)]
        extra = int(rng.integers(0, 6))
        for _ in range(extra):
            edges.append((int(rng.integers(n)), int(rng.integers(n))))
        if len(edges) <= 14:
            legs = [(v, f"l{v}") for v in range(n)]
            return build_graph(n, edges, legs)


def test_criterion_1_kirchhoff_bounds():
    rng = np.random.default_rng(20260810)
    violations = 0
    worst_res = 0.0
    for _ in range(200):
        g = random_connected(rng)
        rho = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), g.n_edges))
        f = rng.standard_normal(len(g.legs))
        f -= f.mean()
        fm = {lab: float(x) for (_, lab), x in zip(g.legs, f)}
        c = solve_flow(g, fm, rho)
        if c.max_abs() > flow_bound(g, fm) + 1e-9:
            violations += 1
        worst_res = max(worst_res,
                        c.conservation_residual(fm) / (1 + sum(abs(x) for x in f)),
                        cycle_residual(g, c, rho) /
                        (1 + float(np.abs(c.values) @ rho)))
        basis = cycle_basis(g)
        if basis:
            emf = ElectromotiveForce(tuple(basis),
                                     tuple(map(float, rng.standard_normal(len(basis)))))
            cf = solve_force(g, emf, rho)
            if cf.max_abs() > force_bound(g, emf, rho) + 1e-9:
                violations += 1
    report(1, violations == 0 and worst_res <= 1e-10,
           f"200 random graphs: {violations} bound violations, "
           f"worst residual {worst_res:.2e}")


def test_criterion_2_multiscale_convergence():
    rng = np.random.default_rng(7)
    count, worst = 0, 0.0
    while count < 20:
        g = random_connected(rng)
        if g.cycle_rank() > 3:
            continue
        count += 1
        alpha = rng.integers(0, 3, g.n_edges).astype(float)
        beta = rng.uniform(0.5, 2.0, g.n_edges)
        sched = ResistanceSchedule.parametric(beta, alpha)
        f = rng.standard_normal(len(g.legs))
        f -= f.mean()
        fm = {lab: float(x) for (_, lab), x in zip(g.legs, f)}
        ms = solve_multiscale(g, fm, classify_sequence(sched))
        ck = solve_flow(g, fm, sched(1e6))
        dev = max((abs(a - b) for a, b in zip(ck.values, ms.values)), default=0.0)
        rel = dev / (ms.max_abs() + 1e-12)
        assert rel <= 10.0 * np.log(1e6) / 1e6     # the O(log k / k) envelope
        worst = max(worst, rel)
    # banana closed form: rho = (1, k) gives c1 = 1/(k+1)
    g = build_graph(2, [(0, 1), (0, 1)], [(0, "p1"), (1, "p2")])
    banana_ok = True
    for k in (10.0, 1e3, 1e6):
        c = solve_flow(g, {"p1": 1.0, "p2": -1.0}, [1.0, k])
        banana_ok &= abs(c.values[1] - 1.0 / (k + 1.0)) <= 1e-12
    report(2, worst <= 1e-3 and banana_ok,
           f"20 schedules: worst relative deviation {worst:.2e} at k=1e6; "
           f"banana closed form to 1e-12: {banana_ok}")


def test_criterion_3_tree_oracle():
    worst = 0.0
    for name in TREE_FIXTURES:
        sc = load_fixture(name)
        for s in (1e-3, 1e-4, 1e-5):
            curve = sc.curve_at_s(s)
            rn = rn_construct(curve, sc.marked_parts)
            oracle = global_tree_oracle(curve, sc.marked_parts)
            worst = max(worst, oracle_deviation(rn.differential, oracle, count=100))
    report(3, worst <= 1e-7,
           f"tree fixtures at |s| in 1e-3..1e-5: max pointwise relative "
           f"deviation {worst:.2e}")


def monomial_in_chart(chart, power):
    """z^power dz as a global rational differential, for power >= 0."""
    W = chart.inverse()
    d = 1.0 / chart.a
    q = chart.anchor
    from rndegen import ratfun as rf
    poly = rf.polypow([-q / d, 1.0 / d], power) / d
    return RationalDifferential((), tuple(poly))


def test_criterion_4_arn_bound_slopes():
    g = build_graph(2, [(0, 1)], [(0, "p1"), (1, "p2")])
    c0 = make_component(0, {"p1": 3.0}, {1: 0.0}, chart_scales={1: 1.0})
    c1 = make_component(1, {"p2": 3.0}, {0: 0.0}, chart_scales={0: 1.0})
    svals = [1e-2, 1e-3, 1e-4]
    slopes = {}
    for m in (0, 1, 2):
        norms = []
        for s in svals:
            curve = PlumbedCurve.assemble(g, [c0, c1], s_values=[s])
            forms = {0: monomial_in_chart(curve.node_chart(0), m),
                     1: RationalDifferential(())}
            phi = jump_data_from_forms(curve, forms, 32)
            sol = solve_arn(curve, phi)
            norms.append(max(arn_l2_norm(sol, 0), arn_l2_norm(sol, 1)))
        slopes[m] = float(np.polyfit(np.log(np.sqrt(svals)), np.log(norms), 1)[0])
    ok = all(abs(slopes[m] - (m + 1)) <= 0.1 for m in slopes)
    report(4, ok, "L2-norm slopes vs sqrt|s| per vanishing order: "
           + ", ".join(f"ord {m}: {v:.3f} (want {m + 1})" for m, v in slopes.items()))


def banana_curve_at(rho):
    sc = load_fixture("banana-genus1")
    return sc, sc.curve.with_plumbing([rho, rho])


def test_criterion_5a_period_remainder_slope():
    sc = load_fixture("banana-genus1")
    rhos = np.array([9.0, 11.0, 13.0, 15.0, 17.0])
    values = []
    for rho in rhos:
        curve = sc.curve.with_plumbing([rho, rho])
        c = solve_flow(curve.graph, {"p1": 1.0, "p2": -1.0}, curve.rho)
        psi = build_psi_c(curve, c, sc.marked_parts)
        cyc = cycle_basis(curve.graph)[0]
        rep = period_im(psi, cyc)
        values.append(rep.value_im - rep.log_term)
    values = np.array(values)
    roots = np.exp(-rhos / 2.0)
    # subtract the fitted constant, then fit the decay rate of the remainder
    diffs = np.abs(np.diff(values))
    mask = diffs > 0
    slope = float(np.polyfit(np.log(roots[:-1][mask]), np.log(diffs[mask]), 1)[0]) \
        if mask.sum() >= 2 else float("inf")
    passed = abs(slope - 1.0) <= 0.1
    print(f"\nACCEPTANCE 5a: {'PASS' if passed else 'FAIL'} - period remainder "
          f"slope vs sqrt|s| measured {slope:.3f}, criterion wants 1.0 +- 0.1 "
          f"(construction beats the a priori bound; see decisions ledger)")
    assert passed, (
        f"criterion 5a: measured remainder slope {slope:.3f} vs sqrt|s|; the "
        "criterion's expected slope 1.0 assumes the upper bound of the period "
        "estimate is sharp, but the remainder honestly decays like |s| "
        "(slope 2). Recorded as a spec defect in the decisions ledger.")


def test_criterion_5b_homologous_realizations():
    sc = load_fixture("banana-genus1")
    rhos = np.array([9.0, 11.0, 13.0, 15.0])
    pis = []
    for opts in (PathRealization(), PathRealization(arc_ccw=False),
                 PathRealization(detour=2.2, side=-1.0)):
        vals = []
        for rho in rhos:
            curve = sc.curve.with_plumbing([rho, rho])
            c = solve_flow(curve.graph, {"p1": 1.0, "p2": -1.0}, curve.rho)
            psi = build_psi_c(curve, c, sc.marked_parts)
            cyc = cycle_basis(curve.graph)[0]
            rep = period_im(psi, cyc, opts)
            vals.append(rep.value_im - rep.log_term)
        roots = np.exp(-rhos / 2.0)
        A = np.stack([np.ones_like(roots), roots], axis=1)
        (Pi, _), *_ = np.linalg.lstsq(A, np.array(vals), rcond=None)
        pis.append(Pi)
    spread = max(pis) - min(pis)
    report("5b", spread <= 1e-6,
           f"fitted Pi across 3 homologous realizations spreads {spread:.2e}")


def test_criterion_6_limit_residues():
    sc = load_fixture("banana-genus1")
    fam = sc.family()
    lim = limit_rn(fam)
    devs = []
    for k in fam.k_grid:
        rn = rn_construct(fam.curve_at(k), fam.marked_parts)
        devs.append(max(abs(a - b) for a, b in
                        zip(rn.currents.values, lim.currents.values)))
    tail = [d for k, d in zip(fam.k_grid, devs) if k >= fam.k_grid[-1] / 100.0]
    monotone = all(b <= a * (1 + 1e-12) for a, b in zip(tail, tail[1:]))
    final_ok = devs[-1] <= 5e-3
    report(6, monotone and final_ok,
           f"residues at k_max=1e4 deviate {devs[-1]:.2e} from the multi-scale "
           f"currents (want <= 5e-3); monotone over last two decades: {monotone}")


def test_criterion_7_rn_certificate():
    worst_period, worst_seam = 0.0, 0.0
    for name in ALL_FIXTURES:
        sc = load_fixture(name)
        for s in (sc.s_values or [1e-4 + 0j])[:2]:
            rn = rn_construct(sc.curve_at_s(s), sc.marked_parts)
            cert = rn.certificate()
            worst_period = max(worst_period, cert["max_im_period"])
            worst_seam = max(worst_seam, cert["max_seam_imag"])
    report(7, worst_period <= 1e-8 and worst_seam <= 1e-8,
           f"all fixtures: max |Im period| {worst_period:.2e}, "
           f"max |Im seam integral| {worst_seam:.2e}")


def test_criterion_8_zero_conservation():
    ok = True
    notes = []
    for name in ALL_FIXTURES:
        sc = load_fixture(name)
        fam = sc.family()
        st = stratify(fam)
        tw = twisted_limit(st)
        totals = []
        last = None
        for k in fam.k_grid:
            rn = rn_construct(fam.curve_at(k), fam.marked_parts)
            rep = track_zeros(rn.differential, fam.marked_parts)
            totals.append(rep.total == rep.expected)
            last = rep
        counts_match = last.annulus_counts == tw.node_multiplicities
        degree_ok = tw.degree == st.m0
        ok &= all(totals) and counts_match and degree_ok
        notes.append(f"{name}: conserved={all(totals)} "
                     f"annuli-match={counts_match} degree={tw.degree}=={st.m0}")
    report(8, ok, "; ".join(notes))


def test_criterion_9_stratification_sanity():
    ok = True
    notes = []
    for name in ("two-sphere-second-kind", "chain-3-strata", "banana-genus1"):
        sc = load_fixture(name)
        fam = sc.family()
        st = stratify(fam)
        twisted_limit(st)       # raises on any pole-bound violation
        jet_ok = all(j <= st.m0 for j in st.jet_sums)
        seps = st.scale_separation_slopes()
        sep_ok = all(x > 0 for x in seps)
        ok &= jet_ok and sep_ok
        notes.append(f"{name}: {len(st.strata)} strata, jet sums {list(st.jet_sums)}"
                     f" <= m0={st.m0}, separations {[f'{x:.2f}' for x in seps]}")
    # the two-sphere rescaled limit must be -dw/w^2 coefficientwise
    sc = load_fixture("two-sphere-second-kind")
    st = stratify(sc.family())
    sig = st.strata[1].pieces[1].laurent(sc.curve.node_chart(0), -3, -1)
    coeff_ok = abs(sig[1] + 1.0) <= 1e-6 and abs(sig[0]) <= 1e-6 \
        and abs(sig[2]) <= 1e-6
    ok &= coeff_ok
    notes.append(f"two-sphere rescaled limit u_-2 = {sig[1].real:+.8f} (want -1)")
    report(9, ok, "; ".join(notes))


def test_criterion_10_balanced_approximation():
    sc = load_fixture("dumbbell-tree")
    slopes = {}
    residual_worst = 0.0
    # shallow enough that the m=6 errors stay well above the solver floor
    svals = [10.0 ** -1.8, 10.0 ** -2.4, 10.0 ** -3.0]
    for m in (2, 4, 6):
        errs = []
        for s in svals:
            curve = sc.curve_at_s(s)
            ap = balanced_approximation(curve, sc.marked_parts, m=m)
            residual_worst = max(residual_worst, ap.balancing_residual())
            errs.append(approximation_error_l2(curve, sc.marked_parts, ap))
        slopes[m] = float(np.polyfit(np.log(svals), np.log(errs), 1)[0])
    slope_ok = all(abs(slopes[m] - (m + 1) / 2.0) <= 0.15 for m in slopes)

    curve = sc.curve_at_s(1e-3)
    a = balanced_approximation(curve, sc.marked_parts, m=4, method="series")
    b = balanced_approximation(curve, sc.marked_parts, m=4, method="direct")
    agree = 0.0
    for v in a.pieces:
        pa = {p.chart.key(): p for p in a.pieces[v].parts}
        pb = {p.chart.key(): p for p in b.pieces[v].parts}
        for key in pa:
            ca, cb = np.array(pa[key].coeffs), np.array(pb[key].coeffs)
            size = max(len(ca), len(cb))
            ca = np.pad(ca, (0, size - len(ca)))
            cb = np.pad(cb, (0, size - len(cb)))
            agree = max(agree, float(np.max(np.abs(ca - cb))))
    ok = slope_ok and residual_worst <= 1e-10 and agree <= 1e-9
    report(10, ok,
           "error slopes " + ", ".join(f"m={m}: {v:.3f} (want {(m + 1) / 2})"
                                       for m, v in slopes.items())
           + f"; balancing residual {residual_worst:.2e}; "
             f"series-vs-direct {agree:.2e}")
