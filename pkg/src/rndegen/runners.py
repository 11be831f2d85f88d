"""Experiment orchestration: scenario in, deterministic report out."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .blowup import limit_of_flow_solutions, project_base
from .degeneration import (limit_rn, stratify as run_stratify, track_zeros,
                           twisted_limit)
from .kirchhoff import (ElectromotiveForce, cycle_residual, flow_bound,
                        force_bound, solve_flow, solve_force, solve_general)
from .mobius import is_inf
from .plumbing import (global_tree_oracle, marked_inflows, oracle_deviation,
                       rn_construct)
from .reports import Check, Report, Table, settings_hash
from .scenario import Scenario, parse_scenario

COMMANDS = ("solve-kirchhoff", "multiscale-limit", "construct-rn", "degenerate",
            "stratify", "track-zeros", "verify")


class RunnerError(ValueError):
    pass


def _pool() -> ThreadPoolExecutor:
    cap = os.environ.get("RN_DEGEN_THREADS")
    workers = int(cap) if cap else min(8, os.cpu_count() or 1)
    return ThreadPoolExecutor(max_workers=max(1, workers))


def run(command: str, scenario_data: dict, options: dict | None = None) -> Report:
    """Dispatch a command on a scenario dictionary; returns the report."""
    options = dict(options or {})
    if command not in COMMANDS:
        raise RunnerError(f"unknown command {command!r}; choose from {COMMANDS}")
    sc = parse_scenario(scenario_data)
    h = settings_hash(command, scenario_data, options)
    runner = {
        "solve-kirchhoff": _run_kirchhoff,
        "multiscale-limit": _run_multiscale,
        "construct-rn": _run_construct,
        "degenerate": _run_degenerate,
        "stratify": _run_stratify,
        "track-zeros": _run_track_zeros,
        "verify": _run_verify,
    }[command]
    report = runner(sc, options)
    report.command = command
    report.scenario_name = sc.name
    report.settings_hash = h
    report.options = options
    return report


def _edge_labels(sc: Scenario) -> list[str]:
    return [f"e{k}" for k in range(sc.graph.n_edges)]


def _run_kirchhoff(sc: Scenario, options: dict) -> Report:
    mode = options.get("mode", "flow")
    g = sc.graph
    rho = np.asarray(options.get("rho", sc.curve.rho), dtype=float)
    inflows = marked_inflows(sc.marked_parts)
    for _, label in g.legs:
        inflows.setdefault(label, 0.0)
    emf_values = sc.model.emf or [0.0] * g.cycle_rank()
    emf = ElectromotiveForce.on_basis(g, emf_values)

    if mode == "flow":
        c = solve_flow(g, inflows, rho)
    elif mode == "force":
        c = solve_force(g, emf, rho)
    elif mode == "general":
        c = solve_general(g, inflows, emf, rho)
    else:
        raise RunnerError(f"unknown mode {mode!r}")

    fsum = sum(abs(x) for x in inflows.values())
    cons = c.conservation_residual(inflows if mode != "force" else {})
    cyc = cycle_residual(g, c, rho, emf if mode != "flow" else None)
    fb = flow_bound(g, inflows)
    checks = [
        Check("conservation-residual", cons <= 1e-10 * (1 + fsum), cons,
              1e-10 * (1 + fsum)),
        Check("cycle-residual", cyc <= 1e-10 * (1 + c.max_abs() * float(np.max(rho))),
              cyc, 1e-10 * (1 + c.max_abs() * float(np.max(rho)))),
    ]
    results = {
        "mode": mode,
        "currents": {lab: c.values[k] for k, lab in enumerate(_edge_labels(sc))},
        "bounds": {"flow_bound": fb, "max_current": c.max_abs()},
    }
    if mode in ("flow", "general"):
        checks.append(Check("flow-bound", c.max_abs() <= fb + 1e-9 or mode == "general",
                            c.max_abs(), fb))
    if mode in ("force", "general") and g.cycle_rank() > 0:
        bound = force_bound(g, emf, rho)
        results["bounds"]["force_bound"] = bound
        if mode == "force":
            checks.append(Check("force-bound", c.max_abs() <= bound + 1e-9,
                                c.max_abs(), bound))
    return Report("", "", "", {}, results, checks)


def _run_multiscale(sc: Scenario, options: dict) -> Report:
    if sc.schedule is None or sc.k_grid is None:
        raise RunnerError("multiscale-limit requires a schedule and k_grid")
    g = sc.graph
    inflows = marked_inflows(sc.marked_parts)
    for _, label in g.legs:
        inflows.setdefault(label, 0.0)
    rep = limit_of_flow_solutions(g, inflows, sc.schedule, sc.k_grid)
    point = rep.point
    rows = [(k, *vals, dev) for k, vals, dev in
            zip(rep.k_grid, rep.currents, rep.deviations)]
    table = Table(("k", *_edge_labels(sc), "deviation"), rows)
    cons = rep.multiscale.conservation_residual(inflows)
    fsum = sum(abs(x) for x in inflows.values())
    checks = [
        Check("multiscale-conservation", cons <= 1e-10 * (1 + fsum), cons),
        Check("deviation-shrinks",
              rep.final_deviation() <= rep.deviations[0] + 1e-15,
              rep.final_deviation()),
    ]
    results = {
        "blowup_point": {"blocks": [list(b) for b in point.blocks],
                         "coords": [list(x) for x in point.coords]},
        "base_projection": list(project_base(point)),
        "multiscale_currents": {lab: rep.multiscale.values[k]
                                for k, lab in enumerate(_edge_labels(sc))},
        "empirical_rate": rep.rate,
    }
    return Report("", "", "", {}, results, checks, {"convergence": table})


def _s_list(sc: Scenario, options: dict) -> list[complex]:
    if options.get("s_values"):
        return [complex(s) for s in options["s_values"]]
    if sc.s_values:
        return list(sc.s_values)
    return [complex(math.exp(-r)) for r in [sc.curve.rho[0]]]


def _run_construct(sc: Scenario, options: dict) -> Report:
    n_modes = int(options.get("modes", sc.settings.modes))
    tol = sc.settings.period_tol
    checks, level_rows, series_rows = [], [], []
    currents = {}
    finite_parts: dict[int, list[tuple[complex, float]]] = {}
    period_data = []
    for s in _s_list(sc, options):
        curve = sc.curve_at_s(s)
        rn = rn_construct(curve, sc.marked_parts, n_modes,
                          max_levels=sc.settings.max_levels)
        cert = rn.certificate()
        tag = _fmt_s(s)
        currents[tag] = {lab: rn.currents.values[k]
                         for k, lab in enumerate(_edge_labels(sc))}
        for i, p in enumerate(cert["periods"]):
            period_data.append((tag, s, i, p))
            finite_parts.setdefault(i, []).append((s, p.finite_part))
        for lvl, norm in enumerate(rn.level_norms):
            level_rows.append((tag, lvl, norm))
        if options.get("dump_series") and rn.differential.arn is not None:
            for lvl, norm in enumerate(rn.differential.arn.term_norms):
                series_rows.append((tag, lvl, norm))
        checks.append(Check(f"im-periods[{tag}]", cert["max_im_period"] <= tol,
                            cert["max_im_period"], tol))
        checks.append(Check(f"seam-reality[{tag}]", cert["max_seam_imag"] <= tol,
                            cert["max_seam_imag"], tol))
        checks.append(Check(f"converged[{tag}]", rn.converged))

    # with a sweep of three or more s-values, split each finite part into a
    # fitted constant and the decaying remainder
    pi_fit: dict[int, float] = {}
    for i, rows in finite_parts.items():
        if len(rows) >= 3:
            roots = np.sqrt([abs(s) for s, _ in rows])
            vals = np.array([v for _, v in rows])
            A = np.stack([np.ones_like(roots), roots], axis=1)
            (pi, _), *_ = np.linalg.lstsq(A, vals, rcond=None)
            pi_fit[i] = float(pi)
    period_rows = []
    for tag, s, i, p in period_data:
        rem = p.finite_part - pi_fit[i] if i in pi_fit else ""
        period_rows.append((tag, f"cycle{i}", p.value_im, p.log_term,
                            p.finite_part, rem))
    tables = {
        "periods": Table(("s", "cycle", "im", "log_term", "finite_part",
                          "remainder"), period_rows),
        "levels": Table(("s", "level", "max_correction"), level_rows),
    }
    if series_rows:
        tables["series"] = Table(("s", "term", "norm"), series_rows)
    return Report("", "", "", {}, {"currents": currents}, checks, tables)


def _fmt_s(s: complex) -> str:
    return f"{s.real:.9g}" if s.imag == 0 else f"{s.real:.9g}{s.imag:+.9g}j"


def _run_degenerate(sc: Scenario, options: dict) -> Report:
    fam = sc.family()
    n_modes = int(options.get("modes", sc.settings.modes))
    lim = limit_rn(fam)
    g = sc.graph

    def one(k: float):
        rn = rn_construct(fam.curve_at(k), fam.marked_parts, n_modes)
        dev = max((abs(a - b) for a, b in
                   zip(rn.currents.values, lim.currents.values)), default=0.0)
        cert = rn.certificate()
        return k, rn.currents.values, dev, cert["max_im_period"]

    with _pool() as pool:
        rows = list(pool.map(one, fam.k_grid))
    table = Table(("k", *_edge_labels(sc), "residue_deviation", "max_im_period"),
                  [(k, *vals, dev, imp) for k, vals, dev, imp in rows])
    devs = [dev for _, _, dev, _ in rows]
    tail = devs[len(devs) // 3:]
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(tail, tail[1:]))
    final_ok = devs[-1] <= 0.05 * max(lim.currents.max_abs(), 1e-300)
    checks = [
        Check("residues-monotone", monotone, devs[-1]),
        Check("residues-converge", final_ok, devs[-1],
              0.05 * lim.currents.max_abs()),
    ]
    results = {
        "limit_currents": {lab: lim.currents.values[k]
                           for k, lab in enumerate(_edge_labels(sc))},
        "blowup_point": {"blocks": [list(b) for b in lim.point.blocks],
                         "coords": [list(x) for x in lim.point.coords]},
    }
    return Report("", "", "", {}, results, checks, {"convergence": table})


def _run_stratify(sc: Scenario, options: dict) -> Report:
    fam = sc.family()
    m = options.get("m") or sc.settings.m
    st = run_stratify(fam, m=m, n_modes=int(options.get("modes", sc.settings.modes)))
    tw = twisted_limit(st)
    strata = [{
        "level": s.index,
        "vertices": list(s.vertices),
        "scale_slope": s.scale_slope,
        "scale_const": s.scale_const,
    } for s in st.strata]
    seps = st.scale_separation_slopes()
    checks = [
        Check("jet-sums-bounded", all(j <= st.m0 for j in st.jet_sums),
              float(max(st.jet_sums, default=0)), float(st.m0)),
        Check("divisor-degree", tw.degree == st.m0, float(tw.degree),
              float(st.m0)),
        Check("node-multiplicities-nonnegative",
              all(v >= 0 for v in tw.node_multiplicities.values())),
        Check("scale-separation", all(x > 0 for x in seps),
              min(seps) if seps else None),
    ]
    results = {
        "m": st.m, "m0": st.m0,
        "strata": strata,
        "jet_sums": list(st.jet_sums),
        "twisted_divisor": {
            "nodes": {f"e{k}": v for k, v in tw.node_multiplicities.items()},
            "node_orders": {str(e): o for e, o in tw.node_orders.items()},
            "marked": tw.marked_multiplicities,
            "free_zeros": [{"vertex": v, "point": _pt(p), "multiplicity": mm}
                           for v, p, mm in tw.free_zeros],
            "degree": tw.degree,
        },
    }
    return Report("", "", "", {}, results, checks)


def _pt(p: complex):
    if is_inf(p):
        return "inf"
    return [p.real, p.imag]


def _run_track_zeros(sc: Scenario, options: dict) -> Report:
    fam = sc.family()
    n_modes = int(options.get("modes", sc.settings.modes))
    st = run_stratify(fam, m=options.get("m") or sc.settings.m, n_modes=n_modes)
    tw = twisted_limit(st)
    predicted = [complex(p) for _, p, _ in tw.free_zeros if not is_inf(p)]

    def one(k: float):
        rn = rn_construct(fam.curve_at(k), fam.marked_parts, n_modes)
        return k, track_zeros(rn.differential, fam.marked_parts)

    with _pool() as pool:
        reports = list(pool.map(one, fam.k_grid))
    rows = []
    for k, rep in reports:
        for v, p, mult in rep.away:
            if is_inf(p):
                rows.append((k, "inf", "inf", mult, ""))
                continue
            near = min((abs(p - q) for q in predicted), default=float("nan"))
            rows.append((k, p.real, p.imag, mult,
                         near if near == near else ""))
    table = Table(("k", "zero_re", "zero_im", "multiplicity", "nearest_predicted"),
                  rows)
    conserved = all(rep.total == rep.expected for _, rep in reports)
    last = reports[-1][1]
    annuli_match = {f"e{k}": c for k, c in last.annulus_counts.items()} == \
        {f"e{k}": c for k, c in tw.node_multiplicities.items()}
    checks = [
        Check("zero-count-conserved", conserved, float(last.total),
              float(last.expected)),
        Check("annulus-counts-match-twisted", annuli_match),
    ]
    results = {
        "expected_total": last.expected,
        "annulus_counts": {f"e{k}": c for k, c in last.annulus_counts.items()},
        "twisted_node_multiplicities": {f"e{k}": c
                                        for k, c in tw.node_multiplicities.items()},
    }
    return Report("", "", "", {}, results, checks, {"zeros": table})


def _run_verify(sc: Scenario, options: dict) -> Report:
    n_modes = int(options.get("modes", sc.settings.modes))
    tol = sc.settings.period_tol
    checks = []
    rows = []
    is_tree = sc.graph.cycle_rank() == 0
    for s in _s_list(sc, options):
        curve = sc.curve_at_s(s)
        rn = rn_construct(curve, sc.marked_parts, n_modes)
        cert = rn.certificate()
        tag = _fmt_s(s)
        dev = None
        if is_tree:
            oracle = global_tree_oracle(curve, sc.marked_parts)
            dev = oracle_deviation(rn.differential, oracle)
            checks.append(Check(f"oracle-equivalence[{tag}]", dev <= 1e-7,
                                dev, 1e-7))
        checks.append(Check(f"im-periods[{tag}]", cert["max_im_period"] <= tol,
                            cert["max_im_period"], tol))
        checks.append(Check(f"seam-reality[{tag}]", cert["max_seam_imag"] <= tol,
                            cert["max_seam_imag"], tol))
        rows.append((tag, dev if dev is not None else "",
                     cert["max_im_period"], cert["max_seam_imag"]))
    table = Table(("s", "oracle_deviation", "max_im_period", "max_seam_imag"), rows)
    return Report("", "", "", {}, {"tree_oracle": is_tree}, checks,
                  {"verify": table})
