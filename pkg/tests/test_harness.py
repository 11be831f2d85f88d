import json

import pytest

from rndegen.reports import Check, Report, Table, canonical_json, emit_report
from rndegen.runners import run
from rndegen.scenario import ScenarioError, fixture_path, load_fixture, parse_scenario


def fixture_dict(name):
    return json.loads(fixture_path(name).read_text())


# -- scenario validation -------------------------------------------------------

def test_fixtures_all_parse():
    for name in ("dumbbell-tree", "two-sphere-second-kind", "banana-genus1",
                 "triangle-of-spheres", "chain-3-strata"):
        sc = load_fixture(name)
        assert sc.graph.is_connected()


def test_marked_point_inside_chart_rejected():
    data = fixture_dict("dumbbell-tree")
    data["components"][0]["marked"]["p1"] = [0.1, 0.0]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert "p1" in str(err.value) and "node" in str(err.value)


def test_real_residue_rejected():
    data = fixture_dict("dumbbell-tree")
    data["singular_parts"]["p1"] = [[1.0, 0.0]]     # real residue
    data["singular_parts"]["p2"] = [[-1.0, 0.0]]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert "purely imaginary" in str(err.value)


def test_residue_sum_rejected():
    data = fixture_dict("dumbbell-tree")
    data["singular_parts"]["p2"] = [[0.0, 1.0]]     # both +i
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert "sum" in str(err.value)


def test_unsupported_schema_version():
    data = fixture_dict("dumbbell-tree")
    data["schema"] = 99
    with pytest.raises(ScenarioError):
        parse_scenario(data)


def test_errors_are_collected():
    data = fixture_dict("dumbbell-tree")
    data["singular_parts"]["p1"] = [[1.0, 0.0]]
    data["singular_parts"]["p2"] = [[0.0, 1.0]]
    data["components"][1]["marked"]["p2"] = [0.1, 0.0]
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert len(err.value.errors) >= 2


# -- reports ----------------------------------------------------------------------

def test_canonical_json_is_deterministic(tmp_path):
    rep = Report("cmd", "scn", "hash", {"a": 1}, {"x": 1.0 / 3.0},
                 [Check("c1", True, 0.5, 1.0)],
                 {"t": Table(("a", "b"), [(1.0, 2.5)])})
    s1 = canonical_json(rep.as_dict())
    s2 = canonical_json(rep.as_dict())
    assert s1 == s2
    assert "0.33333333333333331" in s1


def test_report_round_trip(tmp_path):
    rep = Report("cmd", "scn", "hh", {}, {"value": 0.1 + 0.2},
                 [Check("c", True, None, None)],
                 {"t": Table(("x",), [(3.25,)])})
    paths = emit_report(rep, tmp_path, ("json", "csv"))
    data = json.loads(paths[0].read_text())
    assert data["results"]["value"] == 0.1 + 0.2
    csv = paths[1].read_text()
    assert csv.splitlines()[0] == "x"
    assert csv.splitlines()[1] == "3.25"


def test_settings_hash_changes_with_modes():
    sc = fixture_dict("dumbbell-tree")
    r1 = run("verify", sc, {"modes": 32})
    r2 = run("verify", sc, {"modes": 48})
    assert r1.settings_hash != r2.settings_hash


def test_reports_byte_identical(tmp_path):
    sc = fixture_dict("dumbbell-tree")
    a = run("solve-kirchhoff", sc, {"mode": "flow"})
    b = run("solve-kirchhoff", sc, {"mode": "flow"})
    assert canonical_json(a.as_dict()) == canonical_json(b.as_dict())


# -- runners ----------------------------------------------------------------------

def test_run_kirchhoff_triangle_currents():
    data = {
        "schema": 1, "name": "triangle",
        "graph": {"vertices": 3, "edges": [[0, 1], [0, 2], [2, 1]],
                  "legs": [{"vertex": 0, "label": "p1"},
                           {"vertex": 1, "label": "p2"},
                           {"vertex": 2, "label": "p3"}]},
        "components": [
            {"vertex": 0, "marked": {"p1": [0.0, 3.5]},
             "nodes": {"1": [-1.0, 0.0], "3": [1.0, 0.0]}},
            {"vertex": 1, "marked": {"p2": [0.0, 3.5]},
             "nodes": {"0": [-1.0, 0.0], "4": [1.0, 0.0]}},
            {"vertex": 2, "marked": {"p3": [0.0, 3.5]},
             "nodes": {"2": [-1.0, 0.0], "5": [1.0, 0.0]}}],
        "singular_parts": {"p1": [[0.0, 1.0]], "p2": [[0.0, -1.0]]},
        "s_values": [[0.36787944117144233, 0.0]],     # rho = 1 on every edge
    }
    rep = run("solve-kirchhoff", data, {"mode": "flow", "rho": [1.0, 1.0, 1.0]})
    assert rep.passed
    cur = rep.results["currents"]
    assert cur["e0"] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert cur["e1"] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert cur["e2"] == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_run_unknown_command():
    from rndegen.runners import RunnerError
    with pytest.raises(RunnerError):
        run("frobnicate", fixture_dict("dumbbell-tree"), {})


def test_run_construct_rn_banana():
    rep = run("construct-rn", fixture_dict("banana-genus1"),
              {"s_values": [1e-4], "modes": 32, "dump_series": True})
    assert rep.passed
    assert "series" in rep.tables
    assert "periods" in rep.tables


def test_run_multiscale_triangle():
    rep = run("multiscale-limit", fixture_dict("triangle-of-spheres"), {})
    assert rep.passed
    assert len(rep.tables["convergence"].rows) == 6


def test_run_stratify_chain():
    rep = run("stratify", fixture_dict("chain-3-strata"), {"modes": 32})
    assert rep.passed
    assert [s["vertices"] for s in rep.results["strata"]] == [[0], [1], [2]]
    assert rep.results["twisted_divisor"]["degree"] == rep.results["m0"]


def test_bundled_triangle_hand_solved_currents():
    rep = run("solve-kirchhoff", fixture_dict("triangle-of-spheres"),
              {"mode": "flow"})
    cur = rep.results["currents"]
    assert abs(cur["e0"] - 2.0 / 3.0) < 1e-12
    assert abs(abs(cur["e1"]) - 1.0 / 3.0) < 1e-12
    assert abs(abs(cur["e2"]) - 1.0 / 3.0) < 1e-12


def test_construct_rn_sweep_fills_remainders():
    rep = run("construct-rn", fixture_dict("banana-genus1"),
              {"s_values": [1e-3, 1e-4, 1e-5], "modes": 32})
    rows = rep.tables["periods"].rows
    rems = [r[-1] for r in rows]
    assert all(isinstance(x, float) for x in rems)
    # remainders shrink along the sweep
    assert abs(rems[-1]) <= abs(rems[0]) + 1e-12


def test_run_kirchhoff_force_mode_with_emf():
    data = fixture_dict("banana-genus1")
    data["emf"] = [1.0]
    rep = run("solve-kirchhoff", data, {"mode": "force", "rho": [1.0, 3.0]})
    assert rep.passed
    cur = rep.results["currents"]
    assert abs(abs(cur["e0"]) - 0.25) < 1e-12     # circulation 1/(rho1+rho2)
    assert "force_bound" in rep.results["bounds"]
