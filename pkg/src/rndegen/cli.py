"""Thin command-line client for the rn-degen service.

By default the CLI talks to the FastAPI app in-process (no server needed);
``--server URL`` targets a running instance instead.  Exit codes: 0 when all
declared checks pass, 1 on failed checks or invalid scenarios, 2 on usage
errors.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx

from .reports import Check, Report, Table, emit_report


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # in-process client over the ASGI app: no server or network required
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient

    from .service import app
    return TestClient(app, raise_server_exceptions=False)


def _post(server: str | None, command: str, scenario_path: str,
          options: dict, out: str | None, formats: tuple[str, ...],
          timings: bool) -> int:
    try:
        scenario = json.loads(Path(scenario_path).read_text())
    except FileNotFoundError:
        click.echo(f"error: no such scenario file: {scenario_path}", err=True)
        return 1
    except json.JSONDecodeError as exc:
        click.echo(f"error: scenario is not valid JSON: {exc}", err=True)
        return 1

    t0 = time.perf_counter()
    with _client(server) as client:
        resp = client.post(f"/{command}",
                           json={"scenario": scenario, "options": options})
    elapsed = time.perf_counter() - t0
    if resp.status_code == 422:
        click.echo("scenario validation failed:", err=True)
        detail = resp.json().get("detail", {})
        for msg in detail.get("errors", [detail]):
            click.echo(f"  - {msg}", err=True)
        return 1
    if resp.status_code != 200:
        click.echo(f"error: {resp.json().get('detail', resp.text)}", err=True)
        return 1

    payload = resp.json()
    report = Report(
        command=payload["command"],
        scenario_name=payload["scenario"],
        settings_hash=payload["settings_hash"],
        options=payload["options"],
        results=payload["results"],
        checks=[Check(**c) for c in payload["checks"]],
        tables={name: Table(tuple(t["columns"]), [tuple(r) for r in t["rows"]])
                for name, t in payload["tables"].items()},
        timings={"seconds": elapsed} if timings else None,
    )
    emit_report(report, out, formats)
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        extra = ""
        if check.value is not None:
            extra = f"  value={check.value:.6g}"
            if check.threshold is not None:
                extra += f"  threshold={check.threshold:.6g}"
        click.echo(f"[{status}] {check.name}{extra}")
    click.echo(f"settings hash: {report.settings_hash}")
    if out:
        click.echo(f"report written to {out}")
    return 0 if report.passed else 1


server_option = click.option("--server", default=None,
                             help="URL of a running rn-degen service "
                                  "(default: in-process).")
scenario_option = click.option("--scenario", required=True,
                               type=click.Path(), help="Scenario JSON file.")
out_option = click.option("--out", default=None, type=click.Path(),
                          help="Directory for report files.")
format_option = click.option("--format", "formats", multiple=True,
                             type=click.Choice(["json", "csv"]),
                             default=("json", "csv"))
timings_option = click.option("--timings", is_flag=True, default=False,
                              help="Attach wall-clock timings to the report "
                                   "(breaks byte-for-byte determinism).")
modes_option = click.option("--modes", default=None, type=int,
                            help="Seam Fourier modes N.")


def common(f):
    for deco in (server_option, scenario_option, out_option, format_option,
                 timings_option):
        f = deco(f)
    return f


@click.group()
def main():
    """Real-normalized differentials on degenerating plumbed curves."""


@main.command("solve-kirchhoff")
@common
@click.option("--mode", type=click.Choice(["flow", "force", "general"]),
              default="flow")
def solve_kirchhoff(server, scenario, out, formats, timings, mode):
    """Solve the flow/force/general Kirchhoff problem of the scenario."""
    sys.exit(_post(server, "solve-kirchhoff", scenario, {"mode": mode},
                   out, formats, timings))


@main.command("multiscale-limit")
@common
def multiscale_limit(server, scenario, out, formats, timings):
    """Classify the schedule and compare flow solutions with the multi-scale limit."""
    sys.exit(_post(server, "multiscale-limit", scenario, {}, out, formats, timings))


@main.command("construct-rn")
@common
@modes_option
@click.option("--s-values", default=None,
              help="Comma-separated plumbing magnitudes, e.g. 1e-3,1e-4.")
@click.option("--dump-series", is_flag=True, default=False,
              help="Emit the jump-problem series term norms.")
def construct_rn(server, scenario, out, formats, timings, modes, s_values,
                 dump_series):
    """Construct the RN differential at the given plumbing parameters."""
    options = {}
    if modes:
        options["modes"] = modes
    if s_values:
        options["s_values"] = [float(x) for x in s_values.split(",")]
    if dump_series:
        options["dump_series"] = True
    sys.exit(_post(server, "construct-rn", scenario, options, out, formats,
                   timings))


@main.command("degenerate")
@common
@modes_option
def degenerate(server, scenario, out, formats, timings, modes):
    """Residue and period convergence along the degenerating family."""
    options = {"modes": modes} if modes else {}
    sys.exit(_post(server, "degenerate", scenario, options, out, formats, timings))


@main.command("stratify")
@common
@modes_option
@click.option("--m", "m_jets", default=None, type=int,
              help="Jet order (default 2*m0 + 1).")
def stratify(server, scenario, out, formats, timings, modes, m_jets):
    """Order-of-vanishing stratification and the twisted limit divisor."""
    options = {}
    if modes:
        options["modes"] = modes
    if m_jets:
        options["m"] = m_jets
    sys.exit(_post(server, "stratify", scenario, options, out, formats, timings))


@main.command("track-zeros")
@common
@modes_option
def track_zeros(server, scenario, out, formats, timings, modes):
    """Track the zeros of the differential along the family."""
    options = {"modes": modes} if modes else {}
    sys.exit(_post(server, "track-zeros", scenario, options, out, formats,
                   timings))


@main.command("verify")
@common
@modes_option
def verify(server, scenario, out, formats, timings, modes):
    """RN certificate, plus exact-oracle equivalence on tree scenarios."""
    options = {"modes": modes} if modes else {}
    sys.exit(_post(server, "verify", scenario, options, out, formats, timings))


if __name__ == "__main__":
    main()
