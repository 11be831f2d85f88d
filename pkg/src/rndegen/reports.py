"""Deterministic report serialization: canonical JSON and fixed-column CSV.

Reports for identical scenario + settings are byte-identical: floats are
printed with 17 significant digits, key order is fixed by construction, and
timings are attached only on request.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


def native(obj: Any) -> Any:
    """Recursively coerce numpy scalars and containers to plain Python."""
    if isinstance(obj, dict):
        return {k: native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [native(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [native(v) for v in obj.tolist()]
    return obj


def _fmt_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError(f"non-finite value in report: {x}")
    if x == int(x) and abs(x) < 1e16:
        return f"{int(x)}.0"
    return format(x, ".17g")


def canonical_json(obj: Any, indent: int = 0) -> str:
    """JSON text with deterministic float formatting and key order."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [f'{inner}{json.dumps(str(k))}: {canonical_json(v, indent + 1)}'
                for k, v in obj.items()]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        rows = [f"{inner}{canonical_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, complex):
        return f"[{_fmt_float(obj.real)}, {_fmt_float(obj.imag)}]"
    if isinstance(obj, int):
        return str(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def settings_hash(command: str, scenario: dict, options: dict) -> str:
    payload = canonical_json({"command": command, "scenario": scenario,
                              "options": options})
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "value": self.value, "threshold": self.threshold}


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple]

    def csv(self) -> str:
        out = [",".join(self.columns)]
        for row in self.rows:
            cells = []
            for cell in row:
                if isinstance(cell, float):
                    cells.append(_fmt_float(cell))
                elif isinstance(cell, complex):
                    cells.append(f"{_fmt_float(cell.real)}+{_fmt_float(cell.imag)}i")
                else:
                    cells.append(str(cell))
            out.append(",".join(cells))
        return "\n".join(out) + "\n"


@dataclass
class Report:
    command: str
    scenario_name: str
    settings_hash: str
    options: dict
    results: dict
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    timings: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        out = {
            "command": self.command,
            "scenario": self.scenario_name,
            "settings_hash": self.settings_hash,
            "options": self.options,
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "results": self.results,
            "tables": {name: {"columns": list(t.columns),
                              "rows": [list(r) for r in t.rows]}
                       for name, t in self.tables.items()},
        }
        if self.timings is not None:
            out["timings"] = self.timings
        return native(out)


def emit_report(report: Report, out_dir: str | Path | None,
                formats: tuple[str, ...] = ("json",)) -> list[Path]:
    """Write the report (and CSV tables) under out_dir; returns the paths."""
    if out_dir is None:
        return []
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if "json" in formats:
        path = out_dir / f"{report.command}-{report.scenario_name}.json"
        path.write_text(canonical_json(report.as_dict()) + "\n")
        paths.append(path)
    if "csv" in formats:
        for name, table in report.tables.items():
            path = out_dir / f"{report.command}-{report.scenario_name}-{name}.csv"
            path.write_text(table.csv())
            paths.append(path)
    return paths
