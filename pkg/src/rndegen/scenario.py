"""Scenario files: the versioned JSON schema and its validation.

A scenario fixes the dual graph, the component geometry (marked and node
points with optional chart scales), the marked singular parts
(highest-order-first coefficient arrays), and either explicit plumbing
parameters, a resistance schedule with a k-grid, or both.  Validation
collects every error (schema and geometry) before failing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, Field, ValidationError, field_validator

from .blowup import ResistanceSchedule
from .components import (ComponentError, PlumbedCurve, RationalComponent,
                         SingularPart, make_component)
from .degeneration import DegeneratingFamily
from .graphs import DualGraph, GraphError, build_graph
from .mobius import INF

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  - " + "\n  - ".join(self.errors))


class LegModel(BaseModel):
    vertex: int
    label: str


class GraphModel(BaseModel):
    vertices: int = Field(ge=1)
    edges: list[tuple[int, int]] = []
    legs: list[LegModel] = []


Point = list[float] | Literal["inf"]


class ComponentModel(BaseModel):
    vertex: int
    marked: dict[str, Point] = {}
    nodes: dict[str, Point] = {}              # keys: oriented edge ids
    chart_scales: dict[str, float] = {}

    @field_validator("marked", "nodes")
    @classmethod
    def _point_shape(cls, v):
        for key, p in v.items():
            if p != "inf" and len(p) != 2:
                raise ValueError(f"point {key} must be [re, im] or 'inf'")
        return v


class ScheduleModel(BaseModel):
    type: Literal["parametric", "table"]
    beta: list[float] | None = None
    alpha: list[float] | None = None
    k: list[float] | None = None
    values: list[list[float]] | None = None


class SettingsModel(BaseModel):
    modes: int = Field(default=64, ge=4, le=512)
    m: int | None = Field(default=None, ge=1)
    max_levels: int = Field(default=60, ge=1)
    period_tol: float = 1e-8


class ScenarioModel(BaseModel):
    schema_version: int = Field(alias="schema", default=SCHEMA_VERSION)
    name: str = "scenario"
    graph: GraphModel
    components: list[ComponentModel]
    singular_parts: dict[str, list[list[float]]] = {}
    emf: list[float] | None = None
    s_values: list[list[float] | float] | None = None
    args: list[float] | None = None
    schedule: ScheduleModel | None = None
    k_grid: list[float] | None = None
    settings: SettingsModel = SettingsModel()

    model_config = {"populate_by_name": True}


@dataclass
class Scenario:
    """A validated scenario with its built domain objects."""

    name: str
    model: ScenarioModel
    graph: DualGraph
    components: tuple[RationalComponent, ...]
    marked_parts: dict[str, SingularPart]
    curve: PlumbedCurve                      # at the reference plumbing
    s_values: tuple[complex, ...]
    schedule: ResistanceSchedule | None
    k_grid: tuple[float, ...] | None
    settings: SettingsModel

    def family(self) -> DegeneratingFamily:
        if self.schedule is None or self.k_grid is None:
            raise ScenarioError(["scenario has no schedule/k_grid for a family"])
        return DegeneratingFamily(self.curve, self.schedule, self.marked_parts,
                                  self.k_grid, tuple(self.curve.arg))

    def curve_at_s(self, s: complex) -> PlumbedCurve:
        import math
        n = self.graph.n_edges
        rho = [-math.log(abs(s))] * n
        arg = [math.atan2(s.imag, s.real)] * n
        return self.curve.with_plumbing(rho, arg)


def _as_point(p) -> complex:
    if p == "inf":
        return INF
    return complex(p[0], p[1])


def _as_complex(pair) -> complex:
    if isinstance(pair, (int, float)):
        return complex(pair, 0.0)
    return complex(pair[0], pair[1])


def build_scenario(model: ScenarioModel) -> Scenario:
    errors: list[str] = []
    if model.schema_version != SCHEMA_VERSION:
        raise ScenarioError([f"unsupported schema version {model.schema_version}"])

    graph = None
    try:
        graph = build_graph(model.graph.vertices,
                            model.graph.edges,
                            [(l.vertex, l.label) for l in model.graph.legs])
    except GraphError as exc:
        errors.append(str(exc))

    comps: list[RationalComponent | None] = [None] * model.graph.vertices
    for cm in model.components:
        try:
            comps[cm.vertex] = make_component(
                cm.vertex,
                {lab: _as_point(p) for lab, p in cm.marked.items()},
                {int(e): _as_point(p) for e, p in cm.nodes.items()},
                {int(e): s for e, s in cm.chart_scales.items()} or None)
        except (ComponentError, IndexError) as exc:
            errors.append(f"component {cm.vertex}: {exc}")
    for v, comp in enumerate(comps):
        if comp is None:
            errors.append(f"no geometry for component {v}")

    marked_parts: dict[str, SingularPart] = {}
    leg_labels = {l.label for l in model.graph.legs}
    residue_total = 0.0
    for label, rows in model.singular_parts.items():
        if label not in leg_labels:
            errors.append(f"singular part for unknown leg {label!r}")
            continue
        coeffs_desc = [_as_complex(r) for r in rows]
        if graph is not None and comps[dict((l.label, l.vertex) for l in
                                            model.graph.legs)[label]] is not None:
            v = graph.leg_vertex(label)
            try:
                p = comps[v].marked_point(label)
            except ComponentError as exc:
                errors.append(str(exc))
                continue
            part = SingularPart.at_point(p, coeffs_desc)
            res = part.residue
            if abs(res.real) > 1e-12 * (1.0 + abs(res)):
                errors.append(
                    f"residue at {label} is {res}; real-normalized differentials "
                    "require purely imaginary residues at marked points")
            residue_total += res.imag
            marked_parts[label] = part
    if abs(residue_total) > 1e-12 * (1.0 + sum(
            p.max_abs() for p in marked_parts.values())):
        errors.append(f"marked residues sum to {residue_total:.3e}i, not zero")
    for label in leg_labels - set(model.singular_parts):
        if graph is None:
            continue
        v = graph.leg_vertex(label)
        if comps[v] is not None:
            try:
                p = comps[v].marked_point(label)
                marked_parts[label] = SingularPart.at_point(p, [0.0])
            except ComponentError:
                errors.append(f"leg {label} has no marked point on component {v}")

    schedule = None
    if model.schedule is not None:
        try:
            if model.schedule.type == "parametric":
                schedule = ResistanceSchedule.parametric(model.schedule.beta,
                                                         model.schedule.alpha)
            else:
                schedule = ResistanceSchedule.from_table(model.schedule.k,
                                                         model.schedule.values)
            if schedule.n_edges != len(model.graph.edges):
                errors.append("schedule size does not match the edge count")
        except (ValueError, TypeError) as exc:
            errors.append(f"schedule: {exc}")

    s_values = tuple(_as_complex(s) for s in (model.s_values or []))
    for s in s_values:
        if not 0 < abs(s) < 1:
            errors.append(f"plumbing parameter {s} must satisfy 0 < |s| < 1")

    if errors or graph is None:
        raise ScenarioError(errors or ["scenario could not be built"])

    # reference curve: first explicit s, else the schedule at the first k
    if s_values:
        ref = [s_values[0]] * graph.n_edges
        curve = PlumbedCurve.assemble(graph, comps, s_values=ref)
    elif schedule is not None and model.k_grid:
        rho = schedule(model.k_grid[0])
        arg = tuple(model.args) if model.args else None
        curve = PlumbedCurve.assemble(graph, comps, rho=rho, arg=arg)
    else:
        curve = PlumbedCurve.assemble(graph, comps,
                                      rho=[10.0] * graph.n_edges)
    try:
        # node charts must exist for every oriented edge; surfaces as errors
        for e in range(graph.n_oriented):
            curve.node_chart(e)
    except ComponentError as exc:
        raise ScenarioError([str(exc)])

    return Scenario(model.name, model, graph, tuple(comps), marked_parts, curve,
                    s_values, schedule,
                    tuple(model.k_grid) if model.k_grid else None,
                    model.settings)


def parse_scenario(source: str | Path | dict) -> Scenario:
    """Load and fully validate a scenario; raises with every error found."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.exists():
            raise ScenarioError([f"no such scenario file: {path}"])
        data = json.loads(path.read_text())
    else:
        data = source
    try:
        model = ScenarioModel.model_validate(data)
    except ValidationError as exc:
        msgs = [f"{'.'.join(str(x) for x in err['loc'])}: {err['msg']}"
                for err in exc.errors()]
        raise ScenarioError(msgs) from exc
    return build_scenario(model)


def fixture_path(name: str) -> Path:
    return Path(__file__).parent / "fixtures" / f"{name}.json"


def load_fixture(name: str) -> Scenario:
    return parse_scenario(fixture_path(name))
