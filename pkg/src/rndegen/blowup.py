"""The blowup of the non-negative resistance sphere and multi-scale limits.

A point of the blowup is an ordered partition of the unoriented edges into
blocks of comparable growth, fastest first, with positive projective
coordinates inside each block (normalized to max 1).  Resistance schedules
are classified into such points, and the multi-scale flow problem is solved
recursively: contract everything outside the leading block, solve, split,
recurse on the remainder with the transported boundary currents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graphs import DualGraph, contract_edges, split_subgraph
from .kirchhoff import CurrentAssignment, KirchhoffError, leg_inflow_map, solve_flow

RATIO_TOL = 0.05          # log-ratio clustering window for table schedules
ALPHA_TOL = 1e-12


class NonAdmissibleError(ValueError):
    """A table schedule whose projectivized ratios do not stabilize."""


@dataclass(frozen=True)
class BlowupPoint:
    """Ordered partition of edges with per-block positive projective coordinates."""

    n_edges: int
    blocks: tuple[tuple[int, ...], ...]
    coords: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        if len(self.blocks) != len(self.coords):
            raise ValueError("one coordinate tuple per block required")
        for block, xs in zip(self.blocks, self.coords):
            if not block:
                raise ValueError("empty block")
            if len(block) != len(xs):
                raise ValueError("block and coordinates must align")
            if any(x <= 0 for x in xs):
                raise ValueError("block coordinates must be positive")
            if abs(max(xs) - 1.0) > 1e-13:
                raise ValueError("block coordinates must be normalized to max 1")
            seen.update(block)
        if seen != set(range(self.n_edges)):
            raise ValueError("blocks must partition the edge set")

    @property
    def depth(self) -> int:
        return len(self.blocks)

    def coordinate(self, edge: int) -> float:
        for block, xs in zip(self.blocks, self.coords):
            if edge in block:
                return xs[block.index(edge)]
        raise KeyError(edge)


def _normalize_block(ids: list[int], values: list[float]) -> tuple[tuple[int, ...], tuple[float, ...]]:
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    top = max(values)
    return (tuple(ids[i] for i in order), tuple(values[i] / top for i in order))


@dataclass(frozen=True)
class ResistanceSchedule:
    """Per-edge resistance as a function of the family parameter k.

    Parametric form: rho_e(k) = beta_e * k**alpha_e with beta > 0, alpha >= 0.
    Table form: explicit positive samples on a k-grid.
    """

    kind: str
    beta: tuple[float, ...] | None = None
    alpha: tuple[float, ...] | None = None
    k_grid: tuple[float, ...] | None = None
    table: tuple[tuple[float, ...], ...] | None = None   # rows ~ k, cols ~ edge

    @staticmethod
    def parametric(beta, alpha) -> "ResistanceSchedule":
        beta = tuple(float(b) for b in beta)
        alpha = tuple(float(a) for a in alpha)
        if len(beta) != len(alpha):
            raise ValueError("beta and alpha must align")
        if any(b <= 0 for b in beta) or any(a < 0 for a in alpha):
            raise ValueError("requires beta > 0 and alpha >= 0")
        return ResistanceSchedule("parametric", beta=beta, alpha=alpha)

    @staticmethod
    def from_table(k_grid, table) -> "ResistanceSchedule":
        arr = np.asarray(table, dtype=float)
        ks = tuple(float(k) for k in k_grid)
        if arr.ndim != 2 or arr.shape[0] != len(ks):
            raise ValueError("table must be (n_k, n_edges)")
        if np.any(arr <= 0):
            raise ValueError("table resistances must be positive")
        return ResistanceSchedule("table", k_grid=ks,
                                  table=tuple(tuple(float(x) for x in row) for row in arr))

    @property
    def n_edges(self) -> int:
        if self.kind == "parametric":
            return len(self.beta)
        return len(self.table[0])

    def __call__(self, k: float) -> np.ndarray:
        if self.kind == "parametric":
            return np.array(self.beta) * float(k) ** np.array(self.alpha)
        ks = np.asarray(self.k_grid)
        idx = int(np.argmin(np.abs(ks - k)))
        if abs(ks[idx] - k) > 1e-9 * (1 + abs(k)):
            raise ValueError(f"k={k} not on the table grid")
        return np.array(self.table[idx])


def classify_sequence(s: ResistanceSchedule) -> BlowupPoint:
    """Limit of projectivized resistances in the blowup of the sphere."""
    if s.kind == "parametric":
        return _classify_parametric(s)
    return _classify_table(s)


def _classify_parametric(s: ResistanceSchedule) -> BlowupPoint:
    order = sorted(range(s.n_edges), key=lambda e: (-s.alpha[e], e))
    blocks, coords = [], []
    cur_ids: list[int] = []
    cur_vals: list[float] = []
    cur_alpha = None
    for e in order:
        if cur_ids and abs(s.alpha[e] - cur_alpha) > ALPHA_TOL:
            b, x = _normalize_block(cur_ids, cur_vals)
            blocks.append(b)
            coords.append(x)
            cur_ids, cur_vals = [], []
        cur_ids.append(e)
        cur_vals.append(s.beta[e])
        cur_alpha = s.alpha[e]
    b, x = _normalize_block(cur_ids, cur_vals)
    blocks.append(b)
    coords.append(x)
    return BlowupPoint(s.n_edges, tuple(blocks), tuple(coords))


def _classify_table(s: ResistanceSchedule) -> BlowupPoint:
    arr = np.log(np.asarray(s.table, dtype=float))
    n_k, n_e = arr.shape
    if n_k < 8:
        raise NonAdmissibleError("need at least 8 samples to classify a table")
    window = arr[n_k // 2:]
    order = sorted(range(n_e), key=lambda e: (-arr[-1, e], e))

    def ratio_status(a: int, b: int) -> tuple[str, float]:
        d = window[:, a] - window[:, b]
        spread = float(np.max(d) - np.min(d))
        if spread <= RATIO_TOL:
            return "same", float(np.mean(d))
        increments = np.diff(d)
        if np.all(increments >= -RATIO_TOL / 2) and d[-1] > d[0]:
            return "separate", 0.0
        raise NonAdmissibleError(
            f"log-ratio of edges {a} and {b} oscillates (spread {spread:.3f}); "
            "subsequence is not admissible at this resolution")

    blocks, coords = [], []
    cur_ids = [order[0]]
    cur_logs = [0.0]
    for prev, nxt in zip(order, order[1:]):
        status, _ = ratio_status(prev, nxt)
        if status == "same":
            ref = cur_ids[0]
            _, mean_d = ratio_status(ref, nxt)
            cur_ids.append(nxt)
            cur_logs.append(-mean_d)
        else:
            b, x = _normalize_block(cur_ids, list(np.exp(cur_logs)))
            blocks.append(b)
            coords.append(x)
            cur_ids, cur_logs = [nxt], [0.0]
    b, x = _normalize_block(cur_ids, list(np.exp(cur_logs)))
    blocks.append(b)
    coords.append(x)
    return BlowupPoint(n_e, tuple(blocks), tuple(coords))


def project_base(p: BlowupPoint) -> np.ndarray:
    """Contraction to the closed sphere: leading block kept, the rest zeroed."""
    out = np.zeros(p.n_edges)
    for e, x in zip(p.blocks[0], p.coords[0]):
        out[e] = x
    return out


def solve_multiscale(g: DualGraph, inflows, p: BlowupPoint) -> CurrentAssignment:
    """Recursive flow problem along the blocks of a blowup point."""
    if p.n_edges != g.n_edges:
        raise KirchhoffError("blowup point does not match the graph")
    if not g.is_connected():
        raise KirchhoffError("multi-scale problem requires a connected graph")
    f = leg_inflow_map(g, inflows)
    values = [0.0] * g.n_edges
    _multiscale_into(g, f, p, values)
    return CurrentAssignment(g, tuple(values))


def _multiscale_into(g: DualGraph, f: dict[str, float], p: BlowupPoint,
                     values: list[float]) -> None:
    if p.depth == 1:
        rho = np.array([p.coordinate(k) for k in range(g.n_edges)])
        sol = solve_flow(g, f, rho)
        for k in range(g.n_edges):
            values[k] = sol.values[k]
        return

    head = set(p.blocks[0])
    con = contract_edges(g, head)
    rho1 = np.array([p.coordinate(old) for old in con.edge_map])
    sol1 = solve_flow(con.graph, f, rho1)
    for new_k, old_k in enumerate(con.edge_map):
        values[old_k] = sol1.values[new_k]

    boundary = {}
    for old_k in con.edge_map:
        boundary[2 * old_k] = values[old_k]
        boundary[2 * old_k + 1] = -values[old_k]
    comps = split_subgraph(g, head, boundary, f)
    for comp in comps:
        if comp.graph.n_edges == 0:
            continue
        local_blocks, local_coords = [], []
        local_of_old = {old: i for i, old in enumerate(comp.edge_map)}
        for block, xs in zip(p.blocks[1:], p.coords[1:]):
            ids = [local_of_old[e] for e in block if e in local_of_old]
            vals = [x for e, x in zip(block, xs) if e in local_of_old]
            if ids:
                b, x = _normalize_block(ids, vals)
                local_blocks.append(b)
                local_coords.append(x)
        sub_point = BlowupPoint(comp.graph.n_edges, tuple(local_blocks), tuple(local_coords))
        sub_f = {label: infl for (_, label), infl in zip(comp.graph.legs, comp.leg_inflows)}
        sub_vals = [0.0] * comp.graph.n_edges
        _multiscale_into(comp.graph, sub_f, sub_point, sub_vals)
        for local_k, old_k in enumerate(comp.edge_map):
            values[old_k] = sub_vals[local_k]


@dataclass(frozen=True)
class ConvergenceReport:
    """Flow solutions along a schedule compared with the multi-scale limit."""

    point: BlowupPoint
    multiscale: CurrentAssignment
    k_grid: tuple[float, ...]
    currents: tuple[tuple[float, ...], ...]
    deviations: tuple[float, ...]
    rate: float | None

    def max_deviation(self) -> float:
        return max(self.deviations) if self.deviations else 0.0

    def final_deviation(self) -> float:
        return self.deviations[-1] if self.deviations else 0.0


def limit_of_flow_solutions(g: DualGraph, inflows, s: ResistanceSchedule,
                            k_grid) -> ConvergenceReport:
    """Evaluate flow solutions along a k-grid against the multi-scale limit."""
    point = classify_sequence(s)
    inflow_fn: Callable[[float], dict] = inflows if callable(inflows) else (lambda k: inflows)
    limit_f = leg_inflow_map(g, inflow_fn(max(k_grid)))
    ms = solve_multiscale(g, limit_f, point)

    rows, devs = [], []
    for k in k_grid:
        sol = solve_flow(g, inflow_fn(k), s(k))
        rows.append(sol.values)
        devs.append(max((abs(a - b) for a, b in zip(sol.values, ms.values)), default=0.0))

    rate = None
    ks = np.asarray(k_grid, dtype=float)
    ds = np.asarray(devs)
    mask = ds > 1e-15
    if mask.sum() >= 2:
        slope = np.polyfit(np.log(ks[mask]), np.log(ds[mask]), 1)[0]
        rate = float(slope)
    return ConvergenceReport(point, ms, tuple(float(k) for k in k_grid),
                             tuple(rows), tuple(devs), rate)
