"""Flow, force, and general Kirchhoff problems on dual graphs.

Currents live on oriented edges with ``c_e = -c_{-e}`` (stored once per
unoriented edge, along the even orientation).  The three defining conditions:

  (0) antisymmetry,
  (1) conservation at every vertex: sum of currents pointing at ``v`` equals
      minus the total leg inflow at ``v``,
  (2) on every oriented cycle, ``sum c_e rho_e`` equals the electromotive
      force of the cycle.

The flow problem (zero force) is solved through the weighted graph Laplacian;
the force problem (zero inflow) through the Gram matrix of a cycle basis.
The two routes are independent, which lets superposition serve as a
cross-check of both.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import DualGraph, OrientedCycle, cycle_basis

CONS_TOL = 1e-10     # conservation residual, relative
CYCLE_TOL = 1e-10    # cycle-condition residual, relative
OHM_TOL = 1e-9
RHO_FLOOR = 1e-12


class KirchhoffError(ValueError):
    pass


class DegenerateResistanceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CurrentAssignment:
    """Antisymmetric real currents; ``values[k]`` flows along oriented edge 2k."""

    graph: DualGraph
    values: tuple[float, ...]

    def current(self, e: int) -> float:
        return self.values[e // 2] if e % 2 == 0 else -self.values[e // 2]

    def max_abs(self) -> float:
        return max((abs(v) for v in self.values), default=0.0)

    def conservation_residual(self, inflows: dict[str, float] | None = None) -> float:
        f = leg_inflow_map(self.graph, inflows or {})
        worst = 0.0
        for v in range(self.graph.n_vertices):
            total = sum(self.current(e) for e in self.graph.edges_at(v))
            total += sum(f[label] for label in self.graph.legs_at(v))
            worst = max(worst, abs(total))
        return worst

    def __add__(self, other: "CurrentAssignment") -> "CurrentAssignment":
        if other.graph is not self.graph and other.graph != self.graph:
            raise KirchhoffError("cannot add currents on different graphs")
        return CurrentAssignment(self.graph,
                                 tuple(a + b for a, b in zip(self.values, other.values)))


@dataclass(frozen=True)
class ElectromotiveForce:
    """A cohomology class: values on a cycle basis, evaluated by linearity."""

    basis: tuple[OrientedCycle, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.basis) != len(self.values):
            raise KirchhoffError("one value per basis cycle required")

    def evaluate(self, cycle: OrientedCycle) -> float:
        if not self.basis:
            return 0.0
        B = np.array([b.edge_vector() for b in self.basis], dtype=float)
        y = np.array(cycle.edge_vector(), dtype=float)
        coords, *_ = np.linalg.lstsq(B.T, y, rcond=None)
        if np.linalg.norm(B.T @ coords - y) > 1e-8 * (1.0 + np.linalg.norm(y)):
            raise KirchhoffError("cycle does not lie in the span of the basis")
        return float(coords @ np.asarray(self.values))

    @staticmethod
    def zero(g: DualGraph) -> "ElectromotiveForce":
        basis = tuple(cycle_basis(g))
        return ElectromotiveForce(basis, (0.0,) * len(basis))

    @staticmethod
    def on_basis(g: DualGraph, values) -> "ElectromotiveForce":
        basis = tuple(cycle_basis(g))
        vals = tuple(float(x) for x in values)
        if len(vals) != len(basis):
            raise KirchhoffError(f"expected {len(basis)} basis values, got {len(vals)}")
        return ElectromotiveForce(basis, vals)


@dataclass(frozen=True)
class VoltagePotential:
    """Per-vertex potential with V_target = V_source + c_e rho_e, anchored at 0.

    ``order`` is the induced weak full order on vertices (the chronological
    order), grouped from lowest potential to highest.
    """

    values: tuple[float, ...]
    order: tuple[tuple[int, ...], ...]
    ohm_residual: float


def leg_inflow_map(g: DualGraph, inflows) -> dict[str, float]:
    """Normalize inflow data to a per-label map covering every leg."""
    if isinstance(inflows, dict):
        unknown = set(inflows) - {label for _, label in g.legs}
        if unknown:
            raise KirchhoffError(f"inflows for unknown legs {sorted(unknown)}")
        return {label: float(inflows.get(label, 0.0)) for _, label in g.legs}
    vals = list(inflows)
    if len(vals) != len(g.legs):
        raise KirchhoffError(f"expected {len(g.legs)} inflows, got {len(vals)}")
    return {label: float(x) for (_, label), x in zip(g.legs, vals)}


def _check_resistances(g: DualGraph, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (g.n_edges,):
        raise KirchhoffError(f"expected {g.n_edges} resistances, got shape {rho.shape}")
    if np.any(rho <= 0):
        raise KirchhoffError("resistances must be strictly positive")
    if np.any(rho < RHO_FLOOR):
        warnings.warn("resistance below 1e-12; conditioning may degrade",
                      DegenerateResistanceWarning, stacklevel=3)
    return rho


def flow_bound(g: DualGraph, inflows) -> float:
    """A priori bound on flow currents: half the total absolute inflow."""
    f = leg_inflow_map(g, inflows)
    return 0.5 * sum(abs(x) for x in f.values())


def simple_cycles(g: DualGraph, cap: int = 20000) -> list[OrientedCycle]:
    """All simple loops (vertex-simple closed walks, distinct unoriented edges)."""
    adj = g.adjacency()
    found: dict[frozenset, OrientedCycle] = {}

    def dfs(start: int, v: int, path: list[int], used_v: set[int]):
        if len(found) >= cap:
            return
        for e in adj[v]:
            w = g.target(e)
            k = e // 2
            if any(a // 2 == k for a in path):
                continue
            if w == start:
                key = frozenset(a // 2 for a in path) | {k}
                if key not in found:
                    found[key] = OrientedCycle(g, tuple(path + [e]))
            elif w > start and w not in used_v:
                dfs(start, w, path + [e], used_v | {w})

    for s in range(g.n_vertices):
        dfs(s, s, [], {s})
    return list(found.values())


def emf_magnitude(g: DualGraph, emf: ElectromotiveForce,
                  max_rank_for_enumeration: int = 6) -> tuple[float, str]:
    """Max |emf| over simple loops; falls back to basis cycles for large rank."""
    if g.cycle_rank() <= max_rank_for_enumeration:
        loops = simple_cycles(g)
        if not loops:
            return 0.0, "simple-loops"
        return max(abs(emf.evaluate(c)) for c in loops), "simple-loops"
    return max((abs(v) for v in emf.values), default=0.0), "basis-cycles"


def force_bound(g: DualGraph, emf: ElectromotiveForce, rho) -> float:
    """A priori bound on force currents: N |emf| / min rho."""
    rho = _check_resistances(g, rho)
    mag, _ = emf_magnitude(g, emf)
    return g.cycle_rank() * mag / float(np.min(rho))


def solve_flow(g: DualGraph, inflows, rho) -> CurrentAssignment:
    """Zero-force Kirchhoff problem via the weighted Laplacian.

    When the resistances span so many orders of magnitude that the Laplacian
    route cannot hold conservation to tolerance, the solve falls back to a
    spanning-tree particular solution plus cycle-space corrections, whose
    conservation is exact by construction.
    """
    if not g.is_connected():
        raise KirchhoffError("flow problem requires a connected graph")
    rho = _check_resistances(g, rho)
    f = leg_inflow_map(g, inflows)
    fscale = 1.0 + sum(abs(x) for x in f.values())
    if abs(sum(f.values())) > CONS_TOL * fscale:
        raise KirchhoffError(f"leg inflows sum to {sum(f.values()):.3e}, not zero")

    n = g.n_vertices
    L = np.zeros((n, n))
    b = np.zeros(n)
    for k, (a, bb) in enumerate(g.edges):
        if a == bb:
            continue
        gcond = 1.0 / rho[k]
        L[a, a] += gcond
        L[bb, bb] += gcond
        L[a, bb] -= gcond
        L[bb, a] -= gcond
    for v, label in g.legs:
        b[v] += f[label]

    U = np.zeros(n)
    if n > 1:
        U[1:] = np.linalg.solve(L[1:, 1:], b[1:])
    values = []
    for k, (a, bb) in enumerate(g.edges):
        values.append(0.0 if a == bb else (U[a] - U[bb]) / rho[k])
    result = CurrentAssignment(g, tuple(values))
    res = result.conservation_residual(f)
    if res > CONS_TOL * fscale:
        result = _solve_flow_tree_cycle(g, f, rho)
        res = result.conservation_residual(f)
        if res > CONS_TOL * fscale:
            raise KirchhoffError(
                f"flow solve failed conservation: residual {res:.3e}")
    return result


def _solve_flow_tree_cycle(g: DualGraph, f: dict[str, float],
                           rho: np.ndarray) -> CurrentAssignment:
    """Tree particular solution plus cycle corrections; conservation is exact."""
    from .graphs import _bfs_tree

    tree = _bfs_tree(g)
    values = [0.0] * g.n_edges
    # peel from the deepest vertices: the tree edge into v carries whatever
    # conservation at v demands once the deeper edges are known
    depth = {}
    for v in tree:
        d, w = 0, v
        while w in tree:
            w = g.source(tree[w])
            d += 1
        depth[v] = d
    inflow_at = [0.0] * g.n_vertices
    for v, label in g.legs:
        inflow_at[v] += f[label]
    for v in sorted(tree, key=lambda w: -depth[w]):
        e = tree[v]
        k, sign = e // 2, (1.0 if e % 2 == 0 else -1.0)
        total = inflow_at[v]
        for ee in g.edges_at(v):
            if ee != e:
                total += (values[ee // 2] if ee % 2 == 0 else -values[ee // 2])
        values[k] = sign * (-total - 0.0)

    basis = cycle_basis(g)
    if basis:
        B = np.array([c.edge_vector() for c in basis])
        G = B @ np.diag(rho) @ B.T
        rhs = -B @ (np.asarray(values) * rho)
        alpha = np.linalg.solve(G, rhs)
        for _ in range(3):
            r = rhs - G @ alpha
            if np.max(np.abs(r)) <= 1e-15 * (1 + np.max(np.abs(rhs))):
                break
            alpha = alpha + np.linalg.solve(G, r)
        values = list(np.asarray(values) + B.T @ alpha)
    return CurrentAssignment(g, tuple(float(x) for x in values))


def solve_force(g: DualGraph, emf: ElectromotiveForce, rho) -> CurrentAssignment:
    """Zero-inflow Kirchhoff problem via the cycle-space Gram system."""
    if not g.is_connected():
        raise KirchhoffError("force problem requires a connected graph")
    rho = _check_resistances(g, rho)
    basis = cycle_basis(g)
    if not basis:
        return CurrentAssignment(g, (0.0,) * g.n_edges)
    B = np.array([c.edge_vector() for c in basis])
    rhs = np.array([emf.evaluate(c) for c in basis])
    G = B @ np.diag(rho) @ B.T
    alpha = np.linalg.solve(G, rhs)
    values = B.T @ alpha
    result = CurrentAssignment(g, tuple(float(v) for v in values))
    scale = 1.0 + float(np.max(np.abs(rhs)), ) + float(np.abs(values) @ rho)
    worst = max(abs(float(B[i] @ (values * rho)) - rhs[i]) for i in range(len(basis)))
    if worst > CYCLE_TOL * scale:
        raise KirchhoffError(f"force solve failed cycle condition: residual {worst:.3e}")
    return result


def solve_general(g: DualGraph, inflows, emf: ElectromotiveForce, rho) -> CurrentAssignment:
    """Superposition of the flow and force solutions."""
    return solve_flow(g, inflows, rho) + solve_force(g, emf, rho)


def cycle_residual(g: DualGraph, c: CurrentAssignment, rho,
                   emf: ElectromotiveForce | None = None) -> float:
    """Worst violation of condition (2) over the cycle basis."""
    rho = np.asarray(rho, dtype=float)
    worst = 0.0
    for cyc in cycle_basis(g):
        drop = sum(c.current(e) * rho[e // 2] for e in cyc.edges)
        target = emf.evaluate(cyc) if emf is not None else 0.0
        worst = max(worst, abs(drop - target))
    return worst


def voltage_potential(g: DualGraph, c: CurrentAssignment, rho) -> VoltagePotential:
    """Potential with V_target = V_source + c_e rho_e, plus the weak vertex order.

    Valid only for flow solutions (zero force); a residual beyond tolerance
    signals that ``c`` was not one.
    """
    if not g.is_connected():
        raise KirchhoffError("potential requires a connected graph")
    rho = _check_resistances(g, rho)
    from .graphs import _bfs_tree  # deterministic tree, shared with cycle_basis

    tree = _bfs_tree(g)
    V = np.zeros(g.n_vertices)
    # integrate along the tree in BFS-discovery order
    for v in sorted(tree, key=lambda w: _tree_depth(g, tree, w)):
        e = tree[v]
        V[v] = V[g.source(e)] + c.current(e) * rho[e // 2]
    scale = 1.0 + max((abs(c.current(2 * k)) * rho[k] for k in range(g.n_edges)),
                      default=0.0)
    worst = 0.0
    for k in range(g.n_edges):
        e = 2 * k
        worst = max(worst, abs(V[g.target(e)] - V[g.source(e)]
                               - c.current(e) * rho[k]))
    if worst > OHM_TOL * scale:
        raise KirchhoffError(
            f"Ohm residual {worst:.3e}: currents are not a flow solution")

    order = _weak_order(V, tol=OHM_TOL * scale)
    return VoltagePotential(tuple(float(x) for x in V), order, worst)


def _tree_depth(g: DualGraph, tree: dict[int, int], v: int) -> int:
    d = 0
    while v in tree:
        v = g.source(tree[v])
        d += 1
    return d


def _weak_order(V: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    idx = sorted(range(len(V)), key=lambda v: V[v])
    groups: list[list[int]] = []
    for v in idx:
        if groups and abs(V[v] - V[groups[-1][0]]) <= tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    return tuple(tuple(sorted(grp)) for grp in groups)
