"""Dual graphs of stable curves: oriented edges with involution, legs, cycles.

Oriented-edge convention: unoriented edge ``k`` joins the vertex pair
``edges[k] = (tail, head)``.  The oriented edge ``2k`` points at ``head``,
``2k + 1`` points at ``tail``, so the orientation involution is ``e ^ 1``
and the unoriented index is ``e // 2``.  Labels survive contraction and
splitting, which lets currents be transported between graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import deque


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class DualGraph:
    """Vertices, oriented edges with involution, and labeled legs."""

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    legs: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        for a, b in self.edges:
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices):
                raise GraphError(f"edge ({a},{b}) out of range for {self.n_vertices} vertices")
        labels = [label for _, label in self.legs]
        if len(set(labels)) != len(labels):
            raise GraphError("duplicate leg labels")
        for v, _ in self.legs:
            if not 0 <= v < self.n_vertices:
                raise GraphError(f"leg vertex {v} out of range")

    # -- oriented edge helpers -------------------------------------------
    @property
    def n_edges(self) -> int:
        """Number of unoriented edges #|E|."""
        return len(self.edges)

    @property
    def n_oriented(self) -> int:
        return 2 * len(self.edges)

    def reverse(self, e: int) -> int:
        return e ^ 1

    def unoriented(self, e: int) -> int:
        return e // 2

    def target(self, e: int) -> int:
        a, b = self.edges[e // 2]
        return b if e % 2 == 0 else a

    def source(self, e: int) -> int:
        return self.target(e ^ 1)

    def is_loop(self, k: int) -> bool:
        a, b = self.edges[k]
        return a == b

    def edges_at(self, v: int) -> tuple[int, ...]:
        """Oriented edges pointing at v (both halves of a loop at v appear)."""
        out = []
        for k, (a, b) in enumerate(self.edges):
            if b == v:
                out.append(2 * k)
            if a == v:
                out.append(2 * k + 1)
        return tuple(out)

    def legs_at(self, v: int) -> tuple[str, ...]:
        return tuple(label for w, label in self.legs if w == v)

    def leg_vertex(self, label: str) -> int:
        for v, lab in self.legs:
            if lab == label:
                return v
        raise GraphError(f"no leg labeled {label!r}")

    # -- connectivity -----------------------------------------------------
    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for k, (a, b) in enumerate(self.edges):
            adj[a].append(2 * k)      # points at head b, usable from a
            adj[b].append(2 * k + 1)  # points at tail a, usable from b
        return adj

    def is_connected(self) -> bool:
        if self.n_vertices <= 1:
            return True
        seen = {0}
        queue = deque([0])
        adj = self.adjacency()
        while queue:
            v = queue.popleft()
            for e in adj[v]:
                w = self.target(e)
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.n_vertices

    def cycle_rank(self) -> int:
        """Rank of H1 for a connected graph: #|E| - #V + 1."""
        return self.n_edges - self.n_vertices + 1


@dataclass(frozen=True)
class OrientedCycle:
    """Closed walk of oriented edges; target(a_i) == source(a_{i+1}) cyclically."""

    graph: DualGraph = field(repr=False)
    edges: tuple[int, ...]

    def __post_init__(self):
        g = self.graph
        if not self.edges:
            raise GraphError("empty cycle")
        n = len(self.edges)
        for i, e in enumerate(self.edges):
            nxt = self.edges[(i + 1) % n]
            if g.target(e) != g.source(nxt):
                raise GraphError("cycle edges do not chain head-to-tail")

    def edge_vector(self) -> list[float]:
        """Signed traversal count per unoriented edge (cycle-space coordinates)."""
        vec = [0.0] * self.graph.n_edges
        for e in self.edges:
            vec[e // 2] += 1.0 if e % 2 == 0 else -1.0
        return vec


def build_graph(vertex_count: int,
                unoriented_edges: list[tuple[int, int]],
                legs: list[tuple[int, str]] | None = None) -> DualGraph:
    """Materialize a dual graph; loops and parallel edges allowed."""
    return DualGraph(vertex_count, tuple(tuple(e) for e in unoriented_edges),
                     tuple(tuple(l) for l in (legs or [])))


def _bfs_tree(g: DualGraph, root: int = 0) -> dict[int, int]:
    """Map vertex -> oriented tree edge pointing at it (BFS from root)."""
    tree: dict[int, int] = {}
    seen = {root}
    queue = deque([root])
    adj = g.adjacency()
    while queue:
        v = queue.popleft()
        for e in sorted(adj[v]):
            w = g.target(e)
            if w not in seen:
                seen.add(w)
                tree[w] = e
                queue.append(w)
    if len(seen) != g.n_vertices:
        raise GraphError("graph is not connected")
    return tree


def _tree_path(g: DualGraph, tree: dict[int, int], u: int, w: int) -> list[int]:
    """Oriented tree edges traveling from u to w."""
    def root_path(v):
        path = []
        while v in tree:
            e = tree[v]
            path.append(e)
            v = g.source(e)
        return path  # edges pointing down toward v's side, listed v-to-root

    up, uw = root_path(u), root_path(w)
    # strip the common tail (shared path to root)
    while up and uw and up[-1] == uw[-1]:
        up.pop()
        uw.pop()
    # from u ascend (reverse each edge), then descend to w
    return [e ^ 1 for e in up] + list(reversed(uw))


def cycle_basis(g: DualGraph) -> list[OrientedCycle]:
    """Independent cycles from the complement of a deterministic BFS tree."""
    tree = _bfs_tree(g)
    tree_edges = {e // 2 for e in tree.values()}
    basis = []
    for k in range(g.n_edges):
        if k in tree_edges:
            continue
        e = 2 * k
        if g.is_loop(k):
            basis.append(OrientedCycle(g, (e,)))
        else:
            back = _tree_path(g, tree, g.target(e), g.source(e))
            basis.append(OrientedCycle(g, (e, *back)))
    return basis


@dataclass(frozen=True)
class Contraction:
    """Contracted graph plus maps for transporting data back."""

    graph: DualGraph
    vertex_map: tuple[int, ...]   # old vertex -> new vertex
    edge_map: tuple[int, ...]     # new unoriented edge -> old unoriented edge

    def pull_back_edge(self, new_e: int) -> int:
        """Old oriented edge corresponding to a new oriented edge."""
        return 2 * self.edge_map[new_e // 2] + (new_e % 2)


def contract_edges(g: DualGraph, keep: set[int]) -> Contraction:
    """Contract all unoriented edges outside ``keep``; legs follow merged vertices."""
    keep = set(keep)
    if not keep:
        raise GraphError("keep-set must be nonempty")
    if not keep <= set(range(g.n_edges)):
        raise GraphError("keep-set contains unknown edges")
    parent = list(range(g.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, (a, b) in enumerate(g.edges):
        if k not in keep:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    reps = sorted({find(v) for v in range(g.n_vertices)})
    new_index = {r: i for i, r in enumerate(reps)}
    vertex_map = tuple(new_index[find(v)] for v in range(g.n_vertices))
    kept = sorted(keep)
    edges = tuple((vertex_map[g.edges[k][0]], vertex_map[g.edges[k][1]]) for k in kept)
    legs = tuple((vertex_map[v], label) for v, label in g.legs)
    return Contraction(DualGraph(len(reps), edges, legs), vertex_map, tuple(kept))


@dataclass(frozen=True)
class SplitComponent:
    """One connected component of the graph with a block of edges removed.

    ``leg_inflows`` align with ``graph.legs``; legs created for removed edges
    are labeled ``node:<old oriented edge>`` and carry the boundary current.
    """

    graph: DualGraph
    vertex_map: tuple[int, ...]   # new vertex -> old vertex
    edge_map: tuple[int, ...]     # new unoriented edge -> old unoriented edge
    leg_inflows: tuple[float, ...]


def split_subgraph(g: DualGraph, removed: set[int],
                   boundary_inflows: dict[int, float],
                   original_inflows: dict[str, float] | None = None,
                   tol: float = 1e-10) -> list[SplitComponent]:
    """Components left after deleting a block of edges.

    Every vertex is retained (a vertex stripped of all its edges becomes an
    isolated component carrying its legs).  Each removed edge ``e`` adds a leg
    at its target with inflow ``boundary_inflows[e]``; the inflows of every
    component must then balance to zero, which is asserted.
    """
    removed = set(removed)
    if not removed <= set(range(g.n_edges)):
        raise GraphError("removed-set contains unknown edges")
    retained = [k for k in range(g.n_edges) if k not in removed]
    original_inflows = original_inflows or {}

    parent = list(range(g.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k in retained:
        a, b = g.edges[k]
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    comps: dict[int, list[int]] = {}
    for v in range(g.n_vertices):
        comps.setdefault(find(v), []).append(v)

    scale = 1.0 + sum(abs(f) for f in original_inflows.values()) \
                + sum(abs(c) for c in boundary_inflows.values())
    out = []
    for rep in sorted(comps):
        old_vertices = comps[rep]
        vmap = {ov: i for i, ov in enumerate(old_vertices)}
        edge_map = tuple(k for k in retained
                         if g.edges[k][0] in vmap and g.edges[k][1] in vmap)
        edges = tuple((vmap[g.edges[k][0]], vmap[g.edges[k][1]]) for k in edge_map)
        legs: list[tuple[int, str]] = []
        inflows: list[float] = []
        for v, label in g.legs:
            if v in vmap:
                legs.append((vmap[v], label))
                inflows.append(float(original_inflows.get(label, 0.0)))
        taken = {label for _, label in legs}
        for k in sorted(removed):
            for e in (2 * k, 2 * k + 1):
                tv = g.target(e)
                if tv in vmap:
                    if e not in boundary_inflows:
                        raise GraphError(f"missing boundary inflow for oriented edge {e}")
                    label = f"node:{e}"
                    while label in taken:   # nested splits may reuse edge ids
                        label += "'"
                    taken.add(label)
                    legs.append((vmap[tv], label))
                    inflows.append(float(boundary_inflows[e]))
        if abs(sum(inflows)) > tol * scale:
            raise GraphError(
                f"component inflows sum to {sum(inflows):.3e}, not zero: "
                "upstream flow solution is inconsistent")
        out.append(SplitComponent(DualGraph(len(old_vertices), edges, tuple(legs)),
                                  tuple(old_vertices), edge_map, tuple(inflows)))
    return out
