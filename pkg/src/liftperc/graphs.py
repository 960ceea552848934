"""Deterministic finite base graphs with a canonical total order.

Vertices and edges carry dense integer ids in generator order.  That order
is the well-ordering used by every exploration and coupling in the package
("pick the smallest ... such that"), so construction here is the single
source of determinism.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class GraphInputError(ValueError):
    """Raised when a generator or loader receives invalid input."""


@dataclass(frozen=True)
class Ball:
    """Vertices at distance <= radius from center (graph metric)."""

    center: int
    radius: int
    vertices: np.ndarray  # sorted vertex ids


@dataclass
class BaseGraph:
    """Simple connected undirected graph with canonical ids.

    edges[k] = (u, v) with u < v; adjacency[v] lists (edge_id, neighbor)
    sorted by edge id.  bipartition is a 0/1 coloring when the graph is
    bipartite, else None.  origin is the distinguished vertex used by
    finite-volume estimators (center of a box, 0 otherwise).
    """

    num_vertices: int
    edges: np.ndarray  # shape (E, 2), dtype int64, u < v
    kind: str
    bipartition: Optional[np.ndarray] = None
    origin: int = 0
    box_shape: Optional[tuple] = None
    adjacency: list = field(init=False, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self._validate()
        adj = [[] for _ in range(self.num_vertices)]
        for k, (u, v) in enumerate(self.edges):
            adj[u].append((k, int(v)))
            adj[v].append((k, int(u)))
        self.adjacency = adj

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def edge_endpoints(self):
        return self.edges[:, 0], self.edges[:, 1]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def _validate(self):
        n, e = self.num_vertices, self.edges
        if n < 1:
            raise GraphInputError("graph needs at least one vertex")
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise GraphInputError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise GraphInputError("loops are not allowed")
            canon = np.sort(e, axis=1)
            if np.unique(canon, axis=0).shape[0] != e.shape[0]:
                raise GraphInputError("parallel edges are not allowed")
            if np.any(e[:, 0] > e[:, 1]):
                raise GraphInputError("edges must be stored with u < v")
        if not _connected(n, e):
            raise GraphInputError("graph must be connected")
        if self.bipartition is not None:
            colors = np.asarray(self.bipartition)
            if colors.shape != (n,):
                raise GraphInputError("bipartition must color every vertex")
            if e.size and np.any(colors[e[:, 0]] == colors[e[:, 1]]):
                raise GraphInputError("bipartition must separate every edge")


def _connected(n: int, edges: np.ndarray) -> bool:
    if n == 1:
        return True
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edges:
        ra, rb = find(int(u)), find(int(v))
        if ra != rb:
            parent[rb] = ra
    root = find(0)
    return all(find(v) == root for v in range(n))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def build_box(d: int, L: int) -> BaseGraph:
    """Grid graph on {0..L-1}^d with nearest-neighbor edges, free boundary.

    Vertex ids are lexicographic in the coordinates; the origin is the
    center vertex (coordinate L//2 on every axis).
    """
    if d < 1 or L < 1:
        raise GraphInputError("box needs d >= 1 and L >= 1")
    n = L**d
    strides = [L ** (d - 1 - i) for i in range(d)]
    edges = []
    for vid in range(n):
        coords = [(vid // strides[i]) % L for i in range(d)]
        for axis in range(d):
            if coords[axis] + 1 < L:
                edges.append((vid, vid + strides[axis]))
    coords_of = np.arange(n)
    parity = np.zeros(n, dtype=np.int64)
    for i in range(d):
        parity += (coords_of // strides[i]) % L
    origin = sum((L // 2) * strides[i] for i in range(d))
    return BaseGraph(
        num_vertices=n,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        kind=f"box:{d}:{L}",
        bipartition=(parity % 2),
        origin=origin,
        box_shape=(d, L),
    )


def build_cycle(N: int) -> BaseGraph:
    if N < 3:
        raise GraphInputError("cycle needs N >= 3")
    edges = [(i, i + 1) for i in range(N - 1)] + [(0, N - 1)]
    bip = np.arange(N) % 2 if N % 2 == 0 else None
    return BaseGraph(N, np.array(edges, dtype=np.int64), kind=f"cycle:{N}", bipartition=bip)


def build_tree(b: int, depth: int) -> BaseGraph:
    """Complete rooted b-ary tree of the given depth (depth 0 = single root)."""
    if b < 1 or depth < 0:
        raise GraphInputError("tree needs b >= 1 and depth >= 0")
    edges = []
    levels = [[0]]
    next_id = 1
    for _ in range(depth):
        nxt = []
        for parent in levels[-1]:
            for _ in range(b):
                edges.append((parent, next_id))
                nxt.append(next_id)
                next_id += 1
        levels.append(nxt)
    n = next_id
    depth_of = np.zeros(n, dtype=np.int64)
    for lvl, vs in enumerate(levels):
        for v in vs:
            depth_of[v] = lvl
    e = np.array(edges, dtype=np.int64).reshape(-1, 2) if edges else np.zeros((0, 2), np.int64)
    return BaseGraph(n, e, kind=f"tree:{b}:{depth}", bipartition=depth_of % 2)


def build_complete(n: int) -> BaseGraph:
    if n < 1:
        raise GraphInputError("complete graph needs n >= 1")
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    bip = np.arange(n) % 2 if n <= 2 else None
    return BaseGraph(n, e, kind=f"complete:{n}", bipartition=bip)


def build_custom(edges: Sequence, num_vertices: Optional[int] = None, kind: str = "custom") -> BaseGraph:
    """Graph from an explicit edge list; rejects non-simple or disconnected input."""
    e = np.array([(min(a, b), max(a, b)) for a, b in edges], dtype=np.int64).reshape(-1, 2)
    if num_vertices is None:
        if e.size == 0:
            raise GraphInputError("custom graph needs edges or an explicit vertex count")
        num_vertices = int(e.max()) + 1
    colors = _two_coloring(num_vertices, e)
    return BaseGraph(num_vertices, e, kind=kind, bipartition=colors)


def _two_coloring(n: int, edges: np.ndarray) -> Optional[np.ndarray]:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(int(v))
        adj[v].append(int(u))
    color = np.full(n, -1, dtype=np.int64)
    color[0] = 0
    queue = [0]
    while queue:
        x = queue.pop()
        for y in adj[x]:
            if color[y] == -1:
                color[y] = 1 - color[x]
                queue.append(y)
            elif color[y] == color[x]:
                return None
    return color


def load_edge_list(text: str, kind: str = "custom") -> BaseGraph:
    """Parse the plain-text format: first line "V E", then E lines "u v"."""
    lines = [ln for ln in (s.strip() for s in text.splitlines()) if ln and not ln.startswith("#")]
    if not lines:
        raise GraphInputError("empty edge-list input")
    head = lines[0].split()
    if len(head) != 2:
        raise GraphInputError("first line must be 'V E'")
    n, m = int(head[0]), int(head[1])
    if len(lines) - 1 != m:
        raise GraphInputError(f"expected {m} edge lines, got {len(lines) - 1}")
    edges = []
    for ln in lines[1:]:
        a, b = ln.split()
        edges.append((int(a), int(b)))
    return build_custom(edges, num_vertices=n, kind=kind)


# ---------------------------------------------------------------------------
# metric utilities (BFS-exact)
# ---------------------------------------------------------------------------

def distances_from(G: BaseGraph, x: int) -> np.ndarray:
    if not 0 <= x < G.num_vertices:
        raise GraphInputError("vertex id out of range")
    dist = np.full(G.num_vertices, -1, dtype=np.int64)
    dist[x] = 0
    frontier = [x]
    d = 0
    while frontier:
        nxt = []
        for v in frontier:
            for _, w in G.adjacency[v]:
                if dist[w] == -1:
                    dist[w] = d + 1
                    nxt.append(w)
        frontier = nxt
        d += 1
    return dist


def distance(G: BaseGraph, x: int, y: int) -> int:
    return int(distances_from(G, x)[y])


def ball(G: BaseGraph, x: int, R: int) -> Ball:
    if R < 0:
        raise GraphInputError("radius must be >= 0")
    dist = distances_from(G, x)
    members = np.flatnonzero((dist >= 0) & (dist <= R))
    return Ball(center=x, radius=R, vertices=members)


def sphere(G: BaseGraph, x: int, R: int) -> np.ndarray:
    dist = distances_from(G, x)
    return np.flatnonzero(dist == R)


def sphere_edges(G: BaseGraph, x: int, R: int) -> np.ndarray:
    """Edge ids with one endpoint at distance R and the other at R+1."""
    dist = distances_from(G, x)
    du = dist[G.edges[:, 0]]
    dv = dist[G.edges[:, 1]]
    lo = np.minimum(du, dv)
    hi = np.maximum(du, dv)
    return np.flatnonzero((lo == R) & (hi == R + 1))


def distances_from_set(G: BaseGraph, sources) -> np.ndarray:
    """Multi-source BFS distances; -1 marks unreachable vertices."""
    dist = np.full(G.num_vertices, -1, dtype=np.int64)
    frontier = []
    for s in sources:
        if dist[s] == -1:
            dist[s] = 0
            frontier.append(int(s))
    d = 0
    while frontier:
        nxt = []
        for v in frontier:
            for _, w in G.adjacency[v]:
                if dist[w] == -1:
                    dist[w] = d + 1
                    nxt.append(w)
        frontier = nxt
        d += 1
    return dist


def boundary_radius(G: BaseGraph) -> int:
    """Distance from the origin to the nearest frame vertex of a box.

    The sphere at this radius is the finite-volume stand-in for "infinity".
    """
    if G.box_shape is None:
        raise GraphInputError("boundary_radius is defined for box graphs")
    d, L = G.box_shape
    if L == 1:
        return 0
    strides = [L ** (d - 1 - i) for i in range(d)]
    coords = [(G.origin // strides[i]) % L for i in range(d)]
    return min(min(c, L - 1 - c) for c in coords)
