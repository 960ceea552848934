"""The random 2-lift: switching configurations, lifted graphs, gauge maps.

A switching configuration eta assigns one bit per base edge.  Base edge
e = {u, v} (u < v) lifts to two edges stored at ids 2e and 2e+1:

    slot 0: {u_0, v_eta}      slot 1: {u_1, v_(1-eta)}

so slot s joins u_s to v_(s xor eta).  Lifted vertex (v, level) has id
v + level * |V|.  The covering map forgets levels; the twin map swaps them.
"""

from dataclasses import dataclass

import numpy as np

from liftperc.graphs import BaseGraph, GraphInputError


@dataclass
class SwitchConfig:
    """One switching bit per base edge (1 = the lifted pair crosses levels)."""

    base: BaseGraph
    eta: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.uint8).ravel()
        if self.eta.shape != (self.base.num_edges,):
            raise GraphInputError("eta length must equal the base edge count")
        if self.eta.size and self.eta.max() > 1:
            raise GraphInputError("eta must be 0/1")

    def to_hex(self) -> str:
        return np.packbits(self.eta).tobytes().hex()

    @classmethod
    def from_hex(cls, base: BaseGraph, text: str) -> "SwitchConfig":
        bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
        return cls(base, bits[: base.num_edges])


def sample_switch_config(G: BaseGraph, q: float, rng: np.random.Generator) -> SwitchConfig:
    """Independent Bernoulli(q) bits, one uniform draw per base edge.

    The draw count is exactly |E| for every q, including q = 0 and q = 1,
    so downstream streams never shift with the parameter.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    u = rng.random(G.num_edges)
    return SwitchConfig(G, (u < q).astype(np.uint8))


class LiftedGraph:
    """The 2-lift (V x {0,1}, E(eta)) of a base graph."""

    def __init__(self, base: BaseGraph, eta):
        if isinstance(eta, SwitchConfig):
            if eta.base is not base:
                raise GraphInputError("switch config belongs to a different base graph")
            eta = eta.eta
        self.base = base
        self.eta = np.asarray(eta, dtype=np.uint8).ravel()
        if self.eta.shape != (base.num_edges,):
            raise GraphInputError("eta length must equal the base edge count")
        n = base.num_vertices
        u, v = base.edge_endpoints()
        e = self.eta.astype(np.int64)
        # slot 0 joins u_0 to v_eta, slot 1 joins u_1 to v_(1-eta)
        lu = np.empty(2 * base.num_edges, dtype=np.int64)
        lv = np.empty(2 * base.num_edges, dtype=np.int64)
        lu[0::2] = u
        lv[0::2] = v + n * e
        lu[1::2] = u + n
        lv[1::2] = v + n * (1 - e)
        self.lift_u = lu
        self.lift_v = lv

    @property
    def num_vertices(self) -> int:
        return 2 * self.base.num_vertices

    @property
    def num_edges(self) -> int:
        return 2 * self.base.num_edges

    def edge_endpoints(self):
        return self.lift_u, self.lift_v

    # -- vertex maps ------------------------------------------------------
    def lift_of(self, v: int, level: int) -> int:
        return v + level * self.base.num_vertices

    def twin(self, x: int) -> int:
        n = self.base.num_vertices
        return x - n if x >= n else x + n

    def project(self, x: int) -> int:
        return x % self.base.num_vertices

    def level(self, x: int) -> int:
        return 1 if x >= self.base.num_vertices else 0

    # -- edge maps --------------------------------------------------------
    def twin_edge(self, k: int) -> int:
        return k ^ 1

    def project_edge(self, k: int) -> int:
        return k // 2

    def edge_id(self, base_edge: int, slot: int) -> int:
        return 2 * base_edge + slot

    def endpoints(self, k: int):
        return int(self.lift_u[k]), int(self.lift_v[k])

    def adjacency(self):
        """Per lifted vertex, sorted list of (lifted edge id, neighbor id)."""
        adj = [[] for _ in range(self.num_vertices)]
        for k in range(self.num_edges):
            a, b = int(self.lift_u[k]), int(self.lift_v[k])
            adj[a].append((k, b))
            adj[b].append((k, a))
        return adj


def build_lift(G: BaseGraph, eta) -> LiftedGraph:
    return LiftedGraph(G, eta)


# ---------------------------------------------------------------------------
# gauge transformations
# ---------------------------------------------------------------------------

def gauge_eta(G: BaseGraph, eta: np.ndarray, S) -> np.ndarray:
    """Flip eta on the edge boundary of S (level-swap at every vertex of S)."""
    mask = _vertex_mask(G, S)
    u, v = G.edge_endpoints()
    flip = mask[u] ^ mask[v]
    return (np.asarray(eta, dtype=np.uint8) ^ flip.astype(np.uint8)).astype(np.uint8)


def apply_gauge(L: LiftedGraph, S) -> LiftedGraph:
    return LiftedGraph(L.base, gauge_eta(L.base, L.eta, S))


def gauge_vertex_map(L: LiftedGraph, S) -> np.ndarray:
    """Permutation of lifted vertex ids realizing the level swap on S."""
    n = L.base.num_vertices
    mask = _vertex_mask(L.base, S)
    ids = np.arange(2 * n)
    base = ids % n
    out = ids.copy()
    swap = mask[base]
    out[swap & (ids < n)] += n
    out[swap & (ids >= n)] -= n
    return out


def gauge_edge_map(L: LiftedGraph, S) -> np.ndarray:
    """Lifted-edge bijection onto apply_gauge(L, S): slot flips iff the
    smaller base endpoint lies in S."""
    mask = _vertex_mask(L.base, S)
    u = L.base.edges[:, 0]
    out = np.arange(2 * L.base.num_edges)
    flip = np.repeat(mask[u], 2)
    out[flip] ^= 1
    return out


def transport_omega(L: LiftedGraph, S, omega: np.ndarray) -> np.ndarray:
    """Carry a percolation config along the gauge edge bijection."""
    emap = gauge_edge_map(L, S)
    out = np.empty_like(np.asarray(omega))
    out[emap] = omega
    return out


def _vertex_mask(G: BaseGraph, S) -> np.ndarray:
    mask = np.zeros(G.num_vertices, dtype=bool)
    idx = np.asarray(list(S), dtype=np.int64) if not isinstance(S, np.ndarray) else S
    if idx.size:
        if idx.min() < 0 or idx.max() >= G.num_vertices:
            raise GraphInputError("gauge set contains an invalid vertex id")
        mask[idx] = True
    return mask


# ---------------------------------------------------------------------------
# switching cycles
# ---------------------------------------------------------------------------

def is_switching_cycle(eta, cycle_edges, G: BaseGraph) -> bool:
    """Parity of eta over a base cycle (odd = the lifted cycle is connected).

    Rejects edge lists that do not form a single simple cycle.
    """
    eta = np.asarray(eta, dtype=np.uint8)
    edges = list(cycle_edges)
    if len(edges) < 3:
        raise GraphInputError("a cycle needs at least 3 edges")
    deg = {}
    for k in edges:
        u, v = int(G.edges[k, 0]), int(G.edges[k, 1])
        deg[u] = deg.get(u, 0) + 1
        deg[v] = deg.get(v, 0) + 1
    if len(edges) != len(set(edges)) or any(d != 2 for d in deg.values()) or len(deg) != len(edges):
        raise GraphInputError("edge list is not a simple cycle")
    # connectivity of the cycle subgraph
    verts = list(deg)
    index = {v: i for i, v in enumerate(verts)}
    parent = list(range(len(verts)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in edges:
        a = find(index[int(G.edges[k, 0])])
        b = find(index[int(G.edges[k, 1])])
        if a != b:
            parent[b] = a
    if len({find(i) for i in range(len(verts))}) != 1:
        raise GraphInputError("edge list is not a single cycle")
    return bool(int(eta[np.asarray(edges, dtype=np.int64)].sum()) % 2 == 1)
