"""Sharpness machinery at q = 1/2: randomized edge identities, explorations,
ghost fields, remaining graphs, and the hole-filling coupling.

Here the lift is encoded by structure functions: abstract edge ids 2e and
2e+1 are assigned to the two physical lifted edges of base edge e uniformly
at random, so revealing an edge's endpoints is a genuine exploration step
distinct from revealing its percolation bit.  Deleting an explored cluster
leaves a conditioned "remaining graph"; the coupling rebuilds a full-graph
configuration around the hole whose law (at q = 1/2 exactly) matches plain
lift percolation while dominating the remaining graph's clusters.
"""

import heapq
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from liftperc.graphs import BaseGraph, GraphInputError
from liftperc.lift import LiftedGraph
from liftperc.perco import component_labels
from liftperc.streams import substream


# ---------------------------------------------------------------------------
# structure functions
# ---------------------------------------------------------------------------

@dataclass
class StructureFunctions:
    """A realization of the lift with random abstract edge identities.

    For base edge e = {u, v} (u < v) with switching bit eta, the physical
    lifted edges are A = {u_0, v_eta} and B = {u_1, v_(1-eta)}.  The label
    bit says which abstract id carries A: f(2e + label) = A and
    f(2e + 1 - label) = B.  g is the induced incidence map.
    """

    base: BaseGraph
    eta: np.ndarray
    label: np.ndarray

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=np.uint8).ravel()
        self.label = np.asarray(self.label, dtype=np.uint8).ravel()
        E = self.base.num_edges
        if self.eta.shape != (E,) or self.label.shape != (E,):
            raise GraphInputError("eta and label must have one bit per base edge")

    @property
    def num_abstract_edges(self) -> int:
        return 2 * self.base.num_edges

    def f(self, k: int) -> Tuple[int, int]:
        """Endpoints of abstract edge k (pair of lifted vertex ids)."""
        return _endpoints_of(self.base, self.eta, self.label, k)

    def g(self, x: int) -> Tuple[int, ...]:
        """Sorted abstract edge ids incident to lifted vertex x."""
        n = self.base.num_vertices
        base_v = x % n
        level = x // n
        out = []
        for e, _ in self.base.adjacency[base_v]:
            u = int(self.base.edges[e, 0])
            if base_v == u:
                phys_is_a = level == 0
            else:
                phys_is_a = int(self.eta[e]) == level
            slot = int(self.label[e]) if phys_is_a else 1 - int(self.label[e])
            out.append(2 * e + slot)
        return tuple(sorted(out))

    def endpoint_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        fx = np.empty(self.num_abstract_edges, dtype=np.int64)
        fy = np.empty(self.num_abstract_edges, dtype=np.int64)
        for k in range(self.num_abstract_edges):
            fx[k], fy[k] = self.f(k)
        return fx, fy

    def to_lift(self) -> LiftedGraph:
        """Forget labels; recovers the plain lifted graph."""
        return LiftedGraph(self.base, self.eta)


def _endpoints_of(base: BaseGraph, eta, label, k: int) -> Tuple[int, int]:
    e, slot = divmod(int(k), 2)
    n = base.num_vertices
    u, v = int(base.edges[e, 0]), int(base.edges[e, 1])
    if slot == int(label[e]):
        return u, v + n * int(eta[e])
    return u + n, v + n * (1 - int(eta[e]))


def build_structure_functions(G: BaseGraph, q: float, rng: np.random.Generator) -> StructureFunctions:
    """Switching bits Bernoulli(q), then a uniform label bit per base edge."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    eta = (rng.random(G.num_edges) < q).astype(np.uint8)
    label = (rng.random(G.num_edges) < 0.5).astype(np.uint8)
    return StructureFunctions(G, eta, label)


# ---------------------------------------------------------------------------
# explorations
# ---------------------------------------------------------------------------

@dataclass
class ExplorationTrace:
    """Replayable record of one cluster exploration.

    events is the ordered reveal list: ("g", x, g(x)), ("w", k, bit), or
    ("f", k, endpoints).  Closed edges never get an "f" event before the
    cluster is complete; their endpoints stay hidden until the final sweep.
    """

    origin: int
    events: List[tuple]
    cluster: np.ndarray
    g_o: Dict[int, Tuple[int, ...]]
    sweep_start: int  # index of the first remainder-sweep event


def explore_cluster(sf: StructureFunctions, omega, o: int) -> ExplorationTrace:
    """Reveal the origin's cluster: repeatedly take the smallest unexplored
    incident abstract edge and reveal its bit; endpoints (then the new
    endpoint's incidences) are revealed only when the bit is open.  The
    remainder is swept in canonical order afterwards."""
    omega = np.asarray(omega, dtype=np.uint8)
    if omega.shape != (sf.num_abstract_edges,):
        raise GraphInputError("omega must have one bit per abstract edge")
    n2 = 2 * sf.base.num_vertices
    if not 0 <= o < n2:
        raise GraphInputError("origin out of range")
    events: List[tuple] = []
    g_revealed = set()
    w_revealed = set()
    f_revealed = set()
    cluster = set()
    g_o: Dict[int, Tuple[int, ...]] = {}
    frontier: List[int] = []

    def reveal_g(x: int):
        g_revealed.add(x)
        gx = sf.g(x)
        g_o[x] = gx
        events.append(("g", x, gx))
        for k in gx:
            if k not in w_revealed:
                heapq.heappush(frontier, k)

    cluster.add(o)
    reveal_g(o)
    while frontier:
        k = heapq.heappop(frontier)
        if k in w_revealed:
            continue
        w_revealed.add(k)
        bit = int(omega[k])
        events.append(("w", k, bit))
        if bit == 1:
            x, y = sf.f(k)
            f_revealed.add(k)
            events.append(("f", k, (x, y)))
            for z in (x, y):
                if z not in cluster:
                    cluster.add(z)
                    reveal_g(z)
    sweep_start = len(events)
    for x in range(n2):
        if x not in g_revealed:
            events.append(("g", x, sf.g(x)))
    for k in range(sf.num_abstract_edges):
        if k not in w_revealed:
            events.append(("w", k, int(omega[k])))
        if k not in f_revealed:
            events.append(("f", k, sf.f(k)))
    return ExplorationTrace(
        origin=o,
        events=events,
        cluster=np.array(sorted(cluster), dtype=np.int64),
        g_o=g_o,
        sweep_start=sweep_start,
    )


# ---------------------------------------------------------------------------
# ghost fields and m_h
# ---------------------------------------------------------------------------

@dataclass
class GhostField:
    members: np.ndarray  # bool per lifted vertex
    h: float


def sample_ghost(num_vertices: int, h: float, rng: np.random.Generator) -> GhostField:
    """Each lifted vertex is green independently with probability 1 - e^{-h}."""
    if h < 0:
        raise ValueError("h must be >= 0")
    return GhostField(members=rng.random(num_vertices) < (1.0 - math.exp(-h)), h=h)


@dataclass
class GhostOverlapTask:
    """One trial: does the origin-lift cluster meet the green set?

    The green set is sampled only where it matters: given cluster size s the
    overlap indicator is Bernoulli(1 - e^{-hs}), drawn with one uniform from
    the same trial stream.
    """

    G: BaseGraph
    q: float
    p: float
    h: float
    seed: int
    tag: tuple

    def run(self, i: int):
        gen = substream(self.seed, *self.tag, i)
        G = self.G
        n = G.num_vertices
        u, v = G.edge_endpoints()
        eta = (gen.random(G.num_edges) < self.q).astype(np.int64)
        lu = np.concatenate([u, u + n])
        lv = np.concatenate([v + n * eta, v + n * (1 - eta)])
        omega = gen.random(2 * G.num_edges) < self.p
        labels = component_labels(2 * n, lu[omega], lv[omega])
        size = int(np.count_nonzero(labels == labels[G.origin]))
        hit = bool(gen.random() < 1.0 - math.exp(-self.h * size))
        return size, hit


@dataclass
class MhEstimate:
    m_hat: float
    stderr: float
    trials: int


def estimate_m_h(G: BaseGraph, p: float, h: float, q: float, trials: int, seed: int, workers: int = 1) -> MhEstimate:
    from liftperc.parallel import run_task

    task = GhostOverlapTask(G, q, p, h, seed, ("mh", G.kind, float(q), float(p), float(h)))
    out = run_task(task, trials, workers)
    hits = np.array([t[1] for t in out], dtype=float)
    m = float(hits.mean())
    se = math.sqrt(max(m * (1 - m), 0.25 / trials) / trials)
    return MhEstimate(m_hat=m, stderr=se, trials=trials)


# ---------------------------------------------------------------------------
# remaining graphs
# ---------------------------------------------------------------------------

@dataclass
class RemainingGraph:
    """The conditioned graph left after deleting a connected explored set.

    C_star holds the twin shadow: survivors whose twin vertex was deleted.
    Surviving edges are typed by how many endpoints they have in C_star;
    those endpoints are forced by the conditioning, so a type-1 edge keeps
    exactly one random endpoint and a type-2 edge is fully determined.
    """

    base: BaseGraph
    C_o: np.ndarray
    g_o: Dict[int, Tuple[int, ...]]
    E_o: np.ndarray
    survivors: np.ndarray
    surviving_vertices: np.ndarray
    C_star: np.ndarray
    type_of: Dict[int, int]
    E0: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    known_endpoints: Dict[int, Tuple[int, ...]]
    base_edge_class: Dict[int, str]  # "pair0" | "t1" | "t2" | "deleted"
    _combos: Optional[list] = field(default=None, repr=False, compare=False)

    @property
    def num_base_vertices(self) -> int:
        return self.base.num_vertices


def build_remaining_graph(base: BaseGraph, C_o, g_o: Dict[int, Tuple[int, ...]]) -> RemainingGraph:
    """Classify the survivors of deleting (C_o, g_o) from the lift.

    Rejects a C_o that is not connected through shared g_o edges, or a g_o
    inconsistent with every structure realization.
    """
    n = base.num_vertices
    C_o = np.array(sorted(int(x) for x in C_o), dtype=np.int64)
    if C_o.size == 0:
        raise GraphInputError("C_o must be non-empty")
    cset = set(C_o.tolist())
    if set(g_o) != cset:
        raise GraphInputError("g_o must be defined exactly on C_o")
    for x, ks in g_o.items():
        bx = x % n
        if sorted(k // 2 for k in ks) != sorted(e for e, _ in base.adjacency[bx]):
            raise GraphInputError("g_o must list one lift of each base edge at the vertex")
    if C_o.size > 1:
        incidence: Dict[int, List[int]] = {}
        for x, ks in g_o.items():
            for k in ks:
                incidence.setdefault(int(k), []).append(int(x))
        adj: Dict[int, set] = {int(x): set() for x in C_o}
        for k, xs in incidence.items():
            if len(xs) == 2:
                if xs[0] % n == xs[1] % n:
                    raise GraphInputError("an edge cannot attach two lifts of one vertex")
                adj[xs[0]].add(xs[1])
                adj[xs[1]].add(xs[0])
            elif len(xs) > 2:
                raise GraphInputError("an edge cannot attach three vertices")
        seen = {int(C_o[0])}
        stack = [int(C_o[0])]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        if seen != cset:
            raise GraphInputError("C_o is not connected under g_o")

    E_o = sorted({int(k) for ks in g_o.values() for k in ks})
    eo_set = set(E_o)
    twin = lambda x: x + n if x < n else x - n
    C_star = np.array(sorted(twin(int(x)) for x in C_o if twin(int(x)) not in cset), dtype=np.int64)

    anchors: Dict[int, List[int]] = {}
    for x, ks in g_o.items():
        for k in ks:
            anchors.setdefault(int(k), []).append(int(x))

    type_of: Dict[int, int] = {}
    known: Dict[int, Tuple[int, ...]] = {}
    base_class: Dict[int, str] = {}
    survivors = []
    for e in range(base.num_edges):
        k0, k1 = 2 * e, 2 * e + 1
        s0, s1 = k0 not in eo_set, k1 not in eo_set
        if s0 and s1:
            base_class[e] = "pair0"
            type_of[k0] = type_of[k1] = 0
            survivors += [k0, k1]
        elif not s0 and not s1:
            base_class[e] = "deleted"
        else:
            k_dead = k0 if not s0 else k1
            k_live = k1 if not s0 else k0
            forced = tuple(sorted(twin(x) for x in anchors[k_dead]))
            if any(f in cset for f in forced):
                raise GraphInputError("g_o forces a surviving edge onto a deleted vertex")
            known[k_live] = forced
            type_of[k_live] = len(forced)
            base_class[e] = "t1" if len(forced) == 1 else "t2"
            survivors.append(k_live)

    survivors = np.array(sorted(survivors), dtype=np.int64)
    surviving_vertices = np.array([x for x in range(2 * n) if x not in cset], dtype=np.int64)
    rg = RemainingGraph(
        base=base,
        C_o=C_o,
        g_o={int(x): tuple(ks) for x, ks in g_o.items()},
        E_o=np.array(E_o, dtype=np.int64),
        survivors=survivors,
        surviving_vertices=surviving_vertices,
        C_star=C_star,
        type_of=type_of,
        E0=np.array([k for k in survivors if type_of[int(k)] == 0], dtype=np.int64),
        E1=np.array([k for k in survivors if type_of[int(k)] == 1], dtype=np.int64),
        E2=np.array([k for k in survivors if type_of[int(k)] == 2], dtype=np.int64),
        known_endpoints=known,
        base_edge_class=base_class,
    )
    if not structure_combos(rg):
        raise GraphInputError("g_o admits no structure realization")
    return rg


def remaining_graph_from_exploration(sf: StructureFunctions, trace: ExplorationTrace) -> RemainingGraph:
    return build_remaining_graph(sf.base, trace.cluster, trace.g_o)


def structure_combos(rg: RemainingGraph) -> list:
    """Per base edge, the (eta, label) pairs consistent with g_o.

    Deleted pairs keep all four combos (their structure is unconstrained by
    the survivors and gets resampled by the coupling anyway).
    """
    if rg._combos is not None:
        return rg._combos
    base = rg.base
    n = base.num_vertices
    cset = set(rg.C_o.tolist())
    anchors: Dict[int, List[int]] = {}
    for x, ks in rg.g_o.items():
        for k in ks:
            anchors.setdefault(int(k), []).append(int(x))
    combos_all = []
    for e in range(base.num_edges):
        u, v = int(base.edges[e, 0]), int(base.edges[e, 1])
        combos = []
        for eta, lab in itertools.product((0, 1), repeat=2):
            ok = True
            for slot in (0, 1):
                k = 2 * e + slot
                if slot == lab:
                    ends = (u, v + n * eta)
                else:
                    ends = (u + n, v + n * (1 - eta))
                for z in ends:
                    if z in cset and k not in rg.g_o[z]:
                        ok = False
                for z in anchors.get(k, ()):
                    if z not in ends:
                        ok = False
            if ok:
                combos.append((eta, lab))
        if not combos:
            rg._combos = []
            return []
        combos_all.append(combos)
    rg._combos = combos_all
    return combos_all


@dataclass
class RemainingRealization:
    """One sample of the conditioned structure on the survivors."""

    rg: RemainingGraph
    eta_r: np.ndarray
    label_r: np.ndarray

    def endpoints(self, k: int) -> Tuple[int, int]:
        return _endpoints_of(self.rg.base, self.eta_r, self.label_r, k)


def sample_remaining_structure(rg: RemainingGraph, q: float, rng: np.random.Generator) -> RemainingRealization:
    """Draw the surviving structure from the conditioned law.

    Per base edge the consistent (eta, label) combos are weighted by the
    eta prior (labels are uniform); type-2 edges have a single combo,
    type-1 edges two, untouched pairs four.
    """
    combos_all = structure_combos(rg)
    E = rg.base.num_edges
    eta_r = np.zeros(E, dtype=np.int8)
    label_r = np.zeros(E, dtype=np.int8)
    for e in range(E):
        combos = combos_all[e]
        if len(combos) == 1:
            eta_r[e], label_r[e] = combos[0]
            continue
        weights = [q if c[0] else 1.0 - q for c in combos]
        total = sum(weights)
        pick = rng.random() * total
        acc = 0.0
        for c, w in zip(combos, weights):
            acc += w
            if pick < acc or c is combos[-1]:
                eta_r[e], label_r[e] = c
                break
    real = RemainingRealization(rg=rg, eta_r=eta_r, label_r=label_r)
    for k, forced in rg.known_endpoints.items():
        if not set(forced) <= set(real.endpoints(k)):
            raise AssertionError("sampled structure contradicts the forced endpoints")
    return real


def enumerate_remaining_structures(rg: RemainingGraph, q: Fraction):
    """Yield (weight, realization) over the exact conditioned law."""
    q = Fraction(q)
    combos_all = structure_combos(rg)
    E = rg.base.num_edges
    weighted = []
    for combos in combos_all:
        ws = [q if c[0] else 1 - q for c in combos]
        total = sum(ws)
        weighted.append([(c, w / total) for c, w in zip(combos, ws)])
    for assignment in itertools.product(*weighted):
        weight = Fraction(1)
        eta_r = np.zeros(E, dtype=np.int8)
        label_r = np.zeros(E, dtype=np.int8)
        for e, (c, w) in enumerate(assignment):
            weight *= w
            eta_r[e], label_r[e] = c
        yield weight, RemainingRealization(rg=rg, eta_r=eta_r, label_r=label_r)


# ---------------------------------------------------------------------------
# the hole-filling coupling
# ---------------------------------------------------------------------------

class CoinSource:
    """Randomness for the coupling, injectable so tests can enumerate it."""

    def __init__(self, rng: np.random.Generator, p: float, q: float):
        self.rng = rng
        self.p = p
        self.q = q

    def half(self) -> int:
        return int(self.rng.random() < 0.5)

    def switch(self) -> int:
        return int(self.rng.random() < self.q)

    def perc(self) -> int:
        return int(self.rng.random() < self.p)


class TapeCoins:
    """Coins read from fixed tapes; used by the exact enumeration."""

    def __init__(self, half_tape, switch_tape, perc_tape):
        self.tapes = {"half": tuple(half_tape), "switch": tuple(switch_tape), "perc": tuple(perc_tape)}
        self.used = {"half": 0, "switch": 0, "perc": 0}

    def _draw(self, name):
        i = self.used[name]
        if i >= len(self.tapes[name]):
            raise IndexError(f"{name} tape exhausted")
        self.used[name] = i + 1
        return int(self.tapes[name][i])

    def half(self):
        return self._draw("half")

    def switch(self):
        return self._draw("switch")

    def perc(self):
        return self._draw("perc")


def coupling_tape_lengths(rg: RemainingGraph) -> Tuple[int, int, int]:
    """Upper bounds on (half, switch, perc) coin usage for one run."""
    n_t2 = sum(1 for c in rg.base_edge_class.values() if c == "t2")
    n_del = sum(1 for c in rg.base_edge_class.values() if c == "deleted")
    n_half = n_t2 + n_del + len(rg.C_star) + rg.E1.size
    n_switch = n_t2 + n_del
    n_perc = 2 * n_del + rg.E1.size + rg.E2.size
    return n_half, n_switch, n_perc


@dataclass
class RemainingCoupling:
    """Output of one coupling run: a full-lift configuration plus the
    association data needed to audit it."""

    eta_star: np.ndarray
    label_star: np.ndarray
    omega_star: np.ndarray  # per abstract edge id
    a_vertex: Dict[int, int]
    a_edge: Dict[int, int]
    H: Dict[int, int]
    roots: List[Tuple[int, int]]
    pioneers: List[Tuple[int, int, int]]  # (surviving edge id, from, to)

    def structure(self, base: BaseGraph) -> StructureFunctions:
        return StructureFunctions(base, self.eta_star, self.label_star)

    def key(self) -> tuple:
        return (
            tuple(int(x) for x in self.eta_star),
            tuple(int(x) for x in self.label_star),
            tuple(int(x) for x in self.omega_star),
        )


def couple_remaining_to_full(
    rg: RemainingGraph,
    real: RemainingRealization,
    omega_r: np.ndarray,
    coins,
) -> RemainingCoupling:
    """Rebuild a full-lift configuration (omega*, f*) around the hole.

    Type-0 edges are copied.  Type-2 and deleted structure is resampled
    fresh; an association `a` maps twin-shadow vertices and typed edges to
    lifts of the new graph by walking the type-2 edges from lexicographic
    roots (root levels are fair coins; vertices discovered through open
    edges become pioneer targets, and the walk lifts pioneer edges
    exactly).  A type-1 edge picks its abstract label with a fair coin and
    joins the image of its forced endpoint to its surviving random
    endpoint verbatim.  Associated edges carry their old percolation bits;
    twins and deleted pairs get fresh fills.

    Coin order is fixed: fresh structure per ascending base edge, deleted
    percolation fills per ascending base edge, root level coins in walk
    order, label coins per ascending type-1 edge, percolation fills per
    ascending associated edge.
    """
    base = rg.base
    n = base.num_vertices
    E = base.num_edges
    omega_r = np.asarray(omega_r, dtype=np.uint8)
    eta_star = np.full(E, -1, dtype=np.int8)
    label_star = np.full(E, -1, dtype=np.int8)
    omega_star = np.full(2 * E, -1, dtype=np.int8)

    for e in range(E):
        cls = rg.base_edge_class[e]
        if cls == "pair0":
            eta_star[e] = real.eta_r[e]
            label_star[e] = real.label_r[e]
            omega_star[2 * e] = omega_r[2 * e]
            omega_star[2 * e + 1] = omega_r[2 * e + 1]
        elif cls in ("t2", "deleted"):
            eta_star[e] = coins.switch()
            label_star[e] = coins.half()
    for e in range(E):
        if rg.base_edge_class[e] == "deleted":
            omega_star[2 * e] = coins.perc()
            omega_star[2 * e + 1] = coins.perc()

    a_vertex: Dict[int, int] = {}
    H: Dict[int, int] = {}
    a_edge: Dict[int, int] = {}
    roots: List[Tuple[int, int]] = []
    pioneers: List[Tuple[int, int, int]] = []

    e2_list = [int(k) for k in rg.E2]
    done = set()
    S: set = set()
    c_star_sorted = [int(x) for x in rg.C_star]

    def fresh_lift_at(e: int, endpoint: int) -> int:
        for slot in (0, 1):
            k = 2 * e + slot
            if endpoint in _endpoints_of(base, eta_star, label_star, k):
                return k
        raise AssertionError("no fresh lift touches the associated endpoint")

    while len(S) < len(c_star_sorted):
        root = next(x for x in c_star_sorted if x not in S)
        delta = coins.half()
        a_vertex[root] = (root % n) + n * delta
        H[root] = delta
        roots.append((root, delta))
        S.add(root)
        while True:
            found = None
            for k in e2_list:
                if k in done:
                    continue
                x1, x2 = real.endpoints(k)
                in1, in2 = x1 in S, x2 in S
                if in1 or in2:
                    if in1 and in2:
                        found = (k, min(x1, x2), max(x1, x2))
                    elif in1:
                        found = (k, x1, x2)
                    else:
                        found = (k, x2, x1)
                    break
            if found is None:
                break
            k, x, y = found
            ke = fresh_lift_at(k // 2, a_vertex[x])
            a_edge[k] = ke
            pa, pb = _endpoints_of(base, eta_star, label_star, ke)
            other = pb if pa == a_vertex[x] else pa
            if omega_r[k] == 1 and y not in a_vertex:
                a_vertex[y] = other
                H[y] = other // n
                S.add(y)
                pioneers.append((k, x, y))
            done.add(k)
    if len(done) != len(e2_list):
        raise AssertionError("type-2 edges left unassociated")

    # type-1 edges: fair label coin; the image joins the forced endpoint's
    # association to the surviving random endpoint verbatim
    for k in sorted(int(x) for x in rg.E1):
        e = k // 2
        x = rg.known_endpoints[k][0]
        ends = real.endpoints(k)
        y_j = ends[0] if ends[1] == x else ends[1]
        lab_coin = coins.half()
        a_edge[k] = 2 * e + lab_coin
        ax = a_vertex[x]
        u = int(base.edges[e, 0])
        if ax % n == u:
            u_level, v_level = ax // n, y_j // n
        else:
            u_level, v_level = y_j // n, ax // n
        eta_star[e] = u_level ^ v_level
        # the label is the slot of the u_0-side edge; slot lab_coin carries
        # the physical edge whose u-level is u_level
        label_star[e] = lab_coin if u_level == 0 else lab_coin ^ 1
        eps = x // n
        if (int(real.eta_r[e]) ^ eps) != (int(eta_star[e]) ^ H[x]):
            raise AssertionError("height relation violated on a type-1 edge")
        omega_star[a_edge[k]] = omega_r[k]
    for k in e2_list:
        omega_star[a_edge[k]] = omega_r[k]
    for k in sorted(a_edge):
        omega_star[a_edge[k] ^ 1] = coins.perc()

    if (eta_star < 0).any() or (label_star < 0).any() or (omega_star < 0).any():
        raise AssertionError("coupling left part of the configuration undefined")
    out = RemainingCoupling(
        eta_star=eta_star.astype(np.uint8),
        label_star=label_star.astype(np.uint8),
        omega_star=omega_star.astype(np.uint8),
        a_vertex=a_vertex,
        a_edge=a_edge,
        H=H,
        roots=roots,
        pioneers=pioneers,
    )
    _audit_coupling(rg, real, omega_r, out)
    return out


def _audit_coupling(rg: RemainingGraph, real: RemainingRealization, omega_r, out: RemainingCoupling):
    base = rg.base
    values = list(out.a_edge.values())
    if len(values) != len(set(values)):
        raise AssertionError("edge association is not injective")
    for k, ke in out.a_edge.items():
        if omega_r[k] == 1 and out.omega_star[ke] != 1:
            raise AssertionError("an open surviving edge maps to a closed lift")
        ends = set(_endpoints_of(base, out.eta_star, out.label_star, ke))
        if rg.type_of[int(k)] == 1:
            x = rg.known_endpoints[k][0]
            e1, e2 = real.endpoints(k)
            y_j = e1 if e2 == x else e2
            if ends != {out.a_vertex[x], y_j}:
                raise AssertionError("type-1 image does not join a(x) to the kept endpoint")
        else:
            x1, x2 = real.endpoints(k)
            if not ends & {out.a_vertex[x1], out.a_vertex.get(x2, -1)}:
                raise AssertionError("type-2 image misses both associated endpoints")
    targets = [y for _, _, y in out.pioneers]
    if len(targets) != len(set(targets)):
        raise AssertionError("pioneer forest has in-degree above one")
    root_set = {root for root, _ in out.roots}
    if root_set & set(targets):
        raise AssertionError("a pioneer edge points at a root")
    for k, x, y in out.pioneers:
        if omega_r[k] != 1:
            raise AssertionError("a closed edge became a pioneer")
        ends = set(_endpoints_of(base, out.eta_star, out.label_star, out.a_edge[k]))
        if ends != {out.a_vertex[x], out.a_vertex[y]}:
            raise AssertionError("association does not lift the pioneer forest")


def run_remaining_coupling(
    rg: RemainingGraph,
    p: float,
    q: float,
    rng: np.random.Generator,
) -> Tuple[RemainingRealization, np.ndarray, RemainingCoupling]:
    """Sample a remaining-graph configuration and couple it to a full one.

    Law equality of the output against direct lift percolation holds at
    q = 1/2 only; other q still run but only the domination checks apply.
    """
    real = sample_remaining_structure(rg, q, rng)
    omega_r = np.zeros(2 * rg.base.num_edges, dtype=np.uint8)
    surv = rg.survivors
    bits = rng.random(surv.size) < p
    omega_r[surv] = bits
    coupling = couple_remaining_to_full(rg, real, omega_r, CoinSource(rng, p, q))
    return real, omega_r, coupling


# ---------------------------------------------------------------------------
# exact law equality on tiny instances
# ---------------------------------------------------------------------------

def exact_coupling_distribution(rg: RemainingGraph, p, q=Fraction(1, 2)) -> Dict[tuple, Fraction]:
    """Exact output law of the coupling over every input and coin tape.

    Enumerates the conditioned structure, the survivor percolation bits,
    and full coin tapes; unconsumed tape suffixes marginalize out because
    the whole product space is weighted.
    """
    p = Fraction(p)
    q = Fraction(q)
    if q != Fraction(1, 2):
        raise ValueError("the law-equality claim is specific to q = 1/2")
    n_half, n_switch, n_perc = coupling_tape_lengths(rg)
    surv = [int(k) for k in rg.survivors]
    dist: Dict[tuple, Fraction] = {}

    def bit_weight(bits, one_w):
        w = Fraction(1)
        for b in bits:
            w *= one_w if b else (1 - one_w)
        return w

    for w_struct, real in enumerate_remaining_structures(rg, q):
        for omega_bits in itertools.product((0, 1), repeat=len(surv)):
            omega_r = np.zeros(2 * rg.base.num_edges, dtype=np.uint8)
            for k, b in zip(surv, omega_bits):
                omega_r[k] = b
            w_omega = bit_weight(omega_bits, p)
            for half_bits in itertools.product((0, 1), repeat=n_half):
                w_half = Fraction(1, 2 ** n_half)
                for switch_bits in itertools.product((0, 1), repeat=n_switch):
                    w_switch = bit_weight(switch_bits, q)
                    for perc_bits in itertools.product((0, 1), repeat=n_perc):
                        w = w_struct * w_omega * w_half * w_switch * bit_weight(perc_bits, p)
                        if w == 0:
                            continue
                        coins = TapeCoins(half_bits, switch_bits, perc_bits)
                        out = couple_remaining_to_full(rg, real, omega_r, coins)
                        key = out.key()
                        dist[key] = dist.get(key, Fraction(0)) + w
    total = sum(dist.values())
    assert total == 1, f"coupling law does not sum to one: {total}"
    return dist


def exact_direct_distribution(G: BaseGraph, p, q=Fraction(1, 2)) -> Dict[tuple, Fraction]:
    """Exact law of (eta, label, omega) under direct lift percolation."""
    p = Fraction(p)
    q = Fraction(q)
    E = G.num_edges
    dist: Dict[tuple, Fraction] = {}
    for eta in itertools.product((0, 1), repeat=E):
        w_eta = Fraction(1)
        for b in eta:
            w_eta *= q if b else (1 - q)
        for label in itertools.product((0, 1), repeat=E):
            w_lab = Fraction(1, 2**E)
            for omega in itertools.product((0, 1), repeat=2 * E):
                w = w_eta * w_lab
                for b in omega:
                    w *= p if b else (1 - p)
                if w == 0:
                    continue
                key = (eta, label, omega)
                dist[key] = dist.get(key, Fraction(0)) + w
    return dist


def total_variation(d1: Dict[tuple, Fraction], d2: Dict[tuple, Fraction]) -> Fraction:
    keys = set(d1) | set(d2)
    return sum((abs(d1.get(k, Fraction(0)) - d2.get(k, Fraction(0))) for k in keys), Fraction(0)) / 2


# ---------------------------------------------------------------------------
# survivor clusters and the domination check
# ---------------------------------------------------------------------------

def survivor_component_labels(rg: RemainingGraph, real: RemainingRealization, omega_r) -> np.ndarray:
    """Components of the remaining graph under its own percolation."""
    n2 = 2 * rg.base.num_vertices
    us, vs = [], []
    for k in rg.survivors:
        k = int(k)
        if omega_r[k]:
            x, y = real.endpoints(k)
            us.append(x)
            vs.append(y)
    return component_labels(n2, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64))


def full_component_labels(base: BaseGraph, out: RemainingCoupling) -> np.ndarray:
    n2 = 2 * base.num_vertices
    us, vs = [], []
    for k in range(2 * base.num_edges):
        if out.omega_star[k]:
            x, y = _endpoints_of(base, out.eta_star, out.label_star, k)
            us.append(x)
            vs.append(y)
    return component_labels(n2, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64))


def domination_violations(
    rg: RemainingGraph,
    real: RemainingRealization,
    omega_r,
    out: RemainingCoupling,
    green_base,
) -> int:
    """Count surviving vertices whose remaining-graph cluster meets the
    green set while the cluster of their association image does not.

    green_base lists base vertices; a lifted vertex is green when its
    projection is.  Twin-closed green sets make the domination exact per
    sample because the association moves vertices only within their fiber.
    """
    n = rg.base.num_vertices
    lab_r = survivor_component_labels(rg, real, omega_r)
    lab_f = full_component_labels(rg.base, out)
    green_mask = np.zeros(2 * n, dtype=bool)
    for b in green_base:
        green_mask[int(b)] = True
        green_mask[int(b) + n] = True
    cset = set(rg.C_o.tolist())
    green_surv = [int(x) for x in np.flatnonzero(green_mask) if int(x) not in cset]
    green_labels_r = {int(lab_r[x]) for x in green_surv}
    green_labels_f = {int(lab_f[x]) for x in np.flatnonzero(green_mask)}
    bad = 0
    for x in rg.surviving_vertices:
        x = int(x)
        if int(lab_r[x]) in green_labels_r:
            ax = out.a_vertex.get(x, x)
            if int(lab_f[ax]) not in green_labels_f:
                bad += 1
    return bad


# ---------------------------------------------------------------------------
# the exponential-decay inequality
# ---------------------------------------------------------------------------

@dataclass
class ExpInequalityReport:
    p: float
    h: float
    s_hat: float
    s_clamped: bool
    m_hat: float
    m_stderr: float
    trials: int
    ns: np.ndarray
    psi_p: np.ndarray
    psi_s: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    pooled_se: np.ndarray
    max_margin_sigmas: float

    def rows(self):
        for i, n in enumerate(self.ns):
            yield {
                "n": int(n),
                "psi_p": float(self.psi_p[i]),
                "psi_s": float(self.psi_s[i]),
                "bound": float(self.bound[i]),
                "margin": float(self.margin[i]),
                "pooled_se": float(self.pooled_se[i]),
            }


def verify_exp_inequality(
    G: BaseGraph,
    p: float,
    h: float,
    trials: int,
    seed: int,
    q: float = 0.5,
    n_max: int = 30,
    n_min: int = 2,
    workers: int = 1,
) -> ExpInequalityReport:
    """Check psi_n(s) <= psi_n(p) e^{-hn} / (1 - m_h(p)) at s = p(1 - 2 m_h(p)).

    Stage one estimates m_h(p) and psi_n(p) from one batch of cluster sizes
    (m_h via the conditional overlap probability 1 - e^{-h|C|}, same mean
    as indicator sampling with lower variance); stage two measures psi_n at
    the plug-in s, clamped to [0, 1].  The pooled stderr combines both psi
    errors plus the m_h error through the bound's derivative; the plug-in
    error of s itself is second order and not propagated.
    """
    from liftperc.estimators import psi_from_sizes, sample_cluster_sizes

    sizes_p = sample_cluster_sizes(G, p, trials, seed, q=q, tag_extra=("exp-p",), workers=workers)
    overlap = 1.0 - np.exp(-h * sizes_p.astype(float))
    m_hat = float(overlap.mean())
    m_se = float(overlap.std(ddof=1) / math.sqrt(trials))
    s_raw = p * (1.0 - 2.0 * m_hat)
    s_hat = min(1.0, max(0.0, s_raw))
    sizes_s = sample_cluster_sizes(G, s_hat, trials, seed, q=q, tag_extra=("exp-s",), workers=workers)
    curve_p = psi_from_sizes(sizes_p, n_max)
    curve_s = psi_from_sizes(sizes_s, n_max)
    keep = curve_p.ns >= n_min
    ns = curve_p.ns[keep]
    psi_p = curve_p.psi_hat[keep]
    psi_s = curve_s.psi_hat[keep]
    se_p = curve_p.stderr[keep]
    se_s = curve_s.stderr[keep]
    factor = np.exp(-h * ns) / (1.0 - m_hat)
    bound = psi_p * factor
    margin = psi_s - bound
    dm = psi_p * np.exp(-h * ns) / (1.0 - m_hat) ** 2
    pooled = np.sqrt(se_s**2 + (factor * se_p) ** 2 + (dm * m_se) ** 2)
    return ExpInequalityReport(
        p=p,
        h=h,
        s_hat=s_hat,
        s_clamped=(s_hat != s_raw),
        m_hat=m_hat,
        m_stderr=m_se,
        trials=trials,
        ns=ns,
        psi_p=psi_p,
        psi_s=psi_s,
        bound=bound,
        margin=margin,
        pooled_se=pooled,
        max_margin_sigmas=float((margin / pooled).max()),
    )
