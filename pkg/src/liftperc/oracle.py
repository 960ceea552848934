"""Exact brute-force computations on tiny instances.

Everything here enumerates configuration spaces outright and sums exact
rational weights, so the results serve as ground truth for the Monte Carlo
estimators and the coupling verifications.  Hard size guards reject inputs
whose enumeration would not terminate at desk scale.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Dict, Optional, Tuple

import numpy as np

from liftperc.graphs import BaseGraph, build_custom
from liftperc.lift import LiftedGraph, gauge_eta

ETA_ENUM_MAX_EDGES = 24
JOINT_ENUM_MAX_EDGES = 9
KERNEL_MAX_VERTICES = 16


class SizeGuardError(ValueError):
    """Raised when an exact enumeration would exceed the size guard."""


class _DSU:
    __slots__ = ("parent",)

    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
            return True
        return False


def _lift_endpoint_table(G: BaseGraph):
    """Per base edge, the lifted endpoint pairs for eta = 0 and eta = 1."""
    n = G.num_vertices
    table = []
    for u, v in G.edges:
        u, v = int(u), int(v)
        table.append((((u, v), (u + n, v + n)), ((u, v + n), (u + n, v))))
    return table


def lift_is_connected(G: BaseGraph, eta) -> bool:
    n = G.num_vertices
    dsu = _DSU(2 * n)
    comp = 2 * n
    table = _lift_endpoint_table(G)
    for k, bit in enumerate(eta):
        for a, b in table[k][bit]:
            if dsu.union(a, b):
                comp -= 1
    return comp == 1


def exact_disconnection_probability(G: BaseGraph) -> Fraction:
    """P(the lift at q = 1/2 is disconnected), by full eta enumeration.

    Asserts the closed form 2^(|V|-|E|-1) before returning; a mismatch
    would mean the lift construction itself is broken.
    """
    E = G.num_edges
    if E > ETA_ENUM_MAX_EDGES:
        raise SizeGuardError(f"|E| = {E} exceeds the eta enumeration bound {ETA_ENUM_MAX_EDGES}")
    bad = 0
    table = _lift_endpoint_table(G)
    nv2 = 2 * G.num_vertices
    for code in range(1 << E):
        dsu = _DSU(nv2)
        comp = nv2
        for k in range(E):
            for a, b in table[k][(code >> k) & 1]:
                if dsu.union(a, b):
                    comp -= 1
        if comp != 1:
            bad += 1
    result = Fraction(bad, 1 << E)
    expected = Fraction(1, 1) * Fraction(2) ** (G.num_vertices - E - 1)
    assert result == expected, (
        f"enumeration {result} != closed form {expected} on {G.kind}"
    )
    return result


def gauge_orbit_kernel(G: BaseGraph):
    """All vertex sets whose gauge transformation fixes every eta.

    A set acts trivially iff its edge boundary is empty; for a connected
    graph that means the empty set and the full vertex set.
    """
    n = G.num_vertices
    if n > KERNEL_MAX_VERTICES:
        raise SizeGuardError(f"|V| = {n} exceeds the subset enumeration bound {KERNEL_MAX_VERTICES}")
    u, v = G.edge_endpoints()
    kernel = []
    for code in range(1 << n):
        mask = [(code >> i) & 1 for i in range(n)]
        if all(mask[a] == mask[b] for a, b in zip(u, v)):
            kernel.append(frozenset(i for i in range(n) if mask[i]))
    return kernel


# ---------------------------------------------------------------------------
# joint (eta, omega) enumeration
# ---------------------------------------------------------------------------

def _check_joint_guard(G: BaseGraph):
    if G.num_edges > JOINT_ENUM_MAX_EDGES:
        raise SizeGuardError(
            f"|E| = {G.num_edges} exceeds the joint enumeration bound {JOINT_ENUM_MAX_EDGES}"
        )


def _eta_weight(eta_code: int, E: int, q: Fraction) -> Fraction:
    k = bin(eta_code).count("1")
    return q**k * (1 - q) ** (E - k)


def _iter_eta_omega(G: BaseGraph, q, p):
    """Yield (weight, lifted open edge list) over the full joint space."""
    q = Fraction(q)
    p = Fraction(p)
    E = G.num_edges
    table = _lift_endpoint_table(G)
    for eta_code in range(1 << E):
        pairs = []
        for k in range(E):
            pairs.extend(table[k][(eta_code >> k) & 1])
        wq = _eta_weight(eta_code, E, q)
        if wq == 0:
            continue
        m = 2 * E
        for omega_code in range(1 << m):
            kk = bin(omega_code).count("1")
            wp = p**kk * (1 - p) ** (m - kk)
            if wp == 0:
                continue
            open_pairs = [pairs[j] for j in range(m) if (omega_code >> j) & 1]
            yield wq * wp, open_pairs


def exact_two_point(G: BaseGraph, q, p, u: int, v: int, u_level: int = 0, v_level: int = 0) -> Fraction:
    """P(u_level and v_level lie in one open cluster of the percolated lift)."""
    _check_joint_guard(G)
    n = G.num_vertices
    a = u + u_level * n
    b = v + v_level * n
    total = Fraction(0)
    for w, open_pairs in _iter_eta_omega(G, q, p):
        dsu = _DSU(2 * n)
        for x, y in open_pairs:
            dsu.union(x, y)
        if dsu.find(a) == dsu.find(b):
            total += w
    return total


def exact_cluster_size_pmf(G: BaseGraph, q, p, origin: int = 0, origin_level: int = 0) -> Dict[int, Fraction]:
    """Exact law of |cluster of the origin lift| under the joint measure."""
    _check_joint_guard(G)
    n = G.num_vertices
    o = origin + origin_level * n
    pmf: Dict[int, Fraction] = {}
    for w, open_pairs in _iter_eta_omega(G, q, p):
        dsu = _DSU(2 * n)
        for x, y in open_pairs:
            dsu.union(x, y)
        root = dsu.find(o)
        size = sum(1 for x in range(2 * n) if dsu.find(x) == root)
        pmf[size] = pmf.get(size, Fraction(0)) + w
    return pmf


def exact_cluster_tail(G: BaseGraph, q, p, origin: int = 0, n_threshold: int = 1, origin_level: int = 0) -> Fraction:
    """P(|cluster of the origin lift| >= n_threshold), exact."""
    pmf = exact_cluster_size_pmf(G, q, p, origin, origin_level)
    return sum((w for s, w in pmf.items() if s >= n_threshold), Fraction(0))


def exact_ghost_overlap(G: BaseGraph, q, p, h: float, origin: int = 0, origin_level: int = 0) -> float:
    """P(the origin cluster meets an iid green set of density 1 - e^{-h})."""
    pmf = exact_cluster_size_pmf(G, q, p, origin, origin_level)
    return float(sum(float(w) * (1.0 - math.exp(-h * s)) for s, w in pmf.items()))


# ---------------------------------------------------------------------------
# exact joint law of the square-root continuity coupling
# ---------------------------------------------------------------------------

def _exact_sqrt(x: Fraction) -> Optional[Fraction]:
    num, den = x.numerator, x.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    return None


@dataclass
class HolderJoint:
    """Exact per-edge joint law of (omega_plus, omega_minus, eta_hat, eta_bar).

    Built by partitioning the driving uniform into [0,q], (q,a], (a,q+r],
    (q+r,1] and weighting each cell with the auxiliary coin probabilities.
    Arithmetic is exact rational when sqrt(r) is rational, else float.
    """

    q: Fraction
    r: Fraction
    a: Fraction
    exact: bool
    sqrt_r: object
    A: object
    p_plus: object
    q_hat: object
    table: Dict[Tuple[int, int, int, int], object] = field(default_factory=dict)

    def prob(self, **conditions):
        names = ("omega_plus", "omega_minus", "eta_hat", "eta_bar")
        unknown = set(conditions) - set(names)
        if unknown:
            raise KeyError(f"unknown coordinates: {sorted(unknown)}")
        total = 0
        for key, w in self.table.items():
            if all(key[names.index(k)] == val for k, val in conditions.items()):
                total += w
        return total


def exact_holder_joint(q, r, a) -> HolderJoint:
    q, r, a = Fraction(q), Fraction(r), Fraction(a)
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    if not 0 <= q <= 1 - r:
        raise ValueError("q must lie in [0, 1 - r]")
    if not q <= a <= q + r:
        raise ValueError("a must lie in [q, q + r]")
    sq = _exact_sqrt(r)
    exact = sq is not None
    if exact:
        sqrt_r = sq
        one = Fraction(1)
    else:
        sqrt_r = math.sqrt(float(r))
        q, r, a = float(q), float(r), float(a)
        one = 1.0
    A = 2 * sqrt_r * (one - sqrt_r) / (one - r)
    p_plus = one - sqrt_r
    q_hat = q / (one - r)

    # region lengths of the driving uniform
    reg = {
        "low": q,                 # eta_bar = 1, eta_hat = 1, omega coins
        "mid1": a - q,            # eta_bar = 1, omega = (0,0), eta_hat ~ q_hat
        "mid2": q + r - a,        # eta_bar = 0, omega = (0,0), eta_hat ~ q_hat
        "high": one - q - r,      # eta_bar = 0, eta_hat = 0, omega coins
    }
    omega_coins = {(1, 0): A / 2, (0, 1): A / 2, (1, 1): one - A}
    table: Dict[Tuple[int, int, int, int], object] = {}

    def add(key, w):
        if w != 0:
            table[key] = table.get(key, 0 * one) + w

    for (wp, wm), cw in omega_coins.items():
        add((wp, wm, 1, 1), reg["low"] * cw)
        add((wp, wm, 0, 0), reg["high"] * cw)
    for eb, length in ((1, reg["mid1"]), (0, reg["mid2"])):
        add((0, 0, 1, eb), length * q_hat)
        add((0, 0, 0, eb), length * (one - q_hat))

    joint = HolderJoint(
        q=Fraction(q) if exact else q,
        r=Fraction(r) if exact else r,
        a=Fraction(a) if exact else a,
        exact=exact,
        sqrt_r=sqrt_r,
        A=A,
        p_plus=p_plus,
        q_hat=q_hat,
        table=table,
    )
    total = sum(table.values())
    if exact:
        assert total == 1
    else:
        assert abs(total - 1.0) < 1e-12
    return joint


# ---------------------------------------------------------------------------
# graph corpus
# ---------------------------------------------------------------------------

def connected_graph_corpus(max_vertices: int = 5):
    """All labeled connected graphs on 1..max_vertices vertices."""
    yield build_custom([], num_vertices=1, kind="corpus:1:0")
    for n in range(2, max_vertices + 1):
        pairs = list(combinations(range(n), 2))
        for code in range(1 << len(pairs)):
            edges = [pairs[i] for i in range(len(pairs)) if (code >> i) & 1]
            if len(edges) < n - 1:
                continue
            if not _edges_connected(n, edges):
                continue
            yield build_custom(edges, num_vertices=n, kind=f"corpus:{n}:{code}")


def _edges_connected(n: int, edges) -> bool:
    dsu = _DSU(n)
    comp = n
    for a, b in edges:
        if dsu.union(a, b):
            comp -= 1
    return comp == 1


def oracle_record(graph_kind: str, q, p, quantity: str, value: Fraction) -> dict:
    """JSON-ready exact-result record."""
    return {
        "graph": graph_kind,
        "q": None if q is None else str(q),
        "p": None if p is None else str(p),
        "quantity": quantity,
        "value_num": value.numerator,
        "value_den": value.denominator,
    }
