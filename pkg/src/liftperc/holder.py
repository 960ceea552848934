"""Coupling behind the square-root modulus of continuity of p_c(q).

One uniform per base edge drives everything.  Thresholding it at a gives a
lift with switching rate a ("bar" side, all edges open); auxiliary coins
(X, Y, Z) turn the same uniforms into an independently-switched lift with
rate q/(1-r) whose edges are open with probability 1-sqrt(r) ("hat" side).
On every sample, open hat edges agree with the bar side's switching state,
so after a common p-thinning the hat cluster of the origin is contained in
the bar cluster.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from liftperc.graphs import BaseGraph, boundary_radius, distances_from
from liftperc.lift import LiftedGraph
from liftperc.perco import component_labels


@dataclass
class HolderParams:
    q: float
    r: float
    a: float

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")
        if not 0.0 <= self.q <= 1.0 - self.r:
            raise ValueError("q must lie in [0, 1 - r]")
        if not self.q <= self.a <= self.q + self.r:
            raise ValueError("a must lie in [q, q + r]")

    @property
    def sqrt_r(self) -> float:
        return math.sqrt(self.r)

    @property
    def A(self) -> float:
        return 2.0 * self.sqrt_r * (1.0 - self.sqrt_r) / (1.0 - self.r)

    @property
    def p_plus(self) -> float:
        return 1.0 - self.sqrt_r

    @property
    def q_hat(self) -> float:
        return self.q / (1.0 - self.r)


@dataclass
class HolderSample:
    """Per-edge driving variables and the four coupled outputs.

    Tie-breaking convention: the "closed window" for (omega_plus,
    omega_minus) and the coin window for eta_hat are both the half-open
    interval (q, q+r], and eta_bar is the indicator of [0, a].  With one
    fixed convention the coupling property below holds on every sample,
    not just almost surely.
    """

    params: HolderParams
    eta_uniform: np.ndarray
    X: np.ndarray  # +-1 coins
    Y: np.ndarray  # Bernoulli(A)
    Z: np.ndarray  # Bernoulli(q/(1-r))
    omega_plus: np.ndarray = field(init=False)
    omega_minus: np.ndarray = field(init=False)
    eta_hat: np.ndarray = field(init=False)
    eta_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        q, r, a = self.params.q, self.params.r, self.params.a
        u = self.eta_uniform
        window = (u > q) & (u <= q + r)
        wp = np.where(window, 0, np.where(self.Y == 1, (self.X > 0), 1)).astype(np.uint8)
        wm = np.where(window, 0, np.where(self.Y == 1, (self.X < 0), 1)).astype(np.uint8)
        self.omega_plus = wp
        self.omega_minus = wm
        self.eta_hat = np.where(u <= q, 1, np.where(window, self.Z, 0)).astype(np.uint8)
        self.eta_bar = (u <= a).astype(np.uint8)


def sample_holder(params: HolderParams, G: BaseGraph, rng: np.random.Generator) -> HolderSample:
    E = G.num_edges
    return HolderSample(
        params=params,
        eta_uniform=rng.random(E),
        X=np.where(rng.random(E) < 0.5, 1, -1),
        Y=(rng.random(E) < params.A).astype(np.uint8),
        Z=(rng.random(E) < params.q_hat).astype(np.uint8),
    )


def coupling_violations(sample: HolderSample) -> int:
    """Edges open on the hat side whose switching states disagree."""
    open_any = (sample.omega_plus | sample.omega_minus).astype(bool)
    return int(np.count_nonzero(open_any & (sample.eta_hat != sample.eta_bar)))


def verify_coupling_property(sample: HolderSample) -> bool:
    """Deterministic guarantee: every hat-open edge has eta_hat == eta_bar."""
    return coupling_violations(sample) == 0


@dataclass
class DominationReport:
    trials: int
    violations: int
    reach_hat: float
    reach_bar: float


def downward_domination_check(
    G: BaseGraph,
    p: float,
    params: HolderParams,
    trials: int,
    rng: np.random.Generator,
) -> DominationReport:
    """Run the full two-layer coupling and count domination failures.

    Per trial: build the hat lift (switching eta_hat, edges open where the
    omega coins say so) and the bar lift (switching eta_bar, all edges
    open), then thin both with one shared uniform per (base edge, slot).
    The origin reaching the boundary sphere on the hat side must imply the
    same on the bar side; the report counts counterexamples (always 0).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    n = G.num_vertices
    rad = boundary_radius(G)
    boundary = np.flatnonzero(distances_from(G, G.origin) == rad)
    boundary_lift = np.concatenate([boundary, boundary + n])
    origin = G.origin
    violations = 0
    hits_hat = 0
    hits_bar = 0
    for _ in range(trials):
        s = sample_holder(params, G, rng)
        thin = rng.random(2 * G.num_edges) < p
        hat = LiftedGraph(G, s.eta_hat)
        bar = LiftedGraph(G, s.eta_bar)
        omega_hat = np.empty(2 * G.num_edges, dtype=bool)
        omega_hat[0::2] = s.omega_plus.astype(bool)
        omega_hat[1::2] = s.omega_minus.astype(bool)
        omega_hat &= thin
        omega_bar = thin
        lab_hat = component_labels(2 * n, hat.lift_u[omega_hat], hat.lift_v[omega_hat])
        lab_bar = component_labels(2 * n, bar.lift_u[omega_bar], bar.lift_v[omega_bar])
        reach_hat = bool(np.any(lab_hat[boundary_lift] == lab_hat[origin]))
        reach_bar = bool(np.any(lab_bar[boundary_lift] == lab_bar[origin]))
        hits_hat += reach_hat
        hits_bar += reach_bar
        if reach_hat and not reach_bar:
            violations += 1
    return DominationReport(
        trials=trials,
        violations=violations,
        reach_hat=hits_hat / trials,
        reach_bar=hits_bar / trials,
    )


def holder_constant(alpha: float, beta: float) -> float:
    """Constant C with |p_c(q) - p_c(q')| <= C sqrt(|q - q'|) on [alpha, beta]."""
    if not 0.0 < alpha <= beta < 1.0:
        raise ValueError("need 0 < alpha <= beta < 1")
    return max(1.0 / math.sqrt(alpha), 1.0 / math.sqrt(1.0 - beta))


def holder_bound_check(qs, pc_hats, stderrs, margin_sigmas: float = 2.0):
    """Max over adjacent grid pairs of |dpc| - C sqrt(dq) - margin.

    Negative means no pair violates the square-root bound beyond the
    statistical margin.
    """
    qs = np.asarray(qs, dtype=float)
    pc = np.asarray(pc_hats, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    order = np.argsort(qs)
    qs, pc, se = qs[order], pc[order], se[order]
    C = holder_constant(qs[0], qs[-1])
    worst = -math.inf
    for i in range(len(qs) - 1):
        pooled = math.hypot(se[i], se[i + 1])
        gap = abs(pc[i + 1] - pc[i]) - C * math.sqrt(qs[i + 1] - qs[i]) - margin_sigmas * pooled
        worst = max(worst, gap)
    return worst
