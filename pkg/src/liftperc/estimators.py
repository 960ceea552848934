"""Monte Carlo estimators: reach probability, critical-point bisection,
cluster-size tails, and decay-rate fits.

Finite-volume convention: "the cluster of the origin is infinite" becomes
"the cluster of the origin lift reaches the lifted sphere at the box
boundary radius".  All trials draw uniforms and threshold at p, so reach is
monotone non-decreasing in p for each fixed trial stream.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from liftperc.graphs import BaseGraph, boundary_radius, build_box, distances_from
from liftperc.parallel import run_task
from liftperc.perco import component_labels
from liftperc.streams import substream


def wilson_interval(k: int, n: int, z: float = 1.96) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def binom_stderr(k: int, n: int) -> float:
    phat = k / n if n else 0.0
    return math.sqrt(max(phat * (1 - phat), 1.0 / (4 * n)) / n) if n else 0.0


def _lift_boundary(G: BaseGraph, radius: Optional[int] = None) -> np.ndarray:
    rad = boundary_radius(G) if radius is None else radius
    dist = distances_from(G, G.origin)
    boundary = np.flatnonzero(dist == rad)
    return np.concatenate([boundary, boundary + G.num_vertices])


# ---------------------------------------------------------------------------
# trial tasks
# ---------------------------------------------------------------------------

@dataclass
class LiftReachTask:
    """One trial: sample (eta, omega) on the lifted box, test boundary reach."""

    G: BaseGraph
    q: float
    p: float
    seed: int
    tag: tuple
    boundary: np.ndarray = field(init=False)

    def __post_init__(self):
        self.boundary = _lift_boundary(self.G)

    def run(self, i: int) -> bool:
        gen = substream(self.seed, *self.tag, i)
        G = self.G
        n = G.num_vertices
        u, v = G.edge_endpoints()
        eta = (gen.random(G.num_edges) < self.q).astype(np.int64)
        lu = np.concatenate([u, u + n])
        lv = np.concatenate([v + n * eta, v + n * (1 - eta)])
        omega = gen.random(2 * G.num_edges) < self.p
        labels = component_labels(2 * n, lu[omega], lv[omega])
        return bool(np.any(labels[self.boundary] == labels[G.origin]))


@dataclass
class BaseReachTask:
    """One trial of plain percolation on the base box."""

    G: BaseGraph
    p: float
    seed: int
    tag: tuple
    boundary: np.ndarray = field(init=False)

    def __post_init__(self):
        rad = boundary_radius(self.G)
        self.boundary = np.flatnonzero(distances_from(self.G, self.G.origin) == rad)

    def run(self, i: int) -> bool:
        gen = substream(self.seed, *self.tag, i)
        G = self.G
        u, v = G.edge_endpoints()
        omega = gen.random(G.num_edges) < self.p
        labels = component_labels(G.num_vertices, u[omega], v[omega])
        return bool(np.any(labels[self.boundary] == labels[G.origin]))


@dataclass
class LiftClusterSizeTask:
    """One trial: size of the origin-lift cluster (eta resampled or fixed)."""

    G: BaseGraph
    p: float
    seed: int
    tag: tuple
    q: Optional[float] = None
    eta: Optional[np.ndarray] = None

    def run(self, i: int) -> int:
        gen = substream(self.seed, *self.tag, i)
        G = self.G
        n = G.num_vertices
        u, v = G.edge_endpoints()
        if self.eta is None:
            eta = (gen.random(G.num_edges) < self.q).astype(np.int64)
        else:
            gen.random(G.num_edges)  # keep draw counts aligned with the annealed task
            eta = np.asarray(self.eta, dtype=np.int64)
        lu = np.concatenate([u, u + n])
        lv = np.concatenate([v + n * eta, v + n * (1 - eta)])
        omega = gen.random(2 * G.num_edges) < self.p
        labels = component_labels(2 * n, lu[omega], lv[omega])
        return int(np.count_nonzero(labels == labels[G.origin]))


# ---------------------------------------------------------------------------
# theta and p_c
# ---------------------------------------------------------------------------

@dataclass
class ThetaEstimate:
    p: float
    q: float
    n: int
    trials: int
    reach_count: int
    theta_hat: float
    stderr: float


def estimate_theta(G: BaseGraph, q: float, p: float, trials: int, seed: int, workers: int = 1) -> ThetaEstimate:
    task = LiftReachTask(G, q, p, seed, ("theta", G.kind, float(q), float(p)))
    hits = run_task(task, trials, workers)
    k = int(np.sum(hits))
    return ThetaEstimate(
        p=p, q=q, n=boundary_radius(G), trials=trials,
        reach_count=k, theta_hat=k / trials, stderr=binom_stderr(k, trials),
    )


@dataclass
class PcEstimate:
    q: float
    mode: str
    box_sizes: List[int]
    trace: List[dict]
    pc_hat: float
    stderr: float
    ci_low: float
    ci_high: float


def _reach_fraction(G, mode, q, p, trials, seed, tag, workers, extra=None):
    if mode == "base":
        task = BaseReachTask(G, p, seed, tag)
    elif mode == "lift":
        task = LiftReachTask(G, q, p, seed, tag)
    elif mode == "enhanced":
        task = extra(G, p, seed, tag)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    hits = run_task(task, trials, workers)
    return float(np.mean(hits))


def estimate_pc(
    d: int,
    q: float,
    schedule: Sequence[Tuple[int, int]],
    seed: int,
    mode: str = "lift",
    steps_per_stage: int = 5,
    workers: int = 1,
    target: float = 0.5,
    task_factory=None,
) -> PcEstimate:
    """Bisection on p for reach probability `target` at the largest box.

    Earlier schedule stages narrow the bracket cheaply on smaller boxes;
    every step draws fresh trials.  The confidence interval propagates the
    binomial error of the final stage through a locally fitted slope of the
    reach curve.
    """
    if not schedule:
        raise ValueError("schedule must be non-empty")
    lo, hi = 0.0, 1.0
    trace = []
    boxes = {}
    for stage, (L, trials) in enumerate(schedule):
        if L not in boxes:
            boxes[L] = build_box(d, L)
        G = boxes[L]
        for step in range(steps_per_stage):
            mid = 0.5 * (lo + hi)
            tag = ("pc", mode, d, float(q), L, stage, step)
            r = _reach_fraction(G, mode, q, mid, trials, seed, tag, workers, extra=task_factory)
            trace.append({"stage": stage, "L": L, "p": mid, "reach_hat": r, "trials": trials})
            if r > target:
                hi = mid
            else:
                lo = mid
    pc_hat = 0.5 * (lo + hi)
    # slope probe around the estimate on the final box
    L, trials = schedule[-1]
    G = boxes[L]
    delta = max(0.02, 4.0 * (hi - lo))
    p_lo = max(0.0, pc_hat - delta)
    p_hi = min(1.0, pc_hat + delta)
    r_lo = _reach_fraction(G, mode, q, p_lo, trials, seed, ("pc-probe", mode, d, float(q), L, 0), workers, extra=task_factory)
    r_hi = _reach_fraction(G, mode, q, p_hi, trials, seed, ("pc-probe", mode, d, float(q), L, 1), workers, extra=task_factory)
    slope = max((r_hi - r_lo) / (p_hi - p_lo), 1e-6)
    se = math.sqrt(0.25 / trials) / slope
    est = PcEstimate(
        q=q, mode=mode,
        box_sizes=[L for L, _ in schedule],
        trace=trace,
        pc_hat=pc_hat,
        stderr=se,
        ci_low=max(0.0, pc_hat - 1.96 * se),
        ci_high=min(1.0, pc_hat + 1.96 * se),
    )
    return est


def pc_curve(d: int, qs: Sequence[float], schedule, seed: int, workers: int = 1, **kw) -> List[PcEstimate]:
    return [estimate_pc(d, q, schedule, seed, workers=workers, **kw) for q in qs]


@dataclass
class ContinuityReport:
    alpha: float
    beta: float
    C: float
    max_violation: float
    pairs: List[dict]


def continuity_report(curve: Sequence[PcEstimate], margin_sigmas: float = 2.0) -> ContinuityReport:
    """Adjacent-pair check of |dpc| <= C sqrt(dq) + margin over a q-grid."""
    curve = sorted(curve, key=lambda e: e.q)
    qs = [e.q for e in curve]
    alpha, beta = qs[0], qs[-1]
    C = max(1.0 / math.sqrt(alpha), 1.0 / math.sqrt(1.0 - beta))
    worst = -math.inf
    pairs = []
    for a, b in zip(curve, curve[1:]):
        pooled = math.hypot(a.stderr, b.stderr)
        gap = abs(b.pc_hat - a.pc_hat) - C * math.sqrt(b.q - a.q) - margin_sigmas * pooled
        pairs.append({"q_low": a.q, "q_high": b.q, "gap": gap})
        worst = max(worst, gap)
    return ContinuityReport(alpha=alpha, beta=beta, C=C, max_violation=worst, pairs=pairs)


@dataclass
class MonotonicityReport:
    q: float
    pc_base: PcEstimate
    pc_lift: PcEstimate
    z: float


def monotonicity_test(d: int, q: float, schedule, seed: int, workers: int = 1, **kw) -> MonotonicityReport:
    """z-score of pc(base) - pc(lift at q) against the pooled stderr."""
    base = estimate_pc(d, 0.0, schedule, seed, mode="base", workers=workers, **kw)
    lifted = estimate_pc(d, q, schedule, seed, mode="lift", workers=workers, **kw)
    pooled = math.hypot(base.stderr, lifted.stderr)
    z = (base.pc_hat - lifted.pc_hat) / pooled if pooled > 0 else math.inf
    return MonotonicityReport(q=q, pc_base=base, pc_lift=lifted, z=z)


# ---------------------------------------------------------------------------
# cluster-size tails
# ---------------------------------------------------------------------------

def sample_cluster_sizes(
    G: BaseGraph,
    p: float,
    trials: int,
    seed: int,
    q: Optional[float] = None,
    eta: Optional[np.ndarray] = None,
    tag_extra: tuple = (),
    workers: int = 1,
) -> np.ndarray:
    """Per-trial size of the origin-lift cluster; eta resampled unless fixed."""
    if (q is None) == (eta is None):
        raise ValueError("exactly one of q, eta must be given")
    tag = ("csize", G.kind, float(p)) + (("annealed", float(q)) if eta is None else ("quenched",)) + tag_extra
    task = LiftClusterSizeTask(G, p, seed, tag, q=q, eta=None if eta is None else np.asarray(eta))
    return np.asarray(run_task(task, trials, workers), dtype=np.int64)


@dataclass
class PsiCurve:
    ns: np.ndarray
    psi_hat: np.ndarray
    stderr: np.ndarray
    trials: int


def psi_from_sizes(sizes: np.ndarray, n_max: int) -> PsiCurve:
    """Empirical survival curve psi_n = P(|C_o| >= n) for n = 1..n_max."""
    trials = sizes.size
    ns = np.arange(1, n_max + 1)
    counts = np.array([(sizes >= n).sum() for n in ns], dtype=np.int64)
    psi = counts / trials
    se = np.sqrt(np.maximum(psi * (1 - psi), 0.25 / trials) / trials)
    return PsiCurve(ns=ns, psi_hat=psi, stderr=se, trials=trials)


def tail_psi(G: BaseGraph, p: float, q: float, n_max: int, trials: int, seed: int, workers: int = 1) -> PsiCurve:
    sizes = sample_cluster_sizes(G, p, trials, seed, q=q, workers=workers)
    return psi_from_sizes(sizes, n_max)


def quenched_tail(G: BaseGraph, p: float, eta, n_max: int, trials: int, seed: int, workers: int = 1) -> PsiCurve:
    sizes = sample_cluster_sizes(G, p, trials, seed, eta=eta, workers=workers)
    return psi_from_sizes(sizes, n_max)


# ---------------------------------------------------------------------------
# decay fit
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    c_hat: float
    C_hat: float
    fit_range: Tuple[int, int]
    r_squared: float
    points: int
    low_confidence: bool
    degenerate: bool


def _weighted_line_fit(x, y, w):
    wm_x = np.average(x, weights=w)
    wm_y = np.average(y, weights=w)
    cov = np.average((x - wm_x) * (y - wm_y), weights=w)
    var = np.average((x - wm_x) ** 2, weights=w)
    slope = cov / var if var > 0 else 0.0
    intercept = wm_y - slope * wm_x
    resid = y - (intercept + slope * x)
    ss_res = np.average(resid**2, weights=w)
    ss_tot = np.average((y - wm_y) ** 2, weights=w)
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return slope, intercept, float(r2)


def fit_decay(
    ns,
    psi_hat,
    trials: int,
    min_events: int = 10,
    min_points: int = 5,
    r2_target: float = 0.99,
) -> DecayFit:
    """Weighted linear regression of log psi_n on n over an auto range.

    Usable n have 0 < psi < 1 and at least min_events surviving trials;
    weights are delta-method precisions of log psi.  The start of the fit
    window advances past the saturated head until the weighted R-squared
    reaches r2_target (keeping at least min_points points); if no window
    qualifies the best one is reported with low_confidence set.  A curve
    with no usable tail is flagged degenerate instead of fitted.
    """
    ns = np.asarray(ns, dtype=float)
    psi = np.asarray(psi_hat, dtype=float)
    usable = (psi > 0) & (psi < 1) & (psi * trials >= min_events)
    if usable.sum() < 2:
        return DecayFit(math.nan, math.nan, (0, 0), 0.0, int(usable.sum()), True, True)
    x_all = ns[usable]
    y_all = np.log(psi[usable])
    w_all = psi[usable] * trials / (1 - psi[usable])  # 1 / var(log psi)
    best = None
    chosen = None
    max_start = max(0, x_all.size - max(min_points, 2))
    for start in range(max_start + 1):
        x, y, w = x_all[start:], y_all[start:], w_all[start:]
        slope, intercept, r2 = _weighted_line_fit(x, y, w)
        cand = (r2, -start, slope, intercept, x)
        if best is None or cand[:2] > best[:2]:
            best = cand
        if r2 >= r2_target and x.size >= min_points:
            chosen = cand
            break
    if chosen is None:
        chosen = best
    r2, _, slope, intercept, x = chosen
    return DecayFit(
        c_hat=-slope,
        C_hat=math.exp(intercept),
        fit_range=(int(x[0]), int(x[-1])),
        r_squared=r2,
        points=int(x.size),
        low_confidence=x.size < min_points or r2 < r2_target,
        degenerate=False,
    )
