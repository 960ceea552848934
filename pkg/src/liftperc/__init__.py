"""Percolation laboratory for random 2-lifts of finite graphs.

A 2-lift doubles every vertex of a base graph and, independently per base
edge with probability q, crosses the pair of lifted edges between the two
levels.  The subpackages provide deterministic base graphs, the lift model,
Bernoulli percolation with union-find clustering, exact enumeration oracles
for tiny instances, three verified couplings (square-root continuity of the
critical curve, enhancement-based strict monotonicity, remaining-graph
domination at q = 1/2), Monte Carlo estimators, and a batch CLI.
"""

from liftperc.graphs import (
    BaseGraph,
    build_box,
    build_complete,
    build_custom,
    build_cycle,
    build_tree,
)
from liftperc.lift import LiftedGraph, SwitchConfig, build_lift, sample_switch_config

__all__ = [
    "BaseGraph",
    "LiftedGraph",
    "SwitchConfig",
    "build_box",
    "build_complete",
    "build_custom",
    "build_cycle",
    "build_lift",
    "build_tree",
    "sample_switch_config",
]

__version__ = "0.1.0"
