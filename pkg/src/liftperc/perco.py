"""Bernoulli bond percolation, union-find clustering, min/max projections.

Hosts are anything exposing num_vertices and edge_endpoints(); both base
graphs and lifted graphs qualify.  The shared-uniform sampling mode (one
uniform per edge, thresholded at p) is first-class so monotone couplings in
p are exact per sample, not just in law.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from liftperc.lift import LiftedGraph


@dataclass
class PercolationConfig:
    host: object
    omega: np.ndarray
    p: float

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.uint8).ravel()
        if self.omega.shape != (self.host.num_edges,):
            raise ValueError("omega length must equal the host edge count")


@dataclass
class Cluster:
    root: int
    members: np.ndarray
    size: int
    touches_boundary: bool


@dataclass
class ProjectedPair:
    """Per base edge, the AND and OR of the two lifted percolation bits."""

    omega_min: np.ndarray
    omega_max: np.ndarray

    def __post_init__(self):
        if np.any(self.omega_min > self.omega_max):
            raise ValueError("omega_min must be <= omega_max edge-wise")


def sample_percolation(host, p: float, rng: np.random.Generator) -> PercolationConfig:
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    u = rng.random(host.num_edges)
    return PercolationConfig(host, (u < p).astype(np.uint8), p)


def threshold_uniforms(uniforms: np.ndarray, p: float) -> np.ndarray:
    """Shared-uniform mode: open exactly where the uniform is below p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return (np.asarray(uniforms) < p).astype(np.uint8)


def component_labels(num_vertices: int, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Connected-component label per vertex for the given open edges."""
    m = csr_matrix(
        (np.ones(len(us), dtype=np.int8), (us, vs)),
        shape=(num_vertices, num_vertices),
    )
    _, labels = connected_components(m, directed=False)
    return labels


def clusters(host, omega) -> np.ndarray:
    """Partition of host vertices into maximal omega-connected components."""
    omega = np.asarray(omega, dtype=bool)
    us, vs = host.edge_endpoints()
    return component_labels(host.num_vertices, us[omega], vs[omega])


def cluster_of(host, omega, v: int, boundary=None) -> Cluster:
    labels = clusters(host, omega)
    members = np.flatnonzero(labels == labels[v])
    touches = False
    if boundary is not None:
        b = np.asarray(list(boundary) if not isinstance(boundary, np.ndarray) else boundary)
        touches = bool(np.any(labels[b] == labels[v])) if b.size else False
    return Cluster(root=v, members=members, size=int(members.size), touches_boundary=touches)


def bfs_clusters_reference(host, omega) -> np.ndarray:
    """Plain BFS partition; the independent oracle for union-find output.

    Labels are normalized (both here and in comparisons) by mapping each
    component to its smallest member.
    """
    omega = np.asarray(omega, dtype=bool)
    us, vs = host.edge_endpoints()
    n = host.num_vertices
    adj = [[] for _ in range(n)]
    for u, v in zip(us[omega], vs[omega]):
        adj[u].append(int(v))
        adj[v].append(int(u))
    labels = np.full(n, -1, dtype=np.int64)
    for start in range(n):
        if labels[start] != -1:
            continue
        labels[start] = start
        queue = [start]
        while queue:
            x = queue.pop()
            for y in adj[x]:
                if labels[y] == -1:
                    labels[y] = start
                    queue.append(y)
    return labels


def normalize_labels(labels: np.ndarray) -> np.ndarray:
    """Rewrite labels so every component is named by its smallest vertex."""
    labels = np.asarray(labels)
    out = np.empty_like(labels)
    first = {}
    for v, lab in enumerate(labels):
        if lab not in first:
            first[lab] = v
        out[v] = first[lab]
    return out


def project_min_max(omega, L: LiftedGraph) -> ProjectedPair:
    """AND/OR of the two lifted bits per base edge.

    The marginals are Bernoulli(p^2) and Bernoulli(1-(1-p)^2); sandwiching
    the lift's clusters between the two base configs is deterministic.
    """
    omega = np.asarray(omega, dtype=np.uint8)
    a = omega[0::2]
    b = omega[1::2]
    return ProjectedPair(omega_min=a & b, omega_max=a | b)


def reaches(host, omega, origin: int, boundary) -> bool:
    """True iff the cluster of origin intersects the boundary set."""
    return cluster_of(host, omega, origin, boundary=boundary).touches_boundary


def cluster_sizes(labels: np.ndarray) -> np.ndarray:
    return np.bincount(labels)


def origin_cluster_size(labels: np.ndarray, origin: int) -> int:
    return int(np.count_nonzero(labels == labels[origin]))
