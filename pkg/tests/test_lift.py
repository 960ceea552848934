import numpy as np
import pytest

from liftperc.graphs import GraphInputError, build_box, build_cycle, build_tree
from liftperc.lift import (
    LiftedGraph,
    SwitchConfig,
    apply_gauge,
    build_lift,
    gauge_edge_map,
    gauge_eta,
    gauge_vertex_map,
    is_switching_cycle,
    sample_switch_config,
    transport_omega,
)
from liftperc.perco import bfs_clusters_reference, normalize_labels


def test_sample_extremes(cycle3, rng):
    assert sample_switch_config(cycle3, 0.0, rng).eta.tolist() == [0, 0, 0]
    assert sample_switch_config(cycle3, 1.0, rng).eta.tolist() == [1, 1, 1]
    with pytest.raises(ValueError):
        sample_switch_config(cycle3, 1.5, rng)


def test_sample_binomial_mean(cycle3, rng):
    trials = 100_000
    total = int((rng.random((trials, 3)) < 0.5).sum())
    # the vectorized draw above is the same law sample_switch_config uses;
    # spot-check the function itself on a smaller batch
    total_fn = sum(int(sample_switch_config(cycle3, 0.5, rng).eta.sum()) for _ in range(2000))
    for count, n in ((total, trials), (total_fn, 2000)):
        mean = count / n
        sigma = np.sqrt(3 * 0.25 / n)
        assert abs(mean - 1.5) <= 3 * sigma


def test_lift_cycle_no_switch(cycle3):
    L = build_lift(cycle3, [0, 0, 0])
    labels = normalize_labels(bfs_clusters_reference(L, np.ones(6, np.uint8)))
    assert len(set(labels.tolist())) == 2  # two disjoint triangles
    assert set(labels[:3].tolist()) == {0} and set(labels[3:].tolist()) == {3}


def test_lift_cycle_single_switch_is_hexagon(cycle3):
    L = build_lift(cycle3, [1, 0, 0])
    labels = bfs_clusters_reference(L, np.ones(6, np.uint8))
    assert len(set(labels.tolist())) == 1
    deg = np.zeros(6, int)
    for k in range(L.num_edges):
        a, b = L.endpoints(k)
        deg[a] += 1
        deg[b] += 1
    assert set(deg.tolist()) == {2}


def test_lift_of_tree_always_two_components(tree22, rng):
    for _ in range(20):
        eta = (rng.random(tree22.num_edges) < 0.5).astype(np.uint8)
        L = build_lift(tree22, eta)
        labels = bfs_clusters_reference(L, np.ones(L.num_edges, np.uint8))
        assert len(set(labels.tolist())) == 2


def test_twin_project(cycle3):
    L = build_lift(cycle3, [0, 1, 0])
    for x in range(6):
        assert L.twin(L.twin(x)) == x
        assert L.project(L.twin(x)) == L.project(x)
    assert L.twin(L.lift_of(2, 0)) == L.lift_of(2, 1)
    assert L.project(L.lift_of(2, 1)) == 2
    for k in range(L.num_edges):
        a, b = L.endpoints(k)
        u, v = cycle3.edges[L.project_edge(k)]
        assert {L.project(a), L.project(b)} == {int(u), int(v)}


def test_degree_preservation(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    L = build_lift(box5, eta)
    deg = np.zeros(L.num_vertices, int)
    for k in range(L.num_edges):
        a, b = L.endpoints(k)
        deg[a] += 1
        deg[b] += 1
    for x in range(L.num_vertices):
        assert deg[x] == box5.degree(L.project(x))


def test_covering_property_exhaustive(cycle4, k4, rng):
    # pi restricted to each 1-ball is an adjacency-preserving bijection
    for G in (cycle4, k4, build_box(2, 3)):
        eta = (rng.random(G.num_edges) < 0.5).astype(np.uint8)
        L = build_lift(G, eta)
        adj = L.adjacency()
        for x in range(L.num_vertices):
            nbrs = [w for _, w in adj[x]]
            proj = [L.project(w) for w in nbrs]
            base_nbrs = [w for _, w in G.adjacency[L.project(x)]]
            assert sorted(proj) == sorted(base_nbrs)
            assert len(set(nbrs)) == len(nbrs)


def test_gauge_identity_cases(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    L = build_lift(box5, eta)
    assert np.array_equal(apply_gauge(L, []).eta, eta)
    assert np.array_equal(apply_gauge(L, range(box5.num_vertices)).eta, eta)


def test_gauge_bipartite_class_flips_everything(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    S = np.flatnonzero(box5.bipartition == 0)
    flipped = gauge_eta(box5, eta, S)
    assert np.array_equal(flipped, 1 - eta)


def test_gauge_is_involution(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    S = rng.choice(box5.num_vertices, size=7, replace=False)
    assert np.array_equal(gauge_eta(box5, gauge_eta(box5, eta, S), S), eta)


def test_gauge_vertex_map_is_isomorphism(cycle4, rng):
    eta = (rng.random(cycle4.num_edges) < 0.5).astype(np.uint8)
    L = build_lift(cycle4, eta)
    S = [0, 2]
    L2 = apply_gauge(L, S)
    phi = gauge_vertex_map(L, S)
    orig = {frozenset(L.endpoints(k)) for k in range(L.num_edges)}
    mapped = {frozenset((int(phi[a]), int(phi[b]))) for a, b in map(L.endpoints, range(L.num_edges))}
    new = {frozenset(L2.endpoints(k)) for k in range(L2.num_edges)}
    assert mapped == new and len(orig) == len(new)


def test_gauge_edge_map_matches_vertex_map(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    L = build_lift(box5, eta)
    S = rng.choice(box5.num_vertices, size=9, replace=False)
    L2 = apply_gauge(L, S)
    phi = gauge_vertex_map(L, S)
    emap = gauge_edge_map(L, S)
    for k in range(L.num_edges):
        a, b = L.endpoints(k)
        assert {int(phi[a]), int(phi[b])} == set(L2.endpoints(int(emap[k])))


def test_gauge_preserves_cluster_multiset(box5, rng):
    eta = (rng.random(box5.num_edges) < 0.5).astype(np.uint8)
    L = build_lift(box5, eta)
    omega = (rng.random(L.num_edges) < 0.6).astype(np.uint8)
    S = rng.choice(box5.num_vertices, size=11, replace=False)
    L2 = apply_gauge(L, S)
    omega2 = transport_omega(L, S, omega)
    sizes = lambda LL, om: sorted(
        np.bincount(normalize_labels(bfs_clusters_reference(LL, om))).tolist()
    )
    assert sizes(L, omega) == sizes(L2, omega2)


def test_switching_cycle(cycle3):
    edges = [0, 1, 2]
    assert not is_switching_cycle([0, 0, 0], edges, cycle3)
    assert is_switching_cycle([1, 0, 0], edges, cycle3)
    with pytest.raises(GraphInputError):
        is_switching_cycle([0, 0, 0], [0, 1], cycle3)


def test_switching_cycle_gauge_invariant(cycle4, rng):
    edges = list(range(4))
    for _ in range(20):
        eta = (rng.random(4) < 0.5).astype(np.uint8)
        S = [int(v) for v in rng.integers(0, 4, size=2)]
        assert is_switching_cycle(eta, edges, cycle4) == is_switching_cycle(
            gauge_eta(cycle4, eta, S), edges, cycle4
        )


def test_switching_cycle_connectivity_criterion(cycle4, rng):
    # the lift of a cycle is connected iff the cycle is switching
    for _ in range(16):
        eta = (rng.random(4) < 0.5).astype(np.uint8)
        L = build_lift(cycle4, eta)
        labels = bfs_clusters_reference(L, np.ones(L.num_edges, np.uint8))
        connected = len(set(labels.tolist())) == 1
        assert connected == is_switching_cycle(eta, range(4), cycle4)


def test_hex_round_trip(box5, rng):
    cfg = sample_switch_config(box5, 0.37, rng)
    back = SwitchConfig.from_hex(box5, cfg.to_hex())
    assert np.array_equal(cfg.eta, back.eta)


def test_eta_mismatch_rejected(cycle3):
    with pytest.raises(GraphInputError):
        LiftedGraph(cycle3, [0, 1])
