import numpy as np
import pytest

from liftperc.graphs import (
    GraphInputError,
    ball,
    boundary_radius,
    build_box,
    build_complete,
    build_custom,
    build_cycle,
    build_tree,
    distance,
    distances_from,
    load_edge_list,
    sphere,
    sphere_edges,
)


def test_box_examples():
    path3 = build_box(1, 3)
    assert path3.num_vertices == 3 and path3.num_edges == 2
    square = build_box(2, 2)
    assert square.num_vertices == 4 and square.num_edges == 4
    box5 = build_box(2, 5)
    assert box5.num_vertices == 25
    assert box5.num_edges == 2 * 5 * 4  # 2 L (L-1)


def test_box_rejects_degenerate():
    with pytest.raises(GraphInputError):
        build_box(0, 3)
    with pytest.raises(GraphInputError):
        build_box(2, 0)


def test_box_bipartition_by_parity(box5):
    u, v = box5.edge_endpoints()
    assert np.all(box5.bipartition[u] != box5.bipartition[v])


def test_cycle_examples():
    c3 = build_cycle(3)
    assert c3.num_vertices == 3 and c3.num_edges == 3 and c3.bipartition is None
    c4 = build_cycle(4)
    assert set(np.flatnonzero(c4.bipartition == c4.bipartition[0]).tolist()) == {0, 2}
    with pytest.raises(GraphInputError):
        build_cycle(2)


def test_cycle6_girth_by_bfs():
    # shortest cycle through edge (0,1): remove it, BFS distance + 1
    G = build_cycle(6)
    edges = [(int(a), int(b)) for a, b in G.edges if not (a == 0 and b == 1)]
    import collections

    adj = collections.defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = {0: 0}
    queue = collections.deque([0])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if y not in dist:
                dist[y] = dist[x] + 1
                queue.append(y)
    assert dist[1] + 1 == 6


def test_tree_complete_custom():
    t = build_tree(2, 2)
    assert t.num_vertices == 7 and t.num_edges == 6
    k4 = build_complete(4)
    assert k4.num_vertices == 4 and k4.num_edges == 6
    pendant = build_custom([(0, 1), (1, 2), (0, 2), (2, 3)])
    assert pendant.num_vertices == 4 and pendant.num_edges == 4
    assert pendant.bipartition is None  # triangle breaks 2-coloring


def test_custom_rejects_bad_input():
    with pytest.raises(GraphInputError):
        build_custom([(0, 1), (2, 3)])  # disconnected
    with pytest.raises(GraphInputError):
        build_custom([(0, 0)])  # loop
    with pytest.raises(GraphInputError):
        build_custom([(0, 1), (1, 0)])  # parallel


def test_adjacency_round_trip(box5, k4, tree22):
    for G in (box5, k4, tree22):
        rebuilt = sorted(
            (min(v, w), max(v, w))
            for v in range(G.num_vertices)
            for _, w in G.adjacency[v]
            if v < w
        )
        assert rebuilt == sorted(map(tuple, G.edges.tolist()))


def test_ball_examples(box5):
    c = box5.origin
    assert ball(box5, c, 0).vertices.tolist() == [c]
    corner = 0
    assert ball(box5, corner, 1).vertices.size == 3
    assert ball(box5, c, 2).vertices.size == 13  # |{|x-2|+|y-2| <= 2}|


def test_distance_is_metric(box5, rng):
    for _ in range(30):
        x, y, z = rng.integers(0, box5.num_vertices, size=3)
        dxy = distance(box5, int(x), int(y))
        assert dxy == distance(box5, int(y), int(x))
        assert dxy <= distance(box5, int(x), int(z)) + distance(box5, int(z), int(y))
        assert distance(box5, int(x), int(x)) == 0


def test_sphere_edges_straddle(box5):
    c = box5.origin
    dist = distances_from(box5, c)
    for R in range(3):
        ids = sphere_edges(box5, c, R)
        for k in ids:
            du, dv = sorted((dist[box5.edges[k, 0]], dist[box5.edges[k, 1]]))
            assert (du, dv) == (R, R + 1)


def test_ball_is_union_of_spheres(box5):
    c = box5.origin
    b2 = set(ball(box5, c, 2).vertices.tolist())
    union = set()
    for r in range(3):
        union |= set(sphere(box5, c, r).tolist())
    assert b2 == union


def test_edge_list_loader():
    text = "4 4\n0 1\n1 2\n2 3\n0 3\n"
    G = load_edge_list(text)
    assert G.num_vertices == 4 and G.num_edges == 4
    with pytest.raises(GraphInputError):
        load_edge_list("4 2\n0 1\n")
    with pytest.raises(GraphInputError):
        load_edge_list("")


def test_boundary_radius():
    assert boundary_radius(build_box(2, 41)) == 20
    assert boundary_radius(build_box(2, 10)) == 4
    with pytest.raises(GraphInputError):
        boundary_radius(build_cycle(5))
