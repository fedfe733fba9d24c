import numpy as np
import pytest

from app.errors import Disconnected, DuplicateEdge, IndexOutOfRange, SelfLoop, TopologyError
from app.services.graph import (
    GENERATORS,
    build_incidence,
    build_topology,
    generate_topology,
    partition_neighbors,
)


def test_fig1_topology_sorted(fig1):
    assert fig1.m == 5
    assert fig1.edges == ((1, 2), (1, 3), (1, 4), (2, 4), (3, 4))


def test_edges_normalized_and_sorted(fig1):
    expected = partition_neighbors(fig1)
    rng = np.random.default_rng(19)
    for _ in range(50):
        edges = [tuple(int(v) for v in rng.permutation(e)) for e in fig1.edges]
        edges = [edges[int(r)] for r in rng.permutation(len(edges))]
        t = build_topology(4, edges)
        assert t.edges == ((1, 2), (1, 3), (1, 4), (2, 4), (3, 4))
        assert partition_neighbors(t) == expected


def test_smallest_graph(two_node):
    assert two_node.m == 1
    assert two_node.edges == ((1, 2),)


def test_path_and_disconnected():
    assert build_topology(3, [(1, 2), (2, 3)]).m == 2
    with pytest.raises(Disconnected):
        build_topology(3, [(1, 2)])


@pytest.mark.parametrize(
    "n, edges, exc",
    [
        (3, [(1, 2), (2, 1), (2, 3)], DuplicateEdge),
        (3, [(1, 1), (1, 2), (2, 3)], SelfLoop),
        (3, [(1, 2), (2, 4)], IndexOutOfRange),
        (3, [(0, 1), (1, 2)], IndexOutOfRange),
        (1, [], TopologyError),
    ],
)
def test_topology_errors(n, edges, exc):
    with pytest.raises(exc):
        build_topology(n, edges)


def test_fig1_partition(fig1):
    part = partition_neighbors(fig1)
    assert part.neighbors[2] == (1, 4)
    assert part.predecessors[2] == (1,)
    assert part.successors[2] == (4,)
    assert part.predecessors[4] == (1, 2, 3)
    assert part.successors[1] == (2, 3, 4)
    assert sum(len(v) for v in part.predecessors.values()) == 5
    assert sum(len(v) for v in part.successors.values()) == 5


def test_two_node_partition(two_node):
    part = partition_neighbors(two_node)
    assert part.predecessors[1] == () and part.successors[1] == (2,)
    assert part.predecessors[2] == (1,) and part.successors[2] == ()


def test_fig1_incidence(fig1):
    inc = build_incidence(fig1)
    expected = np.array(
        [[1, -1, 0, 0], [1, 0, -1, 0], [1, 0, 0, -1], [0, 1, 0, -1], [0, 0, 1, -1]], dtype=float
    )
    np.testing.assert_array_equal(inc.A, expected)


def test_two_node_incidence(two_node):
    inc = build_incidence(two_node)
    np.testing.assert_array_equal(inc.A, [[1.0, -1.0]])
    np.testing.assert_array_equal(inc.B, [[1.0, 0.0]])
    np.testing.assert_array_equal(inc.E, [[0.0, -1.0]])


def test_incidence_is_read_only(fig1):
    inc = build_incidence(fig1)
    with pytest.raises(ValueError):
        inc.A[0, 0] = 5.0


def _random_topologies(count: int):
    rng = np.random.default_rng(2024)
    for s in range(count):
        n = int(rng.integers(2, 13))
        p = float(rng.uniform(0.2, 0.9))
        yield generate_topology("erdos-renyi", n, seed=s, p=p)


def test_structural_identities_on_random_graphs():
    for t in _random_topologies(500):
        inc = build_incidence(t)
        part = partition_neighbors(t)
        np.testing.assert_array_equal(inc.A, inc.B + inc.E)
        np.testing.assert_array_equal(inc.A @ np.ones(t.n), np.zeros(t.m))
        assert np.all(inc.A.sum(axis=1) == 0)
        assert sum(len(part.predecessors[i]) for i in range(1, t.n + 1)) == t.m
        assert sum(len(part.successors[i]) for i in range(1, t.n + 1)) == t.m
        np.testing.assert_array_equal(inc.E.T @ inc.E, np.diag([len(part.predecessors[i]) for i in range(1, t.n + 1)]))
        np.testing.assert_array_equal(inc.B.T @ inc.B, np.diag([len(part.successors[i]) for i in range(1, t.n + 1)]))
        for i in range(1, t.n + 1):
            assert part.degree(i) == t.degree(i)
            assert all(j < i for j in part.predecessors[i])
            assert all(j > i for j in part.successors[i])


@pytest.mark.parametrize("kind", GENERATORS)
def test_generators_connected(kind):
    t = generate_topology(kind, 6, seed=1)
    assert t.n == 6
    assert t.m >= 5


def test_generator_shapes():
    assert generate_topology("path", 5).m == 4
    assert generate_topology("ring", 5).m == 5
    assert generate_topology("ring", 2).m == 1
    assert generate_topology("complete", 5).m == 10
    star = generate_topology("star", 5)
    assert star.m == 4 and star.degree(1) == 4


def test_erdos_renyi_is_seeded():
    a = generate_topology("erdos-renyi", 9, seed=42, p=0.4)
    b = generate_topology("erdos-renyi", 9, seed=42, p=0.4)
    assert a == b


def test_unknown_generator():
    with pytest.raises(TopologyError):
        generate_topology("hypercube", 4)
