import pytest

from wbtree import tree
from wbtree.tree import (
    AddressSyntaxError,
    Ball,
    Explicit,
    InfiniteRegionError,
    ORIGIN,
    Subtree,
    SubtreeMinusBelow,
    TreeParams,
    VertexAddr,
    WholeTree,
)

P3 = TreeParams(3)
P4 = TreeParams(4)


def test_params_validation():
    with pytest.raises(ValueError):
        TreeParams(2)
    with pytest.raises(ValueError):
        TreeParams(65)
    assert TreeParams(64).d == 64


def test_canonical_addresses():
    assert VertexAddr(0, (0, 1)).w == (0, 1)
    with pytest.raises(ValueError):
        VertexAddr(-1, ())
    with pytest.raises(ValueError):
        VertexAddr(2, (0, 1))  # k>0 words must not start with child 0
    with pytest.raises(ValueError):
        VertexAddr(0, (1, -2))


def test_parent_child_inverse():
    for v in tree.ball_vertices(P3, ORIGIN, 4):
        for c in tree.children(P3, v):
            assert tree.parent(c) == v
        assert v in tree.children(P3, tree.parent(v))


def test_neighbors_degree_and_symmetry():
    for params in (P3, P4):
        for v in tree.ball_vertices(params, ORIGIN, 3):
            nbrs = tree.neighbors(params, v)
            assert len(nbrs) == params.d
            assert len(set(nbrs)) == params.d
            for u in nbrs:
                assert v in tree.neighbors(params, u)


def test_distance_metric():
    a = VertexAddr(0, (1, 0))
    b = VertexAddr(2, (1,))
    assert tree.distance(a, a) == 0
    assert tree.distance(a, b) == tree.distance(b, a)
    assert tree.distance(ORIGIN, a) == 2
    assert tree.distance(ORIGIN, b) == 3
    # Triangle equality along the tree path.
    for v in tree.ball_vertices(P3, ORIGIN, 3):
        path = tree.path_to_origin(v)
        assert len(path) == tree.distance(ORIGIN, v) + 1
        assert path[0] == v and path[-1] == ORIGIN
        for x, y in zip(path, path[1:]):
            assert tree.distance(x, y) == 1


def test_height():
    assert tree.height(ORIGIN) == 0
    assert tree.height(VertexAddr(2, ())) == -2
    assert tree.height(VertexAddr(1, (1, 0))) == 1
    # Height changes by exactly +-1 across each edge.
    for v in tree.ball_vertices(P3, ORIGIN, 3):
        for u in tree.neighbors(P3, v):
            assert abs(tree.height(u) - tree.height(v)) == 1


def test_ball_sizes():
    # d-regular ball: 1 + d ((d-1)^r - 1)/(d-2) vertices.
    for params, r, expect in ((P3, 0, 1), (P3, 1, 4), (P3, 2, 10), (P3, 3, 22),
                              (P4, 1, 5), (P4, 2, 17)):
        assert len(tree.ball_vertices(params, ORIGIN, r)) == expect
    assert len(tree.sphere_vertices(P3, ORIGIN, 3)) == 12


def test_ball_vertices_off_center():
    c = VertexAddr(1, (1,))
    ball = tree.ball_vertices(P3, c, 2)
    assert len(ball) == 10
    assert all(tree.distance(c, v) <= 2 for v in ball)


def test_subtree_ball():
    sub = tree.subtree_ball_vertices(P3, ORIGIN, 3)
    # Root plus a binary tree of depth 3 below it: 1 + 2 + 4 + 8.
    assert len(sub) == 15
    assert all(tree.is_ancestor_or_equal(ORIGIN, v) for v in sub)


def test_region_contains():
    v = VertexAddr(0, (1, 1))
    assert tree.region_contains(P3, WholeTree(), v)
    assert tree.region_contains(P3, Ball(ORIGIN, 2), v)
    assert not tree.region_contains(P3, Ball(ORIGIN, 1), v)
    assert tree.region_contains(P3, Subtree(ORIGIN), v)
    assert not tree.region_contains(P3, Subtree(ORIGIN), VertexAddr(1, ()))
    reg = SubtreeMinusBelow(ORIGIN, VertexAddr(0, (1,)))
    assert tree.region_contains(P3, reg, VertexAddr(0, (1,)))  # the cut itself
    assert not tree.region_contains(P3, reg, v)  # strictly below the cut
    assert tree.region_contains(P3, reg, VertexAddr(0, (0,)))


def test_enumerate_region():
    with pytest.raises(InfiniteRegionError):
        tree.enumerate_region(P3, WholeTree())
    with pytest.raises(InfiniteRegionError):
        tree.enumerate_region(P3, Subtree(ORIGIN))
    got = tree.enumerate_region(P3, Explicit(frozenset({ORIGIN, VertexAddr(1, ())})))
    assert got == [ORIGIN, VertexAddr(1, ())]


def test_boundary_edges_ball():
    edges = tree.boundary_edges(P3, tree.ball_vertices(P3, ORIGIN, 1))
    assert len(edges) == 6  # 3 leaves x 2 outward edges each
    for u, v in edges:
        assert tree.distance(ORIGIN, u) == 1
        assert tree.distance(ORIGIN, v) == 2


def test_region_crossing_edges_finite_for_infinite_regions():
    assert tree.region_crossing_edges(P3, WholeTree()) == []
    got = tree.region_crossing_edges(P3, Subtree(ORIGIN))
    assert got == [(ORIGIN, VertexAddr(1, ()))]
    cut = VertexAddr(0, (1,))
    got = tree.region_crossing_edges(P3, SubtreeMinusBelow(ORIGIN, cut))
    assert (ORIGIN, VertexAddr(1, ())) in got
    assert len(got) == 3  # root-parent edge + the cut's 2 children


def test_address_grammar_roundtrip():
    for v in tree.ball_vertices(P3, ORIGIN, 4):
        assert tree.parse_addr(tree.format_addr(v), P3) == v
    assert tree.format_addr(ORIGIN) == "o"
    assert tree.format_addr(VertexAddr(2, ())) == "u2"
    assert tree.format_addr(VertexAddr(2, (1, 0))) == "u2/1.0"


@pytest.mark.parametrize("text", ["", "x", "u", "u-1", "u2/", "u2/0.1", "u1/0",
                                  "u2/.1", "o/1", "u2/1.", "u1/2"])
def test_malformed_addresses(text):
    with pytest.raises(AddressSyntaxError):
        tree.parse_addr(text, P3)


def test_sort_key_orders_by_distance_first():
    ball = tree.ball_vertices(P3, ORIGIN, 3)
    dists = [tree.distance(ORIGIN, v) for v in ball]
    assert dists == sorted(dists)
