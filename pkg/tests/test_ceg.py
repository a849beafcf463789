import random
from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cegkit import build_ceg_auto, parse_tree
from cegkit.ceg import SINK, _path_vertices
from cegkit.errors import QueryError
from cegkit.randomgen import random_tree

F = Fraction


def test_binary_pair_graph_shape(binary_pair_ceg):
    g = binary_pair_ceg
    assert len(g.vertices) == 3
    assert len(g.edges) == 4
    assert g.members(g.position_of["v1"]) == frozenset({"v1", "v2"})
    assert len(g.paths()) == 4


def test_ladder_graph_shape(ladder_ceg, ladder_tree):
    g = ladder_ceg
    assert len(g.vertices) == 9
    assert len(g.paths()) == len(ladder_tree.leaves()) == 13
    undirected = sorted(tuple(sorted(p)) for p in g.undirected)
    assert undirected == [
        ("v1", "v13"),
        ("v1", "v17"),
        ("v13", "v17"),
        ("v2", "v7"),
    ]


def test_chain_tree_single_path():
    tree = parse_tree("edge a b _\nedge b c _\nedge c d _\n")
    g = build_ceg_auto(tree)
    assert len(g.paths()) == 1
    assert g.path_probability(g.paths()[0]) == 1


def test_path_bijection_probabilities(ladder_ceg, ladder_tree):
    mapping = ladder_ceg.leaf_path_map()
    assert set(mapping) == set(ladder_tree.leaves())
    keys = {tuple(e.index for e in p) for p in mapping.values()}
    assert len(keys) == len(mapping)
    for leaf, path in mapping.items():
        assert ladder_ceg.path_probability(path) == ladder_tree.leaf_probability(leaf)


def test_event_probability_full_and_empty(ladder_ceg):
    assert ladder_ceg.event_probability(ladder_ceg.paths()) == 1
    assert ladder_ceg.event_probability([]) == 0


def test_splitting_through_a_position(ladder_ceg):
    g = ladder_ceg
    w = g.position_of["v5"]
    for path in g.passes_through(w):
        verts = _path_vertices(g.root, path)
        cut = verts.index(w)
        prefix, suffix = path[:cut], path[cut:]
        assert g.path_probability(path) == g.path_probability(
            prefix
        ) * g.path_probability(suffix)


def test_tableau_grouped_event(tableau_tree):
    g = build_ceg_auto(tableau_tree)
    w = g.position_of["v3"]
    total = g.event_probability(g.passes_through(w))
    assert total == F(3, 5) * F(1, 4)


def test_passes_through_root_and_sink(ladder_ceg):
    assert len(ladder_ceg.passes_through(ladder_ceg.root)) == len(ladder_ceg.paths())
    with pytest.raises(QueryError):
        ladder_ceg.passes_through(SINK)
    with pytest.raises(QueryError):
        ladder_ceg.passes_through("nope")


def test_c_regular(ladder_ceg):
    g = ladder_ceg
    for vid in g.vertices[:-1]:
        assert g.is_c_regular({vid})
    assert not g.is_c_regular({g.root, g.position_of["v2"]})
    assert not g.is_c_regular({g.position_of["v2"], g.position_of["v7"]})
    assert g.is_c_regular({g.position_of["v5"], g.position_of["v7"]})


def test_manipulation_set_verdicts(binary_pair_tree, ladder_ceg, incidents_ceg):
    # manipulated pair graph accepts its merged position
    from cegkit import apply_manipulation, parse_manipulation

    m = parse_manipulation("force v1 -> v3\nforce v2 -> v5\n", binary_pair_tree)
    g = build_ceg_auto(apply_manipulation(binary_pair_tree, m))
    assert g.is_manipulation_set({g.position_of["v1"]})

    # the uneven ladder admits no manipulation set at all
    positions = [v for v in ladder_ceg.vertices if ladder_ceg.is_position(v)]
    for r in range(1, len(positions) + 1):
        for W in combinations(positions, r):
            assert not ladder_ceg.is_manipulation_set(W)

    # two first-step positions cannot both be forced
    assert not incidents_ceg.is_manipulation_set(
        {incidents_ceg.position_of["v1"], incidents_ceg.position_of["v2"]}
    )


def test_sub_ceg_singleton_is_unit_rooted(ladder_ceg):
    w = ladder_ceg.position_of["v5"]
    sub = ladder_ceg.sub_ceg([w])
    root_edges = sub.edges_out[sub.root]
    assert len(root_edges) == 1
    assert root_edges[0].prob == 1


def test_sub_ceg_two_branch(ladder_ceg):
    g = ladder_ceg
    W = [g.position_of["v1"], g.position_of["v2"]]
    sub = g.sub_ceg(W)
    labels = {e.dst: e.prob for e in sub.edges_out[sub.root]}
    assert labels[sub.position_of["v1"]] == F(4, 5)  # f1 + (1 - f1 - f2)
    assert labels[sub.position_of["v2"]] == F(1, 5)
    assert sum(labels.values()) == 1
    # downstream structure inherited: v2 still reaches the deep chain
    assert sub.position_of["v13"] in sub.vertices


def test_sub_ceg_rejects_irregular_and_null(ladder_ceg):
    with pytest.raises(QueryError):
        ladder_ceg.sub_ceg([ladder_ceg.position_of["v2"], ladder_ceg.position_of["v7"]])
    zeroed = build_ceg_auto(parse_tree(open_fixture_zero()))
    with pytest.raises(QueryError):
        zeroed.sub_ceg([zeroed.position_of["a"]])


def open_fixture_zero() -> str:
    return (
        "root r\nedge r a 0\nedge r b _\nedge a c 1/2\nedge a d _\n"
        "edge b e 1/3\nedge b f _\n"
    )


def test_upstream_graph(ladder_ceg):
    g = ladder_ceg
    w7 = g.position_of["v7"]
    up = g.upstream_graph(w7)
    assert set(up.vertices) == {g.root, g.position_of["v2"], w7}
    assert {(e.src, e.dst) for e in up.edges} == {
        (g.root, g.position_of["v2"]),
        (g.position_of["v2"], w7),
    }
    assert g.upstream_positions([w7]) == frozenset({g.root, g.position_of["v2"]})
    assert g.upstream_positions([g.root]) == frozenset()


def test_upstream_membership_matches_path_scan(ladder_ceg):
    g = ladder_ceg
    for vid in g.vertices[:-1]:
        up = set(g.upstream_graph(vid).vertices) - {vid}
        brute = set()
        for path in g.passes_through(vid):
            verts = _path_vertices(g.root, path)
            brute |= set(verts[: verts.index(vid)])
        assert up == brute


def test_export_dot_deterministic(binary_pair_ceg):
    text = binary_pair_ceg.export_dot()
    assert text == binary_pair_ceg.export_dot()
    solid = [l for l in text.splitlines() if "->" in l and "dashed" not in l]
    assert len(solid) == 4
    assert text.count("dashed") == 0  # one position per stage here


def test_export_dot_dashed_stage_edges(ladder_ceg):
    text = ladder_ceg.export_dot()
    assert text.count("dashed") == 4


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_path_bijection_random(seed):
    tree = random_tree(random.Random(seed))
    g = build_ceg_auto(tree)
    assert len(g.paths()) == len(tree.leaves())
    for leaf, path in g.leaf_path_map().items():
        assert g.path_probability(path) == tree.leaf_probability(leaf)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_sub_ceg_normalization_random(seed):
    rng = random.Random(seed)
    tree = random_tree(rng)
    g = build_ceg_auto(tree)
    positions = [v for v in g.vertices if g.is_position(v)]
    rng.shuffle(positions)
    W = []
    for p in positions:
        if g.is_c_regular(W + [p]):
            W.append(p)
        if len(W) == 3:
            break
    if not W or g.prob_through_set(W) == 0:
        return
    sub = g.sub_ceg(W)
    assert sum(e.prob for e in sub.edges_out[sub.root]) == 1
