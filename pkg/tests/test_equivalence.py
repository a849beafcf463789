import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cegkit import compute_positions, compute_stages, parse_tree
from cegkit.equivalence import Partition
from cegkit.errors import StageAssertionError
from cegkit.randomgen import random_tree

LADDER_STAGES = [
    ["v0"],
    ["v1", "v13", "v17", "v3"],
    ["v19"],
    ["v2", "v7"],
    ["v5", "v9"],
]
LADDER_POSITIONS = [
    ["v0"],
    ["v1", "v3"],
    ["v13"],
    ["v17"],
    ["v19"],
    ["v2"],
    ["v5", "v9"],
    ["v7"],
]


def blocks(partition: Partition):
    return sorted(sorted(b) for b in partition.blocks)


def test_ladder_stage_partition(ladder_tree):
    assert blocks(compute_stages(ladder_tree)) == sorted(LADDER_STAGES)


def test_ladder_position_partition(ladder_tree):
    stages = compute_stages(ladder_tree)
    assert blocks(compute_positions(ladder_tree, stages)) == sorted(LADDER_POSITIONS)


def test_all_distinct_symbols_yield_singletons():
    tree = parse_tree(
        "edge r a p1\nedge r b _\nedge a c p2\nedge a d _\n"
        "bind p1 = 1/2\nbind p2 = 1/2\n"
    )
    stages = compute_stages(tree)
    assert all(len(b) == 1 for b in stages.blocks)
    positions = compute_positions(tree, stages)
    assert all(len(b) == 1 for b in positions.blocks)


NUMERIC_PAIR = """
root v0
edge v0 v1 a
edge v0 v2 _
edge v1 v3 b1
edge v1 v4 _
edge v2 v5 b2
edge v2 v6 _
bind a = 2/5
bind b1 = 3/10
bind b2 = 3/10
"""


def test_numeric_mode_merges_equal_bindings():
    tree = parse_tree(NUMERIC_PAIR)
    symbolic = compute_stages(tree, "symbolic")
    assert not symbolic.same_block("v1", "v2")
    numeric = compute_stages(tree, "numeric")
    assert numeric.same_block("v1", "v2")
    positions = compute_positions(tree, numeric)
    assert positions.same_block("v1", "v2")


def test_stage_assertion_violation():
    bad = NUMERIC_PAIR + "stage v1 v2\n"
    tree = parse_tree(bad)
    with pytest.raises(StageAssertionError):
        compute_stages(tree, "symbolic")
    # numeric mode satisfies the same assertion
    compute_stages(tree, "numeric")


def test_positions_refine_stages(ladder_tree):
    stages = compute_stages(ladder_tree)
    positions = compute_positions(ladder_tree, stages)
    assert positions.refines(stages)


def test_position_fixpoint(ladder_tree, housing_tree):
    for tree in (ladder_tree, housing_tree):
        stages = compute_stages(tree)
        positions = compute_positions(tree, stages)
        again = compute_positions(tree, positions)
        assert blocks(again) == blocks(positions)


def test_leaf_children_situations_merge_iff_same_stage(binary_pair_tree):
    stages = compute_stages(binary_pair_tree)
    positions = compute_positions(binary_pair_tree, stages)
    assert stages.same_block("v1", "v2")
    assert positions.same_block("v1", "v2")


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_refinement_and_fixpoint_random(seed):
    tree = random_tree(random.Random(seed))
    stages = compute_stages(tree)
    positions = compute_positions(tree, stages)
    assert positions.refines(stages)
    assert blocks(compute_positions(tree, positions)) == blocks(positions)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), perm_seed=st.integers(0, 10**6))
def test_partitions_independent_of_declaration_order(seed, perm_seed):
    tree = random_tree(random.Random(seed))
    lines = tree.serialize().splitlines()
    edges = [l for l in lines if l.startswith("edge ")]
    rest = [l for l in lines if not l.startswith("edge ")]
    random.Random(perm_seed).shuffle(edges)
    shuffled = parse_tree("\n".join(rest + edges))
    assert blocks(compute_stages(shuffled)) == blocks(compute_stages(tree))
    assert blocks(
        compute_positions(shuffled, compute_stages(shuffled))
    ) == blocks(compute_positions(tree, compute_stages(tree)))
