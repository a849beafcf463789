import itertools
import random
from fractions import Fraction

import pytest

from cegkit import (
    DiscreteBN,
    bn_to_tree,
    build_ceg,
    build_ceg_auto,
    check_bn_ceg_shape,
    compute_positions,
    do_to_manipulation,
    parse_bn,
    parse_tree,
    truncated_marginal,
)
from cegkit.bn import leaf_of_config
from cegkit.ceg import EventVariable
from cegkit.errors import ValidationError
from cegkit.identification import brute_force_effect
from cegkit.randomgen import rand_dist
from conftest import fixture_text

F = Fraction


def random_bn(rng, names, parents):
    variables = [(n, ("0", "1")) for n in names]
    cpts = {}
    for i, n in enumerate(names):
        configs = list(itertools.product(*[("0", "1")] * len(parents.get(n, ()))))
        for config in configs:
            cpts[(n, config)] = tuple(rand_dist(rng, 2))
    return DiscreteBN.build(variables, parents, cpts)


def all_parent_structures(names):
    """Every order-respecting parent assignment for the given name order."""
    options = []
    for i, n in enumerate(names):
        earlier = names[:i]
        subsets = []
        for r in range(len(earlier) + 1):
            subsets.extend(itertools.combinations(earlier, r))
        options.append(subsets)
    for combo in itertools.product(*options):
        yield {n: tuple(ps) for n, ps in zip(names, combo)}


def test_fork_bn_tree_and_stages():
    bn = parse_bn(fixture_text("fork.bn"))
    tree, stages = bn_to_tree(bn)
    # the two second-level stages group situations by the first value
    level2 = [sorted(b) for b in stages.blocks if len(b) == 2]
    assert ["n_0_0", "n_0_1"] in level2
    assert ["n_1_0", "n_1_1"] in level2
    positions = compute_positions(tree, stages)
    g = build_ceg(tree, positions, stages)
    assert len(g.vertices) == 6  # root, two first-level, two merged, sink
    assert check_bn_ceg_shape(g).all_pass


def test_single_binary_variable():
    bn = DiscreteBN.build(
        [("X", ("0", "1"))], {}, {("X", ()): (F(1, 3), F(2, 3))}
    )
    tree, stages = bn_to_tree(bn)
    assert len(tree.situations()) == 1
    g = build_ceg_auto(tree)
    assert len(g.vertices) == 2
    assert check_bn_ceg_shape(g).all_pass


def test_fully_connected_ternary_pair():
    rng = random.Random(3)
    variables = [("A", ("0", "1", "2")), ("B", ("0", "1", "2"))]
    cpts = {("A", ()): tuple(rand_dist(rng, 3))}
    for v in ("0", "1", "2"):
        cpts[("B", (v,))] = tuple(rand_dist(rng, 3))
    bn = DiscreteBN.build(variables, {"B": ("A",)}, cpts)
    tree, stages = bn_to_tree(bn)
    assert len(stages.blocks) == 4  # one root stage, three B rows
    assert len([e for v in tree.situations() for e in tree.edges(v)]) == 12


def test_joint_agreement_exhaustive_binary():
    rng = random.Random(11)
    for names in (("X1", "X2"), ("X1", "X2", "X3")):
        for parents in all_parent_structures(list(names)):
            bn = random_bn(rng, list(names), parents)
            tree, _ = bn_to_tree(bn)
            for config, p in bn.joint():
                assert tree.leaf_probability(leaf_of_config(config)) == p


def test_shape_checks_pass_on_bn_trees():
    rng = random.Random(12)
    for parents in all_parent_structures(["X1", "X2", "X3"]):
        bn = random_bn(rng, ["X1", "X2", "X3"], parents)
        tree, stages = bn_to_tree(bn)
        g = build_ceg(tree, compute_positions(tree, stages), stages)
        report = check_bn_ceg_shape(g)
        assert report.all_pass, report


def test_shape_check_fails_on_uneven_tree(court_ceg):
    report = check_bn_ceg_shape(court_ceg)
    assert not report.uniform_path_length
    assert report.witness


def test_do_manipulation_matches_truncated_factorization():
    rng = random.Random(13)
    for parents in all_parent_structures(["X1", "X2", "X3"]):
        bn = random_bn(rng, ["X1", "X2", "X3"], parents)
        tree, _ = bn_to_tree(bn)
        for var in bn.names():
            m = do_to_manipulation(bn, var, "1")
            for target in bn.names():
                if target == var:
                    continue
                blocks = {}
                for config, _p in bn.joint():
                    value = dict(zip(bn.names(), config))[target]
                    blocks.setdefault(f"t{value}", []).append(
                        leaf_of_config(config)
                    )
                dist = brute_force_effect(
                    tree, m, EventVariable.over("T", blocks, tree)
                )
                expected = truncated_marginal(bn, {var: "1"}, target)
                for value, p in expected.items():
                    assert dist.get(f"t{value}") == p


def test_do_manipulation_is_positioned_and_staged():
    from cegkit import is_positioned, is_staged

    bn = parse_bn(fixture_text("fork.bn"))
    tree, _ = bn_to_tree(bn)
    for var, value in (("X1", "1"), ("X3", "0")):
        m = do_to_manipulation(bn, var, value)
        assert is_positioned(tree, m)
        assert is_staged(tree, m)


def test_do_manipulation_forces_every_level_situation():
    bn = parse_bn(fixture_text("fork.bn"))
    m = do_to_manipulation(bn, "X3", "0")
    assert set(m.replacements) == {"n_0_0", "n_0_1", "n_1_0", "n_1_1"}
    for dist in m.replacements.values():
        assert sorted(dist.values()) == [0, 1]


def test_do_unknown_value_rejected():
    bn = parse_bn(fixture_text("fork.bn"))
    with pytest.raises(ValidationError):
        do_to_manipulation(bn, "X1", "7")


CONTEXT_SPECIFIC = """
root n
edge n n_0 A.0
edge n n_1 _
bind A.0 = 2/5
edge n_0 n_0_0 B0.0
edge n_0 n_0_1 _
bind B0.0 = 1/3
edge n_1 n_1_0 B1.0
edge n_1 n_1_1 _
bind B1.0 = 1/4
edge n_0_0 n_0_0_0 C0.0
edge n_0_0 n_0_0_1 _
edge n_0_1 n_0_1_0 C0.0
edge n_0_1 n_0_1_1 _
bind C0.0 = 1/2
edge n_1_0 n_1_0_0 C10.0
edge n_1_0 n_1_0_1 _
bind C10.0 = 1/5
edge n_1_1 n_1_1_0 C11.0
edge n_1_1 n_1_1_1 _
bind C11.0 = 2/5
"""


def test_context_specific_stage_structure():
    # third variable independent of the second only in the first context
    tree = parse_tree(CONTEXT_SPECIFIC)
    g = build_ceg_auto(tree)
    assert g.stages.same_block("n_0_0", "n_0_1")
    assert not g.stages.same_block("n_1_0", "n_1_1")
    assert g.position_of["n_0_0"] == g.position_of["n_0_1"]
    assert g.position_of["n_1_0"] != g.position_of["n_1_1"]
    # vertices: root, two contexts, merged pair, two singles, sink
    assert len(g.vertices) == 7
