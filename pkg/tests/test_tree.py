import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cegkit import parse_tree
from cegkit.errors import (
    BindingError,
    SumToOneError,
    TreeParseError,
    ValidationError,
)
from cegkit.randomgen import random_tree

F = Fraction


def test_tableau_atomic_events(tableau_tree):
    events = tableau_tree.atomic_events()
    assert len(events) == 5
    assert {ev.leaf for ev in events} == {"v2", "v4", "v5", "v6", "v7"}
    # depth-first in declaration order
    assert [ev.leaf for ev in events] == ["v6", "v7", "v4", "v5", "v2"]


def test_tableau_path_probabilities(tableau_tree):
    by_leaf = {ev.leaf: tableau_tree.path_probability(ev) for ev in tableau_tree.atomic_events()}
    assert by_leaf["v2"] == 1 - F(3, 5)
    assert by_leaf["v4"] == F(3, 5) * F(1, 5) == F(3, 25)
    assert by_leaf["v5"] == F(3, 5) * (1 - F(1, 4) - F(1, 5))
    assert by_leaf["v6"] == F(3, 5) * F(1, 4) * F(1, 2)
    assert by_leaf["v7"] == F(3, 5) * F(1, 4) * (1 - F(1, 2))
    assert sum(by_leaf.values()) == 1


def test_tableau_symbolic_factors(tableau_tree):
    factors = {
        ev.leaf: tableau_tree.path_factors(ev) for ev in tableau_tree.atomic_events()
    }
    assert factors["v2"] == ("(1 - pi1)",)
    assert factors["v4"] == ("pi1", "pi4")
    assert factors["v5"] == ("pi1", "(1 - pi3 - pi4)")
    assert factors["v6"] == ("pi1", "pi3", "pi6")
    assert factors["v7"] == ("pi1", "pi3", "(1 - pi6)")


def test_root_only_tree():
    tree = parse_tree("root v0\n")
    events = tree.atomic_events()
    assert len(events) == 1
    assert events[0].path == ("v0",)
    assert tree.path_probability(events[0]) == 1


def test_full_binary_depth3_has_eight_events():
    lines = ["root b"]
    frontier = ["b"]
    for _ in range(3):
        nxt = []
        for node in frontier:
            for tag in ("a", "b"):
                child = node + tag
                lines.append(f"edge {node} {child} 1/2")
                nxt.append(child)
        frontier = nxt
    tree = parse_tree("\n".join(lines))
    assert len(tree.atomic_events()) == 8
    assert sum(tree.path_probability(ev) for ev in tree.atomic_events()) == 1


def test_sum_to_one_violation():
    with pytest.raises(SumToOneError):
        parse_tree("edge r a 0.6\nedge r b 0.5\n")


def test_residual_out_of_range():
    with pytest.raises(SumToOneError):
        parse_tree("edge r a 0.7\nedge r b 0.5\nedge r c _\n")


def test_duplicate_edge_reports_line():
    with pytest.raises(TreeParseError) as err:
        parse_tree("edge r a 1/2\nedge r b _\nedge r a 1/4\n")
    assert err.value.line == 3


def test_multiple_roots():
    with pytest.raises(ValidationError, match="multiple roots"):
        parse_tree("edge r a 1\nedge s b 1\n")


def test_cycle_detected():
    with pytest.raises(ValidationError, match="cycle|two parents|duplicate"):
        parse_tree("edge r a 1\nedge a b 1/2\nedge b a _\n")


def test_unbound_symbol():
    with pytest.raises(BindingError, match="unbound"):
        parse_tree("edge r a p\nedge r b _\n")


def test_unknown_binding_rejected():
    with pytest.raises(BindingError):
        parse_tree("edge r a 1/2\nedge r b _\nbind q = 1/3\n")


def test_symbol_twice_at_one_situation():
    with pytest.raises(ValidationError, match="twice"):
        parse_tree("edge r a p\nedge r b p\nbind p = 1/2\n")


def test_two_residuals_rejected():
    with pytest.raises(ValidationError, match="residual"):
        parse_tree("edge r a _\nedge r b _\n")


def test_reserved_names_rejected():
    with pytest.raises(TreeParseError):
        parse_tree("edge r w_inf 1\n")
    with pytest.raises(TreeParseError):
        parse_tree("edge w_star a 1\n")


def test_zero_probability_edges_kept(tableau_tree):
    zeroed = tableau_tree.rebind(pi6=F(0))
    by_leaf = {ev.leaf: zeroed.path_probability(ev) for ev in zeroed.atomic_events()}
    assert by_leaf["v6"] == 0
    assert by_leaf["v7"] == F(3, 5) * F(1, 4)
    assert set(zeroed.nodes()) == set(tableau_tree.nodes())


def test_shared_symbol_resolves_identically(binary_pair_tree):
    assert binary_pair_tree.edge_prob("v1", "v3") == binary_pair_tree.edge_prob(
        "v2", "v5"
    )


def test_serialize_round_trip_fixture(ladder_tree):
    assert parse_tree(ladder_tree.serialize()) == ladder_tree


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_serialize_round_trip_random(seed):
    tree = random_tree(random.Random(seed))
    assert parse_tree(tree.serialize()) == tree


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_normalization_random(seed):
    tree = random_tree(random.Random(seed))
    assert sum(tree.path_probability(ev) for ev in tree.atomic_events()) == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_zeroing_a_symbol_truncates_exactly(seed):
    tree = random_tree(random.Random(seed))
    if any(tree.path_probability(ev) == 0 for ev in tree.atomic_events()):
        return
    for sym in sorted(tree.bindings):
        try:
            zeroed = tree.rebind(**{sym: F(0)})
        except ValidationError:
            continue
        for ev in zeroed.atomic_events():
            uses_sym = any(
                zeroed.edge_label(a, b).kind == "symbol"
                and zeroed.edge_label(a, b).symbol == sym
                for a, b in zip(ev.path, ev.path[1:])
            )
            assert (zeroed.path_probability(ev) == 0) == uses_sym
        return
