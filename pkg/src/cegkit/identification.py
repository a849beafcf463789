"""Identification of post-manipulation distributions from idle probabilities.

The pipeline: a random variable on the sub-graph hanging off a regular
position set W extends to a variable on the whole graph (value "0" marks the
paths that miss W).  For a manipulation forced to a single position the four
forced-position identities tie the idle and manipulated distributions
together; for an amenable manipulation forced to a set the manipulated
distribution equals the idle distribution conditioned on reaching W; and the
back-door decomposition sums that identity over the blocks of an observed
variable Z.  Every identified value can be cross-checked against brute-force
enumeration of the manipulated tree, exactly, with no tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .ceg import (
    CegPath,
    ChainEventGraph,
    EventVariable,
    ZERO_VALUE,
    _path_vertices,
)
from .errors import (
    CoverageError,
    IdentificationError,
    QueryError,
    ValidationError,
)
from .intervention import (
    Manipulation,
    amenability_report,
    apply_manipulation,
    is_forced_to,
)
from .tree import ProbabilityTree, format_fraction


@dataclass(frozen=True)
class Distribution:
    """Value-token to exact probability; None marks an undefined entry."""

    probs: Mapping[str, Fraction | None]

    def values(self) -> tuple[str, ...]:
        return tuple(sorted(self.probs))

    def get(self, value: str) -> Fraction | None:
        return self.probs.get(value)

    def defined(self) -> bool:
        return all(p is not None for p in self.probs.values())

    def total(self) -> Fraction:
        return sum((p for p in self.probs.values() if p is not None), Fraction(0))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return dict(self.probs) == dict(other.probs)

    def as_json(self) -> dict:
        return {
            v: (None if p is None else format_fraction(p))
            for v, p in sorted(self.probs.items())
        }


def suffix_key(path: CegPath) -> tuple[int, ...]:
    return tuple(e.index for e in path)


@dataclass(frozen=True)
class SuffixVariable:
    """A named partition of the continuations from a regular position set.

    Blocks map value tokens to sets of suffix keys (edge index tuples of
    w-to-sink paths, w ranging over the origins).
    """

    name: str
    origins: tuple[str, ...]
    blocks: Mapping[str, frozenset[tuple[int, ...]]]

    def values(self) -> tuple[str, ...]:
        return tuple(sorted(self.blocks))

    def value_of(self, key: tuple[int, ...]) -> str:
        for value, keys in self.blocks.items():
            if key in keys:
                return value
        raise QueryError(f"suffix {key} has no value under {self.name}")

    @staticmethod
    def over(
        name: str,
        ceg: ChainEventGraph,
        W: Iterable[str],
        blocks: Mapping[str, Iterable[tuple[int, ...]]],
    ) -> "SuffixVariable":
        W = tuple(sorted(set(W)))
        space = set()
        for w in W:
            space |= {suffix_key(s) for s in ceg.suffixes_from(w)}
        got: dict[str, frozenset[tuple[int, ...]]] = {}
        covered: set[tuple[int, ...]] = set()
        for value, keys in blocks.items():
            if value == ZERO_VALUE:
                raise ValidationError(f"variable {name}: value '0' is reserved")
            ks = frozenset(keys)
            if ks & covered:
                raise ValidationError(f"variable {name}: overlapping blocks")
            covered |= ks
            got[value] = ks
        if covered != space:
            raise ValidationError(
                f"variable {name}: blocks must partition the continuations of {W}"
            )
        return SuffixVariable(name, W, got)


def suffix_variable_from_leaf_variable(
    ceg: ChainEventGraph, W: Iterable[str], leaf_var: EventVariable
) -> SuffixVariable:
    """Restrict a leaf partition to the continuations of W.

    Requires the leaf variable to be determined by the continuation: two
    paths entering W at the same position with the same suffix must carry
    the same value, whatever happened upstream.
    """
    W = tuple(sorted(set(W)))
    if not ceg.is_c_regular(W):
        raise QueryError(f"{W} is not a regular position set")
    assignment: dict[tuple[int, ...], str] = {}
    for path in ceg.paths():
        verts = _path_vertices(ceg.root, path)
        hit = [i for i, v in enumerate(verts) if v in W]
        if not hit:
            continue
        key = suffix_key(path[hit[0] :])
        value = leaf_var.value_of(ceg.path_leaf(path))
        if assignment.setdefault(key, value) != value:
            raise IdentificationError(
                f"{leaf_var.name} is not determined by the continuation from {W}"
            )
    blocks: dict[str, set[tuple[int, ...]]] = {}
    for key, value in assignment.items():
        blocks.setdefault(value, set()).add(key)
    return SuffixVariable.over(leaf_var.name, ceg, W, blocks)


def extend_variable(
    ceg: ChainEventGraph, W: Iterable[str] | str, sv: SuffixVariable
) -> EventVariable:
    """Extend a continuation variable to all atomic events.

    Paths through W inherit their continuation's value; paths that miss W
    fall into the reserved "0" block (omitted when empty).
    """
    W = (W,) if isinstance(W, str) else tuple(sorted(set(W)))
    if not ceg.is_c_regular(W):
        raise QueryError(f"{W} is not a regular position set")
    if set(sv.origins) != set(W):
        raise ValidationError("continuation variable is defined on a different set")
    blocks: dict[str, set[str]] = {v: set() for v in sv.values()}
    zero: set[str] = set()
    for path in ceg.paths():
        verts = _path_vertices(ceg.root, path)
        hit = [i for i, v in enumerate(verts) if v in W]
        leaf = ceg.path_leaf(path)
        if not hit:
            zero.add(leaf)
        else:
            blocks[sv.value_of(suffix_key(path[hit[0] :]))].add(leaf)
    out: dict[str, set[str]] = {v: s for v, s in blocks.items()}
    if zero:
        out[ZERO_VALUE] = zero
    return EventVariable.over(f"{sv.name}({'+'.join(W)})", out, ceg.tree)


def brute_force_effect(
    tree: ProbabilityTree, m: Manipulation, variable: EventVariable
) -> Distribution:
    """Oracle: apply the manipulation and sum atomic-event probabilities."""
    after = apply_manipulation(tree, m)
    probs = {
        value: after.event_set_probability(leaves)
        for value, leaves in variable.blocks.items()
    }
    return Distribution(probs)


def _suffix_mass(
    ceg: ChainEventGraph, evaluated_on: ProbabilityTree, keys: Iterable[tuple[int, ...]]
) -> Fraction:
    """Probability mass of a set of continuations under the given primitives.

    Edge probabilities are read off the representative situation of each
    edge's source, so the same suffix objects can be priced under idle or
    manipulated primitives.
    """
    total = Fraction(0)
    for key in keys:
        p = Fraction(1)
        for idx in key:
            e = ceg.edges[idx]
            p *= evaluated_on.edge_prob(ceg.rep[e.src], e.rep_child)
        total += p
    return total


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    holds: bool
    detail: tuple[tuple[str, str, str], ...]  # (value, lhs, rhs) rendered exactly


@dataclass(frozen=True)
class ForcedPositionReport:
    w: str
    identities: tuple[IdentityCheck, ...]

    @property
    def all_hold(self) -> bool:
        return all(i.holds for i in self.identities)


def forced_position_identities(
    ceg: ChainEventGraph, m: Manipulation, w: str, sv: SuffixVariable
) -> ForcedPositionReport:
    """Verify the four identities tying idle and forced distributions at w.

    With q the continuation distribution at w and Q its extension: the
    continuation distribution is invariant, the extension's zero block has
    idle mass 1 - P(w) and manipulated mass 0, the idle extension factors as
    P(w) times the continuation, and the manipulated extension equals the
    idle continuation.
    """
    if sv.origins != (w,):
        raise ValidationError("continuation variable must be rooted at w")
    if not is_forced_to(ceg, m, w):
        raise IdentificationError(f"manipulation is not forced to {w}")
    tree = ceg.tree
    after = apply_manipulation(tree, m)
    ext = extend_variable(ceg, w, sv)
    p_w = tree.event_set_probability(ceg.through_leaves(w))

    q_idle = {y: _suffix_mass(ceg, tree, sv.blocks[y]) for y in sv.values()}
    q_manip = {y: _suffix_mass(ceg, after, sv.blocks[y]) for y in sv.values()}
    ext_idle = {
        y: tree.event_set_probability(ext.blocks.get(y, ())) for y in ext.values()
    }
    ext_manip = {
        y: after.event_set_probability(ext.blocks.get(y, ())) for y in ext.values()
    }
    zero_idle = ext_idle.get(ZERO_VALUE, Fraction(0))
    zero_manip = ext_manip.get(ZERO_VALUE, Fraction(0))

    def rows(pairs):
        return tuple(
            (y, format_fraction(a), format_fraction(b)) for y, a, b in pairs
        )

    identities = [
        IdentityCheck(
            "continuation-invariance",
            all(q_idle[y] == q_manip[y] for y in sv.values()),
            rows((y, q_idle[y], q_manip[y]) for y in sv.values()),
        ),
        IdentityCheck(
            "zero-block",
            zero_idle == 1 - p_w and zero_manip == 0,
            rows(
                [
                    (ZERO_VALUE, zero_idle, 1 - p_w),
                    (ZERO_VALUE + "^", zero_manip, Fraction(0)),
                ]
            ),
        ),
        IdentityCheck(
            "prefix-product",
            all(ext_idle.get(y, Fraction(0)) == p_w * q_idle[y] for y in sv.values()),
            rows(
                (y, ext_idle.get(y, Fraction(0)), p_w * q_idle[y])
                for y in sv.values()
            ),
        ),
        IdentityCheck(
            "forced-agreement",
            all(
                ext_manip.get(y, Fraction(0)) == q_idle[y] for y in sv.values()
            ),
            rows(
                (y, ext_manip.get(y, Fraction(0)), q_idle[y]) for y in sv.values()
            ),
        ),
    ]
    if p_w > 0:
        identities.append(
            IdentityCheck(
                "conditional",
                all(
                    ext_idle.get(y, Fraction(0)) / p_w == q_idle[y]
                    for y in sv.values()
                ),
                rows(
                    (y, ext_idle.get(y, Fraction(0)) / p_w, q_idle[y])
                    for y in sv.values()
                ),
            )
        )
    return ForcedPositionReport(w, tuple(identities))


def identify_forced_set(
    ceg: ChainEventGraph, m: Manipulation, W: Iterable[str], sv: SuffixVariable
) -> Distribution:
    """Identified post-manipulation distribution for an amenable forcing.

    Returns the idle-system distribution of the extended variable
    conditioned on passing through W, which equals the manipulated
    distribution of the continuation variable.
    """
    W = tuple(sorted(set(W)))
    report = amenability_report(ceg, m, W)
    if not report.ok:
        raise IdentificationError(f"not amenable ({report.reason}: {report.witness})")
    for w in W:
        if ceg.prob_through(w) == 0:
            raise IdentificationError(f"position {w} has probability zero")
    tree = ceg.tree
    ext = extend_variable(ceg, W, sv)
    p_W = ceg.prob_through_set(W)
    return Distribution(
        {
            y: tree.event_set_probability(ext.blocks.get(y, ())) / p_W
            for y in sv.values()
        }
    )


def find_wz(ceg: ChainEventGraph, omega: Iterable[str]) -> frozenset[str]:
    """Earliest regular position set whose through-paths are exactly omega.

    Candidates are positions whose through-leaves sit inside omega; keeping
    only candidates unreachable from other candidates yields the earliest
    antichain, which must cover omega exactly and be regular.
    """
    omega = frozenset(omega)
    unknown = omega - set(ceg.tree.leaves())
    if unknown:
        raise CoverageError("unknown-leaves", sorted(unknown))
    candidates = [
        vid
        for vid in ceg.vertices
        if ceg.is_position(vid) and ceg.through_leaves(vid) <= omega
    ]
    cand_set = set(candidates)
    reach_from_cand: set[str] = set()
    for c in candidates:
        stack = [e.dst for e in ceg.edges_out[c] if e.dst != "w_inf"]
        seen = set()
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in cand_set:
                reach_from_cand.add(v)
            stack.extend(e.dst for e in ceg.edges_out[v] if e.dst != "w_inf")
    selected = frozenset(c for c in candidates if c not in reach_from_cand)
    covered: set[str] = set()
    for c in selected:
        covered |= ceg.through_leaves(c)
    if covered != omega:
        raise CoverageError("uncovered-paths", sorted(omega - covered))
    if not ceg.is_c_regular(selected):
        raise CoverageError("not-regular", sorted(selected))
    return selected


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    passed: bool
    witness: object = None

    def as_json(self) -> dict:
        out = {"name": self.name, "passed": self.passed}
        if self.witness is not None:
            out["witness"] = str(self.witness)
        return out


@dataclass(frozen=True)
class IdentificationReport:
    W: tuple[str, ...]
    target: str
    given: str
    conditions: tuple[ConditionCheck, ...]
    formula_value: Distribution
    oracle_value: Distribution
    agree: bool

    @property
    def all_conditions_pass(self) -> bool:
        return all(c.passed for c in self.conditions)

    def as_json(self) -> dict:
        return {
            "forced_to": list(self.W),
            "target": self.target,
            "given": self.given,
            "conditions": [c.as_json() for c in self.conditions],
            "formula": self.formula_value.as_json(),
            "oracle": self.oracle_value.as_json(),
            "conditions_pass": self.all_conditions_pass,
            "agree": self.agree,
        }


def backdoor_identify(
    ceg: ChainEventGraph,
    m: Manipulation,
    W: Iterable[str],
    Z: EventVariable,
    sv: SuffixVariable,
) -> IdentificationReport:
    """Back-door decomposition of a forced manipulation's effect over Z.

    For each value z, a regular position set inducing the event Z=z must
    exist, every manipulated situation on its paths must sit at or after it,
    and the manipulation restricted to the re-rooted slice must be amenable
    forcing to the members of W on those paths.  The identified value is
    then the idle conditional given reaching W within the slice, summed over
    z with weights P(Z=z), and is compared exactly with the brute-force
    oracle on the manipulated tree.
    """
    W = tuple(sorted(set(W)))
    tree = ceg.tree
    after = apply_manipulation(tree, m)
    changed = tuple(v for v in tree.situations() if tree.dist(v) != after.dist(v))
    ext = extend_variable(ceg, W, sv)

    conditions: list[ConditionCheck] = []
    terms: dict[str, dict[str, Fraction | None]] = {}

    for z in Z.values():
        omega = Z.blocks[z]
        p_z = tree.event_set_probability(omega)
        try:
            wz = find_wz(ceg, omega)
        except CoverageError as e:
            conditions.append(ConditionCheck(f"wz({z})", False, f"{e.reason}: {e.witness}"))
            terms[z] = {y: None for y in sv.values()}
            continue
        conditions.append(ConditionCheck(f"wz({z})", True))

        w_on_z = tuple(
            w for w in W if ceg.through_leaves(w) & omega
        )
        wz_members = {v for u in wz for v in ceg.blocks[u]}
        target_members = {v for w in w_on_z for v in ceg.blocks[w]}

        ordering_witness = None
        for leaf in sorted(omega):
            path = tree.event_for_leaf(leaf).path
            cut = next(
                (i for i, node in enumerate(path) if node in wz_members), None
            )
            if cut is None:
                ordering_witness = f"path {leaf} misses {sorted(wz)}"
                break
            before = set(path[:cut])
            bad_target = before & target_members
            if bad_target:
                ordering_witness = f"{sorted(bad_target)} precede {sorted(wz)} on {leaf}"
                break
            bad_change = before & set(changed)
            if bad_change:
                ordering_witness = (
                    f"manipulated {sorted(bad_change)} precede {sorted(wz)} on {leaf}"
                )
                break
        conditions.append(
            ConditionCheck(f"ordering({z})", ordering_witness is None, ordering_witness)
        )
        if ordering_witness is not None:
            terms[z] = {y: None for y in sv.values()}
            continue

        if not w_on_z:
            touched = [v for v in changed if set(tree.subtree_nodes(v)) & _leafset(tree, omega)]
            untouched = not touched
            conditions.append(
                ConditionCheck(
                    f"amenable({z})",
                    untouched,
                    None if untouched else f"manipulated {touched} on paths without targets",
                )
            )
            # No member of W lies on these paths, so each target block gets
            # no mass from this z.
            terms[z] = {y: Fraction(0) for y in sv.values()}
            continue

        slice_tree = ceg.sub_tree(wz)
        slice_ceg = _slice_ceg(ceg, slice_tree)
        slice_m = Manipulation(
            {v: m.replacements[v] for v in m.replacements if slice_tree.is_situation(v)}
        )
        slice_W = tuple(
            sorted(
                {
                    slice_ceg.position_of[v]
                    for v in target_members
                    if slice_tree.is_situation(v)
                }
            )
        )
        rep = amenability_report(slice_ceg, slice_m, slice_W)
        conditions.append(
            ConditionCheck(
                f"amenable({z})",
                rep.ok,
                None if rep.ok else f"{rep.reason}: {rep.witness}",
            )
        )

        p_wz = tree.event_set_probability(
            omega & _union_through(ceg, w_on_z)
        )
        if p_wz == 0:
            conditions.append(ConditionCheck(f"positivity({z})", False, sorted(w_on_z)))
            terms[z] = {y: None for y in sv.values()}
            continue
        conditions.append(ConditionCheck(f"positivity({z})", True))
        terms[z] = {
            y: tree.event_set_probability(ext.blocks.get(y, frozenset()) & omega)
            / p_wz
            * p_z
            for y in sv.values()
        }

    formula: dict[str, Fraction | None] = {}
    for y in sv.values():
        acc = Fraction(0)
        for z in Z.values():
            t = terms[z][y]
            if t is None:
                acc = None
                break
            acc += t
        formula[y] = acc
    if all(v is not None for v in formula.values()):
        formula[ZERO_VALUE] = 1 - sum(formula.values(), Fraction(0))
    else:
        formula[ZERO_VALUE] = None

    oracle_raw = brute_force_effect(tree, m, ext)
    oracle = Distribution(
        {
            y: oracle_raw.get(y) if oracle_raw.get(y) is not None else Fraction(0)
            for y in list(sv.values()) + [ZERO_VALUE]
        }
    )
    formula_dist = Distribution(formula)
    agree = formula_dist.defined() and formula_dist == oracle
    return IdentificationReport(
        W=W,
        target=sv.name,
        given=Z.name,
        conditions=tuple(conditions),
        formula_value=formula_dist,
        oracle_value=oracle,
        agree=agree,
    )


def _leafset(tree: ProbabilityTree, leaves: Iterable[str]) -> set[str]:
    return set(leaves)


def _union_through(ceg: ChainEventGraph, W: Iterable[str]) -> frozenset[str]:
    out: set[str] = set()
    for w in W:
        out |= ceg.through_leaves(w)
    return frozenset(out)


def _slice_ceg(ceg: ChainEventGraph, slice_tree: ProbabilityTree) -> ChainEventGraph:
    from .ceg import build_ceg_auto

    return build_ceg_auto(slice_tree, ceg.mode)
