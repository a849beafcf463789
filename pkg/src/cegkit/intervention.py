"""Manipulations of probability trees and their structural classification.

A manipulation replaces the child distributions of a chosen set of
situations and leaves everything else alone; it is the event-tree analogue
of the do-operator.  This module applies manipulations and decides the
predicates that drive identification: positioned, staged, pure, forced,
simple (active/background split) and amenable.

Manipulation source text is line oriented:

    set v1 v3 1/2        # explicit probability, one child per line
    set v1 v4 1/2
    force v2 -> v5       # shorthand for a point mass
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .ceg import ChainEventGraph, build_ceg_auto, _path_vertices
from .equivalence import compute_stages, positions_of
from .errors import (
    ManipulationError,
    NotSimpleError,
    TreeParseError,
)
from .tree import SINK, Label, ProbabilityTree, format_fraction, parse_fraction


@dataclass(frozen=True)
class Manipulation:
    """A set of situations with replacement child distributions."""

    replacements: Mapping[str, Mapping[str, Fraction]]

    @property
    def manipulated(self) -> frozenset[str]:
        return frozenset(self.replacements)

    def validate(self, tree: ProbabilityTree):
        for v, dist in self.replacements.items():
            if not tree.is_situation(v):
                raise ManipulationError(f"{v} is not a situation")
            kids = set(tree.child_names(v))
            unknown = sorted(set(dist) - kids)
            if unknown:
                raise ManipulationError(f"{v} has no children {unknown}")
            total = sum(dist.values(), Fraction(0))
            if total != 1:
                raise ManipulationError(
                    f"replacement at {v} sums to {format_fraction(total)}"
                )
            if any(p < 0 for p in dist.values()):
                raise ManipulationError(f"negative probability at {v}")


def parse_manipulation(text: str, tree: ProbabilityTree) -> Manipulation:
    partial: dict[str, dict[str, Fraction]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "set":
            if len(toks) != 4:
                raise TreeParseError(lineno, "usage: set <situation> <child> <p>")
            try:
                prob = parse_fraction(toks[3])
            except ValueError as exc:
                raise TreeParseError(lineno, str(exc)) from None
            sit, child = toks[1], toks[2]
            if child in partial.get(sit, {}):
                raise TreeParseError(lineno, f"{sit} -> {child} set twice")
            partial.setdefault(sit, {})[child] = prob
        elif toks[0] == "force":
            if len(toks) != 4 or toks[2] != "->":
                raise TreeParseError(lineno, "usage: force <situation> -> <child>")
            sit, child = toks[1], toks[3]
            if sit in partial:
                raise TreeParseError(lineno, f"{sit} already manipulated")
            partial[sit] = {child: Fraction(1)}
        else:
            raise TreeParseError(lineno, f"unknown directive {toks[0]!r}")

    replacements: dict[str, dict[str, Fraction]] = {}
    for sit, given in partial.items():
        if not tree.is_situation(sit):
            raise ManipulationError(f"{sit} is not a situation")
        dist = {c: given.get(c, Fraction(0)) for c in tree.child_names(sit)}
        replacements[sit] = dist
    m = Manipulation(replacements)
    m.validate(tree)
    return m


def apply_manipulation(tree: ProbabilityTree, m: Manipulation) -> ProbabilityTree:
    """The manipulated tree: replaced distributions become literal labels."""
    m.validate(tree)
    edges = []
    used: set[str] = set()
    for v in tree.preorder():
        for c, lab in tree.edges(v):
            if v in m.replacements:
                lab = Label.lit(m.replacements[v][c])
            elif lab.kind == "symbol":
                used.add(lab.symbol)
            edges.append((v, c, lab))
    bindings = {s: tree.bindings[s] for s in used}
    return ProbabilityTree.build(edges, bindings, tree.root)


def is_positioned(tree: ProbabilityTree, m: Manipulation, mode: str = "symbolic") -> bool:
    """Positions after the manipulation are equal to or coarser than before."""
    before = positions_of(tree, mode)
    after = positions_of(apply_manipulation(tree, m), mode)
    return before.refines(after)


def is_staged(tree: ProbabilityTree, m: Manipulation, mode: str = "symbolic") -> bool:
    before = compute_stages(tree, mode)
    after = compute_stages(apply_manipulation(tree, m), mode)
    return before.refines(after)


def pure_manipulation(ceg: ChainEventGraph, W: Iterable[str]) -> Manipulation:
    """Redirect every parent of W onto its unique child position in W.

    The redirect rescales the idle mass of the edges into W (uniform when
    that mass is zero) so same-stage parents are manipulated identically;
    the result is checked to be positioned.
    """
    W = frozenset(W)
    if not ceg.is_manipulation_set(W):
        raise ManipulationError(f"{sorted(W)} is not a manipulation set")
    tree = ceg.tree
    pa = {e.src for e in ceg.edges if e.dst in W}
    replacements: dict[str, dict[str, Fraction]] = {}
    for p in sorted(pa):
        (w_child,) = {e.dst for e in ceg.edges_out[p]} & W
        target_members = ceg.blocks[w_child]
        for v in sorted(ceg.blocks[p]):
            toward = [c for c in tree.child_names(v) if c in target_members]
            if not toward:
                raise ManipulationError(f"{v} has no edge into {w_child}")
            mass = sum((tree.edge_prob(v, c) for c in toward), Fraction(0))
            dist = {}
            for c in tree.child_names(v):
                if c not in toward:
                    dist[c] = Fraction(0)
                elif mass > 0:
                    dist[c] = tree.edge_prob(v, c) / mass
                else:
                    dist[c] = Fraction(1, len(toward))
            replacements[v] = dist
    m = Manipulation(replacements)
    if not is_positioned(tree, m, ceg.mode):
        raise ManipulationError("pure manipulation is not positioned")
    return m


def _changed_situations(tree: ProbabilityTree, manipulated: ProbabilityTree):
    return tuple(
        v for v in tree.situations() if tree.dist(v) != manipulated.dist(v)
    )


def reachable_positions(ceg: ChainEventGraph, start: str) -> frozenset[str]:
    """Positions at or after `start` (directed reachability, start included)."""
    ceg._require_position(start)
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for e in ceg.edges_out.get(v, ()):
            if e.dst != SINK and e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return frozenset(seen)


def is_forced_to(ceg: ChainEventGraph, m: Manipulation, w: str) -> bool:
    """After the manipulation the position is certain and its future intact."""
    ceg._require_position(w)
    tree = ceg.tree
    after = apply_manipulation(tree, m)
    if after.event_set_probability(ceg.through_leaves(w)) != 1:
        return False
    protected = reachable_positions(ceg, w)
    protected_sits = {v for p in protected for v in ceg.blocks[p]}
    return all(
        v not in protected_sits for v in _changed_situations(tree, after)
    )


# -- simple sets: active/background decomposition ---------------------------


@dataclass(frozen=True)
class ActiveBackgroundSplit:
    """Upstream positions of a regular set W, split by edge retention.

    A position is active when each upstream graph it sits in keeps exactly
    one of its outgoing edges, background when every edge is kept.  The
    common active factor is the product of retained active edge labels,
    which the sequence conditions force to agree across every root-to-W
    route.
    """

    W: tuple[str, ...]
    active: frozenset[str]
    background: frozenset[str]
    common_active_factor: Fraction
    active_length: int


def classify_simple(ceg: ChainEventGraph, W: Iterable[str]) -> ActiveBackgroundSplit:
    """Decide the active/background split of K(C*(W)) or raise NotSimpleError.

    Retention is judged on positive-probability root-to-w routes, counted
    against the full out-edge multiset of the graph, so zero-probability
    edges left behind by a manipulation still count as removable choices.
    """
    W = tuple(sorted(set(W)))
    if not W:
        raise NotSimpleError("empty position set")
    for w in W:
        ceg._require_position(w)
    if not ceg.is_c_regular(W):
        raise NotSimpleError("not-regular", W)

    prefixes = {}
    for w in W:
        found = []
        for path in ceg.paths():
            if ceg.path_probability(path) == 0:
                continue
            verts = _path_vertices(ceg.root, path)
            if w not in verts:
                continue
            cut = verts.index(w)
            found.append(path[:cut])
        if not found:
            raise NotSimpleError("zero-probability-member", w)
        # Distinct prefixes only: many suffixes share one root-to-w route.
        uniq = {}
        for pre in found:
            uniq[tuple(e.index for e in pre)] = pre
        prefixes[w] = list(uniq.values())

    retained: dict[str, dict[str, set[int]]] = {w: {} for w in W}
    for w, pres in prefixes.items():
        for pre in pres:
            for e in pre:
                retained[w].setdefault(e.src, set()).add(e.index)

    classification: dict[str, str] = {}
    for w in W:
        for u, kept in retained[w].items():
            full = ceg.out_degree(u)
            if len(kept) == full:
                cls = "background"
            elif len(kept) == 1:
                cls = "active"
            else:
                raise NotSimpleError("mixed-retention", (w, u))
            if classification.setdefault(u, cls) != cls:
                raise NotSimpleError("inconsistent-classification", u)

    canon_active: list[tuple[str, Fraction]] | None = None
    canon_background: list[str] | None = None
    for w in W:
        for pre in prefixes[w]:
            act = [
                (e.src, e.prob) for e in pre if classification[e.src] == "active"
            ]
            bg = [e.src for e in pre if classification[e.src] == "background"]
            # A background position with several retained edges appears once
            # per route; dedupe consecutive repeats cannot occur on a path.
            if canon_active is None:
                canon_active, canon_background = act, bg
                continue
            if len(act) != len(canon_active):
                raise NotSimpleError("active-length-mismatch", w)
            for (u, p), (u0, p0) in zip(act, canon_active):
                if not ceg.same_stage(u, u0):
                    raise NotSimpleError("active-stage-mismatch", (u, u0))
                if p != p0:
                    raise NotSimpleError("active-label-mismatch", (u, u0))
            if len(bg) != len(canon_background):
                raise NotSimpleError("background-length-mismatch", w)
            for u, u0 in zip(bg, canon_background):
                if not ceg.same_stage(u, u0):
                    raise NotSimpleError("background-stage-mismatch", (u, u0))

    factor = Fraction(1)
    for _, p in canon_active:
        factor *= p
    return ActiveBackgroundSplit(
        W=W,
        active=frozenset(u for u, c in classification.items() if c == "active"),
        background=frozenset(
            u for u, c in classification.items() if c == "background"
        ),
        common_active_factor=factor,
        active_length=len(canon_active),
    )


def background_route_factor(
    ceg: ChainEventGraph, split: ActiveBackgroundSplit, w: str
) -> Fraction:
    """Sum over root-to-w routes of the product of background edge labels."""
    total = Fraction(0)
    seen = set()
    for path in ceg.paths():
        if ceg.path_probability(path) == 0:
            continue
        verts = _path_vertices(ceg.root, path)
        if w not in verts:
            continue
        pre = path[: verts.index(w)]
        key = tuple(e.index for e in pre)
        if key in seen:
            continue
        seen.add(key)
        prod = Fraction(1)
        for e in pre:
            if e.src in split.background:
                prod *= e.prob
        total += prod
    return total


@dataclass(frozen=True)
class AmenabilityReport:
    ok: bool
    reason: str | None
    witness: object
    idle_split: ActiveBackgroundSplit | None
    manipulated_split: ActiveBackgroundSplit | None


def amenability_report(
    ceg: ChainEventGraph, m: Manipulation, W: Iterable[str]
) -> AmenabilityReport:
    """Check the three amenability clauses for a forced manipulation to W.

    W must be simple in the idle graph; the manipulation must force W and
    leave it simple in the manipulated graph (rebuilt from the manipulated
    tree, so its own position structure applies); and only edges hanging off
    idle active positions may change.
    """
    W = tuple(sorted(set(W)))
    try:
        idle_split = classify_simple(ceg, W)
    except NotSimpleError as e:
        return AmenabilityReport(False, f"idle-not-simple:{e.reason}", e.witness, None, None)

    tree = ceg.tree
    after = apply_manipulation(tree, m)
    members = {v for w in W for v in ceg.blocks[w]}
    leaves = set()
    for w in W:
        leaves |= ceg.through_leaves(w)
    if after.event_set_probability(leaves) != 1:
        return AmenabilityReport(False, "not-forced", W, idle_split, None)

    manipulated = build_ceg_auto(after, ceg.mode)
    W_after = tuple(sorted({manipulated.position_of[v] for v in members}))
    try:
        manip_split = classify_simple(manipulated, W_after)
    except NotSimpleError as e:
        return AmenabilityReport(
            False, f"manipulated-not-simple:{e.reason}", e.witness, idle_split, None
        )

    for v in _changed_situations(tree, after):
        if ceg.position_of[v] not in idle_split.active:
            return AmenabilityReport(
                False, "change-off-active", v, idle_split, manip_split
            )
    return AmenabilityReport(True, None, None, idle_split, manip_split)


def is_amenable(ceg: ChainEventGraph, m: Manipulation, W: Iterable[str]) -> bool:
    return amenability_report(ceg, m, W).ok
