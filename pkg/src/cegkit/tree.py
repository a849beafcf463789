"""Probability trees with exact rational edge labels.

Trees are written in a line-oriented text form ("#" starts a comment):

    root v0                  # optional; defaults to the unique parentless node
    edge v0 v1 p1            # symbolic label, resolved through a bind line
    edge v0 v2 _             # residual label: one minus the other siblings
    edge v1 v3 0.25          # literal label (decimal or p/q fraction)
    bind p1 = 3/5
    stage v1 v2              # optional stage assertion, checked when stages
                             # are computed

Every label resolves to an exact ``fractions.Fraction``.  Validation checks
that the tree is a single rooted tree, that each situation's outgoing
probabilities sum to one exactly, and that at most one residual label
appears per situation.  A symbol may label at most one edge of a given
situation; reusing a symbol across situations is how shared stage structure
is declared.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import (
    BindingError,
    SumToOneError,
    TreeParseError,
    ValidationError,
)

_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z0-9_.]*\Z")
_NUMBER_RE = re.compile(r"(\d+(\.\d+)?|\.\d+|\d+/\d+)\Z")

RESIDUAL_MARK = "_"
SINK = "w_inf"
SUB_ROOT = "w_star"
_RESERVED_NAMES = frozenset({SINK, SUB_ROOT})


def parse_fraction(text: str) -> Fraction:
    """Parse a decimal or p/q token into an exact Fraction."""
    try:
        if "/" in text:
            num, den = text.split("/")
            return Fraction(int(num), int(den))
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"bad number {text!r}") from exc


def format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Label:
    """An edge label: a symbol, an exact literal, or the residual marker."""

    kind: str  # "symbol" | "literal" | "residual"
    symbol: str | None = None
    value: Fraction | None = None

    @staticmethod
    def sym(name: str) -> "Label":
        return Label("symbol", symbol=name)

    @staticmethod
    def lit(value: Fraction) -> "Label":
        return Label("literal", value=Fraction(value))

    @staticmethod
    def residual() -> "Label":
        return Label("residual")

    def key(self):
        """Identity used when matching labels between situations.

        Symbols match by name, literals by exact value, residuals match each
        other (two residuals resolve equally whenever their siblings do).
        """
        if self.kind == "symbol":
            return ("s", self.symbol)
        if self.kind == "literal":
            return ("l", format_fraction(self.value))
        return ("r", "")

    def text(self) -> str:
        if self.kind == "symbol":
            return self.symbol
        if self.kind == "literal":
            return format_fraction(self.value)
        return RESIDUAL_MARK


@dataclass(frozen=True)
class AtomicEvent:
    """A root-to-leaf path, the sample points of the tree model."""

    path: tuple[str, ...]

    @property
    def leaf(self) -> str:
        return self.path[-1]

    def __len__(self) -> int:
        return len(self.path) - 1


def _check_name(name: str, what: str, line: int | None = None):
    if not _TOKEN_RE.match(name) or _NUMBER_RE.match(name):
        _fail(line, f"bad {what} {name!r}")
    if name == SINK:
        _fail(line, f"{what} {name!r} is reserved")


def _check_user_name(name: str, what: str, line: int | None = None):
    # Source text may not claim either generated vertex id; programmatic
    # construction is allowed to introduce the re-rooting vertex.
    _check_name(name, what, line)
    if name in _RESERVED_NAMES:
        _fail(line, f"{what} {name!r} is reserved")


def _fail(line: int | None, message: str):
    if line is None:
        raise ValidationError(message)
    raise TreeParseError(line, message)


@dataclass(frozen=True)
class ProbabilityTree:
    """A validated, immutable probability tree.

    ``children`` maps each node to its outgoing (child, label) pairs in
    declaration order; declaration order is the canonical child order for
    every enumeration in the toolkit.
    """

    root: str
    children: Mapping[str, tuple[tuple[str, Label], ...]]
    bindings: Mapping[str, Fraction]
    declared_stages: tuple[tuple[str, ...], ...] = ()
    _parent: Mapping[str, str] = field(default=None, repr=False, compare=False)
    _probs: Mapping[tuple[str, str], Fraction] = field(
        default=None, repr=False, compare=False
    )

    # -- construction ---------------------------------------------------

    @staticmethod
    def build(
        edges: Sequence[tuple[str, str, Label]],
        bindings: Mapping[str, Fraction],
        root: str | None = None,
        declared_stages: Iterable[Iterable[str]] = (),
        lines: Sequence[int] | None = None,
    ) -> "ProbabilityTree":
        """Validate an edge list and produce a tree.

        ``lines`` optionally carries the source line of each edge so errors
        can point at the offending declaration.
        """
        line_of = (lambda i: lines[i]) if lines is not None else (lambda i: None)

        children: dict[str, list[tuple[str, Label]]] = {}
        parent: dict[str, str] = {}
        nodes: dict[str, None] = {}
        if root is not None:
            _check_name(root, "node name")
            nodes[root] = None
        seen_pairs: set[tuple[str, str]] = set()
        for i, (par, child, label) in enumerate(edges):
            ln = line_of(i)
            _check_name(par, "node name", ln)
            _check_name(child, "node name", ln)
            if par == child:
                _fail(ln, f"self loop at {par}")
            if (par, child) in seen_pairs or (child, par) in seen_pairs:
                _fail(ln, f"duplicate edge {par} -> {child}")
            seen_pairs.add((par, child))
            if child in parent:
                _fail(ln, f"{child} has two parents ({parent[child]} and {par})")
            parent[child] = par
            children.setdefault(par, []).append((child, label))
            nodes.setdefault(par)
            nodes.setdefault(child)

        if not nodes:
            raise ValidationError("empty tree: declare a root or at least one edge")

        parentless = [n for n in nodes if n not in parent]
        if root is None:
            if len(parentless) != 1:
                raise ValidationError(
                    f"multiple roots: {sorted(parentless)}"
                    if parentless
                    else "no root: every node has a parent (cycle)"
                )
            root = parentless[0]
        else:
            if root in parent:
                raise ValidationError(f"declared root {root} has a parent")
            extra = [n for n in parentless if n != root]
            if extra:
                raise ValidationError(f"multiple roots: {sorted([root] + extra)}")

        # Reachability from the root; a non-reachable node either had a
        # second parentless ancestor (caught above) or sits on a cycle.
        reached = {root}
        stack = [root]
        while stack:
            v = stack.pop()
            for c, _ in children.get(v, ()):
                if c not in reached:
                    reached.add(c)
                    stack.append(c)
        unreachable = [n for n in nodes if n not in reached]
        if unreachable:
            raise ValidationError(f"cycle: unreachable nodes {sorted(unreachable)}")

        # Per-situation label sanity.
        for v, kids in children.items():
            seen_syms: set[str] = set()
            residuals = 0
            for c, lab in kids:
                if lab.kind == "symbol":
                    if lab.symbol in seen_syms:
                        raise ValidationError(
                            f"symbol {lab.symbol} used twice at situation {v}"
                        )
                    seen_syms.add(lab.symbol)
                elif lab.kind == "residual":
                    residuals += 1
                elif not (0 <= lab.value <= 1):
                    raise ValidationError(
                        f"literal {format_fraction(lab.value)} at {v} outside [0, 1]"
                    )
            if residuals > 1:
                raise ValidationError(f"situation {v} has two residual labels")

        used_symbols = {
            lab.symbol
            for kids in children.values()
            for _, lab in kids
            if lab.kind == "symbol"
        }
        unbound = sorted(used_symbols - set(bindings))
        if unbound:
            raise BindingError(f"unbound symbols: {unbound}")
        unused = sorted(set(bindings) - used_symbols)
        if unused:
            raise BindingError(f"bindings for unknown symbols: {unused}")
        for sym, val in bindings.items():
            if not (0 <= val <= 1):
                raise BindingError(
                    f"binding {sym} = {format_fraction(val)} outside [0, 1]"
                )

        # Resolve probabilities and check the sum-to-one condition exactly.
        probs: dict[tuple[str, str], Fraction] = {}
        for v, kids in children.items():
            total = Fraction(0)
            residual_child = None
            for c, lab in kids:
                if lab.kind == "symbol":
                    probs[(v, c)] = bindings[lab.symbol]
                    total += probs[(v, c)]
                elif lab.kind == "literal":
                    probs[(v, c)] = lab.value
                    total += lab.value
                else:
                    residual_child = c
            if residual_child is not None:
                rest = 1 - total
                if rest < 0:
                    raise SumToOneError(
                        f"residual at {v} resolves to {format_fraction(rest)}"
                    )
                probs[(v, residual_child)] = rest
            elif total != 1:
                raise SumToOneError(
                    f"probabilities at {v} sum to {format_fraction(total)}"
                )

        canon_stages = tuple(
            sorted(tuple(sorted(set(g))) for g in declared_stages if g)
        )
        situations = set(children)
        for group in canon_stages:
            for n in group:
                if n not in nodes:
                    raise ValidationError(f"stage assertion names unknown node {n}")
                if n not in situations:
                    raise ValidationError(f"stage assertion names leaf {n}")

        return ProbabilityTree(
            root=root,
            children={v: tuple(kids) for v, kids in children.items()},
            bindings=dict(bindings),
            declared_stages=canon_stages,
            _parent=parent,
            _probs=probs,
        )

    # -- basic queries ---------------------------------------------------

    def is_situation(self, node: str) -> bool:
        return node in self.children

    def is_leaf(self, node: str) -> bool:
        return node not in self.children and (
            node == self.root or node in self._parent
        )

    def edges(self, node: str) -> tuple[tuple[str, Label], ...]:
        return self.children.get(node, ())

    def child_names(self, node: str) -> tuple[str, ...]:
        return tuple(c for c, _ in self.edges(node))

    def parent_of(self, node: str) -> str | None:
        return self._parent.get(node)

    def preorder(self) -> tuple[str, ...]:
        """All nodes, depth-first in declared child order."""
        out = []
        stack = [self.root]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.child_names(v)))
        return tuple(out)

    def situations(self) -> tuple[str, ...]:
        return tuple(v for v in self.preorder() if self.is_situation(v))

    def leaves(self) -> tuple[str, ...]:
        return tuple(v for v in self.preorder() if not self.is_situation(v))

    def nodes(self) -> tuple[str, ...]:
        return self.preorder()

    def depth(self, node: str) -> int:
        d = 0
        while node != self.root:
            node = self._parent[node]
            d += 1
        return d

    def edge_label(self, parent: str, child: str) -> Label:
        for c, lab in self.edges(parent):
            if c == child:
                return lab
        raise ValidationError(f"no edge {parent} -> {child}")

    def edge_prob(self, parent: str, child: str) -> Fraction:
        try:
            return self._probs[(parent, child)]
        except KeyError:
            raise ValidationError(f"no edge {parent} -> {child}") from None

    def dist(self, situation: str) -> dict[str, Fraction]:
        """The child distribution sitting on a situation."""
        return {c: self.edge_prob(situation, c) for c in self.child_names(situation)}

    def subtree_nodes(self, node: str) -> tuple[str, ...]:
        out = []
        stack = [node]
        while stack:
            v = stack.pop()
            out.append(v)
            stack.extend(reversed(self.child_names(v)))
        return tuple(out)

    # -- atomic events ----------------------------------------------------

    def atomic_events(self) -> tuple[AtomicEvent, ...]:
        """One event per leaf, in depth-first declaration order."""
        out = []
        stack = [(self.root, (self.root,))]
        while stack:
            v, path = stack.pop()
            kids = self.child_names(v)
            if not kids:
                out.append(AtomicEvent(path))
                continue
            for c in reversed(kids):
                stack.append((c, path + (c,)))
        return tuple(out)

    def event_for_leaf(self, leaf: str) -> AtomicEvent:
        if self.is_situation(leaf) or not self.is_leaf(leaf):
            raise ValidationError(f"{leaf} is not a leaf")
        path = [leaf]
        while path[-1] != self.root:
            path.append(self._parent[path[-1]])
        return AtomicEvent(tuple(reversed(path)))

    def _check_event(self, event: AtomicEvent):
        if event.path[0] != self.root or self.is_situation(event.path[-1]):
            raise ValidationError(f"{event} is not an atomic event of this tree")
        for a, b in zip(event.path, event.path[1:]):
            if b not in self.child_names(a):
                raise ValidationError(f"{event} is not an atomic event of this tree")

    def path_probability(self, event: AtomicEvent) -> Fraction:
        """Product of the resolved edge probabilities along the event."""
        self._check_event(event)
        p = Fraction(1)
        for a, b in zip(event.path, event.path[1:]):
            p *= self.edge_prob(a, b)
        return p

    def leaf_probability(self, leaf: str) -> Fraction:
        return self.path_probability(self.event_for_leaf(leaf))

    def event_set_probability(self, leaves: Iterable[str]) -> Fraction:
        return sum((self.leaf_probability(l) for l in set(leaves)), Fraction(0))

    def path_factors(self, event: AtomicEvent) -> tuple[str, ...]:
        """Canonical symbolic factors of an event probability.

        A residual renders as ``(1 - a - b)`` over its siblings' labels in
        declaration order, so the returned product mirrors the labelled tree
        rather than any particular binding.
        """
        self._check_event(event)
        factors = []
        for a, b in zip(event.path, event.path[1:]):
            lab = self.edge_label(a, b)
            if lab.kind == "residual":
                sibs = [l.text() for c, l in self.edges(a) if c != b]
                factors.append("(1 - " + " - ".join(sibs) + ")")
            else:
                factors.append(lab.text())
        return tuple(factors)

    # -- derived trees ----------------------------------------------------

    def rebind(self, **overrides: Fraction) -> "ProbabilityTree":
        """A copy with some symbol bindings replaced (revalidated)."""
        new = dict(self.bindings)
        for sym, val in overrides.items():
            if sym not in new:
                raise BindingError(f"unknown symbol {sym}")
            new[sym] = Fraction(val)
        edges = [
            (v, c, lab) for v in self.preorder() for c, lab in self.edges(v)
        ]
        return ProbabilityTree.build(edges, new, self.root, self.declared_stages)

    # -- serialization ----------------------------------------------------

    def serialize(self) -> str:
        """Emit canonical source text; parsing it back restores the tree."""
        out = [f"root {self.root}"]
        for sym in sorted(self.bindings):
            out.append(f"bind {sym} = {format_fraction(self.bindings[sym])}")
        for v in self.preorder():
            for c, lab in self.edges(v):
                out.append(f"edge {v} {c} {lab.text()}")
        for group in self.declared_stages:
            out.append("stage " + " ".join(group))
        return "\n".join(out) + "\n"


def _strip(line: str) -> str:
    if "#" in line:
        line = line[: line.index("#")]
    return line.strip()


def parse_label(token: str, line: int | None = None) -> Label:
    if token == RESIDUAL_MARK:
        return Label.residual()
    if _NUMBER_RE.match(token):
        try:
            return Label.lit(parse_fraction(token))
        except ValueError as exc:
            _fail(line, str(exc))
    _check_name(token, "label", line)
    return Label.sym(token)


def parse_tree(text: str) -> ProbabilityTree:
    """Parse and validate tree source text."""
    edges: list[tuple[str, str, Label]] = []
    lines: list[int] = []
    bindings: dict[str, Fraction] = {}
    declared_root: str | None = None
    stage_groups: list[tuple[str, ...]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        toks = line.split()
        directive = toks[0]
        if directive == "root":
            if len(toks) != 2:
                raise TreeParseError(lineno, "usage: root <node>")
            if declared_root is not None:
                raise TreeParseError(lineno, "root declared twice")
            declared_root = toks[1]
            _check_user_name(declared_root, "node name", lineno)
        elif directive == "edge":
            if len(toks) != 4:
                raise TreeParseError(lineno, "usage: edge <parent> <child> <label>")
            _check_user_name(toks[1], "node name", lineno)
            _check_user_name(toks[2], "node name", lineno)
            edges.append((toks[1], toks[2], parse_label(toks[3], lineno)))
            lines.append(lineno)
        elif directive == "bind":
            if len(toks) != 4 or toks[2] != "=":
                raise TreeParseError(lineno, "usage: bind <symbol> = <value>")
            _check_name(toks[1], "symbol", lineno)
            if toks[1] in bindings:
                raise TreeParseError(lineno, f"symbol {toks[1]} bound twice")
            try:
                bindings[toks[1]] = parse_fraction(toks[3])
            except ValueError as exc:
                raise TreeParseError(lineno, str(exc)) from None
        elif directive == "stage":
            if len(toks) < 3:
                raise TreeParseError(lineno, "usage: stage <node> <node> ...")
            stage_groups.append(tuple(toks[1:]))
        else:
            raise TreeParseError(lineno, f"unknown directive {directive!r}")

    if not edges and declared_root is None:
        raise TreeParseError(1, "empty input")
    return ProbabilityTree.build(
        edges, bindings, declared_root, stage_groups, lines=lines
    )
