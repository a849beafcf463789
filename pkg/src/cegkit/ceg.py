"""Chain event graphs built from a tree and its stage/position partitions.

The vertex set is the position partition plus a single sink ``w_inf`` that
collects all leaves.  Directed multi-edges copy the outgoing edges of one
canonical representative situation per position; undirected edges join
distinct positions that share a stage.  Root-to-sink directed paths are in
bijection with the tree's root-to-leaf paths, with equal probabilities.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .equivalence import Partition, compute_positions, compute_stages
from .errors import QueryError, TreeParseError, ValidationError
from .tree import (
    SINK,
    SUB_ROOT,
    AtomicEvent,
    Label,
    ProbabilityTree,
    format_fraction,
)


@dataclass(frozen=True)
class CegEdge:
    index: int
    src: str
    dst: str  # position id or SINK
    label: Label
    prob: Fraction
    rep_child: str  # the representative situation's child this edge copies

    def text(self) -> str:
        p = format_fraction(self.prob)
        if self.label.kind == "symbol":
            return f"{self.label.symbol}={p}"
        return p


CegPath = tuple[CegEdge, ...]


def _path_vertices(root: str, path: CegPath) -> tuple[str, ...]:
    """Vertices visited by a root-to-sink path, sink excluded."""
    if not path:
        return ()
    return (path[0].src,) + tuple(e.dst for e in path if e.dst != SINK)


@dataclass
class ChainEventGraph:
    tree: ProbabilityTree
    stages: Partition
    positions: Partition
    mode: str
    root: str | None  # None for the degenerate single-node tree
    vertices: tuple[str, ...]  # positions in depth-first order, then SINK
    blocks: Mapping[str, frozenset[str]]
    position_of: Mapping[str, str]
    rep: Mapping[str, str]
    edges: tuple[CegEdge, ...]
    edges_out: Mapping[str, tuple[CegEdge, ...]]
    undirected: frozenset[frozenset[str]]
    _paths: tuple[CegPath, ...] | None = field(default=None, repr=False)
    _leaf_to_path: Mapping[str, CegPath] | None = field(default=None, repr=False)
    _through_leaves: dict = field(default_factory=dict, repr=False)

    # -- vertex helpers ----------------------------------------------------

    def is_position(self, vid: str) -> bool:
        return vid in self.blocks

    def _require_position(self, vid: str):
        if vid == SINK:
            raise QueryError("the sink is not a position")
        if not self.is_position(vid):
            raise QueryError(f"unknown position {vid!r}")

    def members(self, vid: str) -> frozenset[str]:
        self._require_position(vid)
        return self.blocks[vid]

    def same_stage(self, a: str, b: str) -> bool:
        self._require_position(a)
        self._require_position(b)
        return self.stages.same_block(self.rep[a], self.rep[b])

    def out_degree(self, vid: str) -> int:
        return len(self.edges_out.get(vid, ()))

    # -- paths ---------------------------------------------------------------

    def paths(self) -> tuple[CegPath, ...]:
        """All root-to-sink directed paths, in depth-first edge order."""
        if self._paths is None:
            if self.root is None:
                self._paths = ((),)
            else:
                acc: list[CegPath] = []
                stack: list[tuple[str, CegPath]] = [(self.root, ())]
                while stack:
                    v, prefix = stack.pop()
                    if v == SINK:
                        acc.append(prefix)
                        continue
                    for e in reversed(self.edges_out[v]):
                        stack.append((e.dst, prefix + (e,)))
                self._paths = tuple(acc)
        return self._paths

    def path_probability(self, path: CegPath) -> Fraction:
        p = Fraction(1)
        for e in path:
            p *= e.prob
        return p

    def event_probability(self, paths: Iterable[CegPath]) -> Fraction:
        seen: set[tuple[int, ...]] = set()
        total = Fraction(0)
        for path in paths:
            key = tuple(e.index for e in path)
            if key in seen:
                continue
            seen.add(key)
            total += self.path_probability(path)
        return total

    def leaf_path_map(self) -> Mapping[str, CegPath]:
        """The bijection between tree leaves and root-to-sink paths."""
        if self._leaf_to_path is None:
            mapping: dict[str, CegPath] = {}
            if self.root is None:
                mapping[self.tree.root] = ()
            else:
                stack: list[tuple[str, str, CegPath]] = [(self.tree.root, self.root, ())]
                while stack:
                    node, vid, prefix = stack.pop()
                    for child, edge in self._match_edges(node, vid):
                        if edge.dst == SINK:
                            mapping[child] = prefix + (edge,)
                        else:
                            stack.append((child, edge.dst, prefix + (edge,)))
            self._leaf_to_path = mapping
        return self._leaf_to_path

    def _match_edges(self, node: str, vid: str) -> list[tuple[str, CegEdge]]:
        """Pair a member situation's tree edges with the position's edges.

        Pairing key is (probability, destination position); ties are broken
        by declaration order, which is sound because tied edges continue
        into the same position.
        """
        tree = self.tree
        groups: dict[tuple[str, str], list[str]] = {}
        for child in tree.child_names(node):
            dst = SINK if not tree.is_situation(child) else self.position_of[child]
            key = (format_fraction(tree.edge_prob(node, child)), dst)
            groups.setdefault(key, []).append(child)
        pairs: list[tuple[str, CegEdge]] = []
        used: dict[tuple[str, str], int] = {}
        for e in self.edges_out[vid]:
            key = (format_fraction(e.prob), e.dst)
            i = used.get(key, 0)
            used[key] = i + 1
            pairs.append((groups[key][i], e))
        return pairs

    def path_leaf(self, path: CegPath) -> str:
        key = tuple(e.index for e in path)
        for leaf, p in self.leaf_path_map().items():
            if tuple(e.index for e in p) == key:
                return leaf
        raise QueryError("path does not belong to this graph")

    # -- events ---------------------------------------------------------------

    def through_leaves(self, vid: str) -> frozenset[str]:
        """Tree leaves whose path passes through the position."""
        self._require_position(vid)
        if vid not in self._through_leaves:
            members = self.blocks[vid]
            acc = []
            for ev in self.tree.atomic_events():
                if any(n in members for n in ev.path):
                    acc.append(ev.leaf)
            self._through_leaves[vid] = frozenset(acc)
        return self._through_leaves[vid]

    def passes_through(self, vid: str) -> tuple[CegPath, ...]:
        """Paths containing the position (the event of reaching it)."""
        self._require_position(vid)
        return tuple(
            p for p in self.paths() if vid in _path_vertices(self.root, p)
        )

    def prob_through(self, vid: str) -> Fraction:
        return self.tree.event_set_probability(self.through_leaves(vid))

    def prob_through_set(self, W: Iterable[str]) -> Fraction:
        leaves: set[str] = set()
        for w in W:
            leaves |= self.through_leaves(w)
        return self.tree.event_set_probability(leaves)

    # -- structural predicates --------------------------------------------

    def is_c_regular(self, W: Iterable[str]) -> bool:
        """True when no directed path visits two members of W."""
        W = frozenset(W)
        for w in W:
            self._require_position(w)
        for path in self.paths():
            if len(W.intersection(_path_vertices(self.root, path))) > 1:
                return False
        return True

    def is_manipulation_set(self, W: Iterable[str]) -> bool:
        """Whether W admits a canonical redirect of every unit into it.

        Checks that every root-to-sink path meets the parent set of W in
        exactly one position and afterwards reaches a member of W, and that
        each parent has exactly one child position inside W.
        """
        W = frozenset(W)
        if not W:
            return False
        for w in W:
            self._require_position(w)
        pa = {e.src for e in self.edges if e.dst in W}
        if not pa:
            return False
        for path in self.paths():
            verts = _path_vertices(self.root, path)
            hits = [i for i, v in enumerate(verts) if v in pa]
            if len(hits) != 1:
                return False
            if not any(v in W for v in verts[hits[0] + 1 :]):
                return False
        for p in pa:
            kids = {e.dst for e in self.edges_out[p]} - {SINK}
            if len(kids & W) != 1:
                return False
        return True

    # -- derived graphs ------------------------------------------------------

    def sub_tree(self, W: Sequence[str]) -> ProbabilityTree:
        """The tree behind the sub-graph re-rooted at a regular set W.

        A fresh root ``w_star`` points at a copy of one representative
        subtree per member of W, weighted by the conditional probability of
        passing through that member.
        """
        W = sorted(set(W))
        for w in W:
            self._require_position(w)
        if not self.is_c_regular(W):
            raise QueryError(f"{W} is not a regular position set")
        probs = {w: self.prob_through(w) for w in W}
        total = sum(probs.values(), Fraction(0))
        if total == 0:
            raise QueryError(f"{W} has probability zero")
        edges: list[tuple[str, str, Label]] = []
        used_symbols: set[str] = set()
        for w in W:
            edges.append((SUB_ROOT, self.rep[w], Label.lit(probs[w] / total)))
            for v in self.tree.subtree_nodes(self.rep[w]):
                for c, lab in self.tree.edges(v):
                    edges.append((v, c, lab))
                    if lab.kind == "symbol":
                        used_symbols.add(lab.symbol)
        bindings = {s: self.tree.bindings[s] for s in used_symbols}
        return ProbabilityTree.build(edges, bindings, SUB_ROOT)

    def sub_ceg(self, W: Sequence[str]) -> "ChainEventGraph":
        sub = build_ceg_auto(self.sub_tree(W), self.mode)
        # Positions must be inherited from this graph, not rediscovered:
        # every block below the fresh root is a restriction of a parent block.
        retained = frozenset(sub.tree.situations()) - {SUB_ROOT}
        for vid, block in sub.blocks.items():
            if block == frozenset({SUB_ROOT}):
                continue
            parent_block = self.positions.block_of(next(iter(block)))
            assert block == parent_block & retained, (vid, block)
        return sub

    def upstream_graph(self, w: str) -> "UpstreamGraph":
        """Vertices and edges on root-to-w directed paths (labels kept).

        The result is a plain labelled digraph: undirected stage edges are
        dropped, so it is generally not itself a chain event graph.
        """
        self._require_position(w)
        edge_set: dict[int, CegEdge] = {}
        verts: dict[str, None] = {}
        found = False
        for path in self.paths():
            verts_on = _path_vertices(self.root, path)
            if w not in verts_on:
                continue
            found = True
            for e in path:
                if e.src == w:
                    break
                edge_set[e.index] = e
            for v in verts_on[: verts_on.index(w) + 1]:
                verts.setdefault(v)
        if not found:
            verts[w] = None  # unreachable position: empty upstream
        return UpstreamGraph(
            target=w,
            vertices=tuple(verts),
            edges=tuple(edge_set[i] for i in sorted(edge_set)),
        )

    def upstream_positions(self, W: Iterable[str]) -> frozenset[str]:
        """Positions strictly before some member of W, union over W."""
        out: set[str] = set()
        for w in sorted(set(W)):
            g = self.upstream_graph(w)
            out |= {v for v in g.vertices if v != w}
        return frozenset(out)

    def suffixes_from(self, vid: str) -> tuple[CegPath, ...]:
        """Directed vid-to-sink paths, in depth-first edge order."""
        self._require_position(vid)
        acc: list[CegPath] = []
        stack: list[tuple[str, CegPath]] = [(vid, ())]
        while stack:
            v, prefix = stack.pop()
            if v == SINK:
                acc.append(prefix)
                continue
            for e in reversed(self.edges_out[v]):
                stack.append((e.dst, prefix + (e,)))
        return tuple(acc)

    # -- export ---------------------------------------------------------------

    def export_dot(self) -> str:
        out = ["digraph ceg {", "  rankdir=LR;", "  node [shape=circle];"]
        out.append(f'  "{SINK}" [shape=doublecircle];')
        for v in self.vertices:
            if v != SINK:
                out.append(f'  "{v}" [label="{v}"];')
        for e in self.edges:
            out.append(f'  "{e.src}" -> "{e.dst}" [label="{e.text()}"];')
        for pair in sorted(self.undirected, key=lambda p: tuple(sorted(p))):
            a, b = sorted(pair)
            out.append(
                f'  "{a}" -> "{b}" [dir=none, style=dashed, constraint=false];'
            )
        out.append("}")
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class UpstreamGraph:
    target: str
    vertices: tuple[str, ...]
    edges: tuple[CegEdge, ...]


def build_ceg(
    tree: ProbabilityTree,
    positions: Partition,
    stages: Partition,
    mode: str = "symbolic",
) -> ChainEventGraph:
    """Assemble the chain event graph for a tree and its partitions."""
    situations = frozenset(tree.situations())
    if positions.elements() != situations or stages.elements() != situations:
        raise ValidationError("partitions must cover exactly the situations")
    if not positions.refines(stages):
        raise ValidationError("positions must refine stages")

    if not situations:
        return ChainEventGraph(
            tree=tree,
            stages=stages,
            positions=positions,
            mode=mode,
            root=None,
            vertices=(SINK,),
            blocks={},
            position_of={},
            rep={},
            edges=(),
            edges_out={},
            undirected=frozenset(),
        )

    rep = {min(block): min(block) for block in positions.blocks}
    vid_of_block = {block: min(block) for block in positions.blocks}
    position_of = {
        v: vid_of_block[block] for block in positions.blocks for v in block
    }
    blocks = {vid_of_block[b]: b for b in positions.blocks}

    # Depth-first vertex order from the root position.
    root_vid = position_of[tree.root]
    order: list[str] = []
    seen = set()
    stack = [root_vid]
    while stack:
        vid = stack.pop()
        if vid in seen:
            continue
        seen.add(vid)
        order.append(vid)
        rep_sit = rep[vid]
        for child in reversed(tree.child_names(rep_sit)):
            if tree.is_situation(child):
                stack.append(position_of[child])
    unreachable = sorted(set(blocks) - seen)
    order.extend(unreachable)  # cannot happen for tree-backed graphs

    edges: list[CegEdge] = []
    edges_out: dict[str, tuple[CegEdge, ...]] = {}
    for vid in order:
        rep_sit = rep[vid]
        out = []
        for child, lab in tree.edges(rep_sit):
            dst = position_of[child] if tree.is_situation(child) else SINK
            e = CegEdge(
                index=len(edges),
                src=vid,
                dst=dst,
                label=lab,
                prob=tree.edge_prob(rep_sit, child),
                rep_child=child,
            )
            edges.append(e)
            out.append(e)
        edges_out[vid] = tuple(out)

    # The edge multiset out of a position must not depend on the chosen
    # representative; check every member against the representative's edges.
    for vid in order:
        rep_key = sorted(
            (format_fraction(e.prob), e.dst) for e in edges_out[vid]
        )
        for member in blocks[vid]:
            member_key = sorted(
                (
                    format_fraction(tree.edge_prob(member, c)),
                    position_of[c] if tree.is_situation(c) else SINK,
                )
                for c in tree.child_names(member)
            )
            assert member_key == rep_key, (vid, member)

    undirected = set()
    for block in stages.blocks:
        vids = sorted({position_of[v] for v in block})
        for i, a in enumerate(vids):
            for b in vids[i + 1 :]:
                undirected.add(frozenset({a, b}))

    return ChainEventGraph(
        tree=tree,
        stages=stages,
        positions=positions,
        mode=mode,
        root=root_vid,
        vertices=tuple(order) + (SINK,),
        blocks=blocks,
        position_of=position_of,
        rep=rep,
        edges=tuple(edges),
        edges_out=edges_out,
        undirected=frozenset(undirected),
    )


def build_ceg_auto(tree: ProbabilityTree, mode: str = "symbolic") -> ChainEventGraph:
    stages = compute_stages(tree, mode)
    positions = compute_positions(tree, stages)
    return build_ceg(tree, positions, stages, mode)


# -- event variables ---------------------------------------------------------

ZERO_VALUE = "0"
_VALUE_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.]*\Z")


@dataclass(frozen=True)
class EventVariable:
    """A named partition of the atomic events into labelled blocks.

    Blocks are stored as leaf-name sets; leaves and root-to-sink paths are
    interchangeable through the path bijection.
    """

    name: str
    blocks: Mapping[str, frozenset[str]]

    def values(self) -> tuple[str, ...]:
        return tuple(sorted(self.blocks))

    def value_of(self, leaf: str) -> str:
        for value, leaves in self.blocks.items():
            if leaf in leaves:
                return value
        raise QueryError(f"{leaf} has no value under {self.name}")

    @staticmethod
    def over(name: str, blocks: Mapping[str, Iterable[str]], tree: ProbabilityTree):
        got: dict[str, frozenset[str]] = {}
        covered: set[str] = set()
        for value, leaves in blocks.items():
            leafset = frozenset(leaves)
            if covered & leafset:
                raise ValidationError(f"variable {name}: overlapping blocks")
            covered |= leafset
            got[value] = leafset
        expected = set(tree.leaves())
        if covered != expected:
            missing = sorted(expected - covered)
            extra = sorted(covered - expected)
            raise ValidationError(
                f"variable {name}: blocks must partition the leaves"
                f" (missing {missing}, unknown {extra})"
            )
        return EventVariable(name, got)


def parse_variables(text: str, tree: ProbabilityTree) -> dict[str, EventVariable]:
    """Parse ``var NAME { v1: leaf leaf ; v2: leaf }`` declarations."""
    variables: dict[str, EventVariable] = {}
    # Normalize whitespace, then scan variable bodies between braces.
    stripped = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0]
        stripped.append(line)
    flat = " ".join(stripped)
    pos = 0
    while True:
        m = re.search(r"\bvar\s+([A-Za-z][A-Za-z0-9_.]*)\s*\{", flat[pos:])
        if not m:
            break
        name = m.group(1)
        start = pos + m.end()
        end = flat.find("}", start)
        if end < 0:
            raise TreeParseError(1, f"variable {name}: missing closing brace")
        body = flat[start:end]
        blocks: dict[str, list[str]] = {}
        for chunk in body.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ":" not in chunk:
                raise TreeParseError(1, f"variable {name}: expected 'value: leaves'")
            value, leaves = chunk.split(":", 1)
            value = value.strip()
            if not _VALUE_RE.match(value):
                raise TreeParseError(1, f"variable {name}: bad value {value!r}")
            if value == ZERO_VALUE:
                raise TreeParseError(1, f"variable {name}: value '0' is reserved")
            if value in blocks:
                raise TreeParseError(1, f"variable {name}: value {value} repeated")
            blocks[value] = leaves.split()
        if name in variables:
            raise TreeParseError(1, f"variable {name} declared twice")
        variables[name] = EventVariable.over(name, blocks, tree)
        pos = end + 1
    if not variables:
        raise TreeParseError(1, "no variable declarations found")
    return variables
