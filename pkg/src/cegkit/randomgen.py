"""Seeded random instance factories for property and fuzz tests.

Three families: unconstrained random trees with shared stage templates and
cloned subtrees (so nontrivial positions appear), forced manipulations
toward a chosen position, and layered "funnel" instances built so that a
chosen position set is provably simple and the constructed forcing is
amenable.  Funnel slices compose into back-door instances with an observed
branch variable.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .ceg import ChainEventGraph, EventVariable, build_ceg_auto
from .identification import SuffixVariable, suffix_key
from .intervention import Manipulation, amenability_report
from .tree import Label, ProbabilityTree


def rand_dist(rng: random.Random, k: int, zero_prob: float = 0.0) -> list[Fraction]:
    while True:
        nums = [
            0 if (zero_prob and rng.random() < zero_prob) else rng.randint(1, 6)
            for _ in range(k)
        ]
        if sum(nums) > 0:
            break
    total = sum(nums)
    return [Fraction(n, total) for n in nums]


class _TreeGen:
    def __init__(self, rng, max_depth, max_fanout, template_reuse, clone, zero_prob):
        self.rng = rng
        self.max_depth = max_depth
        self.max_fanout = max_fanout
        self.template_reuse = template_reuse
        self.clone = clone
        self.zero_prob = zero_prob
        self.templates: list[tuple[Label, ...]] = []
        self.bindings: dict[str, Fraction] = {}
        self.pool: list[tuple[int, tuple]] = []  # (height, spec)
        self.counter = 0

    def _fresh_template(self) -> int:
        k = self.rng.randint(1, self.max_fanout)
        probs = rand_dist(self.rng, k, self.zero_prob)
        residual_at = self.rng.randrange(k) if self.rng.random() < 0.5 else None
        labels = []
        for i in range(k):
            if i == residual_at:
                labels.append(Label.residual())
            elif self.rng.random() < 0.15:
                labels.append(Label.lit(probs[i]))
            else:
                sym = f"s{len(self.bindings)}"
                self.bindings[sym] = probs[i]
                labels.append(Label.sym(sym))
        self.templates.append(tuple(labels))
        return len(self.templates) - 1

    def spec(self, depth: int) -> tuple:
        remaining = self.max_depth - depth
        if remaining == 0 or (depth > 0 and self.rng.random() < depth / self.max_depth):
            return ("leaf",)
        if self.clone and self.pool and self.rng.random() < self.clone:
            fits = [s for h, s in self.pool if h <= remaining]
            if fits:
                return self.rng.choice(fits)
        if self.templates and self.rng.random() < self.template_reuse:
            tpl = self.rng.randrange(len(self.templates))
        else:
            tpl = self._fresh_template()
        kids = tuple(self.spec(depth + 1) for _ in self.templates[tpl])
        node = ("node", tpl, kids)
        self.pool.append((1 + max(self._height(k) for k in kids), node))
        return node

    def _height(self, spec) -> int:
        if spec[0] == "leaf":
            return 0
        return 1 + max(self._height(k) for k in spec[2])

    def instantiate(self, spec) -> ProbabilityTree:
        edges = []

        def walk(node_spec, name):
            if node_spec[0] == "leaf":
                return
            _, tpl, kids = node_spec
            for lab, kid in zip(self.templates[tpl], kids):
                self.counter += 1
                child = f"n{self.counter}"
                edges.append((name, child, lab))
                walk(kid, child)

        walk(spec, "n0")
        used = {lab.symbol for _, _, lab in edges if lab.kind == "symbol"}
        bindings = {s: v for s, v in self.bindings.items() if s in used}
        return ProbabilityTree.build(edges, bindings, "n0")


def random_tree(
    rng: random.Random,
    max_depth: int = 4,
    max_fanout: int = 3,
    template_reuse: float = 0.5,
    clone: float = 0.3,
    zero_prob: float = 0.0,
) -> ProbabilityTree:
    gen = _TreeGen(rng, max_depth, max_fanout, template_reuse, clone, zero_prob)
    spec = gen.spec(0)
    while spec[0] == "leaf":  # keep at least one situation
        spec = gen.spec(0)
    return gen.instantiate(spec)


def random_forced(
    rng: random.Random, ceg: ChainEventGraph
) -> tuple[Manipulation, str]:
    """A manipulation forced to a random position.

    Every strict tree ancestor of a member redistributes its mass onto the
    children whose subtree reaches the chosen position.
    """
    tree = ceg.tree
    positions = [v for v in ceg.vertices if ceg.is_position(v)]
    w = rng.choice(positions)
    members = ceg.blocks[w]
    ancestors: set[str] = set()
    for v in members:
        p = tree.parent_of(v)
        while p is not None:
            ancestors.add(p)
            p = tree.parent_of(p)
    replacements = {}
    for a in sorted(ancestors):
        toward = [
            c
            for c in tree.child_names(a)
            if members & set(tree.subtree_nodes(c))
        ]
        dist = {c: Fraction(0) for c in tree.child_names(a)}
        if len(toward) == 1 or rng.random() < 0.5:
            dist[rng.choice(toward)] = Fraction(1)
        else:
            for c, p in zip(toward, rand_dist(rng, len(toward))):
                dist[c] = p
        replacements[a] = dist
    return Manipulation(replacements), w


def random_suffix_variable(
    rng: random.Random, ceg: ChainEventGraph, W, max_blocks: int = 3
) -> SuffixVariable:
    W = tuple(sorted(set(W)))
    space = []
    for w in W:
        space.extend(suffix_key(s) for s in ceg.suffixes_from(w))
    space = sorted(set(space))
    k = rng.randint(1, min(max_blocks, len(space)))
    blocks: dict[str, set] = {f"y{i + 1}": set() for i in range(k)}
    for i, key in enumerate(space):
        token = f"y{i + 1}" if i < k else f"y{rng.randint(1, k)}"
        blocks[token].add(key)
    return SuffixVariable.over("Y", ceg, W, blocks)


# -- layered funnel instances -------------------------------------------------


@dataclass
class FunnelInstance:
    tree: ProbabilityTree
    ceg: ChainEventGraph
    manipulation: Manipulation
    W: tuple[str, ...]
    forced_situations: tuple[str, ...]
    background_situations: tuple[str, ...]


class _Namer:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.n = 0

    def fresh(self) -> str:
        self.n += 1
        return f"{self.prefix}{self.n}"


def _funnel_edges(rng: random.Random, namer, sym_prefix: str, root_name: str):
    """Build one funnel slice under `root_name`; see FunnelInstance.

    Layout: an optional balanced label level distinguishing the targets,
    then a shuffled run of background levels (full template shared across
    the level) and forced levels (shared template, target child index 0),
    then one or two continuation levels whose templates depend on the label
    value and the forced values, so the target positions stay distinct.
    """
    k_w = rng.choice([1, 1, 2, 3])
    n_bg = rng.randint(0, 2)
    n_forced = rng.randint(1, 2)
    n_suffix = rng.randint(1, 2)

    bindings: dict[str, Fraction] = {}
    sym_n = [0]

    def template(arity: int, tag: str) -> tuple[Label, ...]:
        probs = rand_dist(rng, arity)
        labels = []
        for i, p in enumerate(probs):
            sym_n[0] += 1
            sym = f"{sym_prefix}{tag}{sym_n[0]}"
            bindings[sym] = p
            labels.append(Label.sym(sym))
        return tuple(labels)

    levels: list[tuple[str, tuple[Label, ...]]] = []
    for _ in range(n_bg):
        levels.append(("bg", template(rng.randint(2, 3), "b")))
    for _ in range(n_forced):
        levels.append(("forced", template(2, "f")))
    rng.shuffle(levels)

    suffix_templates: dict[tuple, list[tuple[Label, ...]]] = {}

    edges = []
    forced_sits: list[str] = []
    bg_sits: list[str] = []
    w_members: dict[int, list[str]] = {a: [] for a in range(k_w)}

    def build_suffix(node: str, key: tuple, level: int):
        if key not in suffix_templates:
            suffix_templates[key] = [
                template(rng.randint(2, 3), "y") for _ in range(n_suffix)
            ]
        tpl = suffix_templates[key][level]
        for lab in tpl:
            child = namer.fresh()
            edges.append((node, child, lab))
            if level + 1 < n_suffix:
                build_suffix(child, key, level + 1)

    def build_levels(node: str, a: int, i: int, forced_vals: tuple):
        if i == len(levels):
            key = (a, forced_vals)
            w_members[a].append(node)
            build_suffix(node, key, 0)
            return
        kind, tpl = levels[i]
        if kind == "forced":
            forced_sits.append(node)
        else:
            bg_sits.append(node)
        for j, lab in enumerate(tpl):
            child = namer.fresh()
            edges.append((node, child, lab))
            build_levels(
                child, a, i + 1, forced_vals + (j,) if kind == "forced" else forced_vals
            )

    if k_w > 1:
        for a in range(k_w):
            child = namer.fresh()
            edges.append((root_name, child, Label.lit(Fraction(1, k_w))))
            build_levels(child, a, 0, ())
    else:
        build_levels(root_name, 0, 0, ())

    return edges, bindings, forced_sits, bg_sits, w_members, n_forced


def funnel_instance(rng: random.Random) -> FunnelInstance:
    """A tree with a simple target set and an amenable forcing onto it."""
    namer = _Namer("n")
    edges, bindings, forced_sits, bg_sits, targets, n_forced = _funnel_edges(
        rng, namer, "s", "n0"
    )
    tree = ProbabilityTree.build(edges, bindings, "n0")
    ceg = build_ceg_auto(tree)

    # Only force along routes that stay on target values: situations behind
    # an already-cut branch keep probability zero and must stay untouched.
    forced_set = set(forced_sits)
    live_forced = [
        v for v in forced_sits if _forced_route_is_target(tree, v, forced_set)
    ]
    replacements = {
        v: {
            c: Fraction(1 if i == 0 else 0)
            for i, c in enumerate(tree.child_names(v))
        }
        for v in live_forced
    }
    m = Manipulation(replacements)

    # W: positions of the members reached with every forced value at 0.
    manipulated = {
        member
        for a, members in targets.items()
        for member in members
        if _forced_route_is_target(tree, member, forced_set)
    }
    W = tuple(sorted({ceg.position_of[v] for v in manipulated}))
    report = amenability_report(ceg, m, W)
    assert report.ok, (report.reason, report.witness)
    return FunnelInstance(
        tree, ceg, m, W, tuple(sorted(live_forced)), tuple(sorted(bg_sits))
    )


def _forced_route_is_target(tree, member, forced_sits) -> bool:
    node = member
    parent = tree.parent_of(node)
    while parent is not None:
        if parent in forced_sits and tree.child_names(parent)[0] != node:
            return False
        node, parent = parent, tree.parent_of(parent)
    return True


@dataclass
class BackdoorInstance:
    tree: ProbabilityTree
    ceg: ChainEventGraph
    manipulation: Manipulation
    W: tuple[str, ...]
    Z: EventVariable
    Y: SuffixVariable


def backdoor_instance(rng: random.Random) -> BackdoorInstance:
    """Compose funnel slices under a root branch variable Z."""
    namer = _Namer("n")
    k_z = rng.randint(2, 3)
    untouched = rng.random() < 0.4
    edges = []
    bindings: dict[str, Fraction] = {}
    z_probs = rand_dist(rng, k_z + (1 if untouched else 0))
    slice_roots: list[str] = []
    forced_all: list[str] = []
    target_members: list[str] = []
    for i in range(k_z):
        sub_root = namer.fresh()
        slice_roots.append(sub_root)
        edges.append(("n0", sub_root, Label.lit(z_probs[i])))
        s_edges, s_binds, s_forced, _bg, s_targets, _n = _funnel_edges(
            rng, namer, f"z{i}s", sub_root
        )
        edges.extend(s_edges)
        bindings.update(s_binds)
        forced_all.extend(s_forced)
        for a, members in s_targets.items():
            target_members.extend(members)
    if untouched:
        sub_root = namer.fresh()
        slice_roots.append(sub_root)
        edges.append(("n0", sub_root, Label.lit(z_probs[k_z])))
        k = rng.randint(1, 2)
        for p in rand_dist(rng, k):
            edges.append((sub_root, namer.fresh(), Label.lit(p)))

    tree = ProbabilityTree.build(edges, bindings, "n0")
    ceg = build_ceg_auto(tree)

    forced_set = set(forced_all)
    live_forced = [
        v for v in forced_all if _forced_route_is_target(tree, v, forced_set)
    ]
    replacements = {
        v: {
            c: Fraction(1 if i == 0 else 0)
            for i, c in enumerate(tree.child_names(v))
        }
        for v in live_forced
    }
    m = Manipulation(replacements)
    manipulated_members = {
        v for v in target_members if _forced_route_is_target(tree, v, forced_set)
    }
    W = tuple(sorted({ceg.position_of[v] for v in manipulated_members}))

    z_blocks = {}
    for i, sub_root in enumerate(slice_roots):
        leaves = [
            n for n in tree.subtree_nodes(sub_root) if not tree.is_situation(n)
        ]
        z_blocks[f"z{i + 1}"] = leaves
    Z = EventVariable.over("Z", z_blocks, tree)
    Y = random_suffix_variable(rng, ceg, W)
    return BackdoorInstance(tree, ceg, m, W, Z, Y)


def broken_backdoor_instance(
    rng: random.Random,
) -> tuple[BackdoorInstance, str]:
    """A back-door instance with one deliberately broken condition.

    Returns the instance and the prefix of the condition name expected to
    fail ("amenable", "ordering" or "wz").
    """
    inst = backdoor_instance(rng)
    mode = rng.choice(["amenable", "ordering", "wz"])
    tree = inst.tree
    if mode == "amenable":
        # Perturb a background or continuation situation inside a slice:
        # only active parents may change under an amenable forcing.  The
        # symbol-label filter skips the balanced literal levels, whose
        # parents are legitimately active.
        candidates = [
            v
            for v in tree.situations()
            if v != tree.root
            and v not in inst.manipulation.replacements
            and len(tree.child_names(v)) >= 2
            and any(lab.kind == "symbol" for _, lab in tree.edges(v))
        ]
        v = rng.choice(sorted(candidates))
        kids = tree.child_names(v)
        old = tree.dist(v)
        while True:
            dist = dict(zip(kids, rand_dist(rng, len(kids))))
            if dist != old:
                break
        replacements = dict(inst.manipulation.replacements)
        replacements[v] = dist
        inst = BackdoorInstance(
            tree, inst.ceg, Manipulation(replacements), inst.W, inst.Z, inst.Y
        )
    elif mode == "ordering":
        # Manipulate the root, upstream of every W_z.
        kids = tree.child_names(tree.root)
        old = tree.dist(tree.root)
        while True:
            dist = dict(zip(kids, rand_dist(rng, len(kids))))
            if dist != old:
                break
        replacements = dict(inst.manipulation.replacements)
        replacements[tree.root] = dist
        inst = BackdoorInstance(
            tree, inst.ceg, Manipulation(replacements), inst.W, inst.Z, inst.Y
        )
    else:
        # Swap one leaf between two Z blocks so neither event is induced by
        # a regular position set.
        names = sorted(inst.Z.blocks)
        a, b = names[0], names[1]
        blocks = {z: set(ls) for z, ls in inst.Z.blocks.items()}
        moved = sorted(blocks[a])[0]
        blocks[a].discard(moved)
        blocks[b].add(moved)
        Z = EventVariable.over("Z", blocks, tree)
        inst = BackdoorInstance(
            tree, inst.ceg, inst.manipulation, inst.W, Z, inst.Y
        )
    return inst, mode
