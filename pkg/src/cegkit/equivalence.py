"""Stage and position partitions of a probability tree.

Two situations are stage-equivalent when their child distributions agree
under some bijection of their outgoing edges.  Two situations share a
position when additionally their whole future subtrees are isomorphic with
stage-matched vertices and matching edge probabilities.  Positions refine
stages and become the vertices of the chain event graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import StageAssertionError, ValidationError
from .tree import ProbabilityTree, format_fraction


@dataclass(frozen=True)
class Partition:
    """A partition of a finite set of node names, canonically ordered."""

    blocks: tuple[frozenset[str], ...]
    _index: Mapping[str, int] = field(default=None, repr=False, compare=False)

    @staticmethod
    def from_groups(groups: Iterable[Iterable[str]]) -> "Partition":
        blocks = [frozenset(g) for g in groups if g]
        canon = tuple(sorted(blocks, key=lambda b: tuple(sorted(b))))
        index: dict[str, int] = {}
        for i, b in enumerate(canon):
            for x in b:
                if x in index:
                    raise ValidationError(f"{x} appears in two partition blocks")
                index[x] = i
        return Partition(canon, index)

    def elements(self) -> frozenset[str]:
        return frozenset(self._index)

    def block_index(self, x: str) -> int:
        try:
            return self._index[x]
        except KeyError:
            raise ValidationError(f"{x} is not covered by the partition") from None

    def block_of(self, x: str) -> frozenset[str]:
        return self.blocks[self.block_index(x)]

    def same_block(self, a: str, b: str) -> bool:
        return self.block_index(a) == self.block_index(b)

    def refines(self, coarser: "Partition") -> bool:
        """True when every block here sits inside a single block of `coarser`."""
        if self.elements() != coarser.elements():
            return False
        return all(
            len({coarser.block_index(x) for x in block}) == 1
            for block in self.blocks
        )

    def restrict(self, keep: Iterable[str]) -> "Partition":
        keep = set(keep)
        return Partition.from_groups(b & keep for b in self.blocks)

    def lines(self) -> list[str]:
        return [" ".join(sorted(b)) for b in self.blocks]


def _distribution_key(tree: ProbabilityTree, situation: str, mode: str):
    if mode == "symbolic":
        return tuple(sorted(lab.key() for _, lab in tree.edges(situation)))
    if mode == "numeric":
        probs = sorted(tree.dist(situation).values())
        return tuple(format_fraction(p) for p in probs)
    raise ValueError(f"unknown stage mode {mode!r}")


def compute_stages(tree: ProbabilityTree, mode: str = "symbolic") -> Partition:
    """Group situations whose child distributions match.

    In symbolic mode two situations match when their label multisets agree
    (symbols by name, literals by value, residual against residual), which
    treats shared symbols as deliberate stage declarations.  Numeric mode
    matches multisets of resolved probabilities and will merge accidental
    coincidences, so it is the opt-in variant.

    Stage assertions carried by the tree source are checked against the
    computed partition.
    """
    groups: dict[object, list[str]] = {}
    for v in tree.situations():
        groups.setdefault(_distribution_key(tree, v, mode), []).append(v)
    part = Partition.from_groups(groups.values())

    for group in tree.declared_stages:
        indices = {part.block_index(v) for v in group}
        if len(indices) > 1:
            raise StageAssertionError(
                f"asserted stage {' '.join(group)} splits across computed stages"
            )
    return part


def compute_positions(tree: ProbabilityTree, stages: Partition) -> Partition:
    """Coarsest refinement of `stages` with stage-isomorphic futures.

    Computed bottom-up: each node gets a canonical signature string built
    from its stage block and the sorted multiset of (edge probability, child
    signature) pairs.  Signatures are compared structurally (dict keys), so
    equal signatures mean genuinely isomorphic stage-matched subtrees and no
    hash collision can merge distinct ones.
    """
    if stages.elements() != frozenset(tree.situations()):
        raise ValidationError("stage partition does not cover the situations")

    sig: dict[str, str] = {}
    for v in reversed(tree.preorder()):
        if not tree.is_situation(v):
            sig[v] = "L"
            continue
        parts = sorted(
            f"{format_fraction(tree.edge_prob(v, c))}>{sig[c]}"
            for c in tree.child_names(v)
        )
        sig[v] = f"({stages.block_index(v)}|{';'.join(parts)})"

    groups: dict[str, list[str]] = {}
    for v in tree.situations():
        groups.setdefault(sig[v], []).append(v)
    return Partition.from_groups(groups.values())


def positions_of(tree: ProbabilityTree, mode: str = "symbolic") -> Partition:
    return compute_positions(tree, compute_stages(tree, mode))
