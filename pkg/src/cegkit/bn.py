"""Discrete Bayesian networks as event trees with symbolic stage structure.

A BN unfolds into the full event tree over its variables in declared order.
Situations at depth i-1 branch on variable i; two of them share a CPT row,
and therefore a stage, exactly when their parent configurations agree.  The
text format:

    varorder X1 X2 X3
    var X1 0 1
    var X2 0 1
    var X3 0 1
    parents X2 X1
    parents X3 X1
    cpt X1 | : 1/2 1/2
    cpt X2 | X1=0 : 1/3 2/3
    cpt X2 | X1=1 : 1/4 3/4
    ...
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .ceg import ChainEventGraph
from .equivalence import Partition, compute_stages
from .errors import TreeParseError, ValidationError
from .intervention import Manipulation
from .tree import Label, ProbabilityTree, parse_fraction

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9.]*\Z")


@dataclass(frozen=True)
class DiscreteBN:
    """Variables in topological order, parent sets, and exact CPTs."""

    variables: tuple[tuple[str, tuple[str, ...]], ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[tuple[str, tuple[str, ...]], tuple[Fraction, ...]]

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.variables)

    def values(self, var: str) -> tuple[str, ...]:
        for n, vals in self.variables:
            if n == var:
                return vals
        raise ValidationError(f"unknown variable {var}")

    def parent_configs(self, var: str) -> tuple[tuple[str, ...], ...]:
        domains = [self.values(p) for p in self.parents[var]]
        return tuple(itertools.product(*domains))

    def row(self, var: str, config: tuple[str, ...]) -> tuple[Fraction, ...]:
        return self.cpts[(var, config)]

    def joint(self) -> Iterable[tuple[tuple[str, ...], Fraction]]:
        """All full configurations with their factorized probabilities."""
        names = self.names()
        domains = [self.values(n) for n in names]
        for config in itertools.product(*domains):
            assign = dict(zip(names, config))
            p = Fraction(1)
            for i, var in enumerate(names):
                parent_vals = tuple(assign[q] for q in self.parents[var])
                p *= self.row(var, parent_vals)[self.values(var).index(config[i])]
            yield config, p

    @staticmethod
    def build(
        variables: Iterable[tuple[str, Iterable[str]]],
        parents: Mapping[str, Iterable[str]],
        cpts: Mapping[tuple[str, tuple[str, ...]], Iterable[Fraction]],
    ) -> "DiscreteBN":
        varlist = tuple((n, tuple(vs)) for n, vs in variables)
        names = [n for n, _ in varlist]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate variable names")
        for n, vals in varlist:
            if not _NAME_RE.match(n):
                raise ValidationError(f"bad variable name {n!r}")
            if len(vals) < 1 or len(set(vals)) != len(vals):
                raise ValidationError(f"bad value list for {n}")
            for v in vals:
                if not _NAME_RE.match(v):
                    raise ValidationError(f"bad value {v!r} for {n}")
        par = {n: tuple(parents.get(n, ())) for n in names}
        for n, ps in par.items():
            before = names[: names.index(n)]
            for p in ps:
                if p not in before:
                    raise ValidationError(
                        f"parent {p} of {n} does not precede it in the order"
                    )
        bn = DiscreteBN(varlist, par, {k: tuple(v) for k, v in cpts.items()})
        for n in names:
            for config in bn.parent_configs(n):
                if (n, config) not in bn.cpts:
                    raise ValidationError(f"missing cpt row for {n} given {config}")
                row = bn.cpts[(n, config)]
                if len(row) != len(bn.values(n)):
                    raise ValidationError(f"cpt row for {n} given {config}: wrong arity")
                if sum(row, Fraction(0)) != 1:
                    raise ValidationError(f"cpt row for {n} given {config}: sum not 1")
                if any(p < 0 for p in row):
                    raise ValidationError(f"cpt row for {n} given {config}: negative")
        extra = set(bn.cpts) - {
            (n, c) for n in names for c in bn.parent_configs(n)
        }
        if extra:
            raise ValidationError(f"unexpected cpt rows: {sorted(extra)}")
        return bn


def parse_bn(text: str) -> DiscreteBN:
    order: list[str] | None = None
    values: dict[str, tuple[str, ...]] = {}
    parents: dict[str, tuple[str, ...]] = {}
    cpts: dict[tuple[str, tuple[str, ...]], tuple[Fraction, ...]] = {}
    raw_rows: list[tuple[int, str, dict[str, str], tuple[Fraction, ...]]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "varorder":
            if order is not None:
                raise TreeParseError(lineno, "varorder declared twice")
            order = toks[1:]
        elif toks[0] == "var":
            if len(toks) < 3:
                raise TreeParseError(lineno, "usage: var <name> <values...>")
            values[toks[1]] = tuple(toks[2:])
        elif toks[0] == "parents":
            if len(toks) < 3:
                raise TreeParseError(lineno, "usage: parents <name> <names...>")
            parents[toks[1]] = tuple(toks[2:])
        elif toks[0] == "cpt":
            if "|" not in toks or ":" not in toks:
                raise TreeParseError(lineno, "usage: cpt <name> | <config> : <probs>")
            bar = toks.index("|")
            colon = toks.index(":")
            if bar != 2 or colon < bar:
                raise TreeParseError(lineno, "usage: cpt <name> | <config> : <probs>")
            config: dict[str, str] = {}
            for pair in toks[bar + 1 : colon]:
                if "=" not in pair:
                    raise TreeParseError(lineno, f"bad config entry {pair!r}")
                k, v = pair.split("=", 1)
                config[k] = v
            try:
                probs = tuple(parse_fraction(t) for t in toks[colon + 1 :])
            except ValueError as exc:
                raise TreeParseError(lineno, str(exc)) from None
            raw_rows.append((lineno, toks[1], config, probs))
        else:
            raise TreeParseError(lineno, f"unknown directive {toks[0]!r}")

    if order is None:
        raise TreeParseError(1, "missing varorder")
    for n in order:
        if n not in values:
            raise TreeParseError(1, f"variable {n} missing a var line")
    for lineno, var, config, probs in raw_rows:
        ps = parents.get(var, ())
        if set(config) != set(ps):
            raise TreeParseError(
                lineno, f"cpt config for {var} must name exactly {list(ps)}"
            )
        cpts[(var, tuple(config[p] for p in ps))] = probs
    return DiscreteBN.build(
        [(n, values[n]) for n in order], parents, cpts
    )


def _node_name(prefix: tuple[str, ...]) -> str:
    return "n" if not prefix else "n_" + "_".join(prefix)


def _row_symbol(bn: DiscreteBN, var: str, config: tuple[str, ...], k: int) -> str:
    row_index = bn.parent_configs(var).index(config)
    return f"{var}.r{row_index}.v{k}"


def bn_to_tree(bn: DiscreteBN) -> tuple[ProbabilityTree, Partition]:
    """Unfold the BN into its event tree plus the CPT-row stage partition.

    Edge symbols encode (variable, CPT row, value), so situations sharing a
    parent configuration share symbols and the symbolic stage computation
    recovers exactly the conditional-independence structure.
    """
    names = bn.names()
    edges: list[tuple[str, str, Label]] = []
    bindings: dict[str, Fraction] = {}
    for depth, var in enumerate(names):
        domains = [bn.values(n) for n in names[:depth]]
        for prefix in itertools.product(*domains):
            assign = dict(zip(names[:depth], prefix))
            config = tuple(assign[p] for p in bn.parents[var])
            row = bn.row(var, config)
            parent_node = _node_name(prefix)
            for k, val in enumerate(bn.values(var)):
                sym = _row_symbol(bn, var, config, k)
                bindings[sym] = row[k]
                edges.append((parent_node, _node_name(prefix + (val,)), Label.sym(sym)))
    tree = ProbabilityTree.build(edges, bindings, _node_name(()))
    return tree, compute_stages(tree, "symbolic")


def leaf_of_config(config: tuple[str, ...]) -> str:
    return _node_name(config)


def do_to_manipulation(bn: DiscreteBN, var: str, value: str) -> Manipulation:
    """The atomic intervention do(var = value) as a tree manipulation.

    Every situation at the variable's level gets the point mass on the
    matching child; the result is positioned and staged by construction.
    """
    names = bn.names()
    if var not in names:
        raise ValidationError(f"unknown variable {var}")
    if value not in bn.values(var):
        raise ValidationError(f"unknown value {value} for {var}")
    depth = names.index(var)
    domains = [bn.values(n) for n in names[:depth]]
    replacements = {}
    for prefix in itertools.product(*domains):
        node = _node_name(prefix)
        replacements[node] = {
            _node_name(prefix + (val,)): Fraction(1 if val == value else 0)
            for val in bn.values(var)
        }
    return Manipulation(replacements)


def truncated_marginal(
    bn: DiscreteBN, forced: Mapping[str, str], target: str
) -> dict[str, Fraction]:
    """Marginal of `target` under the truncated factorization.

    Forced variables drop their own factor and are pinned inside every
    other factor's parent configuration.
    """
    names = bn.names()
    out = {v: Fraction(0) for v in bn.values(target)}
    domains = [bn.values(n) for n in names]
    for config in itertools.product(*domains):
        assign = dict(zip(names, config))
        if any(assign[v] != val for v, val in forced.items()):
            continue
        p = Fraction(1)
        for var in names:
            if var in forced:
                continue
            parent_vals = tuple(assign[q] for q in bn.parents[var])
            p *= bn.row(var, parent_vals)[bn.values(var).index(assign[var])]
        out[assign[target]] += p
    return out


@dataclass(frozen=True)
class ShapeReport:
    """Structural marks a graph inherits from a BN unfolding."""

    uniform_path_length: bool
    stages_depth_homogeneous: bool
    stage_sizes_uniform_per_level: bool
    witness: str | None = None

    @property
    def all_pass(self) -> bool:
        return (
            self.uniform_path_length
            and self.stages_depth_homogeneous
            and self.stage_sizes_uniform_per_level
        )


def check_bn_ceg_shape(ceg: ChainEventGraph) -> ShapeReport:
    """Check uniform path length, depth-homogeneous stages, and level-wise
    equal stage cardinalities."""
    tree = ceg.tree
    lengths = {len(ev) for ev in tree.atomic_events()}
    uniform = len(lengths) == 1
    witness = None if uniform else f"path lengths {sorted(lengths)}"

    homogeneous = True
    sizes_uniform = True
    by_level: dict[int, set[int]] = {}
    for block in ceg.stages.blocks:
        depths = {tree.depth(v) for v in block}
        if len(depths) > 1:
            homogeneous = False
            if witness is None:
                witness = f"stage {sorted(block)} spans depths {sorted(depths)}"
            continue
        by_level.setdefault(next(iter(depths)), set()).add(len(block))
    for level, sizes in sorted(by_level.items()):
        if len(sizes) > 1:
            sizes_uniform = False
            if witness is None:
                witness = f"level {level} stage sizes {sorted(sizes)}"
            break
    return ShapeReport(uniform, homogeneous, sizes_uniform, witness)
