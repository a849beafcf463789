"""Command-line driver.

Subcommands: validate, atoms, stages, positions, build, manipulate, oracle,
identify, bn2ceg.  Output is deterministic byte for byte; probabilities are
printed as exact p/q strings.  Exit status: 0 success, 1 a requested check
failed (a JSON witness goes to stdout), 2 malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .bn import bn_to_tree, check_bn_ceg_shape, parse_bn
from .ceg import EventVariable, build_ceg, build_ceg_auto, parse_variables
from .equivalence import compute_positions, compute_stages
from .errors import CegError
from .identification import (
    backdoor_identify,
    brute_force_effect,
    extend_variable,
    suffix_variable_from_leaf_variable,
)
from .intervention import (
    Manipulation,
    apply_manipulation,
    is_amenable,
    is_positioned,
    is_staged,
    parse_manipulation,
)
from .tree import ProbabilityTree, format_fraction, parse_tree

SCHEMA = 1


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CegError(f"cannot read {path}: {exc.strerror}") from exc


def _emit_json(payload: dict):
    payload = {"schema": SCHEMA, **payload}
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_variable(path: str, tree: ProbabilityTree, name: str) -> EventVariable:
    variables = parse_variables(_read(path), tree)
    if name not in variables:
        raise CegError(f"{path} does not declare variable {name}")
    return variables[name]


def _target_positions(ceg, m: Manipulation) -> tuple[str, ...]:
    """Positions the manipulation forces into: point-mass non-leaf targets."""
    targets = set()
    for v, dist in m.replacements.items():
        for child, p in dist.items():
            if p == 1 and ceg.tree.is_situation(child):
                targets.add(ceg.position_of[child])
    if not targets:
        raise CegError(
            "cannot infer forced positions: no point mass on a non-leaf child"
        )
    return tuple(sorted(targets))


def cmd_validate(args) -> int:
    tree = parse_tree(_read(args.tree))
    if args.json:
        _emit_json(
            {
                "command": "validate",
                "root": tree.root,
                "nodes": len(tree.nodes()),
                "situations": len(tree.situations()),
                "leaves": len(tree.leaves()),
            }
        )
    else:
        print(
            f"ok: root {tree.root}, {len(tree.situations())} situations,"
            f" {len(tree.leaves())} leaves"
        )
    return 0


def cmd_atoms(args) -> int:
    tree = parse_tree(_read(args.tree))
    rows = [
        {
            "path": list(ev.path),
            "probability": format_fraction(tree.path_probability(ev)),
        }
        for ev in tree.atomic_events()
    ]
    if args.json:
        _emit_json({"command": "atoms", "events": rows})
    else:
        for row in rows:
            print(f"{' '.join(row['path'])} : {row['probability']}")
    return 0


def _partition_command(args, which: str) -> int:
    tree = parse_tree(_read(args.tree))
    stages = compute_stages(tree, args.mode)
    part = stages if which == "stages" else compute_positions(tree, stages)
    if args.json:
        _emit_json({"command": which, "blocks": [sorted(b) for b in part.blocks]})
    else:
        for line in part.lines():
            print(line)
    return 0


def cmd_build(args) -> int:
    tree = parse_tree(_read(args.tree))
    stages = compute_stages(tree, args.mode)
    positions = compute_positions(tree, stages)
    graph = build_ceg(tree, positions, stages, args.mode)
    dot = graph.export_dot()
    if args.dot:
        Path(args.dot).write_text(dot)
    summary = {
        "command": "build",
        "vertices": len(graph.vertices),
        "directed_edges": len(graph.edges),
        "undirected_edges": len(graph.undirected),
        "paths": len(graph.paths()),
    }
    if args.json:
        _emit_json(summary)
    elif args.dot:
        print(f"wrote {args.dot}")
    else:
        print(dot, end="")
    return 0


def cmd_manipulate(args) -> int:
    tree = parse_tree(_read(args.tree))
    m = parse_manipulation(_read(args.manipulation), tree)
    after = apply_manipulation(tree, m)
    checks = []
    failed = False
    for spec in args.check or []:
        for item in spec.split(","):
            item = item.strip()
            if not item:
                continue
            if item == "positioned":
                ok = is_positioned(tree, m, args.mode)
                checks.append({"name": "positioned", "passed": ok})
            elif item == "staged":
                ok = is_staged(tree, m, args.mode)
                checks.append({"name": "staged", "passed": ok})
            elif item.startswith("amenable:"):
                graph = build_ceg_auto(tree, args.mode)
                sits = item.split(":", 1)[1].split("+")
                W = sorted({graph.position_of[s] for s in sits})
                ok = is_amenable(graph, m, W)
                checks.append({"name": item, "passed": ok, "witness": W})
            else:
                raise CegError(f"unknown check {item!r}")
            failed = failed or not checks[-1]["passed"]
    if args.json or failed:
        _emit_json(
            {"command": "manipulate", "checks": checks, "tree": after.serialize()}
        )
    else:
        for c in checks:
            print(f"check {c['name']}: {'pass' if c['passed'] else 'FAIL'}")
        print(after.serialize(), end="")
    return 1 if failed else 0


def cmd_oracle(args) -> int:
    tree = parse_tree(_read(args.tree))
    m = parse_manipulation(_read(args.manipulation), tree)
    var = _load_variable(args.target_file, tree, args.target)
    dist = brute_force_effect(tree, m, var)
    if args.json:
        _emit_json(
            {"command": "oracle", "target": args.target, "distribution": dist.as_json()}
        )
    else:
        for value, p in sorted(dist.as_json().items()):
            print(f"{args.target}={value} : {p}")
    return 0


def cmd_identify(args) -> int:
    tree = parse_tree(_read(args.tree))
    graph = build_ceg_auto(tree, args.mode)
    m = parse_manipulation(_read(args.manipulation), tree)
    target = _load_variable(args.target_file, tree, args.target)
    given = _load_variable(args.given_file, tree, args.given)
    W = _target_positions(graph, m)
    sv = suffix_variable_from_leaf_variable(graph, W, target)
    report = backdoor_identify(graph, m, W, given, sv)
    payload = {"command": "identify", **report.as_json()}
    if args.json:
        _emit_json(payload)
    else:
        print(f"forced to: {' '.join(report.W)}")
        for c in report.conditions:
            mark = "pass" if c.passed else "FAIL"
            extra = "" if c.witness is None else f" ({c.witness})"
            print(f"condition {c.name}: {mark}{extra}")
        for value, p in sorted(report.formula_value.as_json().items()):
            print(f"formula {args.target}={value} : {p}")
        for value, p in sorted(report.oracle_value.as_json().items()):
            print(f"oracle  {args.target}={value} : {p}")
        print(f"agree: {report.agree}")
    return 0 if (report.all_conditions_pass and report.agree) else 1


def cmd_bn2ceg(args) -> int:
    bn = parse_bn(_read(args.bn))
    tree, stages = bn_to_tree(bn)
    positions = compute_positions(tree, stages)
    graph = build_ceg(tree, positions, stages)
    shape = check_bn_ceg_shape(graph)
    if args.dot:
        Path(args.dot).write_text(graph.export_dot())
    if args.json:
        _emit_json(
            {
                "command": "bn2ceg",
                "vertices": len(graph.vertices),
                "directed_edges": len(graph.edges),
                "shape": {
                    "uniform_path_length": shape.uniform_path_length,
                    "stages_depth_homogeneous": shape.stages_depth_homogeneous,
                    "stage_sizes_uniform_per_level": shape.stage_sizes_uniform_per_level,
                },
                "tree": tree.serialize(),
            }
        )
    else:
        print(tree.serialize(), end="")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ceg", description="chain event graph toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--json", action="store_true", help="JSON output")
        p.add_argument(
            "--mode",
            choices=["symbolic", "numeric"],
            default="symbolic",
            help="stage discovery mode",
        )
        return p

    p = add("validate", cmd_validate, help="parse and validate a tree")
    p.add_argument("tree")

    p = add("atoms", cmd_atoms, help="list atomic events with probabilities")
    p.add_argument("tree")

    p = add("stages", lambda a: _partition_command(a, "stages"), help="stage partition")
    p.add_argument("tree")

    p = add(
        "positions",
        lambda a: _partition_command(a, "positions"),
        help="position partition",
    )
    p.add_argument("tree")

    p = add("build", cmd_build, help="build the chain event graph")
    p.add_argument("tree")
    p.add_argument("--dot", metavar="FILE", help="write DOT to FILE")

    p = add("manipulate", cmd_manipulate, help="apply a manipulation")
    p.add_argument("tree")
    p.add_argument("manipulation")
    p.add_argument(
        "--check",
        action="append",
        metavar="LIST",
        help="comma list: positioned, staged, amenable:SIT+SIT",
    )

    p = add("oracle", cmd_oracle, help="brute-force post-manipulation distribution")
    p.add_argument("tree")
    p.add_argument("manipulation")
    p.add_argument("--target", required=True, help="variable name")
    p.add_argument("--target-file", required=True, help="variable declaration file")

    p = add("identify", cmd_identify, help="back-door identification report")
    p.add_argument("tree")
    p.add_argument("manipulation")
    p.add_argument("--target", required=True)
    p.add_argument("--target-file", required=True)
    p.add_argument("--given", required=True)
    p.add_argument("--given-file", required=True)

    p = add("bn2ceg", cmd_bn2ceg, help="unfold a discrete BN into a tree and CEG")
    p.add_argument("bn")
    p.add_argument("--dot", metavar="FILE")

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
