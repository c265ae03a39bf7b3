"""Command-line entry point.

Exit status: 0 on success, 1 when a verification fails, 2 on usage or
parse errors.  Output is deterministic for fixed arguments and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Any, Sequence

from . import io
from .algebra import check_algebra, ope_extract
from .hopf import DEFAULT_CEILING, DEFAULT_FLOOR, act_on_k, hopf_axiom_report, parse_h, parse_k
from .multimap import (
    INVARIANCE_DEGREE,
    MODULE_DEGREE,
    MembershipError,
    compose,
    invariance_witness,
    make_ord_shape,
    membership_witness,
    refine,
)
from .series import SERIES_CEILING, act_variable, disagreement, expand, parse_series, series_to_json
from .suites import SUITES, run_suites
from .trees import (
    TreeSyntaxError,
    enumerate_refining_trees,
    graft,
    internal_poset,
    linear_extensions,
    parse_tree,
    render_tree,
)


@dataclass(frozen=True)
class Config:
    module_degree: int = MODULE_DEGREE
    ceiling: int = SERIES_CEILING
    floor: int = DEFAULT_FLOOR
    invariance_degree: int = INVARIANCE_DEGREE
    format: str = "text"
    seed: int = 0

    def __post_init__(self):
        for name in ("module_degree", "ceiling", "floor", "invariance_degree"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.format not in ("text", "json", "dot"):
            raise ValueError(f"unknown format {self.format!r}")


_ENV = {
    "module_degree": "RELAXMULTI_MODULE_DEGREE",
    "ceiling": "RELAXMULTI_CEILING",
    "floor": "RELAXMULTI_FLOOR",
    "invariance_degree": "RELAXMULTI_INVARIANCE_DEGREE",
    "seed": "RELAXMULTI_SEED",
}


class UsageError(Exception):
    pass


def _env_default(name: str, fallback: int) -> int:
    raw = os.environ.get(_ENV[name])
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{_ENV[name]} must be an integer, got {raw!r}") from None


# ----------------------------------------------------------------- output


class Out:
    def __init__(self, cfg: Config, stream):
        self.cfg = cfg
        self.stream = stream

    def emit(self, text: str | list[str], doc: Any) -> None:
        if self.cfg.format == "json":
            print(json.dumps(doc, indent=2, sort_keys=True), file=self.stream)
        else:
            print("\n".join(text) if isinstance(text, list) else text, file=self.stream)


# ------------------------------------------------------------------ trees


def cmd_trees(args, cfg: Config, out: Out) -> int:
    if args.action == "parse":
        t = parse_tree(args.tree)
        out.emit([str(t), f"leaves: {t.leaf_count}"], {"tree": str(t), "leaves": t.leaf_count, "height": t.height})
    elif args.action == "graft":
        q, p = parse_tree(args.tree), parse_tree(args.inner)
        if not 1 <= args.at <= q.leaf_count:
            raise UsageError(f"--at must be between 1 and {q.leaf_count}")
        r = graft(q, args.at, p)
        out.emit([str(r), f"leaves: {r.leaf_count}"], {"tree": str(r), "leaves": r.leaf_count})
    elif args.action == "refinements":
        t = parse_tree(args.tree)
        found = [str(x) for x in enumerate_refining_trees(t, binary_only=args.binary)]
        out.emit(found + [f"count: {len(found)}"], {"tree": str(t), "refinements": found})
    elif args.action == "extensions":
        t = parse_tree(args.tree)
        shapes = [make_ord_shape(t, e) for e in linear_extensions(internal_poset(t))]
        text = [s.describe() for s in shapes] + [f"count: {len(shapes)}"]
        out.emit(text, {"tree": str(t), "shapes": [s.describe() for s in shapes],
                        "orders": [list(s.expansion_order) for s in shapes]})
    elif args.action == "dot":
        t = parse_tree(args.tree)
        dot = render_tree(t, "dot").rstrip("\n")
        out.emit(dot, {"tree": str(t), "dot": dot})
    return 0


# ------------------------------------------------------------------- hopf


def cmd_hopf(args, cfg: Config, out: Out) -> int:
    if args.action == "check":
        report = hopf_axiom_report(args.max_degree)
        out.emit(report.lines(), {"max_degree": report.max_degree, "passed": report.passed,
                                  "laws": [{"law": x.name, "passed": x.passed, "witness": x.witness}
                                           for x in report.laws]})
        return 0 if report.passed else 1
    h = parse_h(args.h)
    k = parse_k(args.k, cfg.floor, DEFAULT_CEILING)
    r = act_on_k(h, k)
    out.emit(str(r), {"h": str(h), "k": str(k), "result": str(r),
                      "terms": {str(j): str(c) for j, c in sorted(r.terms.items())}})
    return 0


# ----------------------------------------------------------------- series


def _order(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    if not names:
        raise UsageError("an expansion order lists variables separated by commas")
    return names


def cmd_series(args, cfg: Config, out: Out) -> int:
    s = parse_series(args.series, ceiling=cfg.ceiling, floor=cfg.floor)
    if args.action == "expand":
        order = _order(args.order)
        r = expand(s.over(order), order)
        out.emit(str(r), {"order": list(order), "series": series_to_json(r), "text": str(r)})
        return 0
    if args.action == "act":
        r = act_variable(parse_h(args.h), args.var, s)
        out.emit(str(r), {"series": series_to_json(r), "text": str(r)})
        return 0
    other = parse_series(args.other, ceiling=cfg.ceiling, floor=cfg.floor)
    orders = [_order(o) for o in args.orders.split(";")]
    names = tuple(sorted(set(s.variables) | set(other.variables)))
    d = disagreement(s.over(names), other.over(names), orders)
    if d is None:
        out.emit(f"agree on {len(orders)} orders", {"agree": True, "orders": [list(o) for o in orders]})
        return 0
    order, (_, mono, _), c1, c2 = d
    mono_s = "*".join(f"{n}^{e}" for n, e in mono) or "1"
    out.emit(f"disagree along {','.join(order)}: coefficient of {mono_s} is {c1} vs {c2}",
             {"agree": False, "order": list(order), "monomial": mono_s, "left": str(c1), "right": str(c2)})
    return 1


# ------------------------------------------------------------------ multi


def _witness_doc(w) -> dict:
    return {"kind": w.kind, "inputs": list(w.inputs), "detail": w.detail}


def _emit_witness(out: Out, w, ok_text: str, ok_doc: dict) -> int:
    if w is None:
        out.emit(ok_text, {**ok_doc, "passed": True})
        return 0
    out.emit(f"FAIL {w}", {**ok_doc, "passed": False, "witness": _witness_doc(w)})
    return 1


def _load_map(path: str, check: bool = False):
    return io.multimap_from_json(io.load(path), check=check)


def _write(out: Out, doc: dict, path: str | None, text: str) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(io.dump(doc) + "\n")
        out.emit(f"{text} -> {path}", {"output": path, "tree": doc["tree"]})
    else:
        out.emit(io.dump(doc), doc)


def cmd_multi(args, cfg: Config, out: Out) -> int:
    if args.action == "check":
        doc = io.load(args.input)
        m = io.multimap_from_json(doc, check=False)
        reps = {}
        for row in doc.get("table", []):
            if "representatives" in row:
                b = tuple(mod.index(x) for mod, x in zip(m.shape.leaves, row["inputs"]))
                reps[b] = {k: parse_series(v, m.shape.variable_names, m.ceiling)
                           for k, v in row["representatives"].items()}
        w = membership_witness(m, reps, cfg.invariance_degree)
        return _emit_witness(out, w, f"PASS membership over {m.tree}", {"tree": str(m.tree)})
    if args.action == "invariance":
        m = _load_map(args.input)
        w = invariance_witness(m, cfg.invariance_degree)
        return _emit_witness(out, w, f"PASS full invariance over {m.tree}", {"tree": str(m.tree)})
    if args.action == "compose":
        g, f = _load_map(args.input), _load_map(args.inner)
        r = compose(g, args.at, f, check=not args.no_check, degree=cfg.invariance_degree)
        _write(out, io.multimap_to_json(r), args.output, f"composite over {r.tree}")
        return 0
    m = _load_map(args.input)
    r = refine(m, parse_tree(args.to), check=not args.no_check)
    _write(out, io.multimap_to_json(r), args.output, f"refinement over {r.tree}")
    return 0


# ---------------------------------------------------------------- algebra


def _algebra(args, cfg: Config):
    if getattr(args, "input", None):
        return io.algebra_from_json(io.load(args.input))
    return io.algebra_from_json({"example": args.example, "degree": cfg.module_degree, "ceiling": cfg.ceiling})


def cmd_algebra(args, cfg: Config, out: Out) -> int:
    alg = _algebra(args, cfg)
    if args.action == "ope":
        B = alg.module
        try:
            a, b = B.index(args.a), B.index(args.b)
        except KeyError as err:
            raise UsageError(str(err)) from None
        parts = ope_extract(alg, a, b)
        text = [f"order {k}: {s}" for k, s in parts] or ["no terms"]
        out.emit(text, {"a": args.a, "b": args.b, "terms": [{"order": k, "series": str(s)} for k, s in parts]})
        return 0
    lines = []
    if args.action == "demo":
        B = alg.module
        for a in B.window[:2]:
            for b in B.window[:2]:
                lines.append(f"f2({B.label(a)}, {B.label(b)}) = {alg.f2((a, b))}")
    report = check_algebra(alg, args.max_leaves, cfg.invariance_degree)
    lines += report.lines()
    out.emit(lines, {"max_leaves": args.max_leaves, "passed": report.passed, "commutative": report.commutative,
                     "results": [{"axiom": r.axiom, "tree": r.tree, "passed": r.passed, "checks": r.checked,
                                  "witness": r.witness} for r in report.results]})
    return 0 if report.passed else 1


# ----------------------------------------------------------------- verify


def cmd_verify(args, cfg: Config, out: Out) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names, seed=cfg.seed)
    text = [r.line(timing=False) for r in results]
    for r in results:
        text += [f"  {n}" for n in r.notes]
    ok = all(r.passed for r in results)
    text.append(f"verify: {'PASS' if ok else 'FAIL'} (seed {cfg.seed})")
    out.emit(text, {"seed": cfg.seed, "passed": ok, "suites": [r.to_json() for r in results]})
    return 0 if ok else 1


# ----------------------------------------------------------------- parser


GRAMMAR = """\
tree grammar: a leaf is '*'; a node is '(' children ')', e.g. ((**)*), (), (*)
series grammar: terms joined by + and -, each a product of a rational, x^k,
  (u-v)^-k poles and an optional codomain basis index [k], e.g. 3/2*x1^2*(x1-x2)^-1
environment overrides: RELAXMULTI_MODULE_DEGREE, RELAXMULTI_CEILING,
  RELAXMULTI_FLOOR, RELAXMULTI_INVARIANCE_DEGREE, RELAXMULTI_SEED
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(GRAMMAR, file=sys.stderr, end="")
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_config(p: argparse.ArgumentParser, default) -> None:
    """Config flags; leaf commands repeat them with suppressed defaults so they may follow the command."""
    p.add_argument("--format", choices=("text", "json", "dot"), default=default or "text")
    p.add_argument("--module-degree", type=int, default=default,
                   help=f"polynomial module degree (default {MODULE_DEGREE})")
    p.add_argument("--ceiling", type=int, default=default, help=f"series total-degree ceiling (default {SERIES_CEILING})")
    p.add_argument("--floor", type=int, default=default, help=f"Laurent depth (default {DEFAULT_FLOOR})")
    p.add_argument("--invariance-degree", type=int, default=default,
                   help=f"H-invariance check degree (default {INVARIANCE_DEGREE})")
    p.add_argument("--seed", type=int, default=default, help="seed for the property suites (default 0)")


class _Leaf(_Parser):
    def __init__(self, *a, **kw):
        super().__init__(*a, **kw)
        if self.prog.count(" ") >= 2 or self.prog.endswith("verify"):
            _add_config(self, argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relaxmulti", description="Exact relaxed multicategory computations.",
                epilog=GRAMMAR, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_config(p, None)
    sub = p.add_subparsers(dest="group", required=True, parser_class=_Leaf)

    t = sub.add_parser("trees", help="tree parsing, grafting and orderings")
    ts = t.add_subparsers(dest="action", required=True, parser_class=_Leaf)
    ts.add_parser("parse").add_argument("tree")
    g = ts.add_parser("graft")
    g.add_argument("tree")
    g.add_argument("inner")
    g.add_argument("--at", type=int, required=True)
    r = ts.add_parser("refinements")
    r.add_argument("tree")
    r.add_argument("--binary", action="store_true")
    ts.add_parser("extensions").add_argument("tree")
    ts.add_parser("dot").add_argument("tree")

    h = sub.add_parser("hopf", help="divided-power Hopf algebra")
    hs = h.add_subparsers(dest="action", required=True, parser_class=_Leaf)
    hs.add_parser("check").add_argument("--max-degree", type=int, default=6)
    a = hs.add_parser("act")
    a.add_argument("--h", required=True, help='e.g. "D2" or "D1 + 3*D2"')
    a.add_argument("--k", required=True, help='e.g. "x^3" or "x^-2 + 1/2*x^0"')

    s = sub.add_parser("series", help="singular series")
    ss = s.add_subparsers(dest="action", required=True, parser_class=_Leaf)
    e = ss.add_parser("expand")
    e.add_argument("series")
    e.add_argument("--order", required=True, help="comma separated, dominant variable first")
    ag = ss.add_parser("agree")
    ag.add_argument("series")
    ag.add_argument("other")
    ag.add_argument("--orders", required=True, help='orders separated by ";", e.g. "x,y;y,x"')
    ac = ss.add_parser("act")
    ac.add_argument("series")
    ac.add_argument("--h", required=True)
    ac.add_argument("--var", required=True)

    m = sub.add_parser("multi", help="tree-indexed multimaps (JSON documents)")
    ms = m.add_subparsers(dest="action", required=True, parser_class=_Leaf)
    ms.add_parser("check").add_argument("--input", required=True)
    ms.add_parser("invariance").add_argument("--input", required=True)
    c = ms.add_parser("compose")
    c.add_argument("--input", required=True, help="outer multimap")
    c.add_argument("--inner", required=True, help="multimap grafted into the outer one")
    c.add_argument("--at", type=int, required=True)
    c.add_argument("--output")
    c.add_argument("--no-check", action="store_true")
    rf = ms.add_parser("refine")
    rf.add_argument("--input", required=True)
    rf.add_argument("--to", required=True)
    rf.add_argument("--output")
    rf.add_argument("--no-check", action="store_true")

    al = sub.add_parser("algebra", help="algebras generated by a binary map")
    als = al.add_subparsers(dest="action", required=True, parser_class=_Leaf)
    d = als.add_parser("demo")
    d.add_argument("--example", choices=("q-u", "rationals"), default="q-u")
    d.add_argument("--max-leaves", type=int, default=3)
    ck = als.add_parser("check")
    ck.add_argument("--input", required=True)
    ck.add_argument("--max-leaves", type=int, default=4)
    o = als.add_parser("ope")
    o.add_argument("--a", required=True)
    o.add_argument("--b", required=True)
    o.add_argument("--input")
    o.add_argument("--example", choices=("q-u", "rationals"), default="q-u")

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", choices=("all",) + tuple(SUITES), default="all")
    return p


def _config(args) -> Config:
    values = {}
    for name, fallback in (("module_degree", MODULE_DEGREE), ("ceiling", SERIES_CEILING),
                           ("floor", DEFAULT_FLOOR), ("invariance_degree", INVARIANCE_DEGREE), ("seed", 0)):
        given = getattr(args, name)
        values[name] = given if given is not None else _env_default(name, fallback)
    return Config(format=args.format, **values)


COMMANDS = {"trees": cmd_trees, "hopf": cmd_hopf, "series": cmd_series, "multi": cmd_multi,
            "algebra": cmd_algebra, "verify": cmd_verify}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        if cfg.format == "dot" and not (args.group == "trees" and args.action == "dot"):
            raise UsageError("--format dot applies to 'trees dot' only")
        return COMMANDS[args.group](args, cfg, Out(cfg, stdout))
    except (UsageError, TreeSyntaxError, ValueError, KeyError, OSError) as err:
        if isinstance(err, MembershipError):
            print(f"FAIL {err}", file=stdout)
            return 1
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"relaxmulti: error: {msg}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
