"""Property suites shared by the command line and the test-suite.

Every suite is deterministic for a given seed and returns a
:class:`SuiteResult` carrying the first witness found.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable

from .algebra import (
    CommDiffAlgebra,
    check_algebra,
    drop_mixed_terms,
    make_holomorphic_algebra,
)
from .hopf import DEFAULT_CEILING, DEFAULT_FLOOR, HElem, KElem, act_on_k, antipode_h, antipode_k, hopf_axiom_report
from .multimap import (
    HModule,
    LabelledTree,
    MembershipError,
    MultiMap,
    associativity_check,
    compose,
    identity,
    labelled,
    make_multimap,
    multimap_difference,
    ord_shapes,
    refine,
    unit_map,
)
from .series import SingularSeries, as_number, expand, substitute_linear
from .trees import LEAF, Tree, corolla, graft, morphism, reduced_trees, render_tree


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    seconds: float
    witness: str | None = None
    notes: list[str] = field(default_factory=list)

    def line(self, timing: bool = True) -> str:
        clock = f", {self.seconds:.2f}s" if timing else ""
        head = f"{'PASS' if self.passed else 'FAIL'} {self.name:<14} ({self.checks} checks{clock})"
        return head + (f"  witness: {self.witness}" if self.witness else "")

    def to_json(self) -> dict:
        return {"suite": self.name, "passed": self.passed, "checks": self.checks, "witness": self.witness}


class _Run:
    def __init__(self, name: str):
        self.name = name
        self.checks = 0
        self.witness: str | None = None
        self.start = time.perf_counter()

    def check(self, ok: bool, witness: Callable[[], str] | str) -> bool:
        self.checks += 1
        if not ok and self.witness is None:
            self.witness = witness() if callable(witness) else witness
        return ok

    def result(self) -> SuiteResult:
        return SuiteResult(self.name, self.witness is None, self.checks, time.perf_counter() - self.start, self.witness)


# ------------------------------------------------------------------- trees


def random_tree(rng: random.Random, leaves: int, binary: bool = False) -> Tree:
    """A random reduced tree; arities 2 or 3 unless ``binary``."""
    if leaves == 1:
        return LEAF
    arity = 2 if binary or leaves == 2 else rng.choice((2, 2, 3))
    cuts = sorted(rng.sample(range(1, leaves), arity - 1))
    sizes = [b - a for a, b in zip([0] + cuts, cuts + [leaves])]
    return Tree(tuple(random_tree(rng, s, binary) for s in sizes))


def _bracketings(n: int) -> set[str]:
    # brute force over strings, independent of the tree library
    if n == 1:
        return {"*"}
    return {f"({a}{b})" for k in range(1, n) for a in _bracketings(k) for b in _bracketings(n - k)}


def tree_suite(seed: int = 0, pairs: int = 1000, triples: int = 500) -> SuiteResult:
    run = _Run("trees")
    rng = random.Random(seed)
    for n in range(1, 6):
        lib = {render_tree(t) for t in reduced_trees(n, binary=True)}
        brute = _bracketings(n)
        run.check(lib == brute and len(lib) == [1, 1, 2, 5, 14][n - 1],
                  lambda n=n, lib=lib: f"{n} leaves: library {len(lib)} vs brute force {len(brute)}")
    for _ in range(pairs):
        q, p = random_tree(rng, rng.randint(1, 6)), random_tree(rng, rng.randint(1, 6))
        i = rng.randint(1, q.leaf_count)
        r = graft(q, i, p)
        run.check(r.leaf_count == q.leaf_count + p.leaf_count - 1, lambda: f"leaf count of {q} o_{i} {p} is {r.leaf_count}")
    for _ in range(triples):
        a, b, c = (random_tree(rng, rng.randint(1, 4)) for _ in range(3))
        i, j = rng.randint(1, a.leaf_count), rng.randint(1, b.leaf_count)
        left, right = graft(graft(a, i, b), i + j - 1, c), graft(a, i, graft(b, j, c))
        run.check(left == right, lambda: f"({a} o_{i} {b}) o_{i + j - 1} {c} = {left} but {a} o_{i} ({b} o_{j} {c}) = {right}")
    return run.result()


# -------------------------------------------------------------------- hopf


def hopf_suite(max_degree: int = 6, floor: int = DEFAULT_FLOOR, ceiling: int = DEFAULT_CEILING) -> SuiteResult:
    run = _Run("hopf")
    report = hopf_axiom_report(max_degree)
    for law in report.laws:
        run.check(law.passed, lambda law=law: f"{law.name} fails at {law.witness}")
    D = HElem.gen
    window = range(-floor, ceiling + 1)
    x = lambda j: KElem.monomial(j, 1, floor, ceiling)  # noqa: E731
    for j in window:
        for i in range(max_degree + 1):
            for k in range(max_degree + 1 - i):
                lhs = act_on_k(D(i), act_on_k(D(k), x(j)))
                rhs = act_on_k(D(i + k), x(j)).scale(comb(i + k, i))
                run.check(lhs.agrees(rhs), lambda: f"D{i}(D{k} x^{j}) = {lhs} but C({i + k},{i}) D{i + k} x^{j} = {rhs}")
    for a in window:
        for b in window:
            if not -floor <= a + b <= ceiling:
                continue
            for i in range(max_degree + 1):
                lhs = act_on_k(D(i), x(a) * x(b))
                rhs = KElem({}, floor, ceiling)
                for p in range(i + 1):
                    rhs = rhs + act_on_k(D(p), x(a)) * act_on_k(D(i - p), x(b))
                run.check(lhs.agrees(rhs), lambda: f"Leibniz D{i}(x^{a} x^{b}): {lhs} vs {rhs}")
    for i in range(max_degree + 1):
        run.check(antipode_h(antipode_h(D(i))) == D(i), f"S(S(D{i})) != D{i}")
    for j in window:
        run.check(antipode_k(antipode_k(x(j))).agrees(x(j)), f"S(S(x^{j})) != x^{j}")
    return run.result()


# --------------------------------------------------------------- expansion


def _random_pole_free(rng: random.Random, names: tuple[str, ...], degree: int, ceiling: int) -> SingularSeries:
    terms = {}
    for _ in range(rng.randint(1, 4)):
        exps = [0] * len(names)
        for _ in range(rng.randint(0, degree)):
            exps[rng.randrange(len(names))] += 1
        mono = tuple((n, e) for n, e in zip(names, exps) if e)
        terms[((), mono, None)] = Fraction(rng.randint(-5, 5), rng.randint(1, 3))
    return SingularSeries(terms, names, ceiling)


def expansion_suite(seed: int = 0, cases: int = 200, ceiling: int = 6) -> SuiteResult:
    from .series import delta_residue

    run = _Run("expansion")
    pole = SingularSeries.pole("x", "y", 1, ceiling=ceiling)
    linear = SingularSeries({((), (("x", 1),), None): 1, ((), (("y", 1),), None): -1}, ("x", "y"), ceiling)
    one = SingularSeries.constant(1, variables=("x", "y"), ceiling=ceiling)
    for order in (("x", "y"), ("y", "x")):
        e = expand(pole, order)
        prod = e * expand(linear, order)
        run.check(_window_equal(prod, one),
                  lambda: f"expansion {order} times (x-y) is {prod}")
    residue = delta_residue("x", "y", ceiling)
    run.check(not residue, lambda: f"(x-y) * delta leaves {residue}")
    rng = random.Random(seed)
    names = ("x1", "x2", "x3")
    for _ in range(cases):
        u, v = rng.sample(names, 2)
        u, v = sorted((u, v))
        k = rng.randint(1, 2)
        singular = SingularSeries.pole(u, v, k, c=rng.randint(1, 4), variables=names, ceiling=ceiling)
        factor = _random_pole_free(rng, names, 3, ceiling)
        order = tuple(rng.sample(names, 3))
        lhs = expand(singular * factor, order)
        rhs = expand(singular, order) * expand(factor, order)
        run.check(_window_equal(lhs, rhs), lambda: f"expand({singular} * {factor}) along {order}")
    return run.result()


def _window_equal(a: SingularSeries, b: SingularSeries) -> bool:
    from .series import same_on_window

    return same_on_window(a, b)


# ------------------------------------------------------------ multimaps


def polynomial_module(degree: int = 4) -> HModule:
    return HModule.polynomial(degree=degree)


def holomorphic_map(shape: LabelledTree, coeffs: dict[int, Fraction], alg: CommDiffAlgebra,
                    ceiling: int = 6) -> MultiMap:
    """``sum_k c_k D(k)`` applied to the product of leaf translates.

    A leaf sits at the sum of the edge variables on its path, so the map is
    invariant at every vertex and free of poles.
    """
    tree = shape.tree
    names = shape.variable_names
    mod = alg.module
    if tree.is_leaf:
        return MultiMap(shape, lambda b: SingularSeries(
            {((), (), k): c for k, c in _combine(mod, coeffs, b[0]).items()}, (), ceiling), ceiling)
    positions = {}
    for j, path in enumerate(tree.leaf_paths()):
        positions[shape.variables[path]] = {shape.variables[path[:d]]: 1 for d in range(1, len(path) + 1)}

    def rule(inputs):
        # terms: (monomial over leaf variables, basis) -> coefficient
        acc = {((), k): v for k, v in alg.unit.items()}
        for leaf, b in zip(positions, inputs):
            nxt: dict = {}
            for i in range(ceiling + 2):
                for k2, c2 in mod.act(i, b).items():
                    for (mono, k1), c1 in acc.items():
                        if sum(e for _, e in mono) + i > ceiling + 1:
                            continue
                        m2 = mono + ((leaf, i),) if i else mono
                        for k, c in alg.mul(k1, k2).items():
                            nxt[(m2, k)] = nxt.get((m2, k), 0) + c1 * c2 * c
            acc = nxt
        terms = {((), mono, k): c for (mono, k), c in acc.items() if c}
        total = SingularSeries(terms, names, ceiling).map_basis(lambda k: _combine(mod, coeffs, k))
        return substitute_linear(total, positions, variables=names)

    return MultiMap(shape, rule, ceiling)


def _combine(mod: HModule, coeffs: dict[int, Fraction], k: int) -> dict:
    out: dict = {}
    for i, c in coeffs.items():
        for idx, v in mod.act(i, k).items():
            out[idx] = out.get(idx, 0) + c * v
    return {k: as_number(v) for k, v in out.items() if v}


def random_holomorphic(rng: random.Random, tree: Tree, alg: CommDiffAlgebra, ceiling: int = 6) -> MultiMap:
    coeffs = {0: rng.choice((1, 2, -1, 3))}
    for i in range(1, 3):
        if rng.random() < 0.6:
            coeffs[i] = rng.randint(-3, 3)
    shape = labelled(tree, alg.module, alg.module)
    return holomorphic_map(shape, coeffs, alg, ceiling)


def _diff(a: MultiMap, b: MultiMap) -> str | None:
    w = multimap_difference(a, b, generators=True)
    return None if w is None else str(w)


def multicategory_suite(seed: int = 0, triples: int = 100, nullary: int = 100, max_leaves: int = 4) -> SuiteResult:
    run = _Run("multicategory")
    rng = random.Random(seed)
    alg = CommDiffAlgebra.polynomial()
    B = alg.module

    # identities are two-sided units
    for tree in [corolla(2), Tree((corolla(2), LEAF)), corolla(3)]:
        m = random_holomorphic(rng, tree, alg)
        w = _diff(compose(identity(B), 1, m, check=False), m)
        run.check(w is None, lambda: f"1 o {tree}: {w}")
        for i in range(1, tree.leaf_count + 1):
            w = _diff(compose(m, i, identity(B), check=False), m)
            run.check(w is None, lambda: f"{tree} o_{i} 1: {w}")

    # associativity on random composable triples over binary trees
    for n in range(triples):
        h, g, f = (random_holomorphic(rng, random_tree(rng, rng.randint(1, 2) if k else 2, binary=True), alg)
                   for k in range(3))
        if h.tree.is_leaf:
            h = random_holomorphic(rng, corolla(2), alg)
        mode = "sequential" if n % 2 == 0 else "parallel"
        i = rng.randint(1, h.tree.leaf_count)
        if mode == "sequential":
            j = rng.randint(1, g.tree.leaf_count)
        else:
            choices = [k for k in range(1, h.tree.leaf_count + 1) if k != i]
            if not choices:
                mode, j = "sequential", rng.randint(1, g.tree.leaf_count)
            else:
                i, j = sorted((i, rng.choice(choices)))
        ok = associativity_check(h, g, f, (i, j), mode, generators=True)
        run.check(ok, lambda: f"{mode} associativity fails for {h.tree}, {g.tree}, {f.tree} at {(i, j)}")

    # refinement functoriality and naturality over all tree pairs
    trees = [t for n in range(2, max_leaves + 1) for t in reduced_trees(n)]
    for coarse in trees:
        m = random_holomorphic(rng, coarse, alg)
        for fine in trees:
            if fine.leaf_count != coarse.leaf_count or fine == coarse or morphism(fine, coarse) is None:
                continue
            direct = refine(m, fine, check=False)
            for mid in trees:
                if mid in (fine, coarse) or mid.leaf_count != fine.leaf_count:
                    continue
                if morphism(fine, mid) is None or morphism(mid, coarse) is None:
                    continue
                w = _diff(refine(refine(m, mid, check=False), fine, check=False), direct)
                run.check(w is None, lambda: f"refine {coarse} -> {mid} -> {fine} differs from direct: {w}")
    for q in trees:
        for p in trees:
            if q.leaf_count + p.leaf_count - 1 > max_leaves:
                continue
            g, f = random_holomorphic(rng, q, alg), random_holomorphic(rng, p, alg)
            for i in range(1, q.leaf_count + 1):
                whole = compose(g, i, f, check=False)
                for q2 in [t for t in trees if t.leaf_count == q.leaf_count and morphism(t, q) is not None]:
                    for p2 in [t for t in trees if t.leaf_count == p.leaf_count and morphism(t, p) is not None]:
                        if (q2, p2) == (q, p):
                            continue
                        target = graft(q2, i, p2)
                        lhs = refine(whole, target, check=False)
                        rhs = compose(refine(g, q2, check=False), i, refine(f, p2, check=False), check=False)
                        w = _diff(lhs, rhs)
                        run.check(w is None, lambda: f"naturality at {q} o_{i} {p} -> {target}: {w}")

    # null composition factors through the removed leaf, for H-invariant vacua
    invariant = [k for k in B.window if not any(B.act(i, k) for i in range(1, 7))]
    for _ in range(nullary):
        tree = random_tree(rng, rng.randint(2, 3), binary=True)
        f = random_holomorphic(rng, tree, alg)
        vec = {rng.choice(invariant): rng.choice((-2, -1, 1, 3))}
        i = rng.randint(1, tree.leaf_count)
        comp = compose(f, i, unit_map(B, vec), check=False)
        try:
            bad = next((b for b in comp.shape.input_tuples() if not comp(b).is_pole_free()), None)
        except MembershipError as err:
            run.check(False, f"null composition into {tree} at leaf {i}: {err}")
            continue
        run.check(bad is None and len(comp.shape.leaves) == tree.leaf_count - 1,
                  lambda: f"null composite {tree} o_{i} at inputs {bad}: {comp(bad)}")
    return run.result()


# ------------------------------------------------------------------ algebra


def algebra_suite(max_leaves: int = 4, degree: int = 4) -> SuiteResult:
    run = _Run("algebra")
    alg = make_holomorphic_algebra(CommDiffAlgebra.polynomial(degree))
    u = 1
    value = alg.f2((u, u))
    expected = SingularSeries({((), (("x1", 1), ("x2", 1)), 0): 1, ((), (("x1", 1),), 1): 1,
                               ((), (("x2", 1),), 1): 1, ((), (), 2): 1}, ("x1", "x2"), alg.ceiling)
    run.check(_window_equal(value, expected), lambda: f"f2(u, u) = {value}")
    report = check_algebra(alg, max_leaves)
    for r in report.results:
        run.check(r.passed, lambda r=r: r.line())
    bad = check_algebra(drop_mixed_terms(alg), 3)
    failing = [r for r in bad.failures() if r.axiom == "composition" and r.witness]
    run.check(bool(failing), "corrupted f2 passes the composition axiom")
    result = run.result()
    result.notes.append(f"commutative: {'yes' if report.commutative else 'no'}")
    if failing:
        result.notes.append("negative control: " + failing[0].line()[:160])
    return result


# --------------------------------------------------------------------- ord


def ord_suite() -> SuiteResult:
    from .trees import parse_tree

    run = _Run("ord")
    double = parse_tree("((**)(**))")
    shapes = ord_shapes(double)
    run.check(len(shapes) == 2, lambda: f"{len(shapes)} Ord shapes for the double tree")
    R = HModule.trivial()
    shape = labelled(double, R, R, leaf_invariant=(False,) * 4)
    names = shape.variable_names
    pole = SingularSeries.pole("x1", "x2", 1, variables=names)
    first = expand(pole, ("x1", "x2", "x3", "x4", "z1", "z2"))
    second = expand(pole, ("x2", "x1", "x3", "x4", "z1", "z2"))
    try:
        make_multimap(shape, {(0, 0, 0, 0): {"t1": first, "t2": first}})
        run.check(True, "")
    except MembershipError as err:
        run.check(False, f"agreeing candidate rejected: {err}")
    try:
        make_multimap(shape, {(0, 0, 0, 0): {"t1": first, "t2": second}})
        run.check(False, "disagreeing candidate accepted")
    except MembershipError as err:
        run.check(err.witness.kind == "agreement", f"wrong rejection: {err}")
    return run.result()


SUITES = {
    "trees": tree_suite,
    "hopf": hopf_suite,
    "expansion": expansion_suite,
    "multicategory": multicategory_suite,
    "algebra": algebra_suite,
    "ord": ord_suite,
}


def run_suites(names: list[str], seed: int = 0) -> list[SuiteResult]:
    out = []
    for name in names:
        fn = SUITES[name]
        out.append(fn(seed=seed) if "seed" in fn.__code__.co_varnames else fn())
    return out
