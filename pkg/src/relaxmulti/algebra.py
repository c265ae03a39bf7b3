"""Algebras in the relaxed multicategory.

An algebra is given by a unit ``f_o`` over the empty tree and a binary
generator ``f_2``; every other ``f_p`` is generated by grafting, with
corollas of arity three and up obtained from the left comb and then
checked against every binary generation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from .multimap import (
    INVARIANCE_DEGREE,
    MODULE_DEGREE,
    HModule,
    LabelledTree,
    MultiMap,
    Witness,
    coarsen,
    compose,
    identity,
    invariance_witness,
    make_multimap,
    multimap_difference,
    refine,
    sibling_permutations,
    symmetry_action,
    unit_map,
)
from .series import SERIES_CEILING, SingularSeries, as_number, substitute_linear
from .trees import (
    EMPTY,
    LEAF,
    Tree,
    corolla,
    enumerate_refining_trees,
    graft,
    morphism,
    normalize,
    permute_children,
    prune_leaf,
    reduced_trees,
)

Vector = Mapping[int, Fraction]


class GenerationMismatch(ValueError):
    def __init__(self, witness: Witness):
        super().__init__(str(witness))
        self.witness = witness


def _add_into(acc: dict, vec: Vector, c=1) -> None:
    for k, v in vec.items():
        t = acc.get(k, 0) + c * v
        if t:
            acc[k] = t
        else:
            acc.pop(k, None)


@dataclass(frozen=True, eq=False)
class CommDiffAlgebra:
    """A commutative algebra with a divided-power (Hasse-Schmidt) action."""

    module: HModule
    mul: Callable[[int, int], Vector] = field(repr=False)
    unit: Vector
    doc: Mapping | None = field(default=None, repr=False)

    def product(self, a: Vector, b: Vector) -> dict:
        out: dict = {}
        for i, x in a.items():
            for j, y in b.items():
                _add_into(out, self.mul(i, j), x * y)
        return out

    def validate(self, max_degree: int = INVARIANCE_DEGREE) -> str | None:
        """Commutativity, associativity, unit and the Leibniz rule on the input window."""
        mod = self.module
        win = list(mod.window)
        e = lambda i: {i: 1}  # noqa: E731
        for i in win:
            if self.product(self.unit, e(i)) != e(i):
                return f"unit fails on {mod.label(i)}"
            for j in win:
                if self.product(e(i), e(j)) != self.product(e(j), e(i)):
                    return f"not commutative on {mod.label(i)}, {mod.label(j)}"
                for k in win:
                    if self.product(self.product(e(i), e(j)), e(k)) != self.product(e(i), self.product(e(j), e(k))):
                        return f"not associative on {mod.label(i)}, {mod.label(j)}, {mod.label(k)}"
                ab = self.product(e(i), e(j))
                for d in range(max_degree + 1):
                    lhs = mod.act_vector(d, ab)
                    rhs: dict = {}
                    for p in range(d + 1):
                        _add_into(rhs, self.product(mod.act(p, i), mod.act(d - p, j)))
                    if lhs != rhs:
                        return f"Leibniz fails for D{d} on {mod.label(i)}*{mod.label(j)}"
        for d in range(1, max_degree + 1):
            if mod.act_vector(d, self.unit):
                return f"unit is not annihilated by D{d}"
        return None

    @classmethod
    def polynomial(cls, degree: int = MODULE_DEGREE, var: str = "u", name: str = "B") -> CommDiffAlgebra:
        """``Q[var]`` with Hasse derivatives; products are exact beyond the input window."""
        mod = HModule.polynomial(name, var, degree)
        return cls(mod, lambda i, j: {i + j: 1}, {0: 1},
                   {"example": "q-u", "degree": degree, "var": var, "name": name})

    @classmethod
    def rationals(cls, name: str = "Q") -> CommDiffAlgebra:
        return cls(HModule.trivial(name), lambda i, j: {0: 1}, {0: 1}, {"example": "rationals", "name": name})

    @classmethod
    def from_table(cls, module: HModule, products: Mapping[tuple[int, int], Vector], unit: Vector) -> CommDiffAlgebra:
        table = {(int(i), int(j)): {int(k): as_number(v) for k, v in vec.items()} for (i, j), vec in products.items()}

        def mul(i: int, j: int) -> dict:
            return dict(table.get((i, j), table.get((j, i), {})))

        return cls(module, mul, {int(k): as_number(v) for k, v in unit.items()})


# ----------------------------------------------------------------- structure


@dataclass(eq=False)
class AlgebraStructure:
    """Generators plus a memo of the derived family ``f_p``.

    The memo is filled idempotently: each entry is a pure function of the
    generators, so concurrent fills agree.
    """

    module: HModule
    unit: MultiMap
    f2: MultiMap
    ceiling: int = SERIES_CEILING
    algebra: CommDiffAlgebra | None = None
    _family: dict = field(default_factory=dict, repr=False)
    _generated: dict = field(default_factory=dict, repr=False)

    def f(self, p: Tree, verify: bool = False) -> MultiMap:
        return f_for_tree(self, p, verify)


def translate(alg: CommDiffAlgebra, b: int, var: str, ceiling: int = SERIES_CEILING) -> SingularSeries:
    """``sum_i var^i D(i) e_b``."""
    terms = {}
    for i in range(ceiling + 2):
        for k, c in alg.module.act(i, b).items():
            key = ((), ((var, i),) if i else (), k)
            terms[key] = terms.get(key, 0) + c
    return SingularSeries(terms, (var,), ceiling)


def make_holomorphic_algebra(alg: CommDiffAlgebra, ceiling: int = SERIES_CEILING,
                             check: bool = True) -> AlgebraStructure:
    """``f2(a, b)(x1, x2) = sum_{i,j} (D(i) a)(D(j) b) x1^i x2^j``."""
    if check:
        bad = alg.validate()
        if bad:
            raise ValueError(f"not a commutative differential algebra: {bad}")
    B = alg.module

    def rule(inputs):
        a, b = inputs
        terms: dict = {}
        for i in range(ceiling + 2):
            da = B.act(i, a)
            if not da:
                continue
            for j in range(ceiling + 2 - i):
                db = B.act(j, b)
                if not db:
                    continue
                mono = tuple(m for m in (("x1", i), ("x2", j)) if m[1])
                for k, c in alg.product(da, db).items():
                    key = ((), mono, k)
                    terms[key] = terms.get(key, 0) + c
        return SingularSeries(terms, ("x1", "x2"), ceiling)

    f2 = MultiMap(LabelledTree(corolla(2), (B, B), B), rule, ceiling)
    return AlgebraStructure(B, unit_map(B, alg.unit, ceiling), f2, ceiling, alg)


def algebra_from_f2(module: HModule, unit: Vector, f2_table: Mapping, ceiling: int = SERIES_CEILING,
                    check: bool = True) -> AlgebraStructure:
    """A user-supplied (possibly singular) binary generator, validated as a multimap."""
    shape = LabelledTree(corolla(2), (module, module), module)
    f2 = make_multimap(shape, f2_table, check=check, ceiling=ceiling)
    return AlgebraStructure(module, unit_map(module, unit, ceiling), f2, ceiling)


def with_f2(alg: AlgebraStructure, f2: MultiMap) -> AlgebraStructure:
    return AlgebraStructure(alg.module, alg.unit, f2, alg.ceiling, alg.algebra)


def drop_mixed_terms(alg: AlgebraStructure) -> AlgebraStructure:
    """Negative control: remove every term of ``f2`` involving both variables."""
    src = alg.f2

    def rule(b):
        s = src(b)
        kept = {k: c for k, c in s.terms.items() if len(k[1]) < 2}
        return SingularSeries(kept, s.variables, s.ceiling, s.floor, s.weights, s.reliable)

    return with_f2(alg, MultiMap(src.shape, rule, src.ceiling, src.floor))


# ------------------------------------------------------------------ family


def left_comb(n: int) -> Tree:
    t = LEAF
    for _ in range(n - 1):
        t = Tree((t, LEAF))
    return t


def _generate(alg: AlgebraStructure, p: Tree) -> MultiMap:
    """``f_p`` for binary ``p`` by grafting copies of ``f2``."""
    hit = alg._generated.get(p)
    if hit is not None:
        return hit
    if p.is_leaf:
        out = identity(alg.module, alg.ceiling)
    else:
        out = alg.f2
        for j in reversed(range(2)):
            if not p.children[j].is_leaf:
                out = compose(out, j + 1, _generate(alg, p.children[j]), check=False)
    alg._generated[p] = out
    return out


def _corolla_generation_witness(alg: AlgebraStructure, n: int) -> tuple[Tree, Witness] | None:
    fc = f_for_tree(alg, corolla(n))
    for b in enumerate_refining_trees(corolla(n), binary_only=True):
        if b == corolla(n):
            continue
        w = multimap_difference(refine(fc, b, check=False), _generate(alg, b))
        if w:
            return b, w
    return None


def f_for_tree(alg: AlgebraStructure, p: Tree, verify: bool = False) -> MultiMap:
    """The family member over ``p``.

    With ``verify`` a corolla is compared against all its binary
    generations and :class:`GenerationMismatch` is raised on disagreement.
    """
    hit = alg._family.get(p)
    if hit is None:
        hit = _build(alg, p)
        alg._family[p] = hit
    if verify and p.children and p.is_flat and len(p.children) >= 3:
        bad = _corolla_generation_witness(alg, len(p.children))
        if bad:
            b, w = bad
            raise GenerationMismatch(Witness("generation", w.inputs, f"binary generation {b}: {w.detail}"))
    return hit


def _build(alg: AlgebraStructure, p: Tree) -> MultiMap:
    if p.is_leaf:
        return identity(alg.module, alg.ceiling)
    if p.leaf_count == 0:
        if p != EMPTY:
            raise ValueError(f"no family member over {p}: empty subtrees are only allowed at the root")
        return alg.unit
    if p.has_empty_node():
        raise ValueError(f"no family member over {p}: empty subtrees are only allowed at the root")
    if p.has_unary():
        base, _ = normalize(p)
        return refine(f_for_tree(alg, base), p, check=False)
    k = len(p.children)
    if all(c.is_leaf for c in p.children):
        if k == 2:
            return alg.f2
        return coarsen(_generate(alg, left_comb(k)), p)
    out = f_for_tree(alg, corolla(k))
    for j in reversed(range(k)):
        child = p.children[j]
        if not child.is_leaf:
            out = compose(out, j + 1, f_for_tree(alg, child), check=False)
    return out


# ------------------------------------------------------------------ checks


@dataclass(frozen=True)
class AxiomResult:
    axiom: str
    tree: str
    passed: bool
    checked: int
    witness: str | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f"  witness: {self.witness}" if self.witness else ""
        return f"{status} {self.axiom:<14} {self.tree:<14} ({self.checked} checks){tail}"


@dataclass(frozen=True)
class AlgebraReport:
    max_leaves: int
    results: tuple[AxiomResult, ...]

    def axiom_passed(self, axiom: str) -> bool:
        return all(r.passed for r in self.results if r.axiom == axiom)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results if r.axiom != "commutativity")

    @property
    def commutative(self) -> bool:
        return self.axiom_passed("commutativity")

    def failures(self) -> list[AxiomResult]:
        return [r for r in self.results if not r.passed]

    def lines(self) -> list[str]:
        out = [r.line() for r in self.results]
        for ax in ("composition", "unit", "refinement", "commutativity", "invariance"):
            if any(r.axiom == ax for r in self.results):
                out.append(f"{ax}: {'yes' if self.axiom_passed(ax) else 'no'}"
                           if ax == "commutativity" else
                           f"{ax}: {'PASS' if self.axiom_passed(ax) else 'FAIL'}")
        return out


class _Collector:
    def __init__(self):
        self.entries: dict[tuple[str, str], list] = {}

    def record(self, axiom: str, tree: Tree, what: str, fn: Callable[[], Witness | None]) -> None:
        slot = self.entries.setdefault((axiom, str(tree)), [0, None])
        slot[0] += 1
        if slot[1] is not None:
            return
        try:
            w = fn()
        except (ValueError, ArithmeticError, KeyError) as exc:
            slot[1] = f"{what}: {type(exc).__name__}: {exc}"
            return
        if w is not None:
            slot[1] = f"{what}: {w}"

    def results(self) -> tuple[AxiomResult, ...]:
        return tuple(AxiomResult(ax, t, w is None, n, w) for (ax, t), (n, w) in self.entries.items())


def check_algebra(alg: AlgebraStructure, max_leaves: int = 4, degree: int = INVARIANCE_DEGREE) -> AlgebraReport:
    """Verify composition, unit, refinement and commutativity on trees with few leaves."""
    trees = [t for n in range(2, max_leaves + 1) for t in reduced_trees(n)]
    col = _Collector()
    f = lambda t: f_for_tree(alg, t)  # noqa: E731
    # family members inherit leaf invariance from f2, which is checked on every tuple
    diff = lambda a, b: multimap_difference(a, b, generators=True)  # noqa: E731

    col.record("invariance", corolla(2), "f2", lambda: invariance_witness(alg.f2, degree))

    # composition: every grafting of two generated trees, and each corolla against its binary generations
    for q in trees:
        for p in trees:
            if q.leaf_count + p.leaf_count - 1 > max_leaves:
                continue
            for i in range(1, q.leaf_count + 1):
                r = graft(q, i, p)
                col.record("composition", r, f"f{q} o_{i} f{p}",
                           lambda q=q, i=i, p=p, r=r: diff(compose(f(q), i, f(p), check=False), f(r)))
    for n in range(3, max_leaves + 1):
        for b in enumerate_refining_trees(corolla(n), binary_only=True):
            col.record("composition", corolla(n), f"generation {b}",
                       lambda b=b, n=n: diff(refine(f(corolla(n)), b, check=False), _generate(alg, b)))

    # unit: f_p o_k f_unit == f_{p minus leaf k}
    for p in [LEAF] + trees:
        for k in range(1, p.leaf_count + 1):
            col.record("unit", p, f"leaf {k}",
                       lambda p=p, k=k: diff(compose(f(p), k, alg.unit, check=False), f(prune_leaf(p, k))))

    # refinement along every morphism between distinct generated trees
    for fine in trees:
        for coarse in trees:
            if fine == coarse or fine.leaf_count != coarse.leaf_count or morphism(fine, coarse) is None:
                continue
            col.record("refinement", fine, f"from {coarse}",
                       lambda fine=fine, coarse=coarse: diff(refine(f(coarse), fine, check=False), f(fine)))

    # commutativity: sibling permutations act compatibly with the family
    for p in trees:
        for path, perm in sibling_permutations(p):
            col.record("commutativity", p, f"permute {list(perm)} at {path or 'root'}",
                       lambda p=p, path=path, perm=perm: diff(
                           symmetry_action(f(p), path, perm), f(permute_children(p, path, perm))))
    return AlgebraReport(max_leaves, col.results())


# --------------------------------------------------------------------- OPE


def ope_extract(alg: AlgebraStructure, a: int, b: int) -> list[tuple[int, SingularSeries]]:
    """Split ``f2(a, b)`` by pole order in ``w = x1 - x2``.

    Variables are re-centred at ``x2``: ``x1 = x2 + w``.  Positive orders
    carry ``w``-free coefficients; order 0 holds the regular part as a
    series in ``w`` and ``x2``.  Returned in decreasing order.
    """
    s = alg.f2((a, b))
    buckets: dict[int, dict] = {}
    regular = SingularSeries({}, ("w", "x2"), s.ceiling, s.floor)
    for (poles, mono, basis), c in s.terms.items():
        k = dict(poles).get(("x1", "x2"), 0)
        if len(poles) > (1 if k else 0):
            raise ValueError("binary generator has poles outside x1 - x2")
        part = SingularSeries({((), mono, basis): c}, ("x1", "x2"), s.ceiling, s.floor)
        part = substitute_linear(part, {"x1": {"x2": 1, "w": 1}}, variables=("w", "x2"))
        for (_, m2, b2), c2 in part.terms.items():
            e = dict(m2)
            order = k - e.pop("w", 0)
            if order > 0:
                key = ((), tuple(sorted(e.items())), b2)
                bucket = buckets.setdefault(order, {})
                bucket[key] = bucket.get(key, 0) + c2
            else:
                if -order:
                    e["w"] = -order
                regular = regular + SingularSeries({((), tuple(e.items()), b2): c2}, ("w", "x2"), s.ceiling, s.floor)
    out = [(k, SingularSeries(t, ("x2",), s.ceiling, s.floor)) for k, t in buckets.items()]
    out = [(k, v) for k, v in out if v]
    if regular:
        out.append((0, SingularSeries(regular.terms, regular.variables, s.ceiling, s.floor, reliable=s.reliable)))
    return sorted(out, key=lambda kv: -kv[0])


__all__ = [
    "CommDiffAlgebra", "AlgebraStructure", "AxiomResult", "AlgebraReport", "GenerationMismatch",
    "make_holomorphic_algebra", "algebra_from_f2", "with_f2", "drop_mixed_terms", "left_comb",
    "f_for_tree", "check_algebra", "ope_extract", "translate",
]
