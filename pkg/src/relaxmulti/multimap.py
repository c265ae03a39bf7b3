"""Tree-indexed multimaps with poles, composition and refinement.

Each non-root vertex of a tree carries a variable: ``x{k}`` for the k-th
leaf and ``z{path}`` for an internal vertex (path components 1-based and
joined by ``_``).  A variable is the position of its vertex *relative to
the parent*, so grafting is a renaming and the derivation-sum relation
at an internal vertex ``c`` reads: shifting all children of ``c`` equals
shifting ``z_c``.  Poles may only join siblings.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from .hopf import DEFAULT_FLOOR
from .series import (
    SERIES_CEILING,
    SingularSeries,
    as_number,
    disagreement,
    equivalent,
    rename,
    sort_vars,
    substitute_linear,
    sum_rule_witness,
    taylor_shift,
)
from .trees import (
    BOTTOM,
    LEAF,
    Path,
    Tree,
    apply_move,
    augment,
    graft,
    internal_poset,
    linear_extensions,
    morphism,
    permute_children,
    prune_leaf,
)

INVARIANCE_DEGREE = 6
MODULE_DEGREE = 4


# ------------------------------------------------------------------ errors


@dataclass(frozen=True)
class Witness:
    kind: str
    inputs: tuple
    detail: str

    def __str__(self) -> str:
        args = ", ".join(map(str, self.inputs))
        return f"{self.kind} at inputs ({args}): {self.detail}"


class MembershipError(ValueError):
    def __init__(self, witness: Witness):
        super().__init__(str(witness))
        self.witness = witness


class LabelMismatch(ValueError):
    pass


class InvarianceRequired(ValueError):
    pass


class OutsideWindow(KeyError):
    pass


# ----------------------------------------------------------------- modules


def _vec_add(acc: dict, vec: Mapping, c) -> None:
    for k, v in vec.items():
        t = acc.get(k, 0) + c * v
        if t:
            acc[k] = t
        else:
            acc.pop(k, None)


@dataclass(frozen=True, eq=False)
class HModule:
    """A module over divided powers with an index basis.

    ``act(i, idx)`` returns ``D(i) e_idx`` as ``{index: coeff}``.  For a
    locally finite module (``rank is None``) the labels only describe the
    input window; products may land on indices beyond it.
    """

    name: str
    labels: tuple[str, ...]
    action: Callable[[int, int], Mapping[int, Fraction]] = field(repr=False)
    rank: int | None = None
    label_of: Callable[[int], str] | None = field(default=None, repr=False)
    doc: Mapping | None = field(default=None, repr=False, compare=False)

    def act(self, i: int, idx: int) -> dict[int, Fraction]:
        if i == 0:
            return {idx: 1}
        return {k: as_number(v) for k, v in self.action(i, idx).items() if v}

    def act_vector(self, i: int, vec: Mapping[int, Fraction]) -> dict[int, Fraction]:
        out: dict[int, Fraction] = {}
        for idx, c in vec.items():
            _vec_add(out, self.act(i, idx), c)
        return out

    def label(self, idx: int) -> str:
        if 0 <= idx < len(self.labels):
            return self.labels[idx]
        if self.label_of is not None:
            return self.label_of(idx)
        raise OutsideWindow(idx)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"{label!r} is not a basis label of {self.name}") from None

    @property
    def window(self) -> range:
        return range(len(self.labels))

    @cached_property
    def generators(self) -> tuple[int, ...]:
        """Basis indices spanning a complement of ``sum_{i>0} D(i) M`` inside the window.

        Falls back to the whole window when some image leaves it.
        """
        window = set(self.window)
        rows: list[dict] = []  # echelon rows keyed by pivot
        pivots: dict[int, dict] = {}

        def reduce(vec: dict) -> dict:
            vec = {k: Fraction(v) for k, v in vec.items() if v}
            for p in sorted(vec, reverse=True):
                if p in pivots and vec.get(p):
                    c = vec[p]
                    for k, v in pivots[p].items():
                        vec[k] = vec.get(k, 0) - c * v
                    vec = {k: v for k, v in vec.items() if v}
            return vec

        def insert(vec: dict) -> bool:
            vec = reduce(vec)
            if not vec:
                return False
            p = max(vec)
            c = vec[p]
            pivots[p] = {k: v / c for k, v in vec.items()}
            rows.append(pivots[p])
            return True

        for idx in self.window:
            for i in range(1, len(self.labels) + INVARIANCE_DEGREE + 1):
                img = self.act(i, idx)
                if not set(img) <= window:
                    return tuple(self.window)
                insert(img)
        return tuple(idx for idx in self.window if insert({idx: 1}))

    def same_as(self, other: HModule) -> bool:
        return self.name == other.name and self.labels == other.labels

    def validate(self, max_degree: int = INVARIANCE_DEGREE) -> str | None:
        """Check ``D(i)D(j) = C(i+j, i) D(i+j)`` on the window; return a witness or ``None``."""
        for idx in self.window:
            for i in range(max_degree + 1):
                for j in range(max_degree + 1 - i):
                    lhs = self.act_vector(i, self.act(j, idx))
                    rhs = {k: comb(i + j, i) * v for k, v in self.act(i + j, idx).items()}
                    if lhs != rhs:
                        return f"D{i}*D{j} != C({i + j},{i})*D{i + j} on {self.label(idx)}"
        return None

    @classmethod
    def from_matrices(cls, name: str, labels: Sequence[str], matrices: Mapping[int, Sequence[Sequence]]) -> HModule:
        """``matrices[i][r][c]`` is the coefficient of ``e_r`` in ``D(i) e_c``; missing degrees act by 0."""
        n = len(labels)
        mats = {int(i): [[Fraction(x) for x in row] for row in m] for i, m in matrices.items()}
        for i, m in mats.items():
            if len(m) != n or any(len(row) != n for row in m):
                raise ValueError(f"action matrix for D{i} must be {n}x{n}")

        def action(i: int, idx: int) -> dict:
            m = mats.get(i)
            if m is None:
                return {}
            return {r: m[r][idx] for r in range(n) if m[r][idx]}

        doc = {"name": name, "basis": list(labels),
                "action": {str(i): [[str(x) for x in row] for row in m] for i, m in mats.items()}}
        mod = cls(name, tuple(labels), action, n, doc=doc)
        if 0 in mats and any(mats[0][r][c] != (r == c) for r in range(n) for c in range(n)):
            raise ValueError("D0 must act as the identity")
        bad = mod.validate(max(mats, default=0) * 2)
        if bad:
            raise ValueError(f"action matrices break the divided-power law: {bad}")
        return mod

    @classmethod
    def trivial(cls, name: str = "R") -> HModule:
        return cls(name, ("1",), lambda i, idx: {}, 1, doc={"name": name, "trivial": True})

    @classmethod
    def polynomial(cls, name: str = "B", var: str = "u", degree: int = MODULE_DEGREE) -> HModule:
        """``Q[var]`` with Hasse derivatives; inputs restricted to degree <= ``degree``."""

        def label(m: int) -> str:
            return "1" if m == 0 else var if m == 1 else f"{var}^{m}"

        def action(i: int, m: int) -> dict:
            return {m - i: Fraction(comb(m, i))} if i <= m else {}

        doc = {"name": name, "polynomial": {"var": var, "degree": degree}}
        return cls(name, tuple(label(m) for m in range(degree + 1)), action, None, label, doc)


# ------------------------------------------------------------------- trees


def tree_variables(t: Tree) -> dict[Path, str]:
    """Variable of every non-root vertex that has a leaf above it."""
    leaf_no = {p: k + 1 for k, p in enumerate(t.leaf_paths())}
    out: dict[Path, str] = {}
    for path, sub in t.vertices():
        if not path or sub.leaf_count == 0:
            continue
        out[path] = f"x{leaf_no[path]}" if sub.is_leaf else "z" + "_".join(str(i + 1) for i in path)
    return out


@dataclass(frozen=True, eq=False)
class LabelledTree:
    tree: Tree
    leaves: tuple[HModule, ...]
    root: HModule
    leaf_invariant: tuple[bool, ...] | None = None

    def __post_init__(self):
        if len(self.leaves) != self.tree.leaf_count:
            raise ValueError(f"{self.tree} has {self.tree.leaf_count} leaves, got {len(self.leaves)} labels")
        flags = self.leaf_invariant
        if flags is None:
            flags = (True,) * len(self.leaves)
        if len(flags) != len(self.leaves):
            raise ValueError("one invariance flag per leaf")
        object.__setattr__(self, "leaves", tuple(self.leaves))
        object.__setattr__(self, "leaf_invariant", tuple(flags))

    @cached_property
    def variables(self) -> dict[Path, str]:
        return tree_variables(self.tree)

    @property
    def variable_names(self) -> tuple[str, ...]:
        return sort_vars(self.variables.values())

    def children_vars(self, path: Path) -> list[str]:
        node = self.tree.subtree(path)
        return [self.variables[path + (k,)] for k in range(len(node.children or ())) if path + (k,) in self.variables]

    @cached_property
    def profile(self) -> dict[tuple[str, str], tuple[int, ...]]:
        """Allowed pole pairs (siblings) mapped to the leaves the pole depends on."""
        leaf_no = {p: k + 1 for k, p in enumerate(self.tree.leaf_paths())}
        out = {}
        for path in self.tree.internal_paths():
            kids = [path + (k,) for k in range(len(self.tree.subtree(path).children)) if path + (k,) in self.variables]
            for a, b in itertools.combinations(kids, 2):
                pair = tuple(sort_vars((self.variables[a], self.variables[b])))
                deps = tuple(sorted(n for lp, n in leaf_no.items() if lp[: len(a)] == a or lp[: len(b)] == b))
                out[pair] = deps
        return out

    def input_tuples(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(m.window for m in self.leaves)))

    def generating_tuples(self) -> list[tuple[int, ...]] | None:
        """Tuples of module generators, or ``None`` unless every leaf is flagged invariant."""
        if not all(self.leaf_invariant):
            return None
        return list(itertools.product(*(m.generators for m in self.leaves)))

    def labels_of(self, inputs: Sequence[int]) -> tuple[str, ...]:
        return tuple(m.label(i) for m, i in zip(self.leaves, inputs))

    def same_shape(self, other: LabelledTree) -> bool:
        return (self.tree == other.tree and self.root.same_as(other.root)
                and all(a.same_as(b) for a, b in zip(self.leaves, other.leaves)))


def labelled(tree: Tree | str, leaves: HModule | Sequence[HModule], root: HModule, **kw) -> LabelledTree:
    from .trees import parse_tree

    t = parse_tree(tree) if isinstance(tree, str) else tree
    if isinstance(leaves, HModule):
        leaves = (leaves,) * t.leaf_count
    return LabelledTree(t, tuple(leaves), root, **kw)


# --------------------------------------------------------------- Ord shapes


@dataclass(frozen=True)
class OrdShape:
    tree: Tree
    ordering: tuple
    nesting: tuple[tuple[object, str], ...]

    @property
    def expansion_order(self) -> tuple[str, ...]:
        return _shape_order(self.tree, self.ordering)

    def describe(self) -> str:
        head = f"Hom({self.nesting[0][1]}, C)"
        sings = [f"Sing[{_vname(v)}]({x})" for v, x in self.nesting[1:]]
        return " ".join(reversed(sings)) + (" " if sings else "") + head


def _vname(v) -> str:
    if v == BOTTOM:
        return BOTTOM
    return "root" if v == () else ".".join(str(i + 1) for i in v)


def _shape_order(t: Tree, ordering: Sequence) -> tuple[str, ...]:
    names = tree_variables(t)
    out: list[str] = []
    for v in reversed(ordering):
        if v == BOTTOM:
            continue
        node = t.subtree(v)
        out.extend(names[v + (k,)] for k in range(len(node.children)) if v + (k,) in names)
    return tuple(out)


def make_ord_shape(p: Tree | LabelledTree, t: Sequence) -> OrdShape:
    tree = p.tree if isinstance(p, LabelledTree) else p
    poset = internal_poset(tree)
    t = tuple(t)
    if sorted(map(repr, t)) != sorted(map(repr, poset.elements)) or len(set(t)) != len(t):
        raise ValueError("ordering must list every internal vertex of the augmented tree once")
    for i, a in enumerate(t):
        for b in t[:i]:
            if poset.less(a, b):
                raise ValueError(f"ordering places {_vname(b)} before {_vname(a)} against the tree order")
    aug = augment(tree)
    return OrdShape(tree, t, tuple((v, aug.x_input(v)) for v in t))


def ord_shapes(p: Tree | LabelledTree) -> list[OrdShape]:
    tree = p.tree if isinstance(p, LabelledTree) else p
    return [make_ord_shape(tree, t) for t in linear_extensions(internal_poset(tree))]


def required_orders(p: Tree | LabelledTree) -> list[tuple[str, ...]]:
    """Expansion orders from every linear extension, with children permuted at vertices of arity >= 3."""
    tree = p.tree if isinstance(p, LabelledTree) else p
    names = tree_variables(tree)
    seen: dict[tuple, None] = {}
    for t in linear_extensions(internal_poset(tree)):
        blocks = []
        for v in reversed(t):
            if v == BOTTOM:
                continue
            kids = [names[v + (k,)] for k in range(len(tree.subtree(v).children)) if v + (k,) in names]
            blocks.append(list(itertools.permutations(kids)) if len(kids) >= 3 else [tuple(kids)])
        for combo in itertools.product(*blocks):
            seen[tuple(x for b in combo for x in b)] = None
    return list(seen) or [()]


# ---------------------------------------------------------------- multimaps


Rule = Callable[[tuple[int, ...]], SingularSeries]


@dataclass(frozen=True, eq=False)
class MultiMap:
    """A tree-indexed multimap: a rule from input basis tuples to series.

    Values are memoized; the cache is filled idempotently and never
    changes an answer.
    """

    shape: LabelledTree
    rule: Rule = field(repr=False)
    ceiling: int = SERIES_CEILING
    floor: int = DEFAULT_FLOOR
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def tree(self) -> Tree:
        return self.shape.tree

    def __call__(self, inputs: Sequence[int]) -> SingularSeries:
        inputs = tuple(inputs)
        hit = self._memo.get(inputs)
        if hit is None:
            if len(inputs) != len(self.shape.leaves):
                raise ValueError(f"expected {len(self.shape.leaves)} inputs, got {len(inputs)}")
            hit = self.rule(inputs)
            self._memo[inputs] = hit
        return hit

    def evaluate(self, vectors: Sequence[Mapping[int, Fraction]]) -> SingularSeries:
        """Multilinear extension to input vectors."""
        total = self.zero()
        for combo in itertools.product(*(v.items() for v in vectors)):
            c = Fraction(1)
            for _, x in combo:
                c *= x
            total = total + self(tuple(i for i, _ in combo)).scale(c)
        return total

    def zero(self) -> SingularSeries:
        return SingularSeries({}, self.shape.variable_names, self.ceiling, self.floor)

    def table(self) -> dict[tuple[int, ...], SingularSeries]:
        return {b: self(b) for b in self.shape.input_tuples()}

    def __str__(self) -> str:
        return f"MultiMap[{self.tree}; {', '.join(m.name for m in self.shape.leaves)} -> {self.shape.root.name}]"


def _series_window(m: MultiMap) -> dict:
    return {"ceiling": m.ceiling, "floor": m.floor}


def identity(module: HModule, ceiling: int = SERIES_CEILING) -> MultiMap:
    """``1_A`` over the tree with a single leaf and no vertex."""
    shape = LabelledTree(LEAF, (module,), module)
    return MultiMap(shape, lambda b: SingularSeries.constant(1, b[0], ceiling=ceiling), ceiling)


def unit_map(module: HModule, vector: Mapping[int, Fraction], ceiling: int = SERIES_CEILING) -> MultiMap:
    """An element of ``module`` as a multimap over the empty tree."""
    from .trees import EMPTY

    def rule(_):
        return SingularSeries({((), (), k): Fraction(c) for k, c in vector.items()}, (), ceiling)

    return MultiMap(LabelledTree(EMPTY, (), module), rule, ceiling)


# -------------------------------------------------------------- membership


def _module_action(s: SingularSeries, module: HModule, i: int) -> SingularSeries:
    return s.map_basis(lambda b: module.act(i, b))


def _profile_witness(shape: LabelledTree, b, s: SingularSeries) -> Witness | None:
    extra = set(s.variables) - set(shape.variable_names)
    if extra:
        return Witness("variables", shape.labels_of(b), f"unknown variables {sorted(extra)}")
    for pair in sorted(s.pole_pairs()):
        if pair not in shape.profile:
            return Witness("profile", shape.labels_of(b),
                           f"pole ({pair[0]}-{pair[1]}) joins vertices that are not siblings")
    return None


def _internal_witness(shape: LabelledTree, b, s: SingularSeries, degree: int) -> Witness | None:
    for path in shape.tree.internal_paths():
        kids = shape.children_vars(path)
        if path:
            if path not in shape.variables:
                continue
            w = sum_rule_witness(s, kids, shape.variables[path], degree)
            if w:
                return Witness("sum-rule", shape.labels_of(b),
                               f"at vertex {_vname(path)} degree {w[0]}: {w[1]} != {w[2]}")
        else:
            w = sum_rule_witness(s, kids, lambda i: _module_action(s, shape.root, i), degree)
            if w:
                return Witness("root-invariance", shape.labels_of(b),
                               f"degree {w[0]}: distributed {w[1]} != module action {w[2]}")
    return None


def _leaf_witness(m: MultiMap, b, j: int, degree: int) -> Witness | None:
    shape = m.shape
    s = m(b)
    mod = shape.leaves[j]
    if shape.tree.is_leaf:
        for i in range(1, degree + 1):
            lhs = m.evaluate([mod.act(i, b[0])])
            rhs = _module_action(s, shape.root, i)
            if not equivalent(lhs, rhs):
                return Witness("h-linearity", shape.labels_of(b), f"degree {i}: {lhs} != {rhs}")
        return None
    var = shape.variables[shape.tree.leaf_paths()[j]]
    shifts = taylor_shift(s, [var], degree) if var in s.variables else None
    for i in range(1, degree + 1):
        vecs = [{x: Fraction(1)} for x in b]
        vecs[j] = mod.act(i, b[j])
        lhs = m.evaluate(vecs)
        rhs = shifts[i] if shifts else m.zero()
        if not equivalent(lhs, rhs):
            return Witness("leaf-invariance", shape.labels_of(b),
                           f"leaf {j + 1} degree {i}: input action {lhs} != variable action {rhs}")
    return None


def membership_witness(m: MultiMap, representatives: Mapping | None = None,
                       degree: int = INVARIANCE_DEGREE, leaves: bool = True) -> Witness | None:
    """First violated membership condition over the input window, or ``None``."""
    shape = m.shape
    orders = required_orders(shape) if representatives else None
    for b in shape.input_tuples():
        s = m(b)
        reps = list((representatives or {}).get(b, {}).values()) or [s]
        for r in reps:
            w = _profile_witness(shape, b, r) or _internal_witness(shape, b, r, degree)
            if w:
                return w
        for r1, r2 in itertools.combinations(reps, 2):
            d = disagreement(r1, r2, orders)
            if d:
                order, (poles, mono, basis), c1, c2 = d
                mono_s = "*".join(f"{n}^{e}" for n, e in mono) or "1"
                return Witness("agreement", shape.labels_of(b),
                               f"order {','.join(order)}: coefficient of {mono_s} "
                               f"[{shape.root.label(basis) if basis is not None else ''}] is {c1} vs {c2}")
    if leaves:
        for j, flag in enumerate(shape.leaf_invariant):
            if not flag:
                continue
            for b in shape.input_tuples():
                w = _leaf_witness(m, b, j, degree)
                if w:
                    return w
    return None


def make_multimap(shape: LabelledTree, assignments: Mapping | Rule, *, check: bool = True,
                  degree: int = INVARIANCE_DEGREE, ceiling: int = SERIES_CEILING,
                  floor: int = DEFAULT_FLOOR) -> MultiMap:
    """Build and (by default) validate a multimap.

    ``assignments`` maps input tuples (basis indices or labels) to a series
    or to a dict of representatives, one per Ord shape or expansion order;
    missing tuples are zero.  A callable rule is accepted as well.
    """
    reps: dict = {}
    if callable(assignments):
        rule = assignments
    else:
        table: dict = {}
        for key, val in assignments.items():
            b = tuple(mod.index(x) if isinstance(x, str) else int(x) for mod, x in zip(shape.leaves, key))
            if len(b) != len(shape.leaves):
                raise ValueError(f"input tuple {key} has the wrong length")
            if isinstance(val, Mapping):
                if not val:
                    raise ValueError("empty representative family")
                reps[b] = dict(val)
                val = next(iter(val.values()))
            table[b] = val

        def rule(b, table=table):
            if b in table:
                return table[b]
            if any(i not in mod.window for mod, i in zip(shape.leaves, b)):
                labels = tuple(mod.label(i) for mod, i in zip(shape.leaves, b))
                raise OutsideWindow(f"no value stored for inputs {labels}: they lie outside the stored window")
            return SingularSeries({}, shape.variable_names, ceiling, floor)

    m = MultiMap(shape, rule, ceiling, floor)
    if check:
        w = membership_witness(m, reps, degree)
        if w:
            raise MembershipError(w)
    return m


def full_invariance_filter(m: MultiMap, degree: int = INVARIANCE_DEGREE) -> bool:
    return invariance_witness(m, degree) is None


def invariance_witness(m: MultiMap, degree: int = INVARIANCE_DEGREE) -> Witness | None:
    """H-invariance at the root and at every leaf, regardless of flags."""
    shape = m.shape
    if not shape.tree.is_leaf:
        kids = shape.children_vars(())
        for b in shape.input_tuples():
            s = m(b)
            w = sum_rule_witness(s, kids, lambda i: _module_action(s, shape.root, i), degree)
            if w:
                return Witness("root-invariance", shape.labels_of(b),
                               f"degree {w[0]}: distributed {w[1]} != module action {w[2]}")
    for j in range(len(shape.leaves)):
        for b in shape.input_tuples():
            w = _leaf_witness(m, b, j, degree)
            if w:
                return w
    return None


def _mismatch(sa: SingularSeries, sb: SingularSeries, limit: int = 240) -> str:
    text = f"{sa} != {sb}"
    if len(text) <= limit:
        return text
    try:
        text = f"difference {sa - sb}"
    except (TypeError, ValueError):
        pass
    return text if len(text) <= limit else text[: limit - 3] + "..."


def multimaps_equal(a: MultiMap, b: MultiMap) -> bool:
    return multimap_difference(a, b) is None


def multimap_difference(a: MultiMap, b: MultiMap, generators: bool = False) -> Witness | None:
    """First input tuple where ``a`` and ``b`` disagree.

    With ``generators`` both maps are trusted to be leaf-invariant, so
    tuples of module generators determine everything else.
    """
    if not a.shape.same_shape(b.shape):
        return Witness("shape", (), f"{a.tree} vs {b.tree}")
    tuples = None
    if generators and a.shape.leaf_invariant == b.shape.leaf_invariant:
        tuples = a.shape.generating_tuples()
    for t in tuples if tuples is not None else a.shape.input_tuples():
        sa, sb = a(t), b(t)
        if not equivalent(sa, sb):
            return Witness("value", a.shape.labels_of(t), _mismatch(sa, sb))
    return None


# ------------------------------------------------------------- composition


def _removed_path(q: Tree, i: int) -> Path:
    path = q.leaf_paths()[i - 1]
    while path:
        parent = path[:-1]
        if len(q.subtree(parent).children) > 1 or not parent:
            return path
        path = parent
    return path


def _prune_map(removed: Path) -> Callable[[Path], Path | None]:
    n = len(removed)

    def f(v: Path) -> Path | None:
        if not removed or v[:n] == removed:
            return None
        if len(v) >= n and v[: n - 1] == removed[:-1] and v[n - 1] > removed[-1]:
            return v[: n - 1] + (v[n - 1] - 1,) + v[n:]
        return v

    return f


def compose(g: MultiMap, i: int, f: MultiMap, check: bool = True, degree: int = INVARIANCE_DEGREE) -> MultiMap:
    """Graft ``f`` into the ``i``-th input (1-based) of ``g``."""
    gs, fs = g.shape, f.shape
    if not 1 <= i <= len(gs.leaves):
        raise IndexError(f"leaf {i} out of range 1..{len(gs.leaves)}")
    if not fs.root.same_as(gs.leaves[i - 1]):
        raise LabelMismatch(f"output {fs.root.name} does not match input {i} labelled {gs.leaves[i - 1].name}")
    if not gs.leaf_invariant[i - 1]:
        raise InvarianceRequired(f"input {i} is not flagged H-invariant")
    if fs.tree.is_leaf and not fs.leaf_invariant[0]:
        raise InvarianceRequired("inner map is not flagged H-invariant at its root")

    q = gs.tree
    nf = len(fs.leaves)
    P = q.leaf_paths()[i - 1]
    gvars = gs.variables
    ceiling, floor = min(g.ceiling, f.ceiling), max(g.floor, f.floor)
    if nf == 0:
        r = prune_leaf(q, i)
        pmap = _prune_map(_removed_path(q, i))
        rvars = tree_variables(r)
        g_rename = {v: rvars[pmap(path)] for path, v in gvars.items() if pmap(path) is not None}
        dropped = sorted(v for path, v in gvars.items() if pmap(path) is None)
        f_rename: dict = {}
    else:
        r = graft(q, i, fs.tree)
        rvars = tree_variables(r)
        g_rename = {v: rvars[path] for path, v in gvars.items()}
        f_rename = {v: rvars[P + path] for path, v in fs.variables.items()}
        dropped = []
    shape = LabelledTree(
        r,
        gs.leaves[: i - 1] + fs.leaves + gs.leaves[i:],
        gs.root,
        gs.leaf_invariant[: i - 1] + fs.leaf_invariant + gs.leaf_invariant[i:],
    )
    names = shape.variable_names

    def rule(b):
        bf = b[i - 1 : i - 1 + nf]
        inner = f(bf)
        total = SingularSeries({}, (), ceiling, floor)
        for k, coeff in sorted(inner.by_basis().items(), key=lambda kv: repr(kv[0])):
            outer = g(b[: i - 1] + (k,) + b[i - 1 + nf :])
            if not dropped:
                coeff, outer = rename(coeff, f_rename), rename(outer, g_rename)
            total = total + coeff * outer
        if dropped:
            for v in dropped:
                if total.depends_on(v):
                    raise MembershipError(Witness("factoring", shape.labels_of(b),
                                                  f"composite still depends on removed variable {v}"))
            total = rename(total, g_rename)
        return total.over(names)

    out = MultiMap(shape, rule, ceiling, floor)
    if check:
        w = membership_witness(out, degree=degree, leaves=False)
        if w:
            raise MembershipError(w)
    return out


def associativity_check(h: MultiMap, g: MultiMap, f: MultiMap, positions: tuple[int, int],
                        mode: str = "sequential", generators: bool = False) -> bool:
    """Both bracketings agree.

    ``sequential``: ``(h o_i g) o_{i+j-1} f == h o_i (g o_j f)``.
    ``parallel``: for ``i < j`` inputs of ``h``,
    ``(h o_j f) o_i g == (h o_i g) o_{j + n_g - 1} f``.
    """
    i, j = positions
    if mode == "sequential":
        left = compose(compose(h, i, g, check=False), i + j - 1, f, check=False)
        right = compose(h, i, compose(g, j, f, check=False), check=False)
    elif mode == "parallel":
        if not i < j:
            raise ValueError("parallel mode needs i < j")
        ng = len(g.shape.leaves)
        left = compose(compose(h, j, f, check=False), i, g, check=False)
        right = compose(compose(h, i, g, check=False), j + ng - 1, f, check=False)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return multimap_difference(left, right, generators) is None


# -------------------------------------------------------------- refinement


def _splice_map(c: Path, arity: int) -> Callable[[Path], Path | None]:
    """Paths of the tree with vertex ``c`` to the tree where its children are spliced into its parent."""
    n = len(c)

    def f(v: Path) -> Path | None:
        if v == c:
            return None
        if v[:n] == c:
            j = v[n]
            return (c[:-1] + (c[-1] + j,) if c else ()) + v[n + 1 :]
        if c and len(v) >= n and v[: n - 1] == c[:-1] and v[n - 1] > c[-1]:
            return v[: n - 1] + (v[n - 1] + arity - 1,) + v[n:]
        return v

    return f


def _expand_vertex(s: SingularSeries, coarse: Tree, fine: Tree, c: Path, root: HModule) -> SingularSeries:
    """Series over ``coarse`` re-expressed over ``fine``, which has the extra vertex ``c``."""
    cv, fv = tree_variables(coarse), tree_variables(fine)
    arity = len(fine.subtree(c).children)
    pmap = _splice_map(c, arity)
    kids = {c + (k,) for k in range(arity)}
    mapping: dict = {}
    small = set()
    for path, name in fv.items():
        w = pmap(path)
        if w is None or w not in cv:
            continue
        form = {name: 1}
        if path in kids and c:
            form[fv[c]] = 1
            small.add(name)
        mapping[cv[w]] = form
    if c:
        return substitute_linear(s, mapping, small, variables=sort_vars(fv.values()))
    # unary root: s_fine = sum_i z^i D(i) s_coarse
    z = fv[(0,)]
    base = substitute_linear(s, mapping, (), variables=sort_vars(fv.values()))
    total = SingularSeries({}, base.variables, s.ceiling, s.floor, s.weights, s.reliable)
    lo = min(0, base.lowest_weight() or 0)
    for i in range(0, s.ceiling - lo + 2):
        acted = _module_action(base, root, i)
        if acted:
            total = total + SingularSeries.monomial({z: i}, ceiling=s.ceiling, floor=s.floor) * acted
    return SingularSeries(total.terms, base.variables, s.ceiling, s.floor, s.weights, total.reliable)


def _collapse_vertex(s: SingularSeries, fine: Tree, coarse: Tree, c: Path) -> SingularSeries:
    """Series over ``fine`` re-expressed over ``coarse``, which lacks the vertex ``c``.

    Uses the first child with a variable as the representative: ``z_c``
    becomes its position and the others are measured from it.
    """
    cv, fv = tree_variables(coarse), tree_variables(fine)
    arity = len(fine.subtree(c).children)
    pmap = _splice_map(c, arity)
    kids = [c + (k,) for k in range(arity) if c + (k,) in fv]
    rep = cv.get(pmap(kids[0])) if kids else None
    mapping: dict = {}
    for path, name in fv.items():
        if path == c:
            mapping[name] = {rep: 1} if rep else {}
            continue
        target = cv.get(pmap(path))
        form = {target: 1} if target else {}
        if path in kids and rep:
            form[rep] = form.get(rep, 0) - 1
        mapping[name] = {k: v for k, v in form.items() if v}
    return substitute_linear(s, mapping, (), variables=sort_vars(cv.values()))


def _transport(m: MultiMap, target: Tree, steps: list[tuple[Tree, Tree, str, Path]]) -> MultiMap:
    """Apply conversion steps ``(from_tree, to_tree, kind, path)`` in order."""
    root = m.shape.root

    def convert(s: SingularSeries) -> SingularSeries:
        for src, dst, kind, path in steps:
            if kind == "expand":
                s = _expand_vertex(s, src, dst, path, root)
            else:
                s = _collapse_vertex(s, src, dst, path)
        return s

    shape = LabelledTree(target, m.shape.leaves, root, m.shape.leaf_invariant)
    names = shape.variable_names

    def rule(b):
        return convert(m(b)).over(names)

    return MultiMap(shape, rule, m.ceiling, m.floor)


def _chain(start: Tree, moves) -> list[Tree]:
    trees = [start]
    for mv in moves:
        trees.append(apply_move(trees[-1], mv))
    return trees


def refine(m: MultiMap, target: Tree, check: bool = True, degree: int = INVARIANCE_DEGREE) -> MultiMap:
    """Pull ``m`` back along the tree morphism ``target -> m.tree`` (``target`` finer)."""
    mor = morphism(target, m.tree)
    if mor is None:
        raise ValueError(f"no tree morphism {target} -> {m.tree}")
    trees = _chain(target, mor.moves)
    steps = []
    for k in reversed(range(len(mor.moves))):
        kind, path = mor.moves[k]
        fine_side, coarse_side = trees[k], trees[k + 1]
        if kind == "unary-insert":
            steps.append((coarse_side, fine_side, "collapse", path))
        else:
            steps.append((coarse_side, fine_side, "expand", path))
    out = _transport(m, target, steps)
    if check:
        w = membership_witness(out, degree=degree, leaves=False)
        if w:
            raise MembershipError(w)
    return out


def coarsen(m: MultiMap, target: Tree) -> MultiMap:
    """Push ``m`` forward along ``m.tree -> target``.

    Not a structure map of the multicategory: it picks the representative
    whose refinement is ``m`` when one exists, and callers must check that.
    """
    mor = morphism(m.tree, target)
    if mor is None:
        raise ValueError(f"no tree morphism {m.tree} -> {target}")
    trees = _chain(m.tree, mor.moves)
    steps = []
    for k, (kind, path) in enumerate(mor.moves):
        if kind == "unary-insert":
            steps.append((trees[k], trees[k + 1], "expand", path))
        else:
            steps.append((trees[k], trees[k + 1], "collapse", path))
    return _transport(m, target, steps)


# ---------------------------------------------------------------- symmetry


def symmetry_action(m: MultiMap, path: Path, perm: Sequence[int]) -> MultiMap:
    """Permute the children of ``path``: new child ``k`` is old child ``perm[k]``."""
    t = m.tree
    new_tree = permute_children(t, tuple(path), perm)
    n = len(path)
    inv = {old: new for new, old in enumerate(perm)}

    def pmap(v: Path) -> Path:
        if len(v) > n and v[:n] == tuple(path):
            return v[:n] + (inv[v[n]],) + v[n + 1 :]
        return v

    old_vars, new_vars = tree_variables(t), tree_variables(new_tree)
    names = {v: new_vars[pmap(p)] for p, v in old_vars.items()}
    old_leaves, new_leaves = t.leaf_paths(), new_tree.leaf_paths()
    where = {p: k for k, p in enumerate(new_leaves)}
    to_new = [where[pmap(p)] for p in old_leaves]  # old leaf index -> new leaf index
    leaves = [None] * len(old_leaves)
    flags = [None] * len(old_leaves)
    for old, new in enumerate(to_new):
        leaves[new] = m.shape.leaves[old]
        flags[new] = m.shape.leaf_invariant[old]
    shape = LabelledTree(new_tree, tuple(leaves), m.shape.root, tuple(flags))

    def rule(b):
        old_b = tuple(b[to_new[k]] for k in range(len(old_leaves)))
        return rename(m(old_b), names).over(shape.variable_names)

    return MultiMap(shape, rule, m.ceiling, m.floor)


def sibling_permutations(t: Tree) -> Iterable[tuple[Path, tuple[int, ...]]]:
    """Every non-identity permutation of siblings, vertex by vertex."""
    for path in t.internal_paths():
        k = len(t.subtree(path).children)
        for perm in itertools.permutations(range(k)):
            if list(perm) != list(range(k)):
                yield path, perm


__all__ = [
    "HModule", "LabelledTree", "OrdShape", "MultiMap", "Witness", "MembershipError", "LabelMismatch",
    "InvarianceRequired", "OutsideWindow", "tree_variables", "labelled", "make_ord_shape", "ord_shapes",
    "required_orders", "identity", "unit_map", "make_multimap", "membership_witness", "full_invariance_filter",
    "invariance_witness", "multimaps_equal", "multimap_difference", "compose", "associativity_check", "refine",
    "coarsen", "symmetry_action", "sibling_permutations",
]
