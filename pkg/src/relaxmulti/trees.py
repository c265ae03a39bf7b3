"""Leafed trees: parsing, grafting, refinement morphisms and vertex posets.

A tree is either the leaf ``*`` or a node ``( t1 t2 ... )`` with an ordered,
possibly empty, list of subtrees.  Vertices are addressed by their path of
0-based child indices from the root; the root is ``()``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

Path = tuple[int, ...]

BOTTOM = "⊥"


class TreeSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


@dataclass(frozen=True)
class Tree:
    children: tuple[Tree, ...] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @cached_property
    def leaf_count(self) -> int:
        if self.children is None:
            return 1
        return sum(c.leaf_count for c in self.children)

    @cached_property
    def height(self) -> int:
        if not self.children:
            return 0
        return 1 + max(c.height for c in self.children)

    @property
    def arity(self) -> int:
        return 0 if self.children is None else len(self.children)

    @property
    def is_flat(self) -> bool:
        """Corolla: every leaf sits at level 1."""
        return bool(self.children) and all(c.is_leaf for c in self.children)

    def vertices(self, prefix: Path = ()) -> Iterator[tuple[Path, Tree]]:
        """Preorder walk over all vertices (leaves included)."""
        yield prefix, self
        for k, c in enumerate(self.children or ()):
            yield from c.vertices(prefix + (k,))

    def internal_paths(self) -> list[Path]:
        """Paths of vertices with at least one child, in preorder."""
        return [p for p, t in self.vertices() if t.children]

    def leaf_paths(self) -> list[Path]:
        return [p for p, t in self.vertices() if t.is_leaf]

    def subtree(self, path: Path) -> Tree:
        t = self
        for k in path:
            assert t.children is not None
            t = t.children[k]
        return t

    def replace(self, path: Path, new: Tree) -> Tree:
        if not path:
            return new
        assert self.children is not None
        k, rest = path[0], path[1:]
        kids = list(self.children)
        kids[k] = kids[k].replace(rest, new)
        return Tree(tuple(kids))

    def has_unary(self) -> bool:
        return any(len(t.children) == 1 for _, t in self.vertices() if t.children)

    def has_empty_node(self) -> bool:
        return any(t.children == () for _, t in self.vertices())

    def is_binary(self) -> bool:
        return all(len(t.children) == 2 for _, t in self.vertices() if t.children is not None)

    def sort_key(self) -> tuple:
        return (self.leaf_count, self.height, render_tree(self))

    def __str__(self) -> str:
        return render_tree(self)

    def __repr__(self) -> str:
        return f"Tree({render_tree(self)!r})"


LEAF = Tree()
EMPTY = Tree(())


def corolla(n: int) -> Tree:
    return Tree((LEAF,) * n)


def parse_tree(text: str) -> Tree:
    data = text.encode()
    pos = 0

    def skip() -> None:
        nonlocal pos
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1

    def one() -> Tree:
        nonlocal pos
        skip()
        if pos >= len(data):
            raise TreeSyntaxError("unexpected end of input", pos)
        ch = data[pos : pos + 1]
        if ch == b"*":
            pos += 1
            return LEAF
        if ch == b"(":
            pos += 1
            kids = []
            while True:
                skip()
                if pos >= len(data):
                    raise TreeSyntaxError("unbalanced parenthesis", pos)
                if data[pos : pos + 1] == b")":
                    pos += 1
                    return Tree(tuple(kids))
                kids.append(one())
        raise TreeSyntaxError(f"unexpected character {ch.decode(errors='replace')!r}", pos)

    tree = one()
    skip()
    if pos != len(data):
        raise TreeSyntaxError("trailing input", pos)
    return tree


def render_tree(p: Tree, format: str = "text") -> str:
    if format == "text":
        if p.children is None:
            return "*"
        return "(" + "".join(render_tree(c) for c in p.children) + ")"
    if format == "dot":
        return _render_dot(p)
    raise ValueError(f"unknown format {format!r}")


def _node_name(path: Path) -> str:
    return "v" + "_".join(str(k) for k in path) if path else "root"


def _render_dot(p: Tree) -> str:
    lines = ["digraph tree {", "  rankdir=BT;"]
    for path, t in p.vertices():
        shape = "point" if t.is_leaf else "circle"
        label = "" if t.is_leaf else ("root" if not path else ".".join(str(k + 1) for k in path))
        lines.append(f'  {_node_name(path)} [shape={shape}, label="{label}"];')
    for path, t in p.vertices():
        for k, _ in enumerate(t.children or ()):
            lines.append(f"  {_node_name(path)} -> {_node_name(path + (k,))} [dir=back];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graft(q: Tree, i: int, p: Tree) -> Tree:
    """Replace the ``i``-th leaf of ``q`` (1-based) by the root of ``p``."""
    n = q.leaf_count
    if n == 0:
        raise ValueError("cannot graft onto a tree with no leaves")
    if not 1 <= i <= n:
        raise IndexError(f"leaf index {i} out of range 1..{n}")
    return q.replace(q.leaf_paths()[i - 1], p)


def prune_leaf(q: Tree, i: int) -> Tree:
    """Remove the ``i``-th leaf, dropping any non-root vertex left childless."""
    paths = q.leaf_paths()
    if not 1 <= i <= len(paths):
        raise IndexError(f"leaf index {i} out of range 1..{len(paths)}")
    path = paths[i - 1]
    if not path:
        return EMPTY
    while True:
        parent = path[:-1]
        node = q.subtree(parent)
        kids = node.children[: path[-1]] + node.children[path[-1] + 1 :]
        if kids or not parent:
            return q.replace(parent, Tree(kids))
        path = parent


def permute_children(p: Tree, path: Path, perm: Sequence[int]) -> Tree:
    """New children at ``path`` are ``old[perm[0]], old[perm[1]], ...``."""
    node = p.subtree(path)
    if node.children is None or sorted(perm) != list(range(len(node.children))):
        raise ValueError("perm must permute the children of an internal vertex")
    return p.replace(path, Tree(tuple(node.children[k] for k in perm)))


# ---------------------------------------------------------------- augmentation


@dataclass(frozen=True)
class AugmentedTree:
    tree: Tree

    @property
    def internal_vertices(self) -> list:
        return [BOTTOM] + self.tree.internal_paths()

    def label(self, v) -> str:
        """The H-power labelling an internal vertex (``R`` for no inputs)."""
        if v == BOTTOM:
            return "B"
        n = sum(1 for c in self.tree.subtree(v).children if c.children != ())
        return f"H^{n}" if n else "R"

    def x_input(self, v) -> str:
        """Tensor product of the labels of the incoming nodes of ``v``."""
        if v == BOTTOM:
            t = self.tree
            if t.is_leaf:
                return "A1"
            n = sum(1 for c in t.children if c.children != ())
            return f"H^{n}" if n else "R"
        leaves = {lp: k + 1 for k, lp in enumerate(self.tree.leaf_paths())}
        parts = []
        for k, c in enumerate(self.tree.subtree(v).children):
            cp = v + (k,)
            if c.is_leaf:
                parts.append(f"A{leaves[cp]}")
            elif c.children:
                parts.append(self.label(cp))
        return "(x)".join(parts) if parts else "R"


def augment(p: Tree) -> AugmentedTree:
    return AugmentedTree(p)


def vertex_key(v) -> tuple:
    return (0, ()) if v == BOTTOM else (1, tuple(v))


@dataclass(frozen=True)
class VertexPoset:
    """A finite poset given by generating relations ``a < b``."""

    elements: tuple
    relations: frozenset = frozenset()
    _above: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        above = {e: set() for e in self.elements}
        for a, b in self.relations:
            above[a].add(b)
        changed = True
        while changed:
            changed = False
            for e in self.elements:
                extra = set().union(*(above[x] for x in above[e])) - above[e] if above[e] else set()
                if extra:
                    above[e] |= extra
                    changed = True
        for e in self.elements:
            if e in above[e]:
                raise ValueError("relations contain a cycle")
        object.__setattr__(self, "_above", above)

    def less(self, a, b) -> bool:
        return b in self._above[a]

    def leq(self, a, b) -> bool:
        return a == b or self.less(a, b)

    def minimal(self, subset) -> list:
        return [e for e in subset if not any(self.less(o, e) for o in subset if o != e)]


def internal_poset(p: AugmentedTree | Tree) -> VertexPoset:
    aug = p if isinstance(p, AugmentedTree) else augment(p)
    verts = aug.internal_vertices
    rels = set()
    for v in verts[1:]:
        parent = BOTTOM if v == () else v[:-1]
        rels.add((parent, v))
    return VertexPoset(tuple(sorted(verts, key=vertex_key)), frozenset(rels))


def linear_extensions(poset: VertexPoset) -> list[tuple]:
    """All linear extensions, lexicographic in the vertex ordering."""
    out: list[tuple] = []

    def rec(prefix: list, remaining: list) -> None:
        if not remaining:
            out.append(tuple(prefix))
            return
        for e in sorted(poset.minimal(remaining), key=_elem_key):
            rest = [r for r in remaining if r != e]
            rec(prefix + [e], rest)

    rec([], list(poset.elements))
    return out


def _elem_key(e):
    if e == BOTTOM or isinstance(e, tuple):
        return (0, vertex_key(e))
    return (1, repr(e))


# ------------------------------------------------------------------ morphisms


@dataclass(frozen=True)
class TreeMorphism:
    source: Tree
    target: Tree
    moves: tuple[tuple[str, Path], ...]

    @property
    def is_identity(self) -> bool:
        return not self.moves


def _delete_unary(t: Tree, prefix: Path, moves: list) -> Tree:
    while t.children is not None and len(t.children) == 1:
        moves.append(("unary-delete", prefix))
        t = t.children[0]
    if t.children is None:
        return t
    return Tree(tuple(_delete_unary(c, prefix + (k,), moves) for k, c in enumerate(t.children)))


def normalize(t: Tree) -> tuple[Tree, list]:
    moves: list = []
    return _delete_unary(t, (), moves), moves


def clades(t: Tree) -> dict[tuple[int, int], Path]:
    """Leaf intervals ``[start, end)`` spanned by non-root internal vertices."""
    out = {}

    def rec(node: Tree, path: Path, start: int) -> int:
        if node.children is None:
            return start + 1
        pos = start
        for k, c in enumerate(node.children):
            pos = rec(c, path + (k,), pos)
        if path:
            out[(start, pos)] = path
        return pos

    rec(t, (), 0)
    return out


def apply_move(t: Tree, move: tuple[str, Path]) -> Tree:
    kind, path = move
    node = t.subtree(path)
    if kind == "unary-insert":
        return t.replace(path, Tree((node,)))
    if kind == "unary-delete":
        if node.children is None or len(node.children) != 1:
            raise ValueError("unary-delete needs a vertex with exactly one child")
        return t.replace(path, node.children[0])
    if kind == "contract":
        if not path or node.children is None:
            raise ValueError("contract needs a non-root internal vertex")
        parent = t.subtree(path[:-1])
        k = path[-1]
        kids = parent.children[:k] + node.children + parent.children[k + 1 :]
        return t.replace(path[:-1], Tree(kids))
    raise ValueError(f"unknown move {kind!r}")


def apply_moves(t: Tree, moves) -> Tree:
    for m in moves:
        t = apply_move(t, m)
    return t


def morphism(q: Tree, p: Tree) -> TreeMorphism | None:
    """The unique morphism ``q -> p`` (``q`` finer than ``p``), if any."""
    if q.leaf_count != p.leaf_count:
        return None
    nq, del_moves = normalize(q)
    np_, target_moves = normalize(p)
    insert_moves = [("unary-insert", path) for _, path in reversed(target_moves)]
    if q.leaf_count == 0 or nq.has_empty_node() or np_.has_empty_node():
        if nq != np_:
            return None
        return TreeMorphism(q, p, tuple(del_moves + insert_moves))
    cq, cp = clades(nq), clades(np_)
    if not set(cp) <= set(cq):
        return None
    contracts = sorted((cq[c] for c in set(cq) - set(cp)), reverse=True)
    moves = del_moves + [("contract", path) for path in contracts] + insert_moves
    return TreeMorphism(q, p, tuple(moves))


# ---------------------------------------------------------------- enumeration


def _compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        yield tuple(bounds[j + 1] - bounds[j] for j in range(k))


def reduced_trees(n: int, binary: bool = False) -> list[Tree]:
    """Planar trees with ``n`` leaves and no unary or empty vertices."""
    if n == 1:
        return [LEAF]
    out = []
    arities = [2] if binary else range(2, n + 1)
    for k in arities:
        for comp in _compositions(n, k):
            for kids in itertools.product(*(reduced_trees(m, binary) for m in comp)):
                out.append(Tree(tuple(kids)))
    return sorted(out, key=Tree.sort_key)


def enumerate_refining_trees(q: Tree, binary_only: bool = False) -> list[Tree]:
    n = q.leaf_count
    if n < 1:
        raise ValueError("refining trees need at least one leaf")
    return [
        p
        for p in reduced_trees(n, binary=binary_only)
        if p.height <= max(n - 1, 0) and morphism(p, q) is not None
    ]
