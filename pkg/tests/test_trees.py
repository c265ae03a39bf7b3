import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import trees
from relaxmulti.trees import (
    BOTTOM,
    EMPTY,
    LEAF,
    TreeSyntaxError,
    apply_moves,
    corolla,
    enumerate_refining_trees,
    graft,
    internal_poset,
    linear_extensions,
    morphism,
    normalize,
    parse_tree,
    permute_children,
    prune_leaf,
    reduced_trees,
    render_tree,
)


def catalan(n):
    # oracle: C_{n-1} binary bracketings of n leaves
    from math import comb

    return comb(2 * (n - 1), n - 1) // n


def schroeder(n):
    # oracle: little Schroeder numbers count reduced planar trees with n leaves
    s = [0, 1, 1]
    for k in range(3, n + 1):
        s.append(((6 * k - 9) * s[k - 1] - (k - 3) * s[k - 2]) // k)
    return s[n]


class TestParsing:
    @pytest.mark.parametrize("text", ["*", "()", "(*)", "(**)", "((**)*)", "(*(**)(***))", "((()))"])
    def test_round_trip(self, text):
        assert render_tree(parse_tree(text)) == text

    def test_whitespace_is_ignored(self):
        assert parse_tree(" ( ( * * ) * ) ") == parse_tree("((**)*)")

    @pytest.mark.parametrize("text,offset", [("((**)", 5), ("(*))", 3), ("(x)", 1), ("", 0)])
    def test_errors_report_offset(self, text, offset):
        with pytest.raises(TreeSyntaxError) as err:
            parse_tree(text)
        assert err.value.offset == offset

    @given(trees(8, reduced=False))
    def test_render_parse_inverse(self, t):
        assert parse_tree(render_tree(t)) == t


class TestCounts:
    @pytest.mark.parametrize("n", range(1, 7))
    def test_binary_counts_are_catalan(self, n):
        assert len(reduced_trees(n, binary=True)) == catalan(n)

    @pytest.mark.parametrize("n", range(1, 6))
    def test_reduced_counts_are_schroeder(self, n):
        assert len(reduced_trees(n)) == schroeder(n)

    def test_small_binary_values(self):
        assert [len(reduced_trees(n, binary=True)) for n in range(1, 6)] == [1, 1, 2, 5, 14]

    def test_refining_trees_of_corolla3(self):
        found = {render_tree(t) for t in enumerate_refining_trees(corolla(3), binary_only=True)}
        assert found == {"((**)*)", "(*(**))"}

    def test_refining_trees_respect_height_bound(self):
        for t in enumerate_refining_trees(corolla(4)):
            assert t.height <= 3


class TestGrafting:
    def test_binary_on_binary(self):
        assert graft(corolla(2), 1, corolla(2)) == parse_tree("((**)*)")
        assert graft(corolla(2), 2, corolla(2)) == parse_tree("(*(**))")

    def test_leaf_is_identity(self):
        t = parse_tree("(*(**))")
        assert graft(LEAF, 1, t) == t
        assert all(graft(t, i, LEAF) == t for i in range(1, 4))

    def test_empty_tree_removes_a_leaf_input(self):
        r = graft(corolla(2), 1, EMPTY)
        assert r.leaf_count == 1 and render_tree(r) == "(()*)"

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            graft(corolla(2), 3, LEAF)

    @given(trees(5), trees(5), st.data())
    def test_leaf_count_law(self, q, p, data):
        i = data.draw(st.integers(1, q.leaf_count))
        assert graft(q, i, p).leaf_count == q.leaf_count + p.leaf_count - 1

    @given(trees(4), trees(4), trees(4), st.data())
    def test_sequential_associativity(self, a, b, c, data):
        i = data.draw(st.integers(1, a.leaf_count))
        j = data.draw(st.integers(1, b.leaf_count))
        assert graft(graft(a, i, b), i + j - 1, c) == graft(a, i, graft(b, j, c))

    @given(trees(4), trees(3), trees(3), st.data())
    def test_parallel_grafts_commute(self, a, b, c, data):
        if a.leaf_count < 2:
            return
        i, j = sorted(data.draw(st.lists(st.integers(1, a.leaf_count), min_size=2, max_size=2, unique=True)))
        left = graft(graft(a, j, c), i, b)
        right = graft(graft(a, i, b), j + b.leaf_count - 1, c)
        assert left == right


class TestPruneAndPermute:
    def test_prune_collapses_childless_vertex(self):
        assert prune_leaf(parse_tree("((*)*)"), 1) == parse_tree("(*)")

    def test_prune_keeps_unary_vertex(self):
        assert render_tree(prune_leaf(parse_tree("(*(**))"), 1)) == "((**))"

    def test_permute(self):
        t = parse_tree("((**)*)")
        assert permute_children(t, (), (1, 0)) == parse_tree("(*(**))")

    @given(trees(5))
    def test_double_transposition(self, t):
        for path in t.internal_paths():
            k = len(t.subtree(path).children)
            perm = (1, 0) + tuple(range(2, k))
            assert permute_children(permute_children(t, path, perm), path, perm) == t


class TestPosetAndExtensions:
    def brute_extensions(self, t):
        # oracle: filter all permutations by the parent-before-child relation
        poset = internal_poset(t)
        out = []
        for perm in itertools.permutations(poset.elements):
            if all(not poset.less(perm[j], perm[i]) for i in range(len(perm)) for j in range(i + 1, len(perm))):
                out.append(perm)
        return out

    @pytest.mark.parametrize("text,count", [("((**)*)", 1), ("((**)(**))", 2), ("(***)", 1),
                                            ("((**)(**)(**))", 6), ("(((**)*)(**))", 3)])
    def test_counts(self, text, count):
        t = parse_tree(text)
        assert len(linear_extensions(internal_poset(t))) == count

    @given(trees(6))
    def test_against_brute_force(self, t):
        if t.is_leaf:
            return
        ours = linear_extensions(internal_poset(t))
        assert sorted(map(repr, ours)) == sorted(map(repr, self.brute_extensions(t)))

    def test_bottom_comes_first(self):
        for ext in linear_extensions(internal_poset(parse_tree("((**)(**))"))):
            assert ext[0] == BOTTOM


class TestMorphisms:
    def test_contract_to_corolla(self):
        m = morphism(parse_tree("((**)*)"), corolla(3))
        assert m is not None and apply_moves(m.source, m.moves) == corolla(3)

    def test_no_morphism_between_incomparable_binaries(self):
        assert morphism(parse_tree("((**)*)"), parse_tree("(*(**))")) is None

    def test_unary_chains_reduce_to_leaf(self):
        t, moves = normalize(parse_tree("((*))"))
        assert t == LEAF and len(moves) == 2

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_every_reduced_tree_maps_to_corolla(self, n):
        for t in reduced_trees(n):
            assert morphism(t, corolla(n)) is not None

    def test_composite_of_morphisms(self):
        fine, mid, coarse = parse_tree("(((**)*)*)"), parse_tree("((***)*)"), corolla(4)
        assert morphism(fine, mid) and morphism(mid, coarse) and morphism(fine, coarse)
