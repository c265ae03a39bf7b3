import itertools

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from relaxmulti.algebra import CommDiffAlgebra
from relaxmulti.multimap import (
    HModule,
    InvarianceRequired,
    LabelMismatch,
    MembershipError,
    associativity_check,
    coarsen,
    compose,
    full_invariance_filter,
    identity,
    invariance_witness,
    labelled,
    make_multimap,
    multimap_difference,
    ord_shapes,
    refine,
    required_orders,
    symmetry_action,
    unit_map,
)
from relaxmulti.series import SingularSeries, expand
from relaxmulti.suites import holomorphic_map, random_holomorphic
from relaxmulti.trees import corolla, parse_tree

U = sympy.Symbol("u")
B = HModule.polynomial()
R = HModule.trivial()
ALG = CommDiffAlgebra.polynomial()


def as_poly(s: SingularSeries):
    """Pole-free series over Q[u] as a sympy polynomial, basis k read as u^k."""
    out = sympy.Integer(0)
    for (poles, mono, basis), c in s.terms.items():
        assert not poles
        term = sympy.Rational(c.numerator, c.denominator) * U ** basis
        for n, e in mono:
            term *= sympy.Symbol(n) ** e
        out += term
    return sympy.expand(out)


def loose(tree, module=R):
    t = parse_tree(tree) if isinstance(tree, str) else tree
    return labelled(t, module, module, leaf_invariant=(False,) * t.leaf_count)


class TestModules:
    def test_polynomial_law(self):
        assert B.validate() is None
        assert B.act(2, 4) == {2: 6}

    def test_generators(self):
        assert B.generators == (4,)
        assert R.generators == (0,)

    def test_from_matrices(self):
        # Q[e]/(e^2) with D1 e = 1
        m = HModule.from_matrices("N", ["1", "e"], {1: [[0, 1], [0, 0]]})
        assert m.act(1, 1) == {0: 1} and m.generators == (1,)

    def test_from_matrices_rejects_broken_law(self):
        with pytest.raises(ValueError):
            HModule.from_matrices("N", ["1", "e", "f"], {1: [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
                                                         2: [[0, 0, 0], [0, 0, 0], [0, 0, 0]]})


class TestShapes:
    def test_variables_and_profile(self):
        shape = loose("((**)*)")
        assert shape.variable_names == ("x1", "x2", "x3", "z1")
        assert shape.profile == {("x1", "x2"): (1, 2), ("x3", "z1"): (1, 2, 3)}

    def test_two_ord_shapes_for_double_tree(self):
        shapes = ord_shapes(parse_tree("((**)(**))"))
        assert len(shapes) == 2
        assert {s.expansion_order[:2] for s in shapes} == {("x1", "x2"), ("x3", "x4")}

    def test_required_orders_permute_wide_vertices(self):
        orders = required_orders(corolla(4))
        assert len(orders) == 24 and len(set(orders)) == 24


class TestMembership:
    def test_sibling_pole_accepted(self):
        shape = loose("(***)")
        m = make_multimap(shape, {(0, 0, 0): SingularSeries.pole("x1", "x2", 1, variables=shape.variable_names)})
        assert str(m((0, 0, 0))) == "(x1-x2)^-1"

    def test_non_sibling_pole_rejected(self):
        shape = loose("((**)*)")
        with pytest.raises(MembershipError) as err:
            make_multimap(shape, {(0, 0, 0): SingularSeries.pole("x1", "x3", 1, variables=shape.variable_names)})
        assert err.value.witness.kind == "profile"
        assert "x1-x3" in str(err.value)

    def test_position_dependence_rejected(self):
        shape = loose("(***)")
        bad = SingularSeries.pole("x1", "x2", 1, variables=shape.variable_names) * SingularSeries.monomial({"x3": 1})
        with pytest.raises(MembershipError) as err:
            make_multimap(shape, {(0, 0, 0): bad})
        assert err.value.witness.kind == "root-invariance"
        assert err.value.witness.inputs == ("1", "1", "1")

    def test_leaf_flag_enforced(self):
        shape = labelled("(***)", R, R)
        with pytest.raises(MembershipError) as err:
            make_multimap(shape, {(0, 0, 0): SingularSeries.pole("x1", "x2", 1, variables=shape.variable_names)})
        assert err.value.witness.kind == "leaf-invariance"

    def test_disagreeing_representatives(self):
        shape = loose("((**)(**))")
        names = shape.variable_names
        pole = SingularSeries.pole("x1", "x2", 1, variables=names)
        a = expand(pole, ("x1", "x2", "x3", "x4", "z1", "z2"))
        b = expand(pole, ("x2", "x1", "x3", "x4", "z1", "z2"))
        make_multimap(shape, {(0, 0, 0, 0): {"t1": a, "t2": a}})
        with pytest.raises(MembershipError) as err:
            make_multimap(shape, {(0, 0, 0, 0): {"t1": a, "t2": b}})
        assert err.value.witness.kind == "agreement"

    def test_perturbed_constant_fails_invariance(self):
        m = holomorphic_map(labelled(corolla(2), B, B), {0: 1}, ALG)
        assert full_invariance_filter(m)
        shifted = make_multimap(m.shape, {b: m(b) + SingularSeries.constant(1, 0) for b in m.shape.input_tuples()},
                                check=False)
        assert not full_invariance_filter(shifted)
        assert invariance_witness(shifted).kind == "leaf-invariance"


class TestComposition:
    def test_binary_graft_matches_direct_product(self):
        # oracle: f2(f2(a, b), c) with leaves at z1+x1, z1+x2 and x3
        f2 = holomorphic_map(labelled(corolla(2), B, B), {0: 1}, ALG)
        c = compose(f2, 1, f2, check=False)
        assert c.shape.variable_names == ("x1", "x2", "x3", "z1")
        x1, x2, x3, z1 = sympy.symbols("x1 x2 x3 z1")
        for a, b, d in itertools.product(range(3), repeat=3):
            want = sympy.expand((U + z1 + x1) ** a * (U + z1 + x2) ** b * (U + x3) ** d)
            assert as_poly(c((a, b, d))) == want

    def test_identity_is_two_sided(self):
        import random

        m = random_holomorphic(random.Random(3), parse_tree("((**)*)"), ALG)
        assert multimap_difference(compose(identity(B), 1, m, check=False), m) is None
        for i in (1, 2, 3):
            assert multimap_difference(compose(m, i, identity(B), check=False), m) is None

    @pytest.mark.parametrize("seed", range(4))
    def test_associativity(self, seed):
        import random

        rng = random.Random(seed)
        h = random_holomorphic(rng, corolla(2), ALG)
        g = random_holomorphic(rng, corolla(2), ALG)
        f = random_holomorphic(rng, corolla(2), ALG)
        assert associativity_check(h, g, f, (1, 2), "sequential", generators=True)
        assert associativity_check(h, g, f, (1, 2), "parallel", generators=True)

    def test_label_mismatch(self):
        f = holomorphic_map(labelled(corolla(2), B, B), {0: 1}, ALG)
        with pytest.raises(LabelMismatch):
            compose(f, 1, identity(R))

    def test_invariance_required(self):
        g = make_multimap(loose("(**)"), {}, check=False)
        with pytest.raises(InvarianceRequired):
            compose(g, 1, identity(R))

    def test_null_composition_drops_a_leaf(self):
        f = holomorphic_map(labelled(corolla(2), B, B), {0: 1}, ALG)
        c = compose(f, 2, unit_map(B, {0: 1}), check=False)
        assert len(c.shape.leaves) == 1 and c.tree == parse_tree("(*)")
        x1 = sympy.Symbol("x1")
        for k in B.window:
            assert as_poly(c((k,))) == sympy.expand((U + x1) ** k)

    def test_null_composition_with_variable_vacuum_fails(self):
        f = holomorphic_map(labelled(corolla(2), B, B), {0: 1}, ALG)
        c = compose(f, 2, unit_map(B, {1: 1}), check=False)
        with pytest.raises(MembershipError) as err:
            c((0,))
        assert err.value.witness.kind == "factoring"


class TestRefinement:
    def test_refine_corolla_then_coarsen_back(self):
        m = holomorphic_map(labelled(corolla(3), B, B), {0: 1, 1: 2}, ALG)
        fine = refine(m, parse_tree("((**)*)"))
        back = coarsen(fine, corolla(3))
        assert multimap_difference(back, m) is None

    def test_refinement_of_corolla_is_generated_map(self):
        m = holomorphic_map(labelled(corolla(3), B, B), {0: 1}, ALG)
        direct = holomorphic_map(labelled("((**)*)", B, B), {0: 1}, ALG)
        assert multimap_difference(refine(m, direct.tree), direct) is None

    def test_no_morphism(self):
        m = holomorphic_map(labelled("((**)*)", B, B), {0: 1}, ALG)
        with pytest.raises(ValueError):
            refine(m, parse_tree("(*(**))"))


class TestSymmetry:
    @given(st.sampled_from(["(***)", "((**)*)", "((**)(**))"]), st.data())
    def test_involution(self, text, data):
        shape = loose(text)
        names = shape.variable_names
        m = make_multimap(shape, {(0,) * shape.tree.leaf_count: SingularSeries.pole("x1", "x2", 1, variables=names)},
                          check=False)
        path = data.draw(st.sampled_from(shape.tree.internal_paths()))
        k = len(shape.tree.subtree(path).children)
        perm = (1, 0) + tuple(range(2, k))
        twice = symmetry_action(symmetry_action(m, path, perm), path, perm)
        assert multimap_difference(twice, m) is None

    def test_swap_flips_pole_sign(self):
        shape = loose("(**)")
        m = make_multimap(shape, {(0, 0): SingularSeries.pole("x1", "x2", 1, variables=shape.variable_names)})
        assert str(symmetry_action(m, (), (1, 0))((0, 0))) == "-(x1-x2)^-1"
