import itertools

import pytest
import sympy

from relaxmulti.algebra import (
    CommDiffAlgebra,
    algebra_from_f2,
    check_algebra,
    drop_mixed_terms,
    f_for_tree,
    left_comb,
    make_holomorphic_algebra,
    ope_extract,
    with_f2,
)
from relaxmulti.multimap import HModule, MembershipError, MultiMap, compose, multimap_difference
from relaxmulti.series import SingularSeries, parse_series
from relaxmulti.trees import EMPTY, LEAF, corolla, parse_tree

U = sympy.Symbol("u")


def as_poly(s, names=None):
    """Pole-free series over Q[u] as a sympy expression, basis k read as u^k."""
    out = sympy.Integer(0)
    for (poles, mono, basis), c in s.terms.items():
        assert not poles
        term = sympy.Rational(c.numerator, c.denominator) * U ** basis
        for n, e in mono:
            term *= sympy.Symbol(n) ** e
        out += term
    return sympy.expand(out)


def hasse(expr, i):
    # oracle: D(i) acting on a polynomial in u
    return sympy.expand(sympy.diff(expr, U, i) / sympy.factorial(i))


class TestDiffAlgebra:
    def test_polynomial_is_valid(self):
        assert CommDiffAlgebra.polynomial().validate() is None

    def test_broken_leibniz_is_reported(self):
        mod = HModule.polynomial()
        bad = CommDiffAlgebra(mod, lambda i, j: {i + j: 2} if i and j else {i + j: 1}, {0: 1})
        assert "Leibniz" in bad.validate() or "associative" in bad.validate()
        with pytest.raises(ValueError):
            make_holomorphic_algebra(bad)

    def test_from_table(self):
        mod = HModule.from_matrices("N", ["1", "e"], {1: [[0, 1], [0, 0]]})
        # Q[e]/(e^2) with D1 e = 1 breaks Leibniz: D2(e*e) = 0 but D1e*D1e = 1
        alg = CommDiffAlgebra.from_table(mod, {(0, 0): {0: 1}, (0, 1): {1: 1}, (1, 1): {}}, {0: 1})
        assert alg.validate() is not None


class TestHolomorphic:
    def test_rationals(self):
        alg = make_holomorphic_algebra(CommDiffAlgebra.rationals())
        assert str(alg.f2((0, 0))) == "[0]"

    def test_f2_on_u_u(self, qu):
        x1, x2 = sympy.symbols("x1 x2")
        assert as_poly(qu.f2((1, 1))) == sympy.expand((U + x1) * (U + x2))

    def test_f2_double_sum_oracle(self, qu):
        x1, x2 = sympy.symbols("x1 x2")
        for a, b in itertools.product(range(5), repeat=2):
            want = sum(hasse(U**a, i) * hasse(U**b, j) * x1**i * x2**j
                       for i in range(a + 1) for j in range(b + 1) if i + j <= qu.ceiling)
            assert as_poly(qu.f2((a, b))) == sympy.expand(want)

    def test_vacuum_input_is_x_free(self, qu):
        for b in range(5):
            s = qu.f2((0, b))
            assert s.is_pole_free() and not s.depends_on("x1")

    def test_f3_triple_sum_oracle(self, qu):
        x1, x2, x3 = sympy.symbols("x1 x2 x3")
        f3 = f_for_tree(qu, corolla(3), verify=True)
        for a, b, c in itertools.product(range(3), repeat=3):
            want = sympy.expand((U + x1) ** a * (U + x2) ** b * (U + x3) ** c)
            assert as_poly(f3((a, b, c))) == want

    def test_leaf_and_empty_members(self, qu):
        assert f_for_tree(qu, LEAF)((3,)).terms == {((), (), 3): 1}
        assert f_for_tree(qu, EMPTY) is qu.unit

    def test_binary_member_is_composite(self, qu):
        direct = compose(qu.f2, 1, qu.f2, check=False)
        assert multimap_difference(f_for_tree(qu, parse_tree("((**)*)")), direct) is None
        assert left_comb(3) == parse_tree("((**)*)")

    def test_bad_tree(self, qu):
        with pytest.raises(ValueError):
            f_for_tree(qu, parse_tree("(*())"))


class TestCheck:
    def test_rationals_pass(self):
        report = check_algebra(make_holomorphic_algebra(CommDiffAlgebra.rationals()), 4)
        assert report.passed and report.commutative

    def test_polynomial_passes(self, qu):
        report = check_algebra(qu, 3)
        assert report.passed and report.commutative
        axioms = {r.axiom for r in report.results}
        assert axioms == {"invariance", "composition", "unit", "refinement", "commutativity"}

    def test_dropping_mixed_terms_breaks_composition(self, qu):
        report = check_algebra(drop_mixed_terms(qu), 3)
        failed = [r for r in report.failures() if r.axiom == "composition"]
        assert failed and failed[0].witness
        assert any(r.tree.count("*") == 3 for r in failed)

    def test_user_supplied_f2(self):
        R = HModule.trivial()
        alg = algebra_from_f2(R, {0: 1}, {(0, 0): parse_series("[0]")})
        assert check_algebra(alg, 3).passed

    def test_singular_f2_on_trivial_module_is_rejected(self):
        R = HModule.trivial()
        with pytest.raises(MembershipError) as err:
            algebra_from_f2(R, {0: 1}, {(0, 0): parse_series("(x1-x2)^-1*[0]")})
        assert err.value.witness.kind == "leaf-invariance"


class TestOpe:
    def test_single_regular_entry(self, qu):
        for a, b in [(1, 1), (2, 0), (4, 3)]:
            out = ope_extract(qu, a, b)
            assert [k for k, _ in out] == [0]

    def test_recentred_coefficient(self, qu):
        # oracle: (u+x)(u+y) at x = y is (u+y)^2
        (_, regular), = ope_extract(qu, 1, 1)
        at_zero = SingularSeries({k: c for k, c in regular.terms.items() if "w" not in dict(k[1])},
                                 regular.variables)
        assert as_poly(at_zero) == sympy.expand((U + sympy.Symbol("x2")) ** 2)

    def test_zero_map(self, qu):
        zero = MultiMap(qu.f2.shape, lambda b: SingularSeries({}, ("x1", "x2")))
        assert ope_extract(with_f2(qu, zero), 1, 1) == []

    def test_pole_orders_are_split(self):
        R = HModule.trivial()
        alg = algebra_from_f2(R, {0: 1}, {(0, 0): parse_series("(x1-x2)^-2*[0] + 3*(x1-x2)^-1*[0]")}, check=False)
        out = ope_extract(alg, 0, 0)
        assert [(k, str(v)) for k, v in out] == [(2, "[0]"), (1, "3*[0]")]
