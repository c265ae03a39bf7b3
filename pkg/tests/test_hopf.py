from fractions import Fraction
from math import comb

import pytest
import sympy
from hypothesis import given
from hypothesis import strategies as st

from relaxmulti.hopf import (
    HElem,
    KElem,
    WindowUnderflow,
    act_on_k,
    antipode_h,
    antipode_k,
    comul,
    counit,
    gbinom,
    hopf_axiom_report,
    parse_h,
    parse_k,
)

D = HElem.gen
degrees = st.integers(0, 6)
exponents = st.integers(-8, 12)


def sympy_action(i, j):
    # oracle: D(i) x^j = (d/dx)^i x^j / i!
    x = sympy.Symbol("x")
    expr = sympy.diff(x**j, x, i) / sympy.factorial(i)
    return Fraction(str(sympy.simplify(expr * x ** (i - j))))


class TestH:
    def test_product_rule(self):
        assert D(2) * D(3) == D(5).scale(10)

    def test_comultiplication(self):
        assert comul(D(2)) == {(0, 2): 1, (1, 1): 1, (2, 0): 1}

    def test_antipode_signs(self):
        assert antipode_h(D(3)) == D(3).scale(-1)
        assert antipode_h(D(4)) == D(4)

    def test_counit(self):
        assert counit(D(0)) == 1 and counit(D(2)) == 0

    def test_parse_and_print(self):
        h = parse_h("D1 + 3*D2")
        assert str(h) == "D1 + 3*D2"
        assert parse_h(str(h)) == h

    @given(degrees, degrees)
    def test_product_is_binomial(self, i, j):
        assert D(i) * D(j) == D(i + j).scale(comb(i + j, i))

    @given(degrees)
    def test_antipode_involution(self, i):
        assert antipode_h(antipode_h(D(i))) == D(i)

    def test_full_report(self):
        report = hopf_axiom_report(6)
        assert report.passed
        assert [law.name for law in report.laws] == [
            "associativity", "commutativity", "unit", "coassociativity",
            "cocommutativity", "counit", "bialgebra", "antipode",
        ]

    def test_mutated_multiplication_is_caught(self):
        report = hopf_axiom_report(4, lambda i, j: 1)
        failed = {law.name: law.witness for law in report.laws if not law.passed}
        assert "bialgebra" in failed and failed["bialgebra"]


class TestK:
    def test_generalized_binomial(self):
        assert gbinom(-1, 3) == -1
        assert gbinom(5, 2) == 10
        assert gbinom(-2, 2) == 3

    def test_cli_example(self):
        assert str(act_on_k(parse_h("D2"), parse_k("x^3"))) == "3*x^1"

    def test_negative_exponent(self):
        assert str(act_on_k(parse_h("D1"), parse_k("x^-2 + 1/2*x^0"))) == "-2*x^-3"

    @pytest.mark.parametrize("i,j", [(0, 3), (1, -1), (2, -2), (3, 5), (4, -3), (6, 12), (2, 1)])
    def test_action_matches_derivative(self, i, j):
        got = act_on_k(D(i), KElem.monomial(j)).terms.get(j - i, 0)
        assert got == sympy_action(i, j)

    @given(degrees, degrees, exponents)
    def test_module_law(self, i, k, j):
        lhs = act_on_k(D(i), act_on_k(D(k), KElem.monomial(j)))
        rhs = act_on_k(D(i + k), KElem.monomial(j)).scale(comb(i + k, i))
        assert lhs.agrees(rhs)

    @given(degrees, exponents, exponents)
    def test_leibniz(self, i, a, b):
        if not -8 <= a + b <= 12:
            return
        x = KElem.monomial
        lhs = act_on_k(D(i), x(a) * x(b))
        rhs = KElem()
        for p in range(i + 1):
            rhs = rhs + act_on_k(D(p), x(a)) * act_on_k(D(i - p), x(b))
        assert lhs.agrees(rhs)

    @given(exponents)
    def test_antipode_involution(self, j):
        assert antipode_k(antipode_k(KElem.monomial(j))).agrees(KElem.monomial(j))

    def test_truncation_lowers_reliability(self):
        full = KElem({j: 1 for j in range(-2, 15)})
        assert full.reliable == 12
        assert act_on_k(D(2), full).reliable == 10

    def test_floor_is_enforced(self):
        with pytest.raises(WindowUnderflow):
            KElem({-9: 1})

    def test_action_widens_floor(self):
        r = act_on_k(D(3), KElem.monomial(-8))
        assert r.floor == 11 and r.terms == {-11: gbinom(-8, 3)}

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_k("x^^2")
