"""The divided-power Hopf algebra and its truncated Laurent-series module.

``H`` has basis ``D0, D1, D2, ...`` with ``Di*Dj = C(i+j, i) D(i+j)``; its
elementary vertex structure ``K`` is modelled by Laurent polynomials in ``x``
with a configurable pole floor and exponent ceiling.  All coefficients are
:class:`fractions.Fraction`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Callable, Iterable, Mapping

DEFAULT_FLOOR = 8
DEFAULT_CEILING = 12


class WindowUnderflow(ArithmeticError):
    """A Laurent exponent fell below the configured floor."""


def gbinom(j: int, i: int) -> Fraction:
    """Generalized binomial ``j(j-1)...(j-i+1)/i!`` for any integer ``j``."""
    if i < 0:
        return Fraction(0)
    num = 1
    for t in range(i):
        num *= j - t
    return Fraction(num, factorial(i))


def _clean(terms: Mapping) -> dict:
    return {k: Fraction(v) for k, v in terms.items() if v != 0}


def _fmt_coeff(c: Fraction, body: str, first: bool) -> str:
    sign = "-" if c < 0 else "+"
    mag = -c if c < 0 else c
    text = body if mag == 1 and body else (f"{mag}*{body}" if body else f"{mag}")
    if first:
        return text if sign == "+" else "-" + text
    return f" {sign} {text}"


# ------------------------------------------------------------------------- H


@dataclass(frozen=True)
class HElem:
    terms: Mapping[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", _clean(self.terms))

    @classmethod
    def gen(cls, i: int, coeff=1) -> HElem:
        return cls({i: Fraction(coeff)})

    @property
    def degree(self) -> int:
        return max(self.terms, default=-1)

    def __add__(self, other: HElem) -> HElem:
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return HElem(out)

    def __neg__(self) -> HElem:
        return HElem({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: HElem) -> HElem:
        return self + (-other)

    def scale(self, c) -> HElem:
        return HElem({k: v * c for k, v in self.terms.items()})

    def __mul__(self, other: HElem) -> HElem:
        return h_mul(self, other)

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        return "".join(
            _fmt_coeff(c, f"D{i}", n == 0) for n, (i, c) in enumerate(sorted(self.terms.items()))
        )


def binom_rule(i: int, j: int) -> Fraction:
    return Fraction(comb(i + j, i))


def h_mul(a: HElem, b: HElem, rule: Callable[[int, int], Fraction] = binom_rule) -> HElem:
    out: dict[int, Fraction] = {}
    for i, ca in a.terms.items():
        for j, cb in b.terms.items():
            out[i + j] = out.get(i + j, 0) + ca * cb * rule(i, j)
    return HElem(out)


def comul(a: HElem) -> dict[tuple[int, int], Fraction]:
    """Coproduct as a map ``(p, q) -> coefficient of Dp (x) Dq``."""
    out: dict[tuple[int, int], Fraction] = {}
    for i, c in a.terms.items():
        for p in range(i + 1):
            out[(p, i - p)] = out.get((p, i - p), 0) + c
    return _clean(out)


def counit(a: HElem) -> Fraction:
    return a.terms.get(0, Fraction(0))


def antipode_h(a: HElem) -> HElem:
    return HElem({i: c if i % 2 == 0 else -c for i, c in a.terms.items()})


_H_TERM = re.compile(r"\s*([+-])?\s*(?:(\d+(?:/\d+)?)\s*\*?\s*)?D(\d+)\s*")


def parse_h(text: str) -> HElem:
    """Parse e.g. ``"2*D2 + D0"``."""
    out: dict[int, Fraction] = {}
    pos = 0
    text = text.strip()
    if text == "0":
        return HElem()
    while pos < len(text):
        m = _H_TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse H element at offset {pos}: {text!r}")
        sign, coeff, idx = m.groups()
        c = Fraction(coeff) if coeff else Fraction(1)
        if sign == "-":
            c = -c
        out[int(idx)] = out.get(int(idx), 0) + c
        pos = m.end()
    return HElem(out)


# ------------------------------------------------------------------------- K


@dataclass(frozen=True)
class KElem:
    """Truncated Laurent series ``sum c_j x^j`` with ``-floor <= j <= ceiling``.

    ``reliable`` is the highest exponent whose coefficient is guaranteed
    unaffected by truncation, or ``None`` when nothing was ever dropped.
    """

    terms: Mapping[int, Fraction] = field(default_factory=dict)
    floor: int = DEFAULT_FLOOR
    ceiling: int = DEFAULT_CEILING
    reliable: int | None = None

    def __post_init__(self):
        terms = _clean(self.terms)
        low = min(terms, default=0)
        if low < -self.floor:
            raise WindowUnderflow(f"exponent {low} below floor -{self.floor}")
        rel = self.reliable
        kept = {j: c for j, c in terms.items() if j <= self.ceiling}
        if len(kept) != len(terms):
            rel = self.ceiling if rel is None else min(rel, self.ceiling)
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "reliable", rel)

    @classmethod
    def monomial(cls, j: int, coeff=1, floor: int = DEFAULT_FLOOR, ceiling: int = DEFAULT_CEILING) -> KElem:
        return cls({j: Fraction(coeff)}, floor, ceiling)

    @property
    def truncated(self) -> bool:
        return self.reliable is not None

    def _like(self, terms, reliable=None, floor=None) -> KElem:
        return KElem(terms, self.floor if floor is None else floor, self.ceiling, reliable)

    def __add__(self, other: KElem) -> KElem:
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return KElem(out, max(self.floor, other.floor), min(self.ceiling, other.ceiling),
                     _min_rel(self.reliable, other.reliable))

    def __neg__(self) -> KElem:
        return self._like({k: -v for k, v in self.terms.items()}, self.reliable)

    def __sub__(self, other: KElem) -> KElem:
        return self + (-other)

    def scale(self, c) -> KElem:
        return self._like({k: v * c for k, v in self.terms.items()}, self.reliable)

    def __mul__(self, other: KElem) -> KElem:
        return k_mul(self, other)

    def lowest(self) -> int | None:
        """Lowest exponent that may carry a nonzero coefficient."""
        cands = list(self.terms)
        if self.reliable is not None:
            cands.append(self.reliable + 1)
        return min(cands, default=None)

    def agrees(self, other: KElem) -> bool:
        """Equality on the exponents both operands know exactly."""
        rel = _min_rel(self.reliable, other.reliable)
        keys = set(self.terms) | set(other.terms)
        return all(
            self.terms.get(k, 0) == other.terms.get(k, 0) for k in keys if rel is None or k <= rel
        )

    def __str__(self) -> str:
        if not self.terms:
            body = "0"
        else:
            body = "".join(
                _fmt_coeff(c, f"x^{j}", n == 0) for n, (j, c) in enumerate(sorted(self.terms.items()))
            )
        if self.truncated:
            body += f" + O(x^{self.reliable + 1})"
        return body


def _min_rel(a: int | None, b: int | None) -> int | None:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def k_mul(a: KElem, b: KElem) -> KElem:
    out: dict[int, Fraction] = {}
    for i, ca in a.terms.items():
        for j, cb in b.terms.items():
            out[i + j] = out.get(i + j, 0) + ca * cb
    rel = None
    lo_a, lo_b = a.lowest(), b.lowest()
    if a.reliable is not None and lo_b is not None:
        rel = a.reliable + lo_b
    if b.reliable is not None and lo_a is not None:
        rel = _min_rel(rel, b.reliable + lo_a)
    floor = max(a.floor, b.floor, -min((j for j, c in out.items() if c), default=0))
    return KElem(out, floor, min(a.ceiling, b.ceiling), rel)


def act_on_k(h: HElem, k: KElem) -> KElem:
    """``D(i) x^j = gbinom(j, i) x^(j-i)``.

    The floor widens to hold the lowered exponents; reliability drops by the
    top degree of ``h``.
    """
    out: dict[int, Fraction] = {}
    for i, ch in h.terms.items():
        for j, ck in k.terms.items():
            c = ch * ck * gbinom(j, i)
            if c:
                out[j - i] = out.get(j - i, 0) + c
    floor = max(k.floor, -min(out, default=0))
    rel = None if k.reliable is None else k.reliable - max(h.terms, default=0)
    return KElem(out, floor, k.ceiling, rel)


def antipode_k(k: KElem) -> KElem:
    return k._like({j: c if j % 2 == 0 else -c for j, c in k.terms.items()}, k.reliable)


_K_TERM = re.compile(r"\s*([+-])?\s*(?:(\d+(?:/\d+)?)\s*\*?\s*)?(x(?:\^(-?\d+))?)?\s*")


def parse_k(text: str, floor: int = DEFAULT_FLOOR, ceiling: int = DEFAULT_CEILING) -> KElem:
    """Parse e.g. ``"3/2*x^-2 + x^0 - 5*x^3"``."""
    out: dict[int, Fraction] = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _K_TERM.match(text, pos)
        sign, coeff, var, exp = m.groups() if m else (None,) * 4
        if not m or m.end() == pos or (coeff is None and var is None):
            raise ValueError(f"cannot parse K element at offset {pos}: {text!r}")
        c = Fraction(coeff) if coeff else Fraction(1)
        if sign == "-":
            c = -c
        j = 0 if var is None else (1 if exp is None else int(exp))
        out[j] = out.get(j, 0) + c
        pos = m.end()
    return KElem(out, floor, ceiling)


# --------------------------------------------------------------- axiom report


@dataclass
class LawResult:
    name: str
    passed: bool
    witness: str | None = None


@dataclass
class HopfReport:
    max_degree: int
    laws: list[LawResult]

    @property
    def passed(self) -> bool:
        return all(law.passed for law in self.laws)

    def lines(self) -> list[str]:
        return [
            f"{'PASS' if law.passed else 'FAIL'} {law.name}" + (f"  witness: {law.witness}" if law.witness else "")
            for law in self.laws
        ]


def _tensor_mul(x: Mapping, y: Mapping, rule) -> dict:
    out: dict = {}
    for (a1, a2), c in x.items():
        for (b1, b2), d in y.items():
            key = (a1 + b1, a2 + b2)
            out[key] = out.get(key, 0) + c * d * rule(a1, b1) * rule(a2, b2)
    return _clean(out)


def hopf_axiom_report(
    max_degree: int, rule: Callable[[int, int], Fraction] = binom_rule
) -> HopfReport:
    """Check the Hopf-algebra laws exactly on generators ``D0 .. D(max_degree)``.

    ``rule(i, j)`` is the structure constant of ``Di*Dj``; pass a different
    one to probe a mutated multiplication.
    """
    gens = range(max_degree + 1)
    D = HElem.gen
    mul = lambda a, b: h_mul(a, b, rule)  # noqa: E731
    laws: list[LawResult] = []

    def law(name: str, cases: Iterable[tuple[str, bool]]) -> None:
        for label, ok in cases:
            if not ok:
                laws.append(LawResult(name, False, label))
                return
        laws.append(LawResult(name, True))

    law("associativity", (
        (f"(D{i}D{j})D{k}", mul(mul(D(i), D(j)), D(k)) == mul(D(i), mul(D(j), D(k))))
        for i in gens for j in gens for k in gens
    ))
    law("commutativity", ((f"D{i}D{j}", mul(D(i), D(j)) == mul(D(j), D(i))) for i in gens for j in gens))
    law("unit", ((f"D0D{i}", mul(D(0), D(i)) == D(i) == mul(D(i), D(0))) for i in gens))

    def coassoc(i: int) -> bool:
        left: dict = {}
        right: dict = {}
        for (p, q), c in comul(D(i)).items():
            for (p1, p2), d in comul(D(p)).items():
                left[(p1, p2, q)] = left.get((p1, p2, q), 0) + c * d
            for (q1, q2), d in comul(D(q)).items():
                right[(p, q1, q2)] = right.get((p, q1, q2), 0) + c * d
        return _clean(left) == _clean(right)

    law("coassociativity", ((f"D{i}", coassoc(i)) for i in gens))
    law("cocommutativity", (
        (f"D{i}", comul(D(i)) == {(q, p): c for (p, q), c in comul(D(i)).items()}) for i in gens
    ))

    def counit_law(i: int) -> bool:
        left = HElem({q: c * counit(D(p)) for (p, q), c in comul(D(i)).items() if p == 0})
        right = HElem({p: c * counit(D(q)) for (p, q), c in comul(D(i)).items() if q == 0})
        return left == D(i) == right

    law("counit", ((f"D{i}", counit_law(i)) for i in gens))
    law("bialgebra", (
        (f"Delta(D{i}D{j})", comul(mul(D(i), D(j))) == _tensor_mul(comul(D(i)), comul(D(j)), rule)
         and counit(mul(D(i), D(j))) == counit(D(i)) * counit(D(j)))
        for i in gens for j in gens
    ))

    def antipode_law(i: int) -> bool:
        left = HElem()
        right = HElem()
        for (p, q), c in comul(D(i)).items():
            left = left + mul(antipode_h(D(p)), D(q)).scale(c)
            right = right + mul(D(p), antipode_h(D(q))).scale(c)
        expected = D(0).scale(counit(D(i)))
        return left == expected == right

    law("antipode", ((f"D{i}", antipode_law(i)) for i in gens))
    return HopfReport(max_degree, laws)
