"""Module-valued truncated series with poles along variable differences.

A term is ``coeff * basis * prod (x_u - x_v)^(-k) * prod x_w^e``.  Poles are
kept symbolic; :func:`expand` rewrites them as geometric series in a chosen
dominance order.  Truncation acts on a weighted degree of the monomial part
only (``sum weight[v] * e_v``); terms above ``ceiling`` are dropped and the
``reliable`` bound records up to which weight the coefficients are exact.
"""

from __future__ import annotations

import re
from functools import lru_cache
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Callable, Hashable, Iterable, Mapping, Sequence

from .hopf import DEFAULT_FLOOR, HElem, WindowUnderflow, gbinom

SERIES_CEILING = 6

Poles = tuple[tuple[tuple[str, str], int], ...]
Mono = tuple[tuple[str, int], ...]
Key = tuple[Poles, Mono, Hashable]
LinearForm = Mapping[str, int]


class PoleCollapse(ValueError):
    """A substitution sent a pole onto the diagonal (or off the difference form)."""


_NUM = re.compile(r"(\d+)")


@lru_cache(maxsize=None)
def var_key(name: str) -> tuple:
    return tuple(int(p) if p.isdigit() else p for p in _NUM.split(name))


def sort_vars(names: Iterable[str]) -> tuple[str, ...]:
    return tuple(sorted(set(names), key=var_key))


def _norm_pole(u: str, v: str, k: int) -> tuple[tuple[str, str], int, int]:
    """Return ``((a, b), k, sign)`` with ``a < b`` canonically."""
    if u == v:
        raise PoleCollapse(f"pole at zero: ({u} - {v})")
    if var_key(u) < var_key(v):
        return (u, v), k, 1
    return (v, u), k, -1 if k % 2 else 1


def _merge(pairs: Iterable[tuple[object, int]]) -> tuple:
    pairs = tuple(pairs)
    if len(pairs) <= 1:
        return pairs if not pairs or pairs[0][1] else ()
    acc: dict = {}
    for name, e in pairs:
        acc[name] = acc.get(name, 0) + e
    return tuple(sorted(((n, e) for n, e in acc.items() if e), key=lambda t: _sort_name(t[0])))


@lru_cache(maxsize=None)
def _sort_name(n):
    if isinstance(n, tuple):
        return (var_key(n[0]), var_key(n[1]))
    return var_key(n)


def as_number(c):
    """Exact rational, stored as ``int`` when integral (cheaper arithmetic)."""
    if type(c) is int:
        return c
    f = Fraction(c)
    return f.numerator if f.denominator == 1 else f


def _trusted(terms: dict, variables: tuple, ceiling: int, floor: int, weights: Mapping,
             reliable: int | None) -> SingularSeries:
    """Skip normalization: keys canonical, coefficients nonzero, weights within ceiling."""
    obj = object.__new__(SingularSeries)
    for name, val in (("terms", terms), ("variables", variables), ("ceiling", ceiling), ("floor", floor),
                      ("weights", weights), ("reliable", reliable)):
        object.__setattr__(obj, name, val)
    return obj


def _union(a: tuple, b: tuple) -> tuple:
    if a == b or not b:
        return a
    if not a:
        return b
    return sort_vars(a + b)


def _min_rel(a: int | None, b: int | None) -> int | None:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


@dataclass(frozen=True, eq=False)
class SingularSeries:
    terms: Mapping[Key, Fraction] = field(default_factory=dict)
    variables: tuple[str, ...] = ()
    ceiling: int = SERIES_CEILING
    floor: int = DEFAULT_FLOOR
    weights: Mapping[str, int] = field(default_factory=dict)
    reliable: int | None = None

    def __post_init__(self):
        names = set(self.variables)
        kept: dict[Key, Fraction] = {}
        rel = self.reliable
        for (poles, mono, basis), c in self.terms.items():
            if c == 0:
                continue
            for (u, v), k in poles:
                names.update((u, v))
                if k > self.floor:
                    raise WindowUnderflow(f"pole order {k} exceeds Laurent depth {self.floor}")
            names.update(n for n, _ in mono)
            mono = _merge(mono)
            if self._weight(mono) > self.ceiling:
                rel = self.ceiling if rel is None else min(rel, self.ceiling)
                continue
            key = (_merge(poles), mono, basis)
            total = kept.get(key, 0) + as_number(c)
            if total:
                kept[key] = total
            else:
                kept.pop(key, None)
        object.__setattr__(self, "terms", kept)
        object.__setattr__(self, "variables", sort_vars(names))
        object.__setattr__(self, "reliable", rel)

    # ---------------------------------------------------------- construction

    def _weight(self, mono: Mono) -> int:
        return sum(self.weights.get(n, 1) * e for n, e in mono)

    def weight(self, key: Key) -> int:
        return self._weight(key[1])

    def like(self, terms: Mapping[Key, Fraction], reliable: int | None = "same", variables=None,
             weights=None) -> SingularSeries:
        return SingularSeries(
            terms,
            self.variables if variables is None else variables,
            self.ceiling,
            self.floor,
            self.weights if weights is None else weights,
            self.reliable if reliable == "same" else reliable,
        )

    @classmethod
    def constant(cls, c=1, basis: Hashable = None, variables: Sequence[str] = (), **window) -> SingularSeries:
        return cls({((), (), basis): Fraction(c)}, tuple(variables), **window)

    @classmethod
    def zero(cls, variables: Sequence[str] = (), **window) -> SingularSeries:
        return cls({}, tuple(variables), **window)

    @classmethod
    def monomial(cls, exps: Mapping[str, int], c=1, basis: Hashable = None, variables=(), **window):
        return cls({((), _merge(exps.items()), basis): Fraction(c)}, tuple(variables) or tuple(exps), **window)

    @classmethod
    def pole(cls, u: str, v: str, k: int = 1, c=1, basis: Hashable = None, variables=(), **window):
        """``c * (x_u - x_v)^(-k)``."""
        pair, k, sign = _norm_pole(u, v, k)
        return cls({(((pair, k),), (), basis): Fraction(c) * sign}, tuple(variables) or (u, v), **window)

    @property
    def window(self) -> dict:
        return {"ceiling": self.ceiling, "floor": self.floor}

    # --------------------------------------------------------------- queries

    @property
    def truncated(self) -> bool:
        return self.reliable is not None

    def is_pole_free(self) -> bool:
        return all(not poles for poles, _, _ in self.terms)

    def pole_pairs(self) -> set[tuple[str, str]]:
        return {pair for poles, _, _ in self.terms for pair, _ in poles}

    def depends_on(self, v: str) -> bool:
        for poles, mono, _ in self.terms:
            if any(n == v for n, _ in mono) or any(v in pair for pair, _ in poles):
                return True
        return False

    def bases(self) -> set:
        return {b for _, _, b in self.terms}

    def lowest_weight(self) -> int | None:
        ws = [self.weight(k) for k in self.terms]
        if self.reliable is not None:
            ws.append(self.reliable + 1)
        return min(ws, default=None)

    def coefficient(self, mono: Mapping[str, int] = {}, basis: Hashable = None, poles=()) -> Fraction:
        return self.terms.get((tuple(poles), _merge(mono.items()), basis), Fraction(0))

    def __bool__(self) -> bool:
        return bool(self.terms)

    # ------------------------------------------------------------ arithmetic

    def _compat(self, other: SingularSeries) -> dict:
        weights = dict(other.weights)
        weights.update(self.weights)
        return {
            "ceiling": min(self.ceiling, other.ceiling),
            "floor": max(self.floor, other.floor),
            "weights": weights,
        }

    def __add__(self, other: SingularSeries) -> SingularSeries:
        out = dict(self.terms)
        for k, c in other.terms.items():
            t = out.get(k, 0) + c
            if t:
                out[k] = t
            else:
                del out[k]
        rel = _min_rel(self.reliable, other.reliable)
        if self.ceiling == other.ceiling and self.weights == other.weights:
            return _trusted(out, _union(self.variables, other.variables), self.ceiling,
                            max(self.floor, other.floor), self.weights, rel)
        return SingularSeries(out, self.variables + other.variables, reliable=rel, **self._compat(other))

    def __neg__(self) -> SingularSeries:
        return self.scale(-1)

    def __sub__(self, other: SingularSeries) -> SingularSeries:
        return self + (-other)

    def scale(self, c) -> SingularSeries:
        if c == 0:
            return self.like({})
        return _trusted({k: v * c for k, v in self.terms.items()}, self.variables, self.ceiling, self.floor,
                        self.weights, self.reliable)

    def __mul__(self, other: SingularSeries) -> SingularSeries:
        out: dict[Key, Fraction] = {}
        win = self._compat(other)
        ceiling, weights = win["ceiling"], win["weights"]
        wt = lambda mono: sum(weights.get(n, 1) * e for n, e in mono)  # noqa: E731
        rel = None
        lo_a, lo_b = self.lowest_weight(), other.lowest_weight()
        if self.reliable is not None and lo_b is not None:
            rel = self.reliable + lo_b
        if other.reliable is not None and lo_a is not None:
            rel = _min_rel(rel, other.reliable + lo_a)
        dropped = False
        right = [(pb, mb, bb, cb, wt(mb)) for (pb, mb, bb), cb in other.terms.items()]
        for (pa, ma, ba), ca in self.terms.items():
            wa = wt(ma)
            for pb, mb, bb, cb, wb in right:
                if wa + wb > ceiling:
                    dropped = True
                    continue
                if ba is not None and bb is not None:
                    raise TypeError("cannot multiply two module-valued series")
                mono = _merge(ma + mb) if ma and mb else ma or mb
                poles = _merge(pa + pb) if pa and pb else pa or pb
                key = (poles, mono, ba if ba is not None else bb)
                out[key] = out.get(key, 0) + ca * cb
        if dropped:
            rel = _min_rel(rel, ceiling)
        out = {k: c for k, c in out.items() if c}
        for poles, _, _ in out:
            for _, k in poles:
                if k > win["floor"]:
                    raise WindowUnderflow(f"pole order {k} exceeds Laurent depth {win['floor']}")
        return _trusted(out, _union(self.variables, other.variables), ceiling, win["floor"], weights, rel)

    def with_basis(self, basis: Hashable) -> SingularSeries:
        out: dict[Key, Fraction] = {}
        for (p, m, b), c in self.terms.items():
            if b is not None:
                raise TypeError("series is already module-valued")
            out[(p, m, basis)] = out.get((p, m, basis), 0) + c
        return self.like(out)

    def map_basis(self, f: Callable[[Hashable], Mapping[Hashable, Fraction]]) -> SingularSeries:
        """Apply a linear map to the coefficient module."""
        out: dict[Key, Fraction] = {}
        for (p, m, b), c in self.terms.items():
            for nb, d in f(b).items():
                key = (p, m, nb)
                out[key] = out.get(key, 0) + c * d
        return _trusted({k: c for k, c in out.items() if c}, self.variables, self.ceiling, self.floor,
                        self.weights, self.reliable)

    def by_basis(self) -> dict[Hashable, SingularSeries]:
        parts: dict[Hashable, dict] = {}
        for (p, m, b), c in self.terms.items():
            parts.setdefault(b, {})[(p, m, None)] = c
        return {b: _trusted(t, self.variables, self.ceiling, self.floor, self.weights, self.reliable)
                for b, t in parts.items()}

    def over(self, names: Iterable[str]) -> SingularSeries:
        """Same series with its variable set widened to ``names``."""
        return _trusted(self.terms, sort_vars(tuple(names) + self.variables), self.ceiling, self.floor,
                        self.weights, self.reliable)

    def truncate(self, ceiling: int) -> SingularSeries:
        return SingularSeries(self.terms, self.variables, ceiling, self.floor, self.weights,
                              _min_rel(self.reliable, ceiling) if ceiling < self.ceiling else self.reliable)

    def reweighted(self, weights: Mapping[str, int], ceiling: int | None = None) -> SingularSeries:
        """Same terms under new truncation weights; only valid for exact series."""
        if self.truncated:
            raise ValueError("cannot reweight a truncated series")
        return SingularSeries(self.terms, self.variables, self.ceiling if ceiling is None else ceiling,
                              self.floor, dict(weights), None)

    # --------------------------------------------------------------- display

    def __str__(self) -> str:
        if not self.terms:
            s = "0"
        else:
            parts = []
            for (poles, mono, basis), c in sorted(self.terms.items(), key=_term_order):
                body = "*".join(
                    [f"({u}-{v})^-{k}" for (u, v), k in poles]
                    + [f"{n}^{e}" if e != 1 else n for n, e in mono]
                    + ([f"[{basis}]"] if basis is not None else [])
                )
                parts.append((c, body))
            s = ""
            for i, (c, body) in enumerate(parts):
                mag = abs(c)
                text = body if mag == 1 and body else (f"{mag}*{body}" if body else str(mag))
                if i == 0:
                    s = text if c > 0 else "-" + text
                else:
                    s += (" + " if c > 0 else " - ") + text
        if self.truncated:
            s += f" + O(w>{self.reliable})"
        return s

    __repr__ = __str__


def _term_order(item):
    (poles, mono, basis), _ = item
    return (repr(basis), [(_sort_name(n), -k) for n, k in poles], [(var_key(n), e) for n, e in mono])


# -------------------------------------------------------------- comparison


def _reliable_diff(a: SingularSeries, b: SingularSeries):
    """First key (in display order) where ``a`` and ``b`` differ inside both reliable windows."""
    def inside(s: SingularSeries, key: Key) -> bool:
        return s.reliable is None or s.weight(key) <= s.reliable

    bad = []
    zero = 0
    for key in a.terms.keys() | b.terms.keys():
        ca, cb = a.terms.get(key, zero), b.terms.get(key, zero)
        if ca != cb and inside(a, key) and inside(b, key):
            bad.append(key)
    if not bad:
        return None
    key = min(bad, key=lambda k: _term_order((k, 0)))
    return key, Fraction(a.terms.get(key, 0)), Fraction(b.terms.get(key, 0))


def same_on_window(a: SingularSeries, b: SingularSeries) -> bool:
    """Termwise equality on the reliable window, no expansion."""
    return _reliable_diff(a, b) is None


def default_order(*series: SingularSeries) -> tuple[str, ...]:
    return sort_vars(v for s in series for v in s.variables)


def clear_denominators(s: SingularSeries, orders: Mapping[tuple[str, str], int]) -> SingularSeries:
    """Multiply by ``prod (x_u - x_v)^k``; the result must be pole-free."""
    out = SingularSeries({}, s.variables, s.ceiling, s.floor, s.weights, s.reliable)
    for (poles, mono, basis), c in s.terms.items():
        have = dict(poles)
        term = SingularSeries({((), mono, basis): c}, s.variables, s.ceiling, s.floor, s.weights)
        for pair, k in orders.items():
            left = k - have.pop(pair, 0)
            if left < 0:
                raise ValueError(f"pole {pair} of order {-left} beyond the cleared order")
            if left:
                term = term * _power_of_form({pair[0]: 1, pair[1]: -1}, left, set(), term, 0)
        if have:
            raise ValueError(f"uncleared poles {sorted(have)}")
        out = out + term
    return out


def equivalent(a: SingularSeries, b: SingularSeries, order: Sequence[str] | None = None) -> bool:
    """Equality as functions on the shared reliable window."""
    if a.is_pole_free() and b.is_pole_free():
        return same_on_window(a, b)
    if not a.truncated and not b.truncated:
        o = tuple(order) if order else default_order(a, b)
        return same_on_window(expand(a, o), expand(b, o))
    orders: dict = {}
    for s in (a, b):
        for poles, _, _ in s.terms:
            for pair, k in poles:
                orders[pair] = max(orders.get(pair, 0), k)
    return same_on_window(clear_denominators(a, orders), clear_denominators(b, orders))


def disagreement(s1: SingularSeries, s2: SingularSeries, orders: Iterable[Sequence[str]]):
    """``None`` when all expansions agree, else ``(order, key, c1, c2)``."""
    for order in orders:
        order = tuple(order)
        d = _reliable_diff(expand(s1, order), expand(s2, order))
        if d is not None:
            return (order,) + d
    return None


def agree_after_expansion(s1: SingularSeries, s2: SingularSeries, orders: Iterable[Sequence[str]]) -> bool:
    return disagreement(s1, s2, orders) is None


# ---------------------------------------------------------------- expansion


def _pole_expansion(dom: str, sub: str, k: int, sign: int, pos: Mapping[str, int], ceiling: int,
                    floor: int) -> SingularSeries:
    """``sign * (x_dom - x_sub)^(-k)`` as a series in ``x_sub / x_dom``."""
    weights = dict(pos)
    out: dict[Key, Fraction] = {}
    step = pos[sub] - pos[dom]
    base = -k * pos[dom]
    if step <= 0:
        raise ValueError("dominant variable must precede the subordinate one")
    truncated = False
    n = 0
    while True:
        w = base + n * step
        if w > ceiling:
            truncated = True
            break
        mono = _merge([(dom, -k - n), (sub, n)])
        out[((), mono, None)] = Fraction(sign) * gbinom(n + k - 1, n)
        n += 1
    return SingularSeries(out, (dom, sub), ceiling, max(floor, k + n), weights,
                          ceiling if truncated else None)


def expand(s: SingularSeries, order: Sequence[str]) -> SingularSeries:
    """Expand every pole with the earlier variable of ``order`` dominant.

    The result is pole-free and weighted by position in ``order``
    (outermost variable has weight 0).  Pole-free input is returned as is.
    """
    order = tuple(order)
    missing = set(s.variables) - set(order)
    if missing:
        raise ValueError(f"expansion order misses variables {sorted(missing)}")
    if s.is_pole_free():
        return s
    pos = {v: i for i, v in enumerate(order)}
    if s.truncated:
        raise ValueError("cannot expand a truncated series that still has poles")
    big = max(s.floor, 4 * s.ceiling + 4 * len(order) + 8)
    total = SingularSeries({}, order, s.ceiling, big, pos, s.reliable)
    cache: dict = {}
    for (poles, mono, basis), c in s.terms.items():
        term = SingularSeries({((), mono, basis): c}, order, s.ceiling, big, pos)
        for (u, v), k in poles:
            if (u, v, k) not in cache:
                if pos[u] < pos[v]:
                    cache[(u, v, k)] = _pole_expansion(u, v, k, 1, pos, s.ceiling, big)
                else:
                    cache[(u, v, k)] = _pole_expansion(v, u, k, -1 if k % 2 else 1, pos, s.ceiling, big)
            term = term * cache[(u, v, k)]
        total = total + term
    return total


def formal_delta(u: str, v: str, ceiling: int = SERIES_CEILING) -> SingularSeries:
    """``expand((x_u - x_v)^-1, u first) - expand(same, v first)``.

    Exact on the box where both exponents are at most ``ceiling``.
    """
    pole = SingularSeries.pole(u, v, 1, ceiling=ceiling)
    e1, e2 = expand(pole, (u, v)), expand(pole, (v, u))
    return SingularSeries({**e1.terms, **{k: -c for k, c in e2.terms.items()}}, (u, v), ceiling,
                          max(e1.floor, e2.floor), {u: 0, v: 0})


def delta_residue(u: str, v: str, ceiling: int = SERIES_CEILING) -> dict:
    """Nonzero coefficients of ``(x_u - x_v) * delta`` inside the exact box."""
    d = formal_delta(u, v, ceiling)
    out: dict = {}
    for (_, mono, _), c in d.terms.items():
        e = dict(mono)
        for var, sign in ((u, 1), (v, -1)):
            shifted = dict(e)
            shifted[var] = shifted.get(var, 0) + 1
            key = (shifted.get(u, 0), shifted.get(v, 0))
            out[key] = out.get(key, 0) + sign * c
    return {k: c for k, c in out.items() if c and k[0] <= ceiling and k[1] <= ceiling}


# ------------------------------------------------------------- substitution


def _form_series(form: LinearForm, template: SingularSeries) -> SingularSeries:
    terms = {}
    for v, c in form.items():
        if c:
            terms[((), ((v, 1),), None)] = Fraction(c)
    return SingularSeries(terms, tuple(form), template.ceiling, template.floor, template.weights)


def _split(form: Mapping[str, int], small: set[str]) -> tuple[dict, dict]:
    big = {v: c for v, c in form.items() if c and v not in small}
    rest = {v: c for v, c in form.items() if c and v in small}
    return big, rest


def _power_of_form(form: Mapping[str, int], e: int, small: set[str], tmpl: SingularSeries,
                   n_max: int) -> SingularSeries:
    """``(sum c_v x_v)^e`` for ``e >= 0`` exactly, or via expansion in the small part."""
    one = SingularSeries({((), (), None): Fraction(1)}, (), tmpl.ceiling, tmpl.floor, tmpl.weights)
    if e >= 0:
        out = one
        base = _form_series(form, tmpl)
        for _ in range(e):
            out = out * base
        return out
    big, rest = _split(form, small)
    if len(big) != 1 or list(big.values())[0] not in (1, -1):
        raise PoleCollapse(f"negative power of {dict(form)} has no single dominant variable")
    (b, sgn), = big.items()
    return _taylor(lambda j: SingularSeries({((), ((b, j),), None): Fraction(sgn) ** j}, (b,),
                                            tmpl.ceiling, tmpl.floor, tmpl.weights),
                   e, rest, tmpl, n_max)


def _taylor(base_power: Callable[[int], SingularSeries], e: int, rest: Mapping[str, int],
            tmpl: SingularSeries, n_max: int) -> SingularSeries:
    """``(B + delta)^e = sum_n gbinom(e, n) B^(e-n) delta^n`` up to ``n_max``."""
    if not rest:
        return base_power(e)
    delta = _form_series(rest, tmpl)
    out = SingularSeries({}, (), tmpl.ceiling, tmpl.floor, tmpl.weights)
    dpow = SingularSeries({((), (), None): Fraction(1)}, (), tmpl.ceiling, tmpl.floor, tmpl.weights)
    for n in range(n_max + 1):
        coef = gbinom(e, n)
        if coef:
            out = out + (base_power(e - n) * dpow).scale(coef)
        dpow = dpow * delta
        if not dpow.terms and not dpow.truncated:
            return out
    return SingularSeries(out.terms, out.variables, out.ceiling, out.floor, out.weights,
                          _min_rel(out.reliable, tmpl.ceiling))


def _pole_of_form(form: Mapping[str, int], k: int, small: set[str], tmpl: SingularSeries,
                  n_max: int) -> SingularSeries:
    big, rest = _split(form, small)
    if not big:
        raise PoleCollapse(f"pole at zero after substitution: {dict(form)}")
    if len(big) == 1 and list(big.values())[0] in (1, -1):
        # the difference collapsed onto one variable: a plain Laurent monomial
        (w, sgn), = big.items()
        return _taylor(lambda j: SingularSeries({((), ((w, j),) if j else (), None): Fraction(sgn) ** j}, (w,),
                                                tmpl.ceiling, max(tmpl.floor, -j), tmpl.weights),
                       -k, rest, tmpl, n_max)
    pos = [v for v, c in big.items() if c == 1]
    neg = [v for v, c in big.items() if c == -1]
    if len(big) != 2 or len(pos) != 1 or len(neg) != 1:
        raise PoleCollapse(f"pole {dict(form)} is not a difference of two variables")
    u, v = pos[0], neg[0]

    def base_power(j: int) -> SingularSeries:
        if j >= 0:
            return _power_of_form({u: 1, v: -1}, j, set(), tmpl, 0)
        pair, kk, sign = _norm_pole(u, v, -j)
        return SingularSeries({(((pair, kk),), (), None): Fraction(sign)}, (u, v), tmpl.ceiling,
                              max(tmpl.floor, kk), tmpl.weights)

    return _taylor(base_power, -k, rest, tmpl, n_max)


_BITS = 8  # exponent digit width for packed monomials


def _pack(mono: Mono, index: Mapping[str, int]) -> int:
    return sum(e << (_BITS * index[n]) for n, e in mono)


def _unpack(code: int, names: Sequence[str]) -> Mono:
    out = []
    mask = (1 << _BITS) - 1
    i = 0
    while code:
        e = code & mask
        if e:
            out.append((names[i], e))
        code >>= _BITS
        i += 1
    return tuple(out)


@lru_cache(maxsize=4096)
def _packed_power(form: tuple, e: int) -> tuple:
    """``(sum c_i t_i)^e`` with monomials packed as ints; ``form`` holds ``(shift, coeff)``."""
    if e == 0:
        return ((0, 1),)
    out: dict = {}
    for m, c in _packed_power(form, e - 1):
        for shift, cv in form:
            key = m + shift
            out[key] = out.get(key, 0) + c * cv
    return tuple((k, c) for k, c in out.items() if c)


def _substitute_polynomial(s: SingularSeries, mapping: Mapping[str, LinearForm], names: tuple) -> SingularSeries:
    """Pole-free, unit-weight case: substitution preserves total degree, so no truncation occurs."""
    index = {n: i for i, n in enumerate(names)}
    forms = {v: tuple(sorted((1 << (_BITS * index[w]), c) for w, c in f.items() if c)) for v, f in mapping.items()}
    out: dict = {}
    for (_, mono, basis), c in s.terms.items():
        acc = {0: c}
        for v, e in mono:
            form = forms.get(v)
            if form is None:
                form = ((1 << (_BITS * index[v]), 1),)
            power = _packed_power(form, e)
            if len(power) == 1:
                (shift, cp), = power
                acc = {m + shift: x * cp for m, x in acc.items()}
                continue
            nxt: dict = {}
            for m1, x1 in acc.items():
                for m2, x2 in power:
                    key = m1 + m2
                    nxt[key] = nxt.get(key, 0) + x1 * x2
            acc = nxt
        for m, x in acc.items():
            if x:
                key = (m, basis)
                out[key] = out.get(key, 0) + x
    terms = {((), _unpack(m, names), b): x for (m, b), x in out.items() if x}
    return _trusted(terms, names, s.ceiling, s.floor, s.weights, s.reliable)


def substitute_linear(s: SingularSeries, mapping: Mapping[str, LinearForm], small: Iterable[str] = (),
                      variables: Sequence[str] | None = None) -> SingularSeries:
    """Substitute ``x_v -> sum c_w x_w`` for each ``v`` in ``mapping``.

    Poles or negative powers whose image is not of the stored form are
    re-expanded in the variables listed in ``small``.
    """
    small = set(small)
    if variables is not None and not s.weights and s.is_pole_free():
        names = sort_vars(variables)
        known = set(names)
        if all(set(f) <= known for f in mapping.values()) and all(
            0 < e < (1 << _BITS) // 2 and (v in mapping or v in known)
            for _, mono, _ in s.terms for v, e in mono
        ) and s.ceiling < (1 << _BITS) // 2:
            return _substitute_polynomial(s, mapping, names)
    big_floor = max(s.floor, s.ceiling + s.floor + 1)
    tmpl = SingularSeries({}, (), s.ceiling, big_floor, s.weights)
    n_max = s.ceiling
    ident = lambda v: {v: 1}  # noqa: E731
    total = SingularSeries({}, (), s.ceiling, big_floor, s.weights, s.reliable)
    cache: dict = {}
    for (poles, mono, basis), c in s.terms.items():
        term = SingularSeries({((), (), basis): c}, (), s.ceiling, big_floor, s.weights)
        for (u, v), k in poles:
            fu, fv = mapping.get(u, ident(u)), mapping.get(v, ident(v))
            form = dict(fu)
            for w, cc in fv.items():
                form[w] = form.get(w, 0) - cc
            ck = ("p", tuple(sorted(form.items())), k)
            if ck not in cache:
                cache[ck] = _pole_of_form(form, k, small, tmpl, n_max)
            term = term * cache[ck]
        for v, e in mono:
            form = mapping.get(v, ident(v))
            ck = ("m", tuple(sorted(form.items())), e)
            if ck not in cache:
                cache[ck] = _power_of_form(form, e, small, tmpl, n_max)
            term = term * cache[ck]
        total = total + term
    names = variables if variables is not None else (
        [v for v in s.variables if v not in mapping] + [w for f in mapping.values() for w in f]
    )
    return SingularSeries(total.terms, tuple(names), s.ceiling, s.floor, s.weights, total.reliable)


def substitute(s: SingularSeries, v: str, replacement: LinearForm | str, small: Iterable[str] = ()) -> SingularSeries:
    """Substitute one variable; ``replacement`` is a linear form or ``"u+z"``-style text."""
    form = parse_form(replacement) if isinstance(replacement, str) else dict(replacement)
    return substitute_linear(s, {v: form}, small)


_FORM = re.compile(r"\s*([+-]?)\s*(\d*)\s*\*?\s*([A-Za-z_]\w*)\s*")


def parse_form(text: str) -> dict[str, int]:
    out: dict[str, int] = {}
    pos = 0
    text = text.strip()
    if text == "0":
        return {}
    while pos < len(text):
        m = _FORM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse linear form {text!r} at offset {pos}")
        sign, mag, name = m.groups()
        c = int(mag) if mag else 1
        out[name] = out.get(name, 0) + (-c if sign == "-" else c)
        pos = m.end()
    return out


_FACTOR = re.compile(
    r"\s*(?:\((?P<u>[A-Za-z_]\w*)\s*-\s*(?P<v>[A-Za-z_]\w*)\)(?:\^(?P<pe>-?\d+))?"
    r"|(?P<num>\d+(?:/\d+)?)"
    r"|(?P<var>[A-Za-z_]\w*)(?:\^(?P<ve>-?\d+))?"
    r"|\[(?P<basis>\d+)\])\s*"
)
_TAIL = re.compile(r"\+\s*O\(w>(-?\d+)\)\s*$")


def parse_series(text: str, variables: Sequence[str] = (), ceiling: int = SERIES_CEILING,
                 floor: int = DEFAULT_FLOOR) -> SingularSeries:
    """Read the display format back, e.g. ``"3/2*x1^2*(x1-x2)^-1 - [1]"``.

    A trailing ``+ O(w>r)`` marks the reliable window.
    """
    text = text.strip()
    reliable = None
    tail = _TAIL.search(text)
    if tail:
        reliable = int(tail.group(1))
        text = text[: tail.start()].rstrip()
    window = {"ceiling": ceiling, "floor": floor}
    total = SingularSeries({}, tuple(variables), **window)
    pos, sign = 0, 1
    if text in ("", "0"):
        return total.like({}, reliable)
    while pos < len(text):
        while pos < len(text) and text[pos] in " +-":
            if text[pos] == "-":
                sign = -sign
            pos += 1
        term = SingularSeries.constant(sign, **window)
        basis = None
        while True:
            m = _FACTOR.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"cannot parse series {text!r} at offset {pos}")
            pos = m.end()
            g = m.groupdict()
            if g["u"]:
                e = int(g["pe"] or 1)
                if e < 0:
                    factor = SingularSeries.pole(g["u"], g["v"], -e, **window)
                else:
                    diff = SingularSeries({((), ((g["u"], 1),), None): 1, ((), ((g["v"], 1),), None): -1},
                                          (g["u"], g["v"]), **window)
                    factor = SingularSeries.constant(1, **window)
                    for _ in range(e):
                        factor = factor * diff
                term = term * factor
            elif g["num"]:
                term = term.scale(Fraction(g["num"]))
            elif g["var"]:
                term = term * SingularSeries.monomial({g["var"]: int(g["ve"] or 1)}, **window)
            else:
                basis = int(g["basis"])
            if pos < len(text) and text[pos] == "*":
                pos += 1
                continue
            break
        if basis is not None:
            term = term.with_basis(basis)
        total = total + term
        sign = 1
        if pos < len(text) and text[pos] not in "+-":
            raise ValueError(f"cannot parse series {text!r} at offset {pos}")
    return total.like(total.terms, reliable, sort_vars(set(total.variables) | set(variables)))


def rename(s: SingularSeries, mapping: Mapping[str, str]) -> SingularSeries:
    """Injective relabelling of variables, renormalizing pole orientation."""
    out: dict[Key, Fraction] = {}
    for (poles, mono, basis), c in s.terms.items():
        sign = 1
        new_poles = []
        for (u, v), k in poles:
            pair, k, sg = _norm_pole(mapping.get(u, u), mapping.get(v, v), k)
            sign *= sg
            new_poles.append((pair, k))
        key = (_merge(new_poles), _merge((mapping.get(n, n), e) for n, e in mono), basis)
        out[key] = out.get(key, 0) + c * sign
    weights = {mapping.get(n, n): w for n, w in s.weights.items()}
    names = sort_vars(mapping.get(v, v) for v in s.variables)
    if weights == s.weights or all(weights.get(n, 1) == s.weights.get(n, 1) for n in names):
        return _trusted({k: c for k, c in out.items() if c}, names, s.ceiling, s.floor, weights, s.reliable)
    return SingularSeries(out, names, s.ceiling, s.floor, weights, s.reliable)


def swap_variables(s: SingularSeries, u: str, v: str) -> SingularSeries:
    return rename(s, {u: v, v: u})


# ------------------------------------------------------------------ H action


@lru_cache(maxsize=None)
def _ibinom(j: int, i: int) -> int:
    """Generalized binomial for integer ``j`` as an int."""
    if j >= 0:
        return comb(j, i)
    return (-1) ** i * comb(i - j - 1, i)


def taylor_shift(s: SingularSeries, parts: Iterable[str], max_degree: int) -> list[SingularSeries]:
    """Coefficients of ``t^0 .. t^max_degree`` in ``s(x_u + t for u in parts)``.

    The ``t^i`` coefficient is the divided-power action ``D(i)`` distributed
    over ``parts`` through the coproduct.
    """
    parts = set(parts)
    top = max_degree
    results: list[dict] = [dict() for _ in range(top + 1)]
    for (poles, mono, basis), c in s.terms.items():
        fixed_p, fixed_m = [], []
        # each moving factor: list of (t-degree, int coeff, pole or None, mono or None)
        factors = []
        for (u, v), k in poles:
            iu, iv = u in parts, v in parts
            if iu == iv:
                fixed_p.append(((u, v), k))
                continue
            sgn = 1 if iu else -1
            factors.append([(a, _ibinom(-k, a) * sgn ** a, ((u, v), k + a), None) for a in range(top + 1)])
        for n, e in mono:
            if n not in parts:
                fixed_m.append((n, e))
                continue
            factors.append([(a, _ibinom(e, a), None, (n, e - a)) for a in range(top + 1) if _ibinom(e, a)])
        combos = [(0, 1, (), ())]
        for fac in factors:
            nxt = []
            for d0, c0, p0, m0 in combos:
                for d1, c1, p1, m1 in fac:
                    if d0 + d1 > top:
                        break
                    nxt.append((d0 + d1, c0 * c1, p0 + (p1,) if p1 else p0, m0 + (m1,) if m1 and m1[1] else m0))
            combos = nxt
        fp, fm = tuple(fixed_p), tuple(fixed_m)
        for d, cc, pp, mm in combos:
            key = (_merge(fp + pp) if pp else fp, _merge(fm + mm) if mm else fm, basis)
            bucket = results[d]
            bucket[key] = bucket.get(key, 0) + c * cc
    out = []
    shift_weight = max((s.weights.get(u, 1) for u in parts), default=1)
    for i, terms in enumerate(results):
        rel = None if s.reliable is None else s.reliable - shift_weight * i
        for (poles, _, _) in terms:
            for _, k in poles:
                if k > s.floor:
                    raise WindowUnderflow(f"pole order {k} exceeds Laurent depth {s.floor}")
        out.append(_trusted({k: c for k, c in terms.items() if c}, s.variables, s.ceiling, s.floor,
                            s.weights, rel))
    return out


def act_variable(h: HElem, v: str, s: SingularSeries) -> SingularSeries:
    """Divided-power action of ``h`` in the variable ``v``."""
    if v not in s.variables:
        raise ValueError(f"{v} is not a variable of the series")
    top = max(h.terms, default=0)
    shifts = taylor_shift(s, [v], top)
    out = s.like({}, reliable=None)
    for i, c in h.terms.items():
        out = out + shifts[i].scale(c)
    return out


def distributed_action(s: SingularSeries, parts: Iterable[str], i: int) -> SingularSeries:
    return taylor_shift(s, parts, i)[i]


def check_sum_rule(s: SingularSeries, parts: Iterable[str],
                   whole: str | Mapping[int, SingularSeries | Fraction | int] | Callable[[int], SingularSeries],
                   max_degree: int = 6) -> bool:
    """Is ``D(i)`` spread over ``parts`` equal to the action declared by ``whole``?

    ``whole`` is a variable name (its own action, zero if absent), a mapping
    degree -> expected series, or a callable degree -> expected series.
    Degrees missing from a mapping are not checked.
    """
    return sum_rule_witness(s, parts, whole, max_degree) is None


def sum_rule_witness(s, parts, whole, max_degree: int = 6):
    parts = list(parts)
    shifted = taylor_shift(s, parts, max_degree)
    whole_shift = None
    if isinstance(whole, str) and whole in s.variables:
        whole_shift = taylor_shift(s, [whole], max_degree)
    for i in range(1, max_degree + 1):
        if isinstance(whole, str):
            expected = whole_shift[i] if whole_shift else s.like({}, reliable=None)
        elif callable(whole):
            expected = whole(i)
        else:
            if i not in whole:
                continue
            expected = whole[i]
        if not isinstance(expected, SingularSeries):
            expected = SingularSeries.constant(expected, variables=s.variables, **s.window)
        if not equivalent(shifted[i], expected):
            return i, shifted[i], expected
    return None


# ------------------------------------------------------------ serialization


def term_to_json(key: Key, c: Fraction) -> dict:
    poles, mono, basis = key
    return {
        "coeff": str(c),
        "basis": basis,
        "monomial": {n: e for n, e in mono},
        "poles": {f"{u}-{v}": k for (u, v), k in poles},
    }


def series_to_json(s: SingularSeries) -> dict:
    return {
        "variables": list(s.variables),
        "ceiling": s.ceiling,
        "floor": s.floor,
        "weights": dict(s.weights),
        "reliable": s.reliable,
        "terms": [term_to_json(k, c) for k, c in sorted(s.terms.items(), key=_term_order)],
    }


def series_from_json(doc: Mapping | list, ceiling: int | None = None, floor: int | None = None) -> SingularSeries:
    if isinstance(doc, list):
        doc = {"terms": doc}
    terms: dict[Key, Fraction] = {}
    for t in doc.get("terms", []):
        sign = 1
        poles = []
        for name, k in (t.get("poles") or {}).items():
            u, v = name.split("-")
            pair, k, sg = _norm_pole(u.strip(), v.strip(), int(k))
            sign *= sg
            poles.append((pair, k))
        key = (_merge(poles), _merge((n, int(e)) for n, e in (t.get("monomial") or {}).items()), t.get("basis"))
        terms[key] = terms.get(key, 0) + Fraction(t.get("coeff", 1)) * sign
    return SingularSeries(
        terms,
        tuple(doc.get("variables", ())),
        doc.get("ceiling", SERIES_CEILING) if ceiling is None else ceiling,
        doc.get("floor", DEFAULT_FLOOR) if floor is None else floor,
        dict(doc.get("weights", {})),
        doc.get("reliable"),
    )
