"""Canonical differential polynomials with exact rational coefficients.

A :class:`DiffPoly` is a finite map ``monomial -> Fraction``.  Monomials are
frozensets of ``(generator, exponent)`` pairs; exponents may be negative, so
the ring is the Laurent ring in the generators.  Because every generator is
an independent atom (jet coordinates, derivatives of free functions,
scalars), structural equality is mathematical equality and the zero test is
exact.  Division by anything other than a monomial is refused.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Callable, Iterable, Iterator, Mapping

from .generators import EPS, X, Const, FuncSymbol, Generator, JetVar, weight

Monomial = frozenset
ONE: Monomial = frozenset()


@lru_cache(maxsize=1 << 18)
def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for g, e in b:
        n = d.get(g, 0) + e
        if n:
            d[g] = n
        else:
            del d[g]
    return frozenset(d.items())


@lru_cache(maxsize=1 << 18)
def mono_eps(m: Monomial) -> int:
    for g, e in m:
        if g == EPS:
            return e
    return 0


def mono_pow(m: Monomial, n: int) -> Monomial:
    return frozenset((g, e * n) for g, e in m)


def mono_key(m: Monomial) -> tuple:
    """Graded-lex key: eps degree, differential degree, then generators."""
    eps = 0
    deg = 0
    for g, e in m:
        if g == EPS:
            eps = e
        deg += weight(g) * e
    gens = tuple(sorted(((g.sort_key(), -e) for g, e in m)))
    return (eps, deg, gens)


def _coerce_coeff(c) -> Fraction:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, (int, Rational)):
        return Fraction(c)
    raise TypeError(f"DiffPoly coefficients must be rational, got {type(c).__name__}")


class DiffPoly:
    """Immutable Laurent polynomial over jet generators."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        clean = {}
        if terms:
            for m, c in terms.items():
                c = _coerce_coeff(c)
                if c:
                    clean[m] = c
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "DiffPoly":
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._hash = None
        return obj

    # constructors
    @classmethod
    def const(cls, c) -> "DiffPoly":
        c = _coerce_coeff(c)
        return cls._raw({ONE: c} if c else {})

    @classmethod
    def gen(cls, g: Generator, exp: int = 1) -> "DiffPoly":
        if exp == 0:
            return cls.const(1)
        return cls._raw({frozenset([(g, exp)]): Fraction(1)})

    @classmethod
    def monomial(cls, powers: Mapping[Generator, int], coeff=1) -> "DiffPoly":
        m = frozenset((g, e) for g, e in powers.items() if e)
        return cls({m: coeff})

    @classmethod
    def lift(cls, obj) -> "DiffPoly":
        if isinstance(obj, DiffPoly):
            return obj
        if isinstance(obj, (JetVar, FuncSymbol, Const)):
            return cls.gen(obj)
        return cls.const(obj)

    # container protocol
    @property
    def terms(self) -> Mapping[Monomial, Fraction]:
        return self._terms

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[Monomial]:
        return iter(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, DiffPoly):
            return self._terms == other._terms
        try:
            return self._terms == DiffPoly.const(other)._terms
        except TypeError:
            return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    # arithmetic
    def __add__(self, other) -> "DiffPoly":
        other = DiffPoly.lift(other)
        if not other._terms:
            return self
        if not self._terms:
            return other
        out = dict(self._terms)
        for m, c in other._terms.items():
            n = out.get(m, 0) + c
            if n:
                out[m] = n
            else:
                out.pop(m, None)
        return DiffPoly._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "DiffPoly":
        return DiffPoly._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "DiffPoly":
        return self + (-DiffPoly.lift(other))

    def __rsub__(self, other) -> "DiffPoly":
        return DiffPoly.lift(other) + (-self)

    def scale(self, c) -> "DiffPoly":
        c = _coerce_coeff(c)
        if not c:
            return DiffPoly._raw({})
        return DiffPoly._raw({m: v * c for m, v in self._terms.items()})

    def mul(self, other, eps_max: int | None = None) -> "DiffPoly":
        """Product, optionally dropping terms of eps-degree above ``eps_max``."""
        other = DiffPoly.lift(other)
        if len(other._terms) == 1 and ONE in other._terms:
            return self.scale(other._terms[ONE])
        if len(self._terms) == 1 and ONE in self._terms:
            return other.scale(self._terms[ONE]).truncate(eps_max)
        out: dict = {}
        if eps_max is None:
            for ma, ca in self._terms.items():
                for mb, cb in other._terms.items():
                    m = mono_mul(ma, mb)
                    n = out.get(m, 0) + ca * cb
                    if n:
                        out[m] = n
                    else:
                        out.pop(m, None)
        else:
            b_items = [(mb, cb, mono_eps(mb)) for mb, cb in other._terms.items()]
            for ma, ca in self._terms.items():
                ea = mono_eps(ma)
                if ea > eps_max:
                    continue
                for mb, cb, eb in b_items:
                    if ea + eb > eps_max:
                        continue
                    m = mono_mul(ma, mb)
                    n = out.get(m, 0) + ca * cb
                    if n:
                        out[m] = n
                    else:
                        out.pop(m, None)
        return DiffPoly._raw(out)

    def __mul__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return self.mul(other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "DiffPoly":
        if isinstance(other, (int, Fraction)):
            return self.scale(Fraction(1) / _coerce_coeff(other))
        return self.mul(DiffPoly.lift(other).inverse())

    def __rtruediv__(self, other) -> "DiffPoly":
        return DiffPoly.lift(other).mul(self.inverse())

    def inverse(self) -> "DiffPoly":
        if len(self._terms) != 1:
            raise ZeroDivisionError("only monomials are invertible in a DiffPoly; "
                                    "quotients by sums belong in a JetExpr")
        (m, c), = self._terms.items()
        return DiffPoly._raw({mono_pow(m, -1): 1 / c})

    def __pow__(self, n: int) -> "DiffPoly":
        if not isinstance(n, int):
            raise TypeError("integer powers only")
        if n < 0:
            return self.inverse() ** (-n)
        if len(self._terms) == 1:
            (m, c), = self._terms.items()
            return DiffPoly._raw({mono_pow(m, n): c ** n}) if n else DiffPoly.const(1)
        out = DiffPoly.const(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    # eps grading
    def eps_degrees(self) -> set[int]:
        return {mono_eps(m) for m in self._terms}

    def truncate(self, order: int | None) -> "DiffPoly":
        """Drop every term of eps-degree above ``order``."""
        if order is None:
            return self
        return DiffPoly._raw({m: c for m, c in self._terms.items() if mono_eps(m) <= order})

    def eps_coeff(self, k: int) -> "DiffPoly":
        """Coefficient of eps^k (eps removed from the monomials)."""
        out = {}
        for m, c in self._terms.items():
            if mono_eps(m) == k:
                out[frozenset((g, e) for g, e in m if g != EPS)] = c
        return DiffPoly._raw(out)

    def coeff_of(self, g: Generator, k: int) -> "DiffPoly":
        """Coefficient of g^k, with g removed."""
        out = {}
        for m, c in self._terms.items():
            e = dict(m).get(g, 0)
            if e == k:
                out[frozenset((h, f) for h, f in m if h != g)] = c
        return DiffPoly._raw(out)

    # introspection
    def generators(self) -> set:
        return {g for m in self._terms for g, _ in m}

    def degree_in(self, g: Generator) -> int:
        return max((dict(m).get(g, 0) for m in self._terms), default=0)

    def max_jet(self, field: str = "u") -> int:
        orders = [g.order for g in self.generators() if isinstance(g, JetVar) and g.field == field]
        return max(orders, default=-1)

    def has_explicit(self, g: Generator) -> bool:
        return g in self.generators()

    def is_polynomial(self) -> bool:
        return all(e > 0 for m in self._terms for _, e in m)

    def constant_term(self) -> Fraction:
        return self._terms.get(ONE, Fraction(0))

    def sorted_terms(self) -> list:
        return sorted(self._terms.items(), key=lambda mc: mono_key(mc[0]))

    # calculus primitives
    def pdiff(self, g: Generator) -> "DiffPoly":
        """Explicit partial derivative with respect to the atom ``g``."""
        out: dict = {}
        for m, c in self._terms.items():
            for h, e in m:
                if h == g:
                    nm = frozenset((k, f if k != g else f - 1) for k, f in m if k != g or f != 1)
                    n = out.get(nm, 0) + c * e
                    if n:
                        out[nm] = n
                    else:
                        out.pop(nm, None)
                    break
        return DiffPoly._raw(out)

    def map_generators(self, fn: Callable[[Generator], "DiffPoly"], eps_max: int | None = None) -> "DiffPoly":
        """Substitute every generator by ``fn(g)`` (``fn`` may return ``None`` to keep it)."""
        cache: dict = {}

        def image(g, e):
            key = (g, e)
            if key not in cache:
                img = fn(g)
                if img is None:
                    cache[key] = DiffPoly.gen(g, e)
                else:
                    cache[key] = DiffPoly.lift(img) ** e
            return cache[key]

        out = DiffPoly()
        for m, c in self._terms.items():
            acc = DiffPoly.const(c)
            for g, e in sorted(m, key=lambda ge: ge[0].sort_key()):
                acc = acc.mul(image(g, e), eps_max)
                if not acc:
                    break
            out = out + acc
        return out

    def subs(self, mapping: Mapping[Generator, object], eps_max: int | None = None) -> "DiffPoly":
        return self.map_generators(lambda g: mapping.get(g), eps_max)

    def evaluate(self, values: Mapping[Generator, object] | Callable[[Generator], object],
                 exact: bool = False):
        """Numeric value at an assignment of every generator.

        With ``exact=True`` the coefficients stay Fractions (pass Fraction
        values for an exact result); otherwise they are converted to floats so
        that numpy arrays broadcast normally.  Missing generators raise
        ``KeyError``.
        """
        lookup = values if callable(values) else values.__getitem__
        cache: dict = {}
        total = 0
        # fixed term and factor order keeps float results independent of hashing
        for m, c in self.sorted_terms():
            term = c if exact else float(c)
            for g, e in sorted(m, key=lambda ge: ge[0].sort_key()):
                if g not in cache:
                    cache[g] = lookup(g)
                v = cache[g]
                term = term * (v ** e if e != 1 else v)
            total = total + term
        return total

    def __repr__(self) -> str:
        from .sexpr import to_text

        return f"DiffPoly({to_text(self)})"


def as_diffpoly(obj) -> DiffPoly:
    return DiffPoly.lift(obj)


def dsum(polys: Iterable[DiffPoly]) -> DiffPoly:
    out: dict = {}
    for p in polys:
        for m, c in p.items():
            n = out.get(m, 0) + c
            if n:
                out[m] = n
            else:
                out.pop(m, None)
    return DiffPoly._raw(out)


def x_poly() -> DiffPoly:
    return DiffPoly.gen(X)
