"""Sympy-backed jet expressions (quotients, logs) and the zero test.

Every generator maps to a unique sympy ``Symbol`` whose name is the
generator's display name; the registry below maps it back.  A ``JetExpr`` is
just a sympy expression built from these symbols, rational numbers, ``+``,
``*``, integer powers and ``log``.
"""

from __future__ import annotations

import random
import threading
from fractions import Fraction

import sympy as sp

from .diffpoly import DiffPoly
from .generators import Const, FuncSymbol, Generator, JetVar

DEFAULT_SEED = 20120101
DEFAULT_POINTS = 20

_registry: dict[str, Generator] = {}
_symbols: dict[str, sp.Symbol] = {}
_lock = threading.Lock()


class NotPolynomialError(ValueError):
    """A JetExpr contains a quotient by a sum or a logarithm."""


class ZeroTestInconclusive(RuntimeError):
    """Every sampled point hit a pole or a non-positive log argument."""


def sym(g: Generator) -> sp.Symbol:
    name = g.name
    with _lock:
        known = _registry.get(name)
        if known is None or (getattr(g, "rewrite", None) is not None and getattr(known, "rewrite", None) is None):
            _registry[name] = g
        s = _symbols.get(name)
        if s is None:
            s = sp.Symbol(name)
            _symbols[name] = s
    return s


def gen_of_symbol(s: sp.Symbol) -> Generator:
    try:
        return _registry[s.name]
    except KeyError:
        raise KeyError(f"symbol {s.name!r} is not a registered jet generator") from None


def generators(e: sp.Expr) -> set:
    return {gen_of_symbol(s) for s in sp.sympify(e).free_symbols}


def to_sympy(p: DiffPoly) -> sp.Expr:
    if not isinstance(p, DiffPoly):
        return sp.sympify(p)
    terms = []
    for m, c in p.sorted_terms():
        factors = [sp.Rational(c.numerator, c.denominator)]
        factors += [sym(g) ** e for g, e in m]
        terms.append(sp.Mul(*factors))
    return sp.Add(*terms)


def from_sympy(e) -> DiffPoly:
    """Exact conversion of a polynomial (Laurent in atoms) JetExpr."""
    if isinstance(e, DiffPoly):
        return e
    e = sp.expand(sp.sympify(e))
    out: dict = {}
    for term, coeff in e.as_coefficients_dict().items():
        if not coeff.is_Rational:
            raise NotPolynomialError(f"non-rational coefficient {coeff}")
        powers: dict = {}
        for f in sp.Mul.make_args(term):
            if f == 1:
                continue
            if f.is_Rational:
                coeff = coeff * f
                continue
            base, ex = f.as_base_exp()
            if not base.is_Symbol or not ex.is_Integer:
                raise NotPolynomialError(f"factor {f} is not a power of a jet generator")
            g = gen_of_symbol(base)
            powers[g] = powers.get(g, 0) + int(ex)
        mono = frozenset((g, k) for g, k in powers.items() if k)
        out[mono] = out.get(mono, 0) + Fraction(int(coeff.p), int(coeff.q))
    return DiffPoly(out)


def as_jetexpr(e) -> sp.Expr:
    return to_sympy(e) if isinstance(e, DiffPoly) else sp.sympify(e)


# --- zero test -------------------------------------------------------------

def _prime_log_form(val: sp.Expr, cache: dict) -> sp.Expr:
    """Rewrite every log(rational) as an integer combination of log-prime symbols."""

    def lp(q: sp.Rational) -> sp.Expr:
        if q <= 0:
            raise ValueError("log of a non-positive number")
        out = sp.Integer(0)
        for part, sign in ((int(q.p), 1), (int(q.q), -1)):
            for prime, mult in sp.factorint(part).items():
                s = cache.setdefault(prime, sp.Symbol(f"__logp{prime}"))
                out += sign * mult * s
        return out

    return val.replace(lambda n: isinstance(n, sp.log) and n.args[0].is_Rational, lambda n: lp(n.args[0]))


def sample_points(gens, n: int = DEFAULT_POINTS, seed: int = DEFAULT_SEED):
    """Deterministic rational sample points (generator order fixed by sort key)."""
    rng = random.Random(seed)
    ordered = sorted(gens, key=lambda g: g.sort_key())
    while True:
        yield {g: Fraction(rng.randint(-60, 60), rng.randint(1, 13)) for g in ordered}


def zero_test(e, seed: int = DEFAULT_SEED, points: int = DEFAULT_POINTS, max_tries: int | None = None) -> bool:
    """Decide whether a jet expression is identically zero.

    DiffPoly inputs, and JetExprs that convert to one, get the exact
    structural test.  Otherwise the expression is evaluated exactly at
    ``points`` seeded pseudo-random rational points (logs of rationals are
    reduced to independent log-prime symbols); points on poles or with
    non-positive log arguments are skipped.  ``False`` is always correct;
    ``True`` is correct with overwhelming probability for a fixed seed.
    """
    if isinstance(e, DiffPoly):
        return e.is_zero()
    e = sp.sympify(e)
    try:
        return from_sympy(e).is_zero()
    except NotPolynomialError:
        pass
    gens = generators(e)
    max_tries = max_tries or 20 * points
    good = 0
    tried = 0
    logcache: dict = {}
    for pt in sample_points(gens, points, seed):
        if tried >= max_tries:
            break
        tried += 1
        val = e.xreplace({sym(g): sp.Rational(v.numerator, v.denominator) for g, v in pt.items()})
        if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            continue
        try:
            val = sp.expand(_prime_log_form(val, logcache))
        except ValueError:
            continue
        if val.has(sp.log, sp.I):
            continue
        good += 1
        if val != 0:
            return False
        if good >= points:
            return True
    if good == 0:
        raise ZeroTestInconclusive("every sampled point hit a pole or a log singularity")
    return True


def lambdify(e, gens=None):
    """Compile a jet expression into a numpy function of its generators.

    Returns ``(fn, gens)``; call ``fn(*[values[g] for g in gens])``.
    """
    e = as_jetexpr(e)
    if gens is None:
        gens = sorted(generators(e), key=lambda g: g.sort_key())
    fn = sp.lambdify([sym(g) for g in gens], e, modules="numpy", cse=True)
    return fn, list(gens)
