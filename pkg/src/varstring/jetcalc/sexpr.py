"""Deterministic text forms for jet expressions.

Two renderings are provided.

``to_text`` is the human-readable infix form used by ``varstring expand``::

    u u_x + eps^2 u_xxx
    1/2 h'''(u) u_x^2 - eps^2 c(u)^-1 ...

``to_sexpr`` / ``from_sexpr`` is a round-trippable S-expression grammar::

    expr  := NUMBER | CONST | (jet FIELD K) | (fn NAME K ARG)
           | (+ expr ...) | (* expr ...) | (^ expr INT) | (/ expr expr)
           | (log expr)
    NUMBER := INT | INT/INT
    CONST  := identifier (x, t, eps, lam, kappa1, ...)

Sums and products are emitted with their arguments in graded-lex order, so
equal expressions always serialise to the same bytes.
"""

from __future__ import annotations

import re
from fractions import Fraction

import sympy as sp

from .diffpoly import DiffPoly, mono_key
from .generators import Const, FuncSymbol, JetVar


def _fmt_coeff(c: Fraction) -> str:
    if c.denominator == 1:
        return str(c.numerator)
    return f"{c.numerator}/{c.denominator}"


def _factor_text(g, e: int) -> str:
    return g.name if e == 1 else f"{g.name}^{e}"


def to_text(p: DiffPoly) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for m, c in p.sorted_terms():
        factors = " ".join(_factor_text(g, e) for g, e in sorted(m, key=lambda ge: ge[0].sort_key()))
        mag = abs(c)
        if factors:
            body = factors if mag == 1 else f"{_fmt_coeff(mag)} {factors}"
        else:
            body = _fmt_coeff(mag)
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


# --- S-expressions -------------------------------------------------------

def gen_sexpr(g) -> str:
    if isinstance(g, JetVar):
        return f"(jet {g.field} {g.order})"
    if isinstance(g, FuncSymbol):
        return f"(fn {g.base} {g.order} {g.arg})"
    return g.name


def _mono_sexpr(m, c: Fraction) -> str:
    factors = [gen_sexpr(g) if e == 1 else f"(^ {gen_sexpr(g)} {e})"
               for g, e in sorted(m, key=lambda ge: ge[0].sort_key())]
    if c != 1 or not factors:
        factors.insert(0, _fmt_coeff(c))
    if len(factors) == 1:
        return factors[0]
    return "(* " + " ".join(factors) + ")"


def diffpoly_sexpr(p: DiffPoly) -> str:
    if p.is_zero():
        return "0"
    terms = [_mono_sexpr(m, c) for m, c in p.sorted_terms()]
    if len(terms) == 1:
        return terms[0]
    return "(+ " + " ".join(terms) + ")"


def _sympy_sexpr(e: sp.Expr) -> str:
    from .jetexpr import gen_of_symbol

    if e.is_Rational:
        return _fmt_coeff(Fraction(int(e.p), int(e.q)))
    if e.is_Symbol:
        return gen_sexpr(gen_of_symbol(e))
    if e.is_Add:
        return "(+ " + " ".join(sorted(_sympy_sexpr(a) for a in e.args)) + ")"
    if e.is_Mul:
        return "(* " + " ".join(sorted(_sympy_sexpr(a) for a in e.args)) + ")"
    if e.is_Pow:
        base, ex = e.args
        if not ex.is_Integer:
            raise ValueError(f"non-integer power in jet expression: {e}")
        return f"(^ {_sympy_sexpr(base)} {int(ex)})"
    if isinstance(e, sp.log):
        return f"(log {_sympy_sexpr(e.args[0])})"
    raise ValueError(f"unsupported node in jet expression: {type(e).__name__}")


def to_sexpr(e) -> str:
    if isinstance(e, DiffPoly):
        return diffpoly_sexpr(e)
    return _sympy_sexpr(sp.sympify(e))


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


def from_sexpr(text: str) -> sp.Expr:
    """Parse the S-expression grammar into a sympy-backed jet expression."""
    from .jetexpr import sym

    tokens = _tokenize(text)
    pos = 0

    def atom(tok: str):
        if re.fullmatch(r"-?\d+(/\d+)?", tok):
            return sp.Rational(tok)
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
            return sym(Const(tok))
        raise ValueError(f"bad token {tok!r}")

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of input")
        tok = tokens[pos]
        pos += 1
        if tok == ")":
            raise ValueError("unexpected ')'")
        if tok != "(":
            return atom(tok)
        head = tokens[pos]
        pos += 1
        if head == "jet":
            field, k = tokens[pos], int(tokens[pos + 1])
            pos += 2
            node = sym(JetVar(field, k))
        elif head == "fn":
            name, k, arg = tokens[pos], int(tokens[pos + 1]), tokens[pos + 2]
            pos += 3
            node = sym(FuncSymbol(name, k, arg))
        else:
            args = []
            while tokens[pos] != ")":
                args.append(parse())
            if head == "+":
                node = sp.Add(*args)
            elif head == "*":
                node = sp.Mul(*args)
            elif head == "^":
                node = sp.Pow(args[0], int(args[1]))
            elif head == "/":
                node = args[0] / args[1]
            elif head == "log":
                node = sp.log(args[0])
            else:
                raise ValueError(f"unknown head {head!r}")
        if tokens[pos] != ")":
            raise ValueError("expected ')'")
        pos += 1
        return node

    node = parse()
    if pos != len(tokens):
        raise ValueError("trailing tokens")
    return node
