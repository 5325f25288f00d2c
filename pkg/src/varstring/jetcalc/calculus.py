"""Total derivatives, Euler-Lagrange operator and brackets on jet expressions.

All operations accept either a :class:`DiffPoly` (exact, canonical) or a
sympy-backed JetExpr and return the same kind.  Function symbols are
differentiated by the chain rule, ``F^(k)(u) -> F^(k+1)(u) u_x``, unless the
symbol carries a rewrite rule, in which case the rule replaces ``F'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import sympy as sp

from .diffpoly import DiffPoly, dsum, mono_mul
from .generators import EPS, T, X, Const, FuncSymbol, JetVar
from .jetexpr import as_jetexpr, generators as sympy_generators, sym, to_sympy

Expr = Union[DiffPoly, sp.Expr]

DEFAULT_MAX_JET = 8


class ExplicitXError(ValueError):
    """Raised when an x-free operation receives an explicitly x-dependent density."""


# --- primitive dispatch ------------------------------------------------------

def _is_poly(e) -> bool:
    return isinstance(e, DiffPoly)


def gens_of(e) -> set:
    return e.generators() if _is_poly(e) else sympy_generators(e)


def pdiff(e, g):
    """Explicit partial derivative with respect to one atom."""
    if _is_poly(e):
        return e.pdiff(g)
    return sp.diff(e, sym(g))


def _lift(g, like):
    return DiffPoly.gen(g) if _is_poly(like) else sym(g)


def _zero(like):
    return DiffPoly() if _is_poly(like) else sp.Integer(0)


def func_du(F: FuncSymbol) -> DiffPoly:
    """d/du of a function symbol at its own argument."""
    if F.rewrite is not None:
        rule = F.rewrite
        return rule if isinstance(rule, DiffPoly) else rule
    return DiffPoly.gen(F.derivative())


def _as_kind(value, like):
    if _is_poly(like):
        if isinstance(value, DiffPoly):
            return value
        from .jetexpr import from_sympy

        return from_sympy(value)
    return as_jetexpr(value)


@lru_cache(maxsize=4096)
def _gen_dx_poly(g) -> DiffPoly | None:
    if isinstance(g, JetVar):
        return DiffPoly.gen(JetVar(g.field, g.order + 1))
    if isinstance(g, FuncSymbol):
        du = func_du(g)
        if not isinstance(du, DiffPoly):
            from .jetexpr import from_sympy

            du = from_sympy(du)
        return du * DiffPoly.gen(JetVar(g.arg, 1))
    if g == X:
        return DiffPoly.const(1)
    return None


def _gen_dx(g, like):
    d = _gen_dx_poly(g)
    if d is None:
        return None
    return d if _is_poly(like) else to_sympy(d)


# --- total derivative ----------------------------------------------------------

def total_x_derivative(e: Expr, times: int = 1) -> Expr:
    """D_x applied ``times`` times (chain rule through jets and function symbols; D_x x = 1)."""
    for _ in range(times):
        e = _dx_once(e)
    return e


def _dx_once(e):
    if _is_poly(e):
        return _dx_poly(e)
    e = sp.sympify(e)
    out = sp.Integer(0)
    for g in gens_of(e):
        dg = _gen_dx(g, e)
        if dg is None:
            continue
        out += sp.diff(e, sym(g)) * dg
    return out


def _dx_poly(p: DiffPoly) -> DiffPoly:
    out: dict = {}
    for m, c in p.items():
        for g, e in m:
            dg = _gen_dx_poly(g)
            if dg is None:
                continue
            rest = frozenset((k, f if k != g else f - 1) for k, f in m if k != g or f != 1)
            coeff = c * e
            for mg, cg in dg.items():
                nm = mono_mul(rest, mg)
                n = out.get(nm, 0) + coeff * cg
                if n:
                    out[nm] = n
                else:
                    out.pop(nm, None)
    return DiffPoly._raw(out)


Dx = total_x_derivative


# --- jet partials and Euler-Lagrange ------------------------------------------

def max_jet(e, fieldname: str = "u") -> int:
    orders = [g.order for g in gens_of(e) if isinstance(g, JetVar) and g.field == fieldname]
    return max(orders, default=-1)


def partial_jet(e: Expr, k: int, fieldname: str = "u") -> Expr:
    """∂e/∂u^(k); for k = 0 the chain rule runs through every F(u)."""
    out = pdiff(e, JetVar(fieldname, k))
    if k == 0:
        for g in gens_of(e):
            if isinstance(g, FuncSymbol) and g.arg == fieldname:
                out = out + pdiff(e, g) * _as_kind(func_du(g), e)
    return out


def d_du(e: Expr, fieldname: str = "u") -> Expr:
    """Ordinary derivative of a function of u alone (no jets of positive order)."""
    return partial_jet(e, 0, fieldname)


def fderiv(e, k: int, fieldname: str = "u") -> Expr:
    """k-th u-derivative of a function symbol or an expression in function symbols."""
    if isinstance(e, FuncSymbol):
        e = DiffPoly.gen(e)
    for _ in range(k):
        e = d_du(e, fieldname)
    return e


def _euler(e, fieldname: str):
    K = max_jet(e, fieldname)
    if K < 0:
        return _zero(e)
    acc = partial_jet(e, K, fieldname)
    for k in range(K - 1, -1, -1):
        acc = partial_jet(e, k, fieldname) - _dx_once(acc)
    return acc


@dataclass(frozen=True)
class LocalDensity:
    """Density of a local functional ∫ body dx."""

    body: object
    fieldname: str = "u"
    max_jet: int = field(init=False)
    explicit_x: bool = field(init=False)
    explicit_t: bool = field(init=False)

    def __post_init__(self):
        body = self.body
        if not _is_poly(body):
            body = sp.sympify(body)
            object.__setattr__(self, "body", body)
        gens = gens_of(body)
        object.__setattr__(self, "max_jet", max((g.order for g in gens
                                                 if isinstance(g, JetVar) and g.field == self.fieldname), default=-1))
        object.__setattr__(self, "explicit_x", X in gens)
        object.__setattr__(self, "explicit_t", T in gens)


def _body(d):
    return d.body if isinstance(d, LocalDensity) else d


def _fieldname(d, default="u"):
    return d.fieldname if isinstance(d, LocalDensity) else default


def euler_lagrange(d) -> Expr:
    """E(d) = Σ_k (−D_x)^k ∂d/∂u^(k) for x-independent densities."""
    body = _body(d)
    if X in gens_of(body):
        raise ExplicitXError("density depends explicitly on x; use variational_derivative")
    return _euler(body, _fieldname(d))


def variational_derivative(d) -> Expr:
    """δ/δu of ∫ d dx; explicit x and t are allowed (D_x x = 1, D_x t = 0)."""
    return _euler(_body(d), _fieldname(d))


def explicit_x_split(d):
    """Write a density as x·A + B with A, B free of x."""
    body = _body(d)
    deg = body.degree_in(X) if _is_poly(body) else sp.Poly(sp.expand(body), sym(X)).degree()
    if deg > 1:
        raise ValueError("density is not affine in x")
    if _is_poly(body):
        return body.coeff_of(X, 1), body.coeff_of(X, 0)
    expanded = sp.expand(body)
    A = expanded.coeff(sym(X), 1)
    return A, sp.expand(expanded - sym(X) * A)


def variational_derivative_x_affine(d) -> Expr:
    """δ/δu of ∫(x·A + B) dx in the split form x·E(A) + Σ_k k(−1)^k D^{k−1} ∂A/∂u^(k) + E(B)."""
    A, B = explicit_x_split(d)
    fieldname = _fieldname(d)
    out = _lift(X, A) * _euler(A, fieldname) + _euler(B, fieldname)
    for k in range(1, max_jet(A, fieldname) + 1):
        sign = -1 if k % 2 else 1
        out = out + total_x_derivative(partial_jet(A, k, fieldname), k - 1) * (sign * k)
    return out


# --- brackets -----------------------------------------------------------------------

def _truncate(e, order):
    return epsilon_truncate(e, order) if order is not None else e


def _mul(a, b, eps_max=None):
    if _is_poly(a) and _is_poly(b):
        return a.mul(b, eps_max)
    return _truncate(sp.expand(as_jetexpr(a) * as_jetexpr(b)), eps_max)


def bracket_residual(F, G, eps_max: int | None = None) -> Expr:
    """E(δF/δu · D_x δG/δu): zero iff {F, G} vanishes modulo total derivatives."""
    for d in (F, G):
        if X in gens_of(_body(d)):
            raise ExplicitXError("bracket_residual needs x-independent densities")
    fieldname = _fieldname(F)
    dF = variational_derivative(F)
    dG = variational_derivative(G)
    prod = _mul(dF, _dx_once(dG), eps_max)
    return _euler(prod, fieldname)


def commutation_residual(S, H, eps_max: int | None = None) -> Expr:
    """∂_t δS/δu + E(δS/δu · D_x δH/δu) for an explicitly x,t-dependent S."""
    fieldname = _fieldname(S)
    dS = variational_derivative(S)
    dH = variational_derivative(H)
    flow = _mul(dS, _dx_once(dH), eps_max)
    return pdiff(dS, T) + _euler(flow, fieldname)


def gelfand_dikii_residual(f, g, fieldname: str = "u", eps_max: int | None = None) -> Expr:
    """Σ ∂f/∂u^(i) D^{i+1} g − Σ ∂g/∂u^(i) D^{i+1} f − E(f D_x g)."""
    left = evolve(f, _dx_once(g), fieldname, eps_max)
    right = evolve(g, _dx_once(f), fieldname, eps_max)
    return left - right - _euler(_mul(f, _dx_once(g), eps_max), fieldname)


def evolve(A, flow, fieldname: str = "u", eps_max: int | None = None) -> Expr:
    """Evolutionary derivative Σ_j ∂A/∂u^(j) · D_x^j(flow)."""
    out = DiffPoly() if _is_poly(A) and _is_poly(flow) else sp.Integer(0)
    d = flow
    for j in range(max_jet(A, fieldname) + 1):
        if j:
            d = _dx_once(d)
        pa = partial_jet(A, j, fieldname)
        if (_is_poly(pa) and pa.is_zero()) or (not _is_poly(pa) and pa == 0):
            continue
        out = out + _mul(pa, d, eps_max)
    return out


def lie_action(A, K, eps_max: int | None = None) -> Expr:
    """{A, K}: derivative of A along the Hamiltonian flow u_t = D_x δK/δu."""
    if X in gens_of(_body(K)):
        raise ExplicitXError("lie_action needs an x-independent Hamiltonian")
    fieldname = _fieldname(K)
    flow = _dx_once(variational_derivative(K))
    return evolve(A, flow, fieldname, eps_max)


# --- eps grading -------------------------------------------------------------------------

def epsilon_truncate(e, order: int):
    """Drop every term of eps-degree above ``order`` (idempotent)."""
    if _is_poly(e):
        return e.truncate(order)
    e = sp.expand(sp.sympify(e))
    eps = sym(EPS)
    keep = []
    for term in sp.Add.make_args(e):
        deg = sp.Poly(term, eps).degree() if term.has(eps) and term.is_polynomial(eps) else 0
        if term.has(eps) and not term.is_polynomial(eps):
            raise ValueError("eps appears non-polynomially")
        if deg <= order:
            keep.append(term)
    return sp.Add(*keep)


def eps_part(e, k: int):
    """Coefficient of eps^k."""
    if _is_poly(e):
        return e.eps_coeff(k)
    return sp.expand(sp.sympify(e)).coeff(sym(EPS), k)


def const(name: str) -> DiffPoly:
    return DiffPoly.gen(Const(name))


__all__ = [
    "LocalDensity", "ExplicitXError", "total_x_derivative", "Dx", "partial_jet", "d_du", "fderiv",
    "euler_lagrange", "variational_derivative", "variational_derivative_x_affine", "explicit_x_split",
    "bracket_residual", "commutation_residual", "gelfand_dikii_residual", "evolve", "lie_action",
    "epsilon_truncate", "eps_part", "max_jet", "dsum",
]
