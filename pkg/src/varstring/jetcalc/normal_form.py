"""Integration by parts to the normal form of string-type densities.

A density of the shape ∫(x ρ + t μ) dx with ρ, μ differential polynomials is
reduced modulo total derivatives to

    x·α(u; u_x², u_x⁴, u_xx²) + t·β(u; u_x², u_x⁴, u_xx²) + e(u) u_x³.

The reduction repeatedly removes a top jet that appears linearly:

    A·(u^(k−1))^m·u^(k)  ≡  −(u^(k−1))^{m+1}/(m+1) · D_x A ,

with D_x x = 1 taking care of the explicit x.
"""

from __future__ import annotations

from fractions import Fraction

from .calculus import LocalDensity, total_x_derivative, variational_derivative
from .diffpoly import DiffPoly
from .generators import T, X, JetVar


class NotStringShapeError(ValueError):
    """The density is not of the x-, t-affine polynomial shape the normal form handles."""


_ALLOWED_JETS = {frozenset(), frozenset({(1, 2)}), frozenset({(1, 4)}), frozenset({(2, 2)})}


def _jets(m, fieldname):
    return {g.order: e for g, e in m if isinstance(g, JetVar) and g.field == fieldname}


def _check_shape(body: DiffPoly, fieldname: str) -> None:
    for m in body:
        powers = dict(m)
        if powers.get(X, 0) not in (0, 1) or powers.get(T, 0) not in (0, 1):
            raise NotStringShapeError("density must be affine in x and in t")
        if powers.get(X, 0) and powers.get(T, 0):
            raise NotStringShapeError("x·t terms are outside the string shape")
        for g, e in m:
            if isinstance(g, JetVar) and (g.field != fieldname or e < 0):
                raise NotStringShapeError(f"unexpected jet factor {g.name}^{e}")


def _reducible(m, fieldname):
    jets = {k: e for k, e in _jets(m, fieldname).items() if k >= 1}
    if not jets:
        return None
    top = max(jets)
    return top if jets[top] == 1 else None


def normal_form(d, fieldname: str = "u") -> LocalDensity:
    """Reduce a string-type density modulo total x-derivatives; verified by δ/δu equality."""
    body = d.body if isinstance(d, LocalDensity) else d
    if not isinstance(body, DiffPoly):
        from .jetexpr import from_sympy

        body = from_sympy(body)
    _check_shape(body, fieldname)
    work = dict(body.items())
    done: dict = {}
    while work:
        m, c = work.popitem()
        k = _reducible(m, fieldname)
        if k is None:
            done[m] = done.get(m, 0) + c
            continue
        x_deg = dict(m).get(X, 0)
        lower = _jets(m, fieldname).get(k - 1, 0) if k >= 2 else 0
        if k == 1:
            if x_deg:
                raise NotStringShapeError("x·a(u)·u_x needs an antiderivative of a; outside the string shape")
            continue  # a(u)·u_x is a total derivative
        top = JetVar(fieldname, k)
        prev = JetVar(fieldname, k - 1)
        A = DiffPoly._raw({frozenset((g, e) for g, e in m if g not in (top, prev)): Fraction(c)})
        n = lower + 1
        repl = -(DiffPoly.gen(prev, n) * total_x_derivative(A)).scale(Fraction(1, n))
        for rm, rc in repl.items():
            v = work.get(rm, 0) + rc
            if v:
                work[rm] = v
            else:
                work.pop(rm, None)
    out = DiffPoly({m: c for m, c in done.items() if c})
    _check_result(out, fieldname)
    if not (variational_derivative(LocalDensity(out, fieldname))
            - variational_derivative(LocalDensity(body, fieldname))).is_zero():
        raise RuntimeError("normal form changed the variational derivative")
    return LocalDensity(out, fieldname)


def _check_result(out: DiffPoly, fieldname: str) -> None:
    for m in out:
        jets = frozenset((k, e) for k, e in _jets(m, fieldname).items() if k >= 1)
        has_xt = any(g in (X, T) for g, _ in m)
        if jets in _ALLOWED_JETS:
            continue
        if not has_xt and jets == frozenset({(1, 3)}):
            continue
        raise NotStringShapeError("density does not reduce to the string normal form")


def normal_form_parts(d, fieldname: str = "u") -> dict:
    """Split a normal form into α (x-part), β (t-part) and e (coefficient of u_x³)."""
    nf = normal_form(d, fieldname).body
    alpha = nf.coeff_of(X, 1)
    beta = nf.coeff_of(T, 1)
    rest = nf.coeff_of(X, 0).coeff_of(T, 0)
    cubic = rest.coeff_of(JetVar(fieldname, 1), 3)
    other = rest - cubic * DiffPoly.gen(JetVar(fieldname, 1), 3)
    return {"alpha": alpha, "beta": beta, "e": cubic.eps_coeff(4), "other": other}


__all__ = ["normal_form", "normal_form_parts", "NotStringShapeError"]
