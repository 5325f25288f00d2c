"""Hamiltonian perturbations built from the D-operator.

Given the four functions (h, c, p, s) the D-operator turns any f(u) into an
eps^4-accurate conserved density

    D(f) = f − (eps²/2) c_f u_x² + eps⁴ (p_f u_xx² + s_f u_x⁴),

and ``H_h = ∫ D(h) dx`` is the Hamiltonian of the perturbed flow
``u_t = D_x δH_h/δu``.  Everything here is exact (``DiffPoly``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .jetcalc import (
    EPS,
    LAM,
    Const,
    DiffPoly,
    FuncSymbol,
    JetVar,
    LocalDensity,
    bracket_residual,
    d_du,
    fderiv,
    total_x_derivative,
    variational_derivative,
)
from .jetcalc.diffpoly import mono_eps
from .jetcalc.generators import weight

EPS_ORDER = 4

U = JetVar("u", 0)
UX = JetVar("u", 1)
UXX = JetVar("u", 2)


def _g(x) -> DiffPoly:
    return DiffPoly.lift(x)


def fsym(name: str, arg: str = "u") -> DiffPoly:
    return DiffPoly.gen(FuncSymbol(name, 0, arg))


def jv(k: int, fieldname: str = "u") -> DiffPoly:
    return DiffPoly.gen(JetVar(fieldname, k))


EPS_P = DiffPoly.gen(EPS)


@dataclass(frozen=True)
class PerturbationData:
    """The functions (h, c, p, s) and the constant λ.

    Each function is a DiffPoly in function symbols of ``u`` (and possibly
    ``u`` itself); ``closed_forms`` optionally binds them to sympy
    expressions in ``u`` for numeric work.
    """

    h: DiffPoly
    c: DiffPoly
    p: DiffPoly
    s: DiffPoly
    lam: DiffPoly = field(default_factory=lambda: DiffPoly.gen(LAM))
    name: str = "symbolic"
    closed_forms: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if _g(self.c).is_zero():
            raise ValueError("c must not be identically zero")

    @property
    def a(self) -> DiffPoly:
        """a = h''."""
        return fderiv(self.h, 2)


def symbolic(lam=None) -> PerturbationData:
    return PerturbationData(fsym("h"), fsym("c"), fsym("p"), fsym("s"),
                            _g(lam) if lam is not None else DiffPoly.gen(LAM))


def cp_constrained(lam=None, s=None) -> PerturbationData:
    """Symbolic h, c, s with p := (3/5) c c' + λ c³."""
    c = fsym("c")
    lam_p = _g(lam) if lam is not None else DiffPoly.gen(LAM)
    p = Fraction(3, 5) * c * d_du(c) + lam_p * c ** 3
    return PerturbationData(fsym("h"), c, p, fsym("s") if s is None else _g(s), lam_p, name="cp-constrained")


def kdv() -> PerturbationData:
    import sympy as sp

    u = sp.Symbol("u")
    return PerturbationData(
        Fraction(1, 6) * jv(0) ** 3, DiffPoly.const(1), DiffPoly(), DiffPoly(), DiffPoly(), name="kdv",
        closed_forms={"h": u ** 3 / 6, "c": sp.Integer(1), "p": sp.Integer(0), "s": sp.Integer(0)})


def quadratic_h() -> PerturbationData:
    import sympy as sp

    u = sp.Symbol("u")
    return PerturbationData(
        Fraction(1, 2) * jv(0) ** 2, DiffPoly.const(1), DiffPoly(), DiffPoly(), DiffPoly(), name="quadratic",
        closed_forms={"h": u ** 2 / 2, "c": sp.Integer(1), "p": sp.Integer(0), "s": sp.Integer(0)})


def constant_cp(c0=None, p0=None) -> PerturbationData:
    """c = c0, p = p0 constants, s = 0 (symbolic h); λ = p0 / c0³."""
    c = _g(c0) if c0 is not None else DiffPoly.gen(Const("c0"))
    p = _g(p0) if p0 is not None else DiffPoly.gen(Const("p0"))
    return PerturbationData(fsym("h"), c, p, DiffPoly(), p / c ** 3, name="constant-cp")


def gkdv_example(kappa1=None, kappa2=None, a=None) -> PerturbationData:
    """u_t = a(u) u_x + eps² κ1 u_xxx + eps⁴ κ2 u_xxxxx written as a perturbation (a = h'').

    ``a`` optionally binds h'' to a sympy expression in ``u`` for numeric work;
    numeric κ's are recorded alongside it.
    """
    k1 = _g(kappa1) if kappa1 is not None else DiffPoly.gen(Const("kappa1"))
    k2 = _g(kappa2) if kappa2 is not None else DiffPoly.gen(Const("kappa2"))
    h = fsym("h")
    a1, a2, a3, a4 = (fderiv(h, k) for k in (3, 4, 5, 6))
    c = k1 * a1 ** -1
    p = Fraction(1, 2) * k2 * a1 ** -1 - Fraction(3, 10) * k1 ** 2 * a2 * a1 ** -3
    s = (k1 ** 2 * (Fraction(2, 5) * a2 ** 3 * a1 ** -5 - Fraction(7, 20) * a2 * a3 * a1 ** -4
                    + Fraction(1, 24) * a4 * a1 ** -3)
         - Fraction(1, 12) * k2 * (a2 ** 2 * a1 ** -3 - a3 * a1 ** -2))
    closed = {} if a is None else {"a": a}
    for name, value in (("kappa1", kappa1), ("kappa2", kappa2)):
        if value is not None:
            closed[name] = value
    return PerturbationData(h, c, p, s, DiffPoly(), name="gkdv", closed_forms=closed)


# --- D-operator -------------------------------------------------------------

def coefficients(P: PerturbationData, f) -> tuple[DiffPoly, DiffPoly, DiffPoly]:
    """(c_f, p_f, s_f) for an arbitrary function f (symbol or expression)."""
    f = _g(f) if not isinstance(f, FuncSymbol) else DiffPoly.gen(f)
    d = [f]
    for _ in range(6):
        d.append(d_du(d[-1]))
    c, p, s = P.c, P.p, P.s
    c1, c2 = d_du(c), fderiv(c, 2)
    p1 = d_du(p)
    c_f = c * d[3]
    p_f = p * d[3] + Fraction(3, 10) * c ** 2 * d[4]
    s_f = (s * d[3] - Fraction(1, 8) * c * c2 * d[4] - Fraction(1, 8) * c * c1 * d[5]
           - Fraction(1, 24) * c ** 2 * d[6] - Fraction(1, 6) * p1 * d[4] - Fraction(1, 6) * p * d[5])
    return c_f, p_f, s_f


def build_coefficients(P: PerturbationData):
    """(c_h, p_h, s_h)."""
    return coefficients(P, P.h)


@dataclass(frozen=True)
class HamiltonianDensity:
    density: LocalDensity
    source: object

    @property
    def body(self) -> DiffPoly:
        return self.density.body


def D_operator(P: PerturbationData, f, eps_max: int = EPS_ORDER) -> DiffPoly:
    f_poly = DiffPoly.gen(f) if isinstance(f, FuncSymbol) else _g(f)
    c_f, p_f, s_f = coefficients(P, f)
    ux, uxx = jv(1), jv(2)
    out = f_poly - Fraction(1, 2) * EPS_P ** 2 * c_f * ux ** 2
    if eps_max >= 4:
        out = out + EPS_P ** 4 * (p_f * uxx ** 2 + s_f * ux ** 4)
    return out


def apply_D(P: PerturbationData, f, eps_max: int = EPS_ORDER) -> HamiltonianDensity:
    return HamiltonianDensity(LocalDensity(D_operator(P, f, eps_max)), f)


def hamiltonian(P: PerturbationData) -> HamiltonianDensity:
    return apply_D(P, P.h)


def check_grading(d: DiffPoly) -> bool:
    """The eps^{2k} part must have differential degree exactly 2k."""
    for m in d:
        if sum(weight(g) * e for g, e in m) != mono_eps(m):
            return False
    return True


# --- evolution equation ---------------------------------------------------------

def evolution_rhs(P: PerturbationData) -> DiffPoly:
    """Right-hand side of u_t = {u, H_h}, written out term by term."""
    c_h, p_h, s_h = build_coefficients(P)
    ch1 = d_du(c_h)
    ph1, ph2 = d_du(p_h), fderiv(p_h, 2)
    sh1 = d_du(s_h)
    u1, u2, u3, u4 = (jv(k) for k in (1, 2, 3, 4))
    order0 = P.a * u1
    order2 = Fraction(1, 2) * ch1 * u1 ** 2 + c_h * u2
    order4 = (2 * p_h * u4 + 4 * ph1 * u1 * u3 + 2 * (ph2 - 6 * s_h) * u1 ** 2 * u2
              + 3 * ph1 * u2 ** 2 - 3 * sh1 * u1 ** 4)
    return order0 + EPS_P ** 2 * total_x_derivative(order2) + EPS_P ** 4 * total_x_derivative(order4)


def hamiltonian_flow(P: PerturbationData) -> DiffPoly:
    """D_x δH_h/δu computed from the density."""
    return total_x_derivative(variational_derivative(hamiltonian(P).density))


def evolution_crosscheck(P: PerturbationData) -> DiffPoly:
    """evolution_rhs − D_x δH_h/δu (identically zero)."""
    return evolution_rhs(P) - hamiltonian_flow(P)


def verify_conservation(P: PerturbationData, f) -> DiffPoly:
    """E(δH_f/δu · D_x δH_h/δu) truncated at eps⁴."""
    Hf = apply_D(P, f).density
    Hh = hamiltonian(P).density
    return bracket_residual(Hf, Hh, eps_max=EPS_ORDER)


# --- semiclassical expansion ------------------------------------------------------

def rebase(p: DiffPoly, old: str = "u", new: str = "v0") -> DiffPoly:
    """Rename the field ``old`` to ``new`` in jets and function-symbol arguments."""

    def fn(g):
        if isinstance(g, JetVar) and g.field == old:
            return DiffPoly.gen(JetVar(new, g.order))
        if isinstance(g, FuncSymbol) and g.arg == old:
            rule = rebase(g.rewrite, old, new) if isinstance(g.rewrite, DiffPoly) else g.rewrite
            return DiffPoly.gen(FuncSymbol(g.base, g.order, new, rule))
        return None

    return p.map_generators(fn)


def expand_fields(p: DiffPoly, orders: int = 2, eps_max: int = EPS_ORDER) -> DiffPoly:
    """Substitute u = v0 + eps² v1 + eps⁴ v2 + ... and Taylor-expand F(u) about v0."""
    fields = [f"v{i}" for i in range(orders + 1)]

    def shift(k: int) -> DiffPoly:
        return sum((EPS_P ** (2 * i) * jv(k, fields[i]) for i in range(1, orders + 1)), DiffPoly())

    delta = shift(0)
    cache: dict = {}

    def image(g, e):
        key = (g, e)
        if key in cache:
            return cache[key]
        if isinstance(g, JetVar) and g.field == "u":
            val = (jv(g.order, "v0") + shift(g.order)) ** e if e > 0 else None
            if val is None:
                base = jv(g.order, "v0")
                val = _laurent_series(base, shift(g.order), e, eps_max)
        elif isinstance(g, FuncSymbol) and g.arg == "u":
            base_sym = rebase(DiffPoly.gen(g))
            taylor = DiffPoly()
            term = base_sym
            dpow = DiffPoly.const(1)
            fact = 1
            for m in range(0, eps_max // 2 + 1):
                if m:
                    term = d_du(term, "v0")
                    dpow = dpow.mul(delta, eps_max)
                    fact *= m
                taylor = taylor + term.mul(dpow, eps_max).scale(Fraction(1, fact))
            if e > 0:
                val = DiffPoly.const(1)
                for _ in range(e):
                    val = val.mul(taylor, eps_max)
            else:
                val = _laurent_series(base_sym, taylor - base_sym, e, eps_max)
        else:
            val = DiffPoly.gen(g, e)
        cache[key] = val
        return val

    out = DiffPoly()
    for m, c in p.items():
        acc = DiffPoly.const(c)
        for g, e in m:
            acc = acc.mul(image(g, e), eps_max)
        out = out + acc
    return out.truncate(eps_max)


def _laurent_series(base: DiffPoly, delta: DiffPoly, e: int, eps_max: int) -> DiffPoly:
    """(base + delta)^e for e < 0, with base a monomial and delta = O(eps²)."""
    inv = base ** -1
    ratio = delta.mul(inv, eps_max)
    out = DiffPoly.const(1)
    term = DiffPoly.const(1)
    coeff = Fraction(1)
    for j in range(1, eps_max // 2 + 1):
        coeff = coeff * Fraction(e - j + 1, j)
        term = term.mul(ratio, eps_max)
        out = out + term.scale(coeff)
    return out.mul(base ** e, eps_max)


@dataclass(frozen=True)
class TransportSystem:
    """Right-hand sides of v^k_t = ... for k = 0..orders (function symbols at v0)."""

    rhs: tuple

    def __getitem__(self, k: int) -> DiffPoly:
        return self.rhs[k]

    def __len__(self) -> int:
        return len(self.rhs)


def semiclassical_expand(P: PerturbationData, orders: int = 2) -> TransportSystem:
    if not 0 <= orders <= 2:
        raise ValueError("orders must be 0, 1 or 2")
    expanded = expand_fields(evolution_rhs(P), orders, 2 * orders)
    return TransportSystem(tuple(expanded.eps_coeff(2 * k) for k in range(orders + 1)))


def displayed_transport(P: PerturbationData, order: int, literal: bool = False) -> DiffPoly:
    """The transport equations for v1, v2 written out in closed form.

    ``literal=True`` keeps the cubic (v0_x)^3 term exactly as it is commonly
    printed in the v2 equation; the default uses the homogeneous (v0_xx)^2
    term that the evolution equation produces.
    """
    c_h, p_h, s_h = (rebase(q) for q in build_coefficients(P))
    a = rebase(P.a)
    a1 = d_du(a, "v0")
    ch1, ch2 = d_du(c_h, "v0"), fderiv(c_h, 2, "v0")
    ph1, ph2 = d_du(p_h, "v0"), fderiv(p_h, 2, "v0")
    sh1 = d_du(s_h, "v0")
    v0 = [jv(k, "v0") for k in range(5)]
    v1 = [jv(k, "v1") for k in range(3)]
    v2 = jv(0, "v2")
    if order == 0:
        return a * v0[1]
    if order == 1:
        inner = a * v1[0] + c_h * v0[2] + Fraction(1, 2) * ch1 * v0[1] ** 2
        return total_x_derivative(inner)
    if order == 2:
        cubic = v0[1] ** 3 if literal else v0[2] ** 2
        inner = (a * v2 + Fraction(1, 2) * a1 * v1[0] ** 2 + total_x_derivative(c_h * v1[1])
                 + ch1 * v0[2] * v1[0] + Fraction(1, 2) * ch2 * v0[1] ** 2 * v1[0] + 2 * p_h * v0[4]
                 + 4 * ph1 * v0[1] * v0[3] + 2 * ph2 * v0[1] ** 2 * v0[2] + 3 * ph1 * cubic
                 - 12 * s_h * v0[1] ** 2 * v0[2] - 3 * sh1 * v0[1] ** 4)
        return total_x_derivative(inner)
    raise ValueError("order must be 0, 1 or 2")
